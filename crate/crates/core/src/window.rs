//! Bounded FIFO storage over the most recent stream examples.
//!
//! The online learners keep the last `capacity` observations; arrival order
//! is preserved and the oldest examples are evicted first. Eviction is strict
//! FIFO — no importance weighting.

use crate::error::{Error, Result};
use crate::LabeledExample;

#[derive(Debug, Clone, PartialEq)]
pub struct StorageWindow<F> {
    capacity: usize,
    items: Vec<LabeledExample<F>>,
}

impl<F: Clone> StorageWindow<F> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::EmptyInput {
                context: "window capacity",
            });
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() == self.capacity
    }

    /// Contents in arrival order, oldest first.
    pub fn items(&self) -> &[LabeledExample<F>] {
        &self.items
    }

    /// Appends a batch, evicting the oldest examples once past capacity.
    /// A single batch larger than the whole window is rejected rather than
    /// silently truncated.
    pub fn push_batch(&mut self, new_data: &[LabeledExample<F>]) -> Result<()> {
        if new_data.len() > self.capacity {
            return Err(Error::WindowOverflow {
                pushed: new_data.len(),
                capacity: self.capacity,
            });
        }
        let total = self.items.len() + new_data.len();
        if total > self.capacity {
            self.items.drain(..total - self.capacity);
        }
        self.items.extend_from_slice(new_data);
        Ok(())
    }

    /// Used when restoring serialized state; validates capacity bounds.
    pub fn from_parts(capacity: usize, items: Vec<LabeledExample<F>>) -> Result<Self> {
        if capacity == 0 || items.len() > capacity {
            return Err(Error::CorruptCheckpoint {
                reason: format!(
                    "window holds {} items but capacity is {capacity}",
                    items.len()
                ),
            });
        }
        Ok(Self { capacity, items })
    }
}
