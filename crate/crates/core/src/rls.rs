//! Exact recursive least squares with a unit ridge prior.
//!
//! State tracks the inverse Gram matrix `P = (I + sum phi phi^T)^-1`, the
//! moment vector `B = sum phi y`, and the weights `w = P B`. One rank-one
//! update per observation keeps the solution identical (up to float
//! round-off) to refitting the ridge regression from scratch, regardless of
//! arrival order:
//!
//! ```text
//! P <- P - (P phi)(P phi)^T / (1 + phi^T P phi)
//! B <- B + phi * y
//! w  = P B
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Streaming ridge-regression state for a single scalar target.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState<F> {
    dim: usize,
    /// Row-major `dim x dim`, kept exactly symmetric.
    p: Vec<F>,
    b: Vec<F>,
    w: Vec<F>,
    /// Observations absorbed so far.
    pub updates_seen: u64,
}

impl<F: Scalar> RlsState<F> {
    /// Fresh state: `P = I`, `B = 0`, `w = 0`.
    pub fn init(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyInput {
                context: "least-squares dimension",
            });
        }
        let mut p = vec![F::zero(); dim * dim];
        for i in 0..dim {
            p[i * dim + i] = F::one();
        }
        Ok(Self {
            dim,
            p,
            b: vec![F::zero(); dim],
            w: vec![F::zero(); dim],
            updates_seen: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[F] {
        &self.w
    }

    pub fn moments(&self) -> &[F] {
        &self.b
    }

    pub fn inverse_gram(&self) -> &[F] {
        &self.p
    }

    fn check_input(&self, phi: &[F]) -> Result<()> {
        if phi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "least-squares input",
                expected: self.dim,
                got: phi.len(),
            });
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "least-squares input",
            });
        }
        Ok(())
    }

    /// Absorbs one observation `(phi, y)`.
    pub fn update(&mut self, phi: &[F], y: F) -> Result<()> {
        self.check_input(phi)?;
        if !y.is_finite() {
            return Err(Error::NonFinite {
                context: "least-squares target",
            });
        }
        self.update_gram(phi);
        for (b, &x) in self.b.iter_mut().zip(phi.iter()) {
            *b += x * y;
        }
        self.recompute_weights();
        self.updates_seen += 1;
        Ok(())
    }

    /// Rank-one Sherman–Morrison update of `P` alone. Mirrored assignments
    /// keep the matrix symmetric to the bit.
    pub(crate) fn update_gram(&mut self, phi: &[F]) {
        let d = self.dim;
        let mut u = vec![F::zero(); d];
        for i in 0..d {
            let row = &self.p[i * d..(i + 1) * d];
            let mut acc = F::zero();
            for (pv, &x) in row.iter().zip(phi.iter()) {
                acc = acc + *pv * x;
            }
            u[i] = acc;
        }
        let mut denom = F::one();
        for (&ui, &x) in u.iter().zip(phi.iter()) {
            denom = denom + ui * x;
        }
        for i in 0..d {
            for j in 0..=i {
                let v = self.p[i * d + j] - u[i] * u[j] / denom;
                self.p[i * d + j] = v;
                self.p[j * d + i] = v;
            }
        }
    }

    /// `w = P B`.
    pub(crate) fn recompute_weights(&mut self) {
        let d = self.dim;
        for i in 0..d {
            let row = &self.p[i * d..(i + 1) * d];
            let mut acc = F::zero();
            for (pv, &bv) in row.iter().zip(self.b.iter()) {
                acc = acc + *pv * bv;
            }
            self.w[i] = acc;
        }
    }

    /// Replaces the moment vector and refreshes `w`; used by batch refits
    /// that rebuild `P` once and share it across several targets.
    pub(crate) fn install_moments(&mut self, b: Vec<F>, updates_seen: u64) {
        debug_assert_eq!(b.len(), self.dim);
        self.b = b;
        self.recompute_weights();
        self.updates_seen = updates_seen;
    }

    /// Absorbs `(phi, y)` given a `donor` that has already absorbed the same
    /// `phi` starting from an identical inverse Gram: the donor's `P` is
    /// copied instead of redoing the rank-one update. Bit-identical to
    /// `self.update(phi, y)` under that precondition; used by the one-vs-rest
    /// layer above, where every class sees the same input stream.
    pub(crate) fn absorb_with_shared_gram(
        &mut self,
        donor: &RlsState<F>,
        phi: &[F],
        y: F,
    ) -> Result<()> {
        debug_assert_eq!(donor.dim, self.dim);
        if !y.is_finite() {
            return Err(Error::NonFinite {
                context: "least-squares target",
            });
        }
        self.p.copy_from_slice(&donor.p);
        for (b, &x) in self.b.iter_mut().zip(phi.iter()) {
            *b += x * y;
        }
        self.recompute_weights();
        self.updates_seen += 1;
        Ok(())
    }

    /// Restores a state from checkpoint parts.
    pub(crate) fn from_parts(
        dim: usize,
        p: Vec<F>,
        b: Vec<F>,
        w: Vec<F>,
        updates_seen: u64,
    ) -> Result<Self> {
        if dim == 0 || p.len() != dim * dim || b.len() != dim || w.len() != dim {
            return Err(Error::CorruptCheckpoint {
                reason: format!(
                    "least-squares state shape mismatch: dim {dim}, p {}, b {}, w {}",
                    p.len(),
                    b.len(),
                    w.len()
                ),
            });
        }
        Ok(Self { dim, p, b, w, updates_seen })
    }

    /// Predicted target for one input.
    pub fn predict(&self, phi: &[F]) -> Result<F> {
        self.check_input(phi)?;
        let mut acc = F::zero();
        for (&wv, &x) in self.w.iter().zip(phi.iter()) {
            acc = acc + wv * x;
        }
        Ok(acc)
    }
}
