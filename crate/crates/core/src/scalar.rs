//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Scalar`] so the same
//! code runs in 32-bit (network training at stream speed) and 64-bit
//! (least-squares state, gradient replays in tests). Concrete aliases for the
//! common instantiations live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar usable by every model in this crate.
///
/// A blanket impl covers `f32` and `f64`; the bound set is what the math
/// actually uses (transcendentals, in-place ops, conversions for RNG draws
/// and metrics).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Sum + Debug + Display + Default + 'static
{
    /// Lossy conversion from `f64`, used for RNG draws and config constants.
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any float scalar")
    }

    /// Widening (or identity) conversion to `f64`, used for metrics and
    /// 64-bit replays.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("float scalar converts to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssignOps
        + Sum
        + Debug
        + Display
        + Default
        + 'static
{
}
