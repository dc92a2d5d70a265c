//! Scalar abstraction for the numeric core.
//!
//! Everything downstream of model ingestion is generic over [`Real`] so the
//! same engine runs in `f32` or `f64`; the crate root exports `f64` aliases,
//! which is what the CLI and the file formats use.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the engine computes with: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum<Self>
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` constant into the working scalar.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

/// Compensated (Neumaier) accumulator for scalar sums whose result must not
/// depend on term ordering beyond one rounding unit.
#[derive(Debug, Clone, Copy)]
pub struct NeumaierSum<T> {
    sum: T,
    compensation: T,
}

impl<T: Real> NeumaierSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            compensation: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> T {
        self.sum + self.compensation
    }
}

impl<T: Real> Default for NeumaierSum<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// `dst[i] += c * src[i]` with per-element Kahan compensation kept in `comp`.
///
/// The branch-free classic Kahan update vectorizes; all addends here are
/// non-negative probabilities of comparable scale, where it is accurate.
pub(crate) fn axpy_compensated<T: Real>(dst: &mut [T], comp: &mut [T], c: T, src: &[T]) {
    debug_assert!(dst.len() == comp.len() && dst.len() <= src.len());
    for ((d, k), s) in dst.iter_mut().zip(comp.iter_mut()).zip(src.iter()) {
        let y = c * *s - *k;
        let t = *d + y;
        *k = (t - *d) - y;
        *d = t;
    }
}
