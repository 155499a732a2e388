//! Numeric abstraction for descriptor math.
//!
//! Everything that touches descriptor coordinates, distances, weights and
//! reward values is written against [`Scalar`]. Poses, timestamps and
//! ordering scores stay in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating point type usable for descriptor math: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static {
    /// Converts an `f64` literal into this type.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }

    /// Tolerance used when checking unit norm in dimension `dim`.
    fn norm_tolerance(dim: usize) -> f64 {
        let eps = Self::epsilon().as_f64();
        (4.0 * eps * (dim as f64).sqrt()).max(1e-6)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
