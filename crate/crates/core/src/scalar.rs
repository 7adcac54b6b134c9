//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the filter, smoother and metrics: f32 or f64.
///
/// Arithmetic and elementary functions come from [`RealField`]; conversions to
/// and from primitive values go through num-traits.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync {
    /// Lossy conversion from an `f64` constant.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }

    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("usize representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
