//! Scalar abstraction shared by the geometry, registration and ICP modules.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every generic algorithm in the crate: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Tolerance used when validating rotation matrices (orthonormality, determinant).
    ///
    /// `1e-9` for `f64`; loosened proportionally to machine epsilon for narrower types.
    fn validation_tolerance() -> Self;

    /// Lossless-enough literal conversion.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn validation_tolerance() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn validation_tolerance() -> Self {
        1e-3
    }
}
