use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar used throughout the crate: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }

    #[inline]
    fn two() -> Self {
        Self::lit(2.0)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Default relative tolerance for adaptive integration: 1e-9 in `f64`,
    /// clamped to a few hundred ulps for narrower types.
    fn default_rel_tol() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(256.0))
    }

    fn default_abs_tol() -> Self {
        Self::lit(1e-12).max(Self::epsilon() * Self::lit(16.0))
    }
}

impl Real for f32 {}
impl Real for f64 {}
