//! Scalar abstraction shared by the numerical modules.

use nalgebra::RealField;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar type the geometry, reference, solver and metric code is generic over.
///
/// Implemented for `f32` and `f64`. Transcendental functions come from
/// [`RealField`]; constants and conversions come from `num-traits`.
pub trait Real: RealField + Copy + FloatConst + FromPrimitive + ToPrimitive + Default {
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Lossy conversion back to `f64`, used for diagnostics and error payloads.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Tolerance for "lies on the surface" checks, relative to the radius.
    ///
    /// `1e-9` in double precision, widened to a few ulps for narrower types.
    #[inline]
    fn surface_tolerance() -> Self {
        let eps = Self::default_epsilon() * Self::lit(64.0);
        let base = Self::lit(1e-9);
        if eps > base {
            eps
        } else {
            base
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}
