use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point type the numerical code is generic over.
///
/// Implemented for `f32` and `f64`. Constants are written as `f64` literals
/// and lifted with [`Scalar::lit`].
pub trait Scalar: NdFloat + FloatConst + FromPrimitive + ToPrimitive + Sum + Default {
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn sigmoid(self) -> Self {
        if self >= Self::zero() {
            Self::one() / (Self::one() + (-self).exp())
        } else {
            let e = self.exp();
            e / (Self::one() + e)
        }
    }

    /// `ln(1 + e^x)` without overflow.
    #[inline]
    fn softplus(self) -> Self {
        if self > Self::lit(30.0) {
            self
        } else {
            self.exp().ln_1p()
        }
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
