use crate::error::{Error, Result};
use crate::math::Scalar;

/// Fixed sharpness of the sigmoid gates.
pub const PROX_SHARPNESS: f64 = 10.0;

/// `p(v) = v sigmoid(beta (v - lambda)) + v sigmoid(-beta (v + lambda))`.
///
/// A smooth, odd surrogate of soft-thresholding: it suppresses `|v| << lambda`
/// and passes `|v| >> lambda` unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothThreshold<T> {
    pub lambda: T,
    pub beta: T,
}

/// Value and the two partial derivatives of the operator at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxEval<T> {
    pub value: T,
    pub d_input: T,
    pub d_lambda: T,
}

impl<T: Scalar> SmoothThreshold<T> {
    pub fn new(lambda: T, beta: T) -> Result<Self> {
        if !(lambda > T::zero() && beta > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "threshold and sharpness must be positive (lambda={lambda}, beta={beta})"
            )));
        }
        Ok(Self { lambda, beta })
    }

    #[inline]
    pub fn apply(&self, v: T) -> T {
        let hi = (self.beta * (v - self.lambda)).sigmoid();
        let lo = (-self.beta * (v + self.lambda)).sigmoid();
        v * (hi + lo)
    }

    #[inline]
    pub fn eval(&self, v: T) -> ProxEval<T> {
        let hi = (self.beta * (v - self.lambda)).sigmoid();
        let lo = (-self.beta * (v + self.lambda)).sigmoid();
        let dhi = hi * (T::one() - hi);
        let dlo = lo * (T::one() - lo);
        ProxEval {
            value: v * (hi + lo),
            d_input: hi + lo + v * self.beta * (dhi - dlo),
            d_lambda: -self.beta * v * (dhi + dlo),
        }
    }
}

/// Elementwise application over a slice.
pub fn smooth_soft_threshold<T: Scalar>(v: &[T], lambda: T, beta: T) -> Result<Vec<T>> {
    let op = SmoothThreshold::new(lambda, beta)?;
    Ok(v.iter().map(|&x| op.apply(x)).collect())
}
