use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::math::Scalar;

/// Mean of `(est - truth)^2` over every element of the batch, with its
/// gradient `2 (est - truth) / count`.
pub fn mse_loss<T: Scalar>(est: ArrayView2<T>, truth: ArrayView2<T>) -> Result<(T, Array2<T>)> {
    if est.dim() != truth.dim() {
        return Err(Error::Shape(format!("estimate {:?} vs truth {:?}", est.dim(), truth.dim())));
    }
    let count = T::lit(est.len().max(1) as f64);
    let diff = &est - &truth;
    let loss = diff.iter().map(|&d| d * d).sum::<T>() / count;
    let two = T::lit(2.0);
    Ok((loss, diff.mapv(|d| two * d / count)))
}

/// `mse + weight * entropy`; top-M sampling passes `None`.
pub fn total_loss<T: Scalar>(mse: T, entropy: Option<T>, weight: f64) -> T {
    match entropy {
        Some(h) => mse + T::lit(weight) * h,
        None => mse,
    }
}
