use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Scalar;
use crate::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// First and second moment buffers, one per parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<P: ParamSet<T> + ?Sized>(params: &P) -> Self {
        let zeros: Vec<Vec<T>> = params.slices().iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected ADAM update of `params` along `grads`.
pub fn adam_step<T, P>(params: &mut P, grads: &P, state: &mut AdamState<T>, lr: f64, cfg: &AdamConfig) -> Result<()>
where
    T: Scalar,
    P: ParamSet<T> + ?Sized,
{
    let grads = grads.slices();
    let mut params = params.slices_mut();
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape("parameter, gradient and moment lists differ".into()));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(lr), T::lit(cfg.eps));
    for (((p, g), m), v) in params.iter_mut().zip(&grads).zip(&mut state.m).zip(&mut state.v) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::LengthMismatch {
                expected: p.len(),
                got: g.len(),
            });
        }
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
