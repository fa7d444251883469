//! Reconstruction networks with hand-written reverse passes.
//!
//! Every network maps a batch of `(pattern, spectrum)` pairs to real
//! estimates (one column per example) and returns a tape. The backward
//! pass yields parameter gradients and, for learned sampling, the gradient
//! with respect to each example's one-hot selection rows.

mod fc;
mod lista;
mod pg2d;
mod prox;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ComplexVector, Scalar};
use crate::params::ParamSet;
use crate::sampler::{SamplingPattern, SelectionGrad};

pub use fc::{fc_backward, fc_forward, fc_forward_batch, FcParams, FcTape, FC_HIDDEN, LEAKY_SLOPE};
pub use lista::{lista_backward, lista_forward, lista_forward_batch, ListaParams, ListaTape, LISTA_LAYERS};
pub use pg2d::{pg2d_backward, pg2d_forward, pg2d_forward_batch, Pg2dTape, PgParams2D, PG_LAYERS};
pub use prox::{smooth_soft_threshold, ProxEval, SmoothThreshold, PROX_SHARPNESS};

/// Stack complex vectors as columns `[re; im]` of a `2N x B` matrix.
pub(crate) fn stack_spectra<T: Scalar>(xs: &[ComplexVector<T>]) -> Array2<T> {
    let n = xs.first().map_or(0, |x| x.len());
    let mut out = Array2::zeros((2 * n, xs.len()));
    for (b, x) in xs.iter().enumerate() {
        for j in 0..n {
            out[[j, b]] = x.re[j];
            out[[n + j, b]] = x.im[j];
        }
    }
    out
}

pub(crate) fn check_batch<T: Scalar>(
    n: usize,
    patterns: &[SamplingPattern],
    spectra: &[ComplexVector<T>],
) -> Result<()> {
    if patterns.len() != spectra.len() {
        return Err(Error::LengthMismatch {
            expected: spectra.len(),
            got: patterns.len(),
        });
    }
    for (p, x) in patterns.iter().zip(spectra) {
        if p.n() != n || x.len() != n {
            return Err(Error::Shape(format!(
                "network built for N={n}, got pattern over {} and spectrum of {}",
                p.n(),
                x.len()
            )));
        }
    }
    Ok(())
}

/// Selection gradient of one projector use `w = A^T A v` on one channel,
/// given `g = dL/dw`.
pub(crate) fn selection_terms<T: Scalar>(sel: &mut SelectionGrad<T>, pattern: &SamplingPattern, v: &[T], g: &[T]) {
    let idx = pattern.indices();
    sel.push(idx.iter().map(|&i| v[i]).collect(), g.to_vec());
    sel.push(idx.iter().map(|&i| g[i]).collect(), v.to_vec());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReconKind {
    /// Unrolled shrinkage with dense trainable operators (1D).
    Lista,
    /// Fully connected baseline (1D).
    Fc,
    /// Unrolled proximal gradient with scalar steps (2D).
    Pg2d,
}

impl fmt::Display for ReconKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReconKind::Lista => "lista",
            ReconKind::Fc => "fc",
            ReconKind::Pg2d => "pg2d",
        })
    }
}

impl FromStr for ReconKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lista" | "mb" => Ok(ReconKind::Lista),
            "fc" => Ok(ReconKind::Fc),
            "pg2d" => Ok(ReconKind::Pg2d),
            other => Err(Error::InvalidParameter(format!("unknown network {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReconParams<T> {
    Lista(ListaParams<T>),
    Fc(FcParams<T>),
    Pg2d(PgParams2D<T>),
}

impl<T: Scalar> ReconParams<T> {
    pub fn kind(&self) -> ReconKind {
        match self {
            ReconParams::Lista(_) => ReconKind::Lista,
            ReconParams::Fc(_) => ReconKind::Fc,
            ReconParams::Pg2d(_) => ReconKind::Pg2d,
        }
    }
}

impl<T: Scalar> ParamSet<T> for ReconParams<T> {
    fn slices(&self) -> Vec<&[T]> {
        match self {
            ReconParams::Lista(p) => p.slices(),
            ReconParams::Fc(p) => p.slices(),
            ReconParams::Pg2d(p) => p.slices(),
        }
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            ReconParams::Lista(p) => p.slices_mut(),
            ReconParams::Fc(p) => p.slices_mut(),
            ReconParams::Pg2d(p) => p.slices_mut(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ReconTape<T> {
    Lista(ListaTape<T>),
    Fc(FcTape<T>),
    Pg2d(Pg2dTape<T>),
}

impl<T: Scalar> ReconTape<T> {
    /// The forward output, rebuilt from cached activations.
    pub fn output(&self) -> Array2<T> {
        match self {
            ReconTape::Lista(t) => t.output(),
            ReconTape::Fc(t) => t.output(),
            ReconTape::Pg2d(t) => t.output(),
        }
    }
}

/// Batched forward pass of any network.
pub fn forward<T: Scalar>(
    params: &ReconParams<T>,
    patterns: &[SamplingPattern],
    spectra: &[ComplexVector<T>],
) -> Result<(Array2<T>, ReconTape<T>)> {
    Ok(match params {
        ReconParams::Lista(p) => {
            let (o, t) = lista_forward_batch(p, patterns, spectra)?;
            (o, ReconTape::Lista(t))
        }
        ReconParams::Fc(p) => {
            let (o, t) = fc_forward_batch(p, patterns, spectra)?;
            (o, ReconTape::Fc(t))
        }
        ReconParams::Pg2d(p) => {
            let (o, t) = pg2d_forward_batch(p, patterns, spectra)?;
            (o, ReconTape::Pg2d(t))
        }
    })
}

/// Reverse pass matching [`forward`]. Fails if the tape came from a
/// different network type.
pub fn backward<T: Scalar>(
    params: &ReconParams<T>,
    tape: &ReconTape<T>,
    upstream: ArrayView2<T>,
    with_selection: bool,
) -> Result<(ReconParams<T>, Vec<SelectionGrad<T>>)> {
    Ok(match (params, tape) {
        (ReconParams::Lista(p), ReconTape::Lista(t)) => {
            let (g, s) = lista_backward(p, t, upstream, with_selection)?;
            (ReconParams::Lista(g), s)
        }
        (ReconParams::Fc(p), ReconTape::Fc(t)) => {
            let (g, s) = fc_backward(p, t, upstream, with_selection)?;
            (ReconParams::Fc(g), s)
        }
        (ReconParams::Pg2d(p), ReconTape::Pg2d(t)) => {
            let (g, s) = pg2d_backward(p, t, upstream, with_selection)?;
            (ReconParams::Pg2d(g), s)
        }
        _ => {
            return Err(Error::Shape(format!(
                "tape does not belong to a {} network",
                params.kind()
            )))
        }
    })
}
