//! Three-layer unrolled shrinkage network with trainable dense operators.
//!
//! Complex data live in stacked form `[re; im]` (length `2N`). Layer `k`
//! computes `s_{k+1} = prox_k(B_k s_k + C_k z)` with `z = A^T A x`, starting
//! from `s_0 = 0`; the estimate is the real half of `s_3`.

use ndarray::{s, Array1, Array2, ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::math::{gaussian_noise, ComplexVector, RngHandle, Scalar};
use crate::params::ParamSet;
use crate::recon::prox::{SmoothThreshold, PROX_SHARPNESS};
use crate::recon::{check_batch, selection_terms, stack_spectra};
use crate::sampler::{project, SamplingPattern, SelectionGrad};

pub const LISTA_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ListaParams<T> {
    pub n: usize,
    pub b: Vec<Array2<T>>,
    pub c: Vec<Array2<T>>,
    /// Unconstrained threshold parameters; `lambda_k = softplus(raw_k)`.
    pub threshold_raw: Array1<T>,
    pub sharpness: T,
}

/// Inverse of softplus, for initializing from a desired threshold.
pub(crate) fn softplus_inv<T: Scalar>(y: T) -> T {
    (y.exp() - T::one()).ln()
}

/// Stacked real form `[[Re Z, -Im Z], [Im Z, Re Z]]` of a complex matrix.
fn stack_complex<T: Scalar>(re: &Array2<T>, im: &Array2<T>) -> Array2<T> {
    let n = re.nrows();
    let mut out = Array2::zeros((2 * n, 2 * n));
    out.slice_mut(s![..n, ..n]).assign(re);
    out.slice_mut(s![..n, n..]).assign(&im.mapv(|v| -v));
    out.slice_mut(s![n.., ..n]).assign(im);
    out.slice_mut(s![n.., n..]).assign(re);
    out
}

impl<T: Scalar> ListaParams<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            b: vec![Array2::zeros((2 * n, 2 * n)); LISTA_LAYERS],
            c: vec![Array2::zeros((2 * n, 2 * n)); LISTA_LAYERS],
            threshold_raw: Array1::zeros(LISTA_LAYERS),
            sharpness: T::lit(PROX_SHARPNESS),
        }
    }

    /// Start from the unrolled proximal-gradient operators
    /// `B = I - alpha F^H diag(p) F`, `C = alpha F^H`, plus Gaussian jitter.
    ///
    /// `coverage` is the diagonal of the sampling projector: the 0/1 mask of
    /// a fixed pattern, or the expected mask `M/N` for a learned one.
    pub fn model_based(
        coverage: &[f64],
        alpha: f64,
        threshold: f64,
        jitter: f64,
        rng: &mut RngHandle,
    ) -> Result<Self> {
        let n = coverage.len();
        if threshold <= 0.0 {
            return Err(Error::InvalidParameter("threshold must be positive".into()));
        }
        let phase = |j: usize, k: usize| 2.0 * std::f64::consts::PI * ((j * k) % n) as f64 / n as f64;
        let inv_sqrt = 1.0 / (n as f64).sqrt();
        // C = alpha F^H, (F^H)_{jk} = e^{+i 2 pi jk/N} / sqrt(N)
        let c_re = Array2::from_shape_fn((n, n), |(j, k)| T::lit(alpha * inv_sqrt * phase(j, k).cos()));
        let c_im = Array2::from_shape_fn((n, n), |(j, k)| T::lit(alpha * inv_sqrt * phase(j, k).sin()));
        // (F^H diag(p) F)_{jl} = (1/N) sum_k p_k e^{i 2 pi k (j - l)/N}; circulant in j - l
        let kernel: Vec<(f64, f64)> = (0..n)
            .map(|d| {
                coverage.iter().enumerate().fold((0.0, 0.0), |(re, im), (k, &p)| {
                    let th = phase(k, d);
                    (re + p * th.cos() / n as f64, im + p * th.sin() / n as f64)
                })
            })
            .collect();
        let b_re = Array2::from_shape_fn((n, n), |(j, l)| {
            let (re, _) = kernel[(j + n - l) % n];
            T::lit(if j == l { 1.0 } else { 0.0 } - alpha * re)
        });
        let b_im = Array2::from_shape_fn((n, n), |(j, l)| T::lit(-alpha * kernel[(j + n - l) % n].1));
        let b0 = stack_complex(&b_re, &b_im);
        let c0 = stack_complex(&c_re, &c_im);
        let mut jittered = |m: &Array2<T>| {
            let noise = gaussian_noise::<T>(m.len(), jitter, rng);
            m + &Array2::from_shape_vec(m.raw_dim(), noise).expect("same shape")
        };
        let b = (0..LISTA_LAYERS).map(|_| jittered(&b0)).collect();
        let c = (0..LISTA_LAYERS).map(|_| jittered(&c0)).collect();
        Ok(Self {
            n,
            b,
            c,
            threshold_raw: Array1::from_elem(LISTA_LAYERS, softplus_inv(T::lit(threshold))),
            sharpness: T::lit(PROX_SHARPNESS),
        })
    }

    pub fn thresholds(&self) -> Vec<T> {
        self.threshold_raw.iter().map(|r| r.softplus()).collect()
    }

    fn prox(&self, k: usize) -> SmoothThreshold<T> {
        SmoothThreshold {
            lambda: self.threshold_raw[k].softplus(),
            beta: self.sharpness,
        }
    }
}

impl<T: Scalar> ParamSet<T> for ListaParams<T> {
    fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for m in self.b.iter().chain(&self.c) {
            out.push(m.as_slice().expect("standard layout"));
        }
        out.push(self.threshold_raw.as_slice().expect("standard layout"));
        out
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for m in self.b.iter_mut().chain(self.c.iter_mut()) {
            out.push(m.as_slice_mut().expect("standard layout"));
        }
        out.push(self.threshold_raw.as_slice_mut().expect("standard layout"));
        out
    }
}

/// Cached activations of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ListaTape<T> {
    /// Stacked full spectra, `2N x B`.
    spectra: Array2<T>,
    /// Stacked zero-filled spectra `A^T A x`, `2N x B`.
    z: Array2<T>,
    /// `s_0 .. s_3`.
    states: Vec<Array2<T>>,
    /// Pre-threshold activations of each layer.
    pre: Vec<Array2<T>>,
    patterns: Vec<SamplingPattern>,
}

impl<T: Scalar> ListaTape<T> {
    /// Network output recovered from the cache (real half of the last state).
    pub fn output(&self) -> Array2<T> {
        let n = self.z.nrows() / 2;
        self.states[LISTA_LAYERS].slice(s![..n, ..]).to_owned()
    }
}

fn apply_prox<T: Scalar>(op: &SmoothThreshold<T>, v: &Array2<T>) -> Array2<T> {
    v.mapv(|x| op.apply(x))
}

/// Batched forward pass; column `b` of the result is the estimate for
/// `(patterns[b], spectra[b])`.
pub fn lista_forward_batch<T: Scalar>(
    params: &ListaParams<T>,
    patterns: &[SamplingPattern],
    spectra: &[ComplexVector<T>],
) -> Result<(Array2<T>, ListaTape<T>)> {
    check_batch(params.n, patterns, spectra)?;
    let zero_filled = patterns
        .iter()
        .zip(spectra)
        .map(|(p, x)| project(p, x))
        .collect::<Result<Vec<_>>>()?;
    let z = stack_spectra(&zero_filled);
    let full = stack_spectra(spectra);
    let mut states = vec![Array2::zeros(z.raw_dim())];
    let mut pre = Vec::with_capacity(LISTA_LAYERS);
    for k in 0..LISTA_LAYERS {
        let mut v = params.c[k].dot(&z);
        if k > 0 {
            v += &params.b[k].dot(&states[k]);
        }
        states.push(apply_prox(&params.prox(k), &v));
        pre.push(v);
    }
    let tape = ListaTape {
        spectra: full,
        z,
        states,
        pre,
        patterns: patterns.to_vec(),
    };
    Ok((tape.output(), tape))
}

/// Single-example forward pass.
pub fn lista_forward<T: Scalar>(
    params: &ListaParams<T>,
    pattern: &SamplingPattern,
    x: &ComplexVector<T>,
) -> Result<(Vec<T>, ListaTape<T>)> {
    let (out, tape) = lista_forward_batch(params, std::slice::from_ref(pattern), std::slice::from_ref(x))?;
    Ok((out.column(0).to_vec(), tape))
}

/// Reverse pass for `upstream = dL/d(output)` (`N x B`). Returns parameter
/// gradients and, when requested, per-example gradients with respect to
/// the one-hot selection rows.
pub fn lista_backward<T: Scalar>(
    params: &ListaParams<T>,
    tape: &ListaTape<T>,
    upstream: ArrayView2<T>,
    with_selection: bool,
) -> Result<(ListaParams<T>, Vec<SelectionGrad<T>>)> {
    let n = params.n;
    let batch = tape.z.ncols();
    if upstream.dim() != (n, batch) || tape.z.nrows() != 2 * n {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match tape ({n} x {batch})",
            upstream.dim()
        )));
    }
    let mut grads = ListaParams::zeros(n);
    grads.sharpness = params.sharpness;
    let mut g_state = Array2::zeros((2 * n, batch));
    g_state.slice_mut(s![..n, ..]).assign(&upstream);
    let mut g_z: Array2<T> = Array2::zeros((2 * n, batch));

    for k in (0..LISTA_LAYERS).rev() {
        let op = params.prox(k);
        let mut g_pre = Array2::zeros(g_state.raw_dim());
        let mut g_lambda = T::zero();
        Zip::from(&mut g_pre)
            .and(&g_state)
            .and(&tape.pre[k])
            .for_each(|gp, &gs, &v| {
                let e = op.eval(v);
                *gp = gs * e.d_input;
                g_lambda += gs * e.d_lambda;
            });
        grads.threshold_raw[k] = g_lambda * params.threshold_raw[k].sigmoid();
        grads.c[k] = g_pre.dot(&tape.z.t());
        if with_selection {
            g_z += &params.c[k].t().dot(&g_pre);
        }
        if k > 0 {
            grads.b[k] = g_pre.dot(&tape.states[k].t());
            g_state = params.b[k].t().dot(&g_pre);
        }
    }

    let selection = if with_selection {
        tape.patterns
            .iter()
            .enumerate()
            .map(|(b, p)| {
                let x = tape.spectra.column(b);
                let gz = g_z.column(b);
                let mut sel = SelectionGrad::new(p.m(), n);
                for half in [0..n, n..2 * n] {
                    let xs = x.slice(s![half.clone()]).to_vec();
                    let gs = gz.slice(s![half]).to_vec();
                    selection_terms(&mut sel, p, &xs, &gs);
                }
                sel
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok((grads, selection))
}
