//! Unrolled proximal gradient on images:
//! `s_{k+1} = prox_k(s_k - alpha_k Re F^H A^T (A F s_k - A x))`,
//! three layers, scalar step and threshold per layer, started from the
//! zero-filled reconstruction `s_0 = Re F^H A^T A x`.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::math::fft::transform2_in_place;
use crate::math::{ComplexVector, Scalar};
use crate::params::ParamSet;
use crate::recon::lista::softplus_inv;
use crate::recon::prox::{SmoothThreshold, PROX_SHARPNESS};
use crate::recon::{check_batch, selection_terms};
use crate::sampler::{SamplingPattern, SelectionGrad};

pub const PG_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct PgParams2D<T> {
    pub rows: usize,
    pub cols: usize,
    pub step: Array1<T>,
    /// `lambda_k = softplus(raw_k)`.
    pub threshold_raw: Array1<T>,
    pub sharpness: T,
}

impl<T: Scalar> PgParams2D<T> {
    pub fn new(rows: usize, cols: usize, step: f64, threshold: f64) -> Result<Self> {
        if !rows.is_power_of_two() || !cols.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(if rows.is_power_of_two() { cols } else { rows }));
        }
        if threshold <= 0.0 {
            return Err(Error::InvalidParameter("threshold must be positive".into()));
        }
        Ok(Self {
            rows,
            cols,
            step: Array1::from_elem(PG_LAYERS, T::lit(step)),
            threshold_raw: Array1::from_elem(PG_LAYERS, softplus_inv(T::lit(threshold))),
            sharpness: T::lit(PROX_SHARPNESS),
        })
    }

    fn zeros_like(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            step: Array1::zeros(PG_LAYERS),
            threshold_raw: Array1::zeros(PG_LAYERS),
            sharpness: self.sharpness,
        }
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

    fn fft(&self, re: &mut [T], im: &mut [T], inverse: bool) {
        transform2_in_place(self.rows, self.cols, re, im, inverse).expect("dimensions validated");
    }

    /// Real-to-complex forward transform.
    fn forward_real(&self, img: &[T]) -> ComplexVector<T> {
        let mut out = ComplexVector::from_real(img.to_vec());
        self.fft(&mut out.re, &mut out.im, false);
        out
    }

    /// `Re F^H w`.
    fn inverse_real(&self, w: &ComplexVector<T>) -> Vec<T> {
        let mut tmp = w.clone();
        self.fft(&mut tmp.re, &mut tmp.im, true);
        tmp.re
    }
}

impl<T: Scalar> ParamSet<T> for PgParams2D<T> {
    fn slices(&self) -> Vec<&[T]> {
        vec![
            self.step.as_slice().expect("standard layout"),
            self.threshold_raw.as_slice().expect("standard layout"),
        ]
    }

    fn slices_mut(&mut self) -> Vec<&mut [T]> {
        vec![
            self.step.as_slice_mut().expect("standard layout"),
            self.threshold_raw.as_slice_mut().expect("standard layout"),
        ]
    }
}

fn masked<T: Scalar>(mask: &[bool], v: &ComplexVector<T>) -> ComplexVector<T> {
    let keep = |(x, &m): (&T, &bool)| if m { *x } else { T::zero() };
    ComplexVector {
        re: v.re.iter().zip(mask).map(keep).collect(),
        im: v.im.iter().zip(mask).map(keep).collect(),
    }
}

#[derive(Debug, Clone)]
struct Trace<T> {
    x: ComplexVector<T>,
    pattern: SamplingPattern,
    mask: Vec<bool>,
    /// `s_0 .. s_3`.
    states: Vec<Vec<T>>,
    /// Residuals `F s_k - x`.
    residuals: Vec<ComplexVector<T>>,
    /// Data-consistency gradients `Re F^H A^T A r_k`.
    gradients: Vec<Vec<T>>,
    /// Pre-threshold images.
    pre: Vec<Vec<T>>,
}

#[derive(Debug, Clone)]
pub struct Pg2dTape<T> {
    traces: Vec<Trace<T>>,
}

impl<T: Scalar> Pg2dTape<T> {
    pub fn output(&self) -> Array2<T> {
        let n = self.traces.first().map_or(0, |t| t.x.len());
        let mut out = Array2::zeros((n, self.traces.len()));
        for (b, t) in self.traces.iter().enumerate() {
            out.column_mut(b).assign(&ndarray::ArrayView1::from(&t.states[PG_LAYERS][..]));
        }
        out
    }

    /// Iterates `s_0 .. s_3` of example `b`.
    pub fn states(&self, b: usize) -> &[Vec<T>] {
        &self.traces[b].states
    }

    /// Residuals `F s_k - x` of example `b`, one per layer.
    pub fn residuals(&self, b: usize) -> &[ComplexVector<T>] {
        &self.traces[b].residuals
    }
}

fn trace_one<T: Scalar>(params: &PgParams2D<T>, pattern: &SamplingPattern, x: &ComplexVector<T>) -> Trace<T> {
    let mask = pattern.mask();
    let s0 = params.inverse_real(&masked(&mask, x));
    let mut tr = Trace {
        x: x.clone(),
        pattern: pattern.clone(),
        mask,
        states: vec![s0],
        residuals: Vec::with_capacity(PG_LAYERS),
        gradients: Vec::with_capacity(PG_LAYERS),
        pre: Vec::with_capacity(PG_LAYERS),
    };
    for k in 0..PG_LAYERS {
        let s = &tr.states[k];
        let mut r = params.forward_real(s);
        for (a, b) in r.re.iter_mut().zip(&x.re) {
            *a -= *b;
        }
        for (a, b) in r.im.iter_mut().zip(&x.im) {
            *a -= *b;
        }
        let g = params.inverse_real(&masked(&tr.mask, &r));
        let alpha = params.step[k];
        let v: Vec<T> = s.iter().zip(&g).map(|(&si, &gi)| si - alpha * gi).collect();
        let op = params.prox(k);
        let next = v.iter().map(|&vi| op.apply(vi)).collect();
        tr.residuals.push(r);
        tr.gradients.push(g);
        tr.pre.push(v);
        tr.states.push(next);
    }
    tr
}

pub fn pg2d_forward_batch<T: Scalar>(
    params: &PgParams2D<T>,
    patterns: &[SamplingPattern],
    spectra: &[ComplexVector<T>],
) -> Result<(Array2<T>, Pg2dTape<T>)> {
    check_batch(params.rows * params.cols, patterns, spectra)?;
    let traces = patterns.iter().zip(spectra).map(|(p, x)| trace_one(params, p, x)).collect();
    let tape = Pg2dTape { traces };
    Ok((tape.output(), tape))
}

/// Single image; `x` is the flattened row-major spectrum.
pub fn pg2d_forward<T: Scalar>(
    params: &PgParams2D<T>,
    pattern: &SamplingPattern,
    x: &ComplexVector<T>,
) -> Result<(Vec<T>, Pg2dTape<T>)> {
    let (out, tape) = pg2d_forward_batch(params, std::slice::from_ref(pattern), std::slice::from_ref(x))?;
    Ok((out.column(0).to_vec(), tape))
}

/// Both uses of the selection (measurement `A x` and projector `A^T A`)
/// are differentiated: every projector application `w = A^T A v` with
/// cotangent `g_w` contributes `g_w[n] v[sel_m] + g_w[sel_m] v[n]` per channel.
pub fn pg2d_backward<T: Scalar>(
    params: &PgParams2D<T>,
    tape: &Pg2dTape<T>,
    upstream: ArrayView2<T>,
    with_selection: bool,
) -> Result<(PgParams2D<T>, Vec<SelectionGrad<T>>)> {
    let n = params.rows * params.cols;
    if upstream.dim() != (n, tape.traces.len()) {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match {} images of {n} pixels",
            upstream.dim(),
            tape.traces.len()
        )));
    }
    let mut grads = params.zeros_like();
    let mut selection = Vec::new();
    for (b, tr) in tape.traces.iter().enumerate() {
        let mut sel = SelectionGrad::new(tr.pattern.m(), n);
        let mut g_state: Vec<T> = upstream.column(b).to_vec();
        for k in (0..PG_LAYERS).rev() {
            let op = params.prox(k);
            let mut g_pre = vec![T::zero(); n];
            let mut g_lambda = T::zero();
            for ((gp, &gs), &v) in g_pre.iter_mut().zip(&g_state).zip(&tr.pre[k]) {
                let e = op.eval(v);
                *gp = gs * e.d_input;
                g_lambda += gs * e.d_lambda;
            }
            grads.threshold_raw[k] += g_lambda * params.threshold_raw[k].sigmoid();
            let alpha = params.step[k];
            grads.step[k] -= g_pre.iter().zip(&tr.gradients[k]).map(|(&a, &b)| a * b).sum::<T>();
            // cotangent of w = A^T A r is F q with q = -alpha g_pre
            let q: Vec<T> = g_pre.iter().map(|&v| -alpha * v).collect();
            let g_w = params.forward_real(&q);
            if with_selection {
                let r = &tr.residuals[k];
                selection_terms(&mut sel, &tr.pattern, &r.re, &g_w.re);
                selection_terms(&mut sel, &tr.pattern, &r.im, &g_w.im);
            }
            let back = params.inverse_real(&masked(&tr.mask, &g_w));
            g_state = g_pre.iter().zip(&back).map(|(&a, &b)| a + b).collect();
        }
        if with_selection {
            let g_w = params.forward_real(&g_state);
            selection_terms(&mut sel, &tr.pattern, &tr.x.re, &g_w.re);
            selection_terms(&mut sel, &tr.pattern, &tr.x.im, &g_w.im);
            selection.push(sel);
        }
    }
    Ok((grads, selection))
}
