//! Independent reference implementations: naive transforms, and every
//! network re-written against a dense real selection matrix `A` (`M x N`,
//! row-major) so selection gradients can be checked by finite differences.
#![allow(dead_code)]

pub mod gradcheck;

use std::f64::consts::PI;

use kspace_dps::math::{ComplexVector, RngHandle};
use kspace_dps::recon::{FcParams, ListaParams, PgParams2D};
use kspace_dps::sampler::{SamplerMode, SamplingPattern, SoftSampleTape};
use ndarray::Array2;

pub fn randn(len: usize, rng: &mut RngHandle) -> Vec<f64> {
    (0..len).map(|_| rng.standard_normal()).collect()
}

pub fn rand_complex(n: usize, rng: &mut RngHandle) -> ComplexVector<f64> {
    ComplexVector {
        re: randn(n, rng),
        im: randn(n, rng),
    }
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

/// Central differences of `f` at `x`.
pub fn fd_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `O(N^2)` unitary DFT; `sign = -1` forward, `+1` inverse.
pub fn naive_dft(re: &[f64], im: &[f64], sign: f64) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k in 0..n {
        for j in 0..n {
            let th = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
            out_re[k] += re[j] * th.cos() - im[j] * th.sin();
            out_im[k] += re[j] * th.sin() + im[j] * th.cos();
        }
        out_re[k] *= scale;
        out_im[k] *= scale;
    }
    (out_re, out_im)
}

/// `O(N^2)` unitary 2D DFT over a row-major `rows x cols` grid.
pub fn naive_dft2(rows: usize, cols: usize, re: &[f64], im: &[f64], sign: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rows * cols;
    let scale = 1.0 / (n as f64).sqrt();
    let mut out_re = vec![0.0; n];
    let mut out_im = vec![0.0; n];
    for k1 in 0..rows {
        for k2 in 0..cols {
            let (mut ar, mut ai) = (0.0, 0.0);
            for j1 in 0..rows {
                for j2 in 0..cols {
                    let th = sign
                        * 2.0
                        * PI
                        * (((j1 * k1) % rows) as f64 / rows as f64 + ((j2 * k2) % cols) as f64 / cols as f64);
                    let (xr, xi) = (re[j1 * cols + j2], im[j1 * cols + j2]);
                    ar += xr * th.cos() - xi * th.sin();
                    ai += xr * th.sin() + xi * th.cos();
                }
            }
            out_re[k1 * cols + k2] = ar * scale;
            out_im[k1 * cols + k2] = ai * scale;
        }
    }
    (out_re, out_im)
}

pub fn one_hot(p: &SamplingPattern) -> Vec<f64> {
    let n = p.n();
    let mut a = vec![0.0; p.m() * n];
    for (m, &i) in p.indices().iter().enumerate() {
        a[m * n + i] = 1.0;
    }
    a
}

/// `A v` for a real row-major `m x n` matrix.
pub fn mat_vec(a: &[f64], m: usize, v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..m).map(|r| (0..n).map(|c| a[r * n + c] * v[c]).sum()).collect()
}

/// `A^T u`.
pub fn mat_t_vec(a: &[f64], n: usize, u: &[f64]) -> Vec<f64> {
    (0..n).map(|c| u.iter().enumerate().map(|(r, &ur)| a[r * n + c] * ur).sum()).collect()
}

fn project(a: &[f64], m: usize, v: &[f64]) -> Vec<f64> {
    mat_t_vec(a, v.len(), &mat_vec(a, m, v))
}

pub fn prox(v: f64, lambda: f64, beta: f64) -> f64 {
    let sig = |t: f64| 1.0 / (1.0 + (-t).exp());
    v * sig(beta * (v - lambda)) + v * sig(-beta * (v + lambda))
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn lista_dense(p: &ListaParams<f64>, a: &[f64], m: usize, x: &ComplexVector<f64>) -> Vec<f64> {
    let n = p.n;
    let mut z = project(a, m, &x.re);
    z.extend(project(a, m, &x.im));
    let mut s = vec![0.0; 2 * n];
    for k in 0..p.b.len() {
        let lambda = softplus(p.threshold_raw[k]);
        let v: Vec<f64> = (0..2 * n)
            .map(|i| (0..2 * n).map(|j| p.c[k][[i, j]] * z[j] + p.b[k][[i, j]] * s[j]).sum())
            .collect();
        s = v.iter().map(|&vi| prox(vi, lambda, p.sharpness)).collect();
    }
    s.truncate(n);
    s
}

pub fn fc_dense(p: &FcParams<f64>, a: &[f64], m: usize, x: &ComplexVector<f64>) -> Vec<f64> {
    let mut h = mat_vec(a, m, &x.re);
    h.extend(mat_vec(a, m, &x.im));
    let layers = p.weights.len();
    for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
        let mut next: Vec<f64> = (0..w.nrows())
            .map(|i| (0..w.ncols()).map(|j| w[[i, j]] * h[j]).sum::<f64>() + b[i])
            .collect();
        if l + 1 < layers {
            next.iter_mut().for_each(|v| {
                if *v < 0.0 {
                    *v *= p.slope
                }
            });
        }
        h = next;
    }
    h
}

pub fn pg2d_dense(p: &PgParams2D<f64>, a: &[f64], m: usize, x: &ComplexVector<f64>) -> Vec<f64> {
    let (rows, cols) = (p.rows, p.cols);
    let back = |re: &[f64], im: &[f64]| {
        let pr = project(a, m, re);
        let pi = project(a, m, im);
        naive_dft2(rows, cols, &pr, &pi, 1.0).0
    };
    let mut s = back(&x.re, &x.im);
    for k in 0..p.step.len() {
        let lambda = softplus(p.threshold_raw[k]);
        let zeros = vec![0.0; s.len()];
        let (fr, fi) = naive_dft2(rows, cols, &s, &zeros, -1.0);
        let rr: Vec<f64> = fr.iter().zip(&x.re).map(|(a, b)| a - b).collect();
        let ri: Vec<f64> = fi.iter().zip(&x.im).map(|(a, b)| a - b).collect();
        let g = back(&rr, &ri);
        s = s
            .iter()
            .zip(&g)
            .map(|(&si, &gi)| prox(si - p.step[k] * gi, lambda, p.sharpness))
            .collect();
    }
    s
}

/// Relaxed selection rows as a function of the logits, with the tape's
/// Gumbel noise and masking order frozen. Returns row-major `M x N`.
pub fn soft_rows(tape: &SoftSampleTape<f64>, logits0: &Array2<f64>, logits: &[f64]) -> Vec<f64> {
    let n = tape.n();
    let tau = tape.tau();
    let mut out = Vec::with_capacity(tape.draws() * n);
    for m in 0..tape.draws() {
        let r = match tape.mode() {
            SamplerMode::PerSample => m,
            SamplerMode::TopM => 0,
        };
        let keys = tape.keys(m);
        let masked = tape.masked(m);
        let z: Vec<f64> = (0..n)
            .map(|i| {
                if masked.contains(&i) {
                    f64::NEG_INFINITY
                } else {
                    logits[r * n + i] + (keys[i] - logits0[[r, i]])
                }
            })
            .map(|k| k / tau)
            .collect();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|&k| (k - max).exp()).collect();
        let total: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / total));
    }
    out
}
