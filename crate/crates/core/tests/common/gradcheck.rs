//! Finite-difference checks of every analytic gradient, shared by the
//! gradient tests and the acceptance run. Each check panics on failure.

use super::*;
use kspace_dps::engine::mse_loss;
use kspace_dps::math::{ComplexVector, RngHandle};
use kspace_dps::params::ParamSet;
use kspace_dps::recon::{
    fc_backward, fc_forward_batch, lista_backward, lista_forward_batch, pg2d_backward, pg2d_forward_batch, FcParams,
    ListaParams, PgParams2D, SmoothThreshold,
};
use kspace_dps::sampler::{
    backward_logits, backward_logits_factored, entropy_penalty, sample_hard, LogitBank, SamplerMode, SamplingPattern,
    SelectionGrad,
};
use ndarray::Array2;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;
const CHAIN_TOL: f64 = 1e-3;

fn flat<P: ParamSet<f64>>(p: &P) -> Vec<f64> {
    p.slices().concat()
}

fn set_flat<P: ParamSet<f64>>(p: &mut P, v: &[f64]) {
    let mut off = 0;
    for s in p.slices_mut() {
        s.copy_from_slice(&v[off..off + s.len()]);
        off += s.len();
    }
}

/// Random patterns and spectra for a batch.
fn batch(n: usize, m: usize, count: usize, rng: &mut RngHandle) -> (Vec<SamplingPattern>, Vec<ComplexVector<f64>>) {
    let patterns = (0..count)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            for i in 0..m {
                let j = i + rng.below(n - i);
                idx.swap(i, j);
            }
            idx.truncate(m);
            SamplingPattern::new(n, idx).unwrap()
        })
        .collect();
    let spectra = (0..count).map(|_| rand_complex(n, rng)).collect();
    (patterns, spectra)
}

/// `sum U . out` as a function of the one-hot matrix of example `b`.
fn check_selection(
    sel: &SelectionGrad<f64>,
    pattern: &SamplingPattern,
    upstream: &[f64],
    mut dense: impl FnMut(&[f64]) -> Vec<f64>,
) {
    let a0 = one_hot(pattern);
    let fd = fd_grad(&a0, H, |a| dense(a).iter().zip(upstream).map(|(o, u)| o * u).sum());
    let analytic: Vec<f64> = sel.to_dense().iter().copied().collect();
    let err = rel_err(&analytic, &fd);
    assert!(err < TOL, "selection gradient rel err {err:e}");
}

pub fn mse_gradient() {
    let mut rng = RngHandle::new(1);
    let truth = Array2::from_shape_vec((6, 3), randn(18, &mut rng)).unwrap();
    let est0 = randn(18, &mut rng);
    let (_, g) = mse_loss(Array2::from_shape_vec((6, 3), est0.clone()).unwrap().view(), truth.view()).unwrap();
    let fd = fd_grad(&est0, H, |e| {
        let e = Array2::from_shape_vec((6, 3), e.to_vec()).unwrap();
        mse_loss(e.view(), truth.view()).unwrap().0
    });
    assert!(rel_err(g.as_slice().unwrap(), &fd) < TOL);
}

pub fn smooth_prox_partials() {
    for &(v, lambda) in &[(0.3, 0.2), (-0.05, 0.1), (1.7, 0.5), (-0.9, 0.8), (0.0, 0.3)] {
        let e = SmoothThreshold { lambda, beta: 10.0 }.eval(v);
        let d_in = (prox(v + H, lambda, 10.0) - prox(v - H, lambda, 10.0)) / (2.0 * H);
        let d_lam = (prox(v, lambda + H, 10.0) - prox(v, lambda - H, 10.0)) / (2.0 * H);
        assert!((e.value - prox(v, lambda, 10.0)).abs() < 1e-15);
        assert!(rel_err(&[e.d_input], &[d_in]) < TOL, "d_input at {v}");
        assert!((e.d_lambda - d_lam).abs() < TOL * d_lam.abs().max(1e-6), "d_lambda at {v}");
    }
}

pub fn entropy_gradient() {
    let mut rng = RngHandle::new(2);
    let bank = LogitBank::<f64>::init(SamplerMode::PerSample, 3, 7, &mut rng).unwrap();
    let (_, g) = entropy_penalty(&bank).unwrap();
    let phi0: Vec<f64> = bank.values.iter().copied().collect();
    let fd = fd_grad(&phi0, H, |phi| {
        let b = LogitBank::from_values(SamplerMode::PerSample, 3, Array2::from_shape_vec((3, 7), phi.to_vec()).unwrap())
            .unwrap();
        entropy_penalty(&b).unwrap().0
    });
    assert!(rel_err(g.as_slice().unwrap(), &fd) < TOL);
}

fn check_relaxation(mode: SamplerMode, draws: usize, n: usize, tau: f64, seed: u64) {
    let mut rng = RngHandle::new(seed);
    let bank = LogitBank::<f64>::init(mode, draws, n, &mut rng).unwrap();
    let (_, tape) = sample_hard(&bank, &mut rng, tau).unwrap();
    let upstream = randn(draws * n, &mut rng);
    let u = Array2::from_shape_vec((draws, n), upstream.clone()).unwrap();
    let dense = backward_logits(&tape, u.view()).unwrap();
    let phi0: Vec<f64> = bank.values.iter().copied().collect();
    let fd = fd_grad(&phi0, H, |phi| {
        soft_rows(&tape, &bank.values, phi).iter().zip(&upstream).map(|(s, u)| s * u).sum()
    });
    assert!(rel_err(dense.as_slice().unwrap(), &fd) < TOL, "{mode} tau={tau}");

    let mut factored = SelectionGrad::new(draws, n);
    for _ in 0..3 {
        factored.push(randn(draws, &mut rng), randn(n, &mut rng));
    }
    let target: Vec<f64> = factored.to_dense().iter().copied().collect();
    let fd = fd_grad(&phi0, H, |phi| {
        soft_rows(&tape, &bank.values, phi).iter().zip(&target).map(|(s, u)| s * u).sum()
    });
    let g = backward_logits_factored(&tape, &factored).unwrap();
    assert!(rel_err(g.as_slice().unwrap(), &fd) < TOL, "{mode} factored tau={tau}");
}

pub fn softmax_relaxation_per_sample() {
    for (seed, tau) in [(3, 5.0), (4, 1.0), (5, 0.5)] {
        check_relaxation(SamplerMode::PerSample, 4, 9, tau, seed);
    }
}

pub fn softmax_relaxation_top_m() {
    for (seed, tau) in [(6, 5.0), (7, 1.0), (8, 0.5)] {
        check_relaxation(SamplerMode::TopM, 4, 9, tau, seed);
    }
    check_relaxation(SamplerMode::TopM, 9, 9, 2.0, 9);
}

pub fn lista_gradients() {
    let (n, m) = (8, 3);
    let mut rng = RngHandle::new(10);
    let coverage = vec![m as f64 / n as f64; n];
    let params = ListaParams::model_based(&coverage, 0.5, 0.1, 0.05, &mut rng).unwrap();
    let (patterns, spectra) = batch(n, m, 2, &mut rng);
    let (out, tape) = lista_forward_batch(&params, &patterns, &spectra).unwrap();
    for b in 0..2 {
        let dense = lista_dense(&params, &one_hot(&patterns[b]), m, &spectra[b]);
        assert!(rel_err(&out.column(b).to_vec(), &dense) < 1e-12);
    }
    let u = Array2::from_shape_vec((n, 2), randn(2 * n, &mut rng)).unwrap();
    let (g, sel) = lista_backward(&params, &tape, u.view(), true).unwrap();
    let theta0 = flat(&params);
    let fd = fd_grad(&theta0, H, |theta| {
        let mut p = params.clone();
        set_flat(&mut p, theta);
        let (o, _) = lista_forward_batch(&p, &patterns, &spectra).unwrap();
        (&o * &u).sum()
    });
    assert!(rel_err(&flat(&g), &fd) < TOL);
    for b in 0..2 {
        let ub = u.column(b).to_vec();
        check_selection(&sel[b], &patterns[b], &ub, |a| lista_dense(&params, a, m, &spectra[b]));
    }
}

pub fn fc_gradients() {
    let (n, m) = (8, 3);
    let mut rng = RngHandle::new(11);
    let mut params = FcParams::init(2 * m, &[7, 5], n, &mut rng);
    for b in &mut params.biases {
        b.iter_mut().for_each(|v| *v = 0.1 * rng.standard_normal());
    }
    let (patterns, spectra) = batch(n, m, 2, &mut rng);
    let (out, tape) = fc_forward_batch(&params, &patterns, &spectra).unwrap();
    for b in 0..2 {
        let dense = fc_dense(&params, &one_hot(&patterns[b]), m, &spectra[b]);
        assert!(rel_err(&out.column(b).to_vec(), &dense) < 1e-12);
    }
    let u = Array2::from_shape_vec((n, 2), randn(2 * n, &mut rng)).unwrap();
    let (g, sel) = fc_backward(&params, &tape, u.view(), true).unwrap();
    let theta0 = flat(&params);
    let fd = fd_grad(&theta0, H, |theta| {
        let mut p = params.clone();
        set_flat(&mut p, theta);
        let (o, _) = fc_forward_batch(&p, &patterns, &spectra).unwrap();
        (&o * &u).sum()
    });
    assert!(rel_err(&flat(&g), &fd) < TOL);
    for b in 0..2 {
        let ub = u.column(b).to_vec();
        check_selection(&sel[b], &patterns[b], &ub, |a| fc_dense(&params, a, m, &spectra[b]));
    }
}

pub fn pg2d_gradients() {
    let (rows, cols, m) = (4, 4, 6);
    let n = rows * cols;
    let mut rng = RngHandle::new(12);
    let mut params = PgParams2D::<f64>::new(rows, cols, 0.8, 0.05).unwrap();
    params.step.iter_mut().for_each(|s| *s += 0.2 * rng.standard_normal());
    let (patterns, spectra) = batch(n, m, 2, &mut rng);
    let (out, tape) = pg2d_forward_batch(&params, &patterns, &spectra).unwrap();
    for b in 0..2 {
        let dense = pg2d_dense(&params, &one_hot(&patterns[b]), m, &spectra[b]);
        assert!(rel_err(&out.column(b).to_vec(), &dense) < 1e-12);
    }
    let u = Array2::from_shape_vec((n, 2), randn(2 * n, &mut rng)).unwrap();
    let (g, sel) = pg2d_backward(&params, &tape, u.view(), true).unwrap();
    let theta0 = flat(&params);
    let fd = fd_grad(&theta0, H, |theta| {
        let mut p = params.clone();
        set_flat(&mut p, theta);
        let (o, _) = pg2d_forward_batch(&p, &patterns, &spectra).unwrap();
        (&o * &u).sum()
    });
    assert!(rel_err(&flat(&g), &fd) < TOL);
    for b in 0..2 {
        let ub = u.column(b).to_vec();
        check_selection(&sel[b], &patterns[b], &ub, |a| pg2d_dense(&params, a, m, &spectra[b]));
    }
}

/// Straight-through chain: the analytic logit gradient equals the exact
/// gradient of `phi -> L(A_hard + S(phi) - S(phi0))` at `phi0`, where `S`
/// is the relaxed selection with the Gumbel noise frozen.
fn check_chain(
    mode: SamplerMode,
    m: usize,
    n: usize,
    seed: u64,
    forward: impl Fn(&SamplingPattern, &ComplexVector<f64>) -> (Vec<f64>, kspace_dps::recon::ReconTape<f64>),
    backward: impl Fn(&kspace_dps::recon::ReconTape<f64>, &Array2<f64>) -> Vec<SelectionGrad<f64>>,
    dense: impl Fn(&[f64], &ComplexVector<f64>) -> Vec<f64>,
) {
    let mut rng = RngHandle::new(seed);
    let bank = LogitBank::<f64>::init(mode, m, n, &mut rng).unwrap();
    let (pattern, stape) = sample_hard(&bank, &mut rng, 2.0).unwrap();
    let x = rand_complex(n, &mut rng);
    let truth = randn(n, &mut rng);
    let (out, rtape) = forward(&pattern, &x);
    let upstream = Array2::from_shape_fn((n, 1), |(i, _)| 2.0 * (out[i] - truth[i]) / n as f64);
    let sel = backward(&rtape, &upstream);
    let analytic = backward_logits_factored(&stape, &sel[0]).unwrap();

    let phi0: Vec<f64> = bank.values.iter().copied().collect();
    let hard = one_hot(&pattern);
    let s0 = soft_rows(&stape, &bank.values, &phi0);
    let fd = fd_grad(&phi0, H, |phi| {
        let s = soft_rows(&stape, &bank.values, phi);
        let a: Vec<f64> = hard.iter().zip(&s).zip(&s0).map(|((h, s), s0)| h + s - s0).collect();
        let est = dense(&a, &x);
        est.iter().zip(&truth).map(|(e, t)| (e - t).powi(2)).sum::<f64>() / n as f64
    });
    let err = rel_err(analytic.as_slice().unwrap(), &fd);
    assert!(err < CHAIN_TOL, "{mode} chain rel err {err:e}");
}

pub fn end_to_end_chain_lista() {
    let (n, m) = (8, 3);
    let params = ListaParams::model_based(&vec![0.375; n], 0.5, 0.1, 0.05, &mut RngHandle::new(20)).unwrap();
    for (mode, seed) in [(SamplerMode::PerSample, 21), (SamplerMode::TopM, 22)] {
        check_chain(
            mode,
            m,
            n,
            seed,
            |p, x| {
                let (o, t) = lista_forward_batch(&params, std::slice::from_ref(p), std::slice::from_ref(x)).unwrap();
                (o.column(0).to_vec(), kspace_dps::recon::ReconTape::Lista(t))
            },
            |t, u| match t {
                kspace_dps::recon::ReconTape::Lista(t) => lista_backward(&params, t, u.view(), true).unwrap().1,
                _ => unreachable!(),
            },
            |a, x| lista_dense(&params, a, m, x),
        );
    }
}

pub fn end_to_end_chain_fc() {
    let (n, m) = (8, 3);
    let params = FcParams::init(2 * m, &[9, 6], n, &mut RngHandle::new(30));
    check_chain(
        SamplerMode::PerSample,
        m,
        n,
        31,
        |p, x| {
            let (o, t) = fc_forward_batch(&params, std::slice::from_ref(p), std::slice::from_ref(x)).unwrap();
            (o.column(0).to_vec(), kspace_dps::recon::ReconTape::Fc(t))
        },
        |t, u| match t {
            kspace_dps::recon::ReconTape::Fc(t) => fc_backward(&params, t, u.view(), true).unwrap().1,
            _ => unreachable!(),
        },
        |a, x| fc_dense(&params, a, m, x),
    );
}

pub fn end_to_end_chain_pg2d() {
    let (rows, cols, m) = (4, 4, 5);
    let params = PgParams2D::<f64>::new(rows, cols, 0.9, 0.05).unwrap();
    check_chain(
        SamplerMode::TopM,
        m,
        rows * cols,
        40,
        |p, x| {
            let (o, t) = pg2d_forward_batch(&params, std::slice::from_ref(p), std::slice::from_ref(x)).unwrap();
            (o.column(0).to_vec(), kspace_dps::recon::ReconTape::Pg2d(t))
        },
        |t, u| match t {
            kspace_dps::recon::ReconTape::Pg2d(t) => pg2d_backward(&params, t, u.view(), true).unwrap().1,
            _ => unreachable!(),
        },
        |a, x| pg2d_dense(&params, a, m, x),
    );
}

/// Every check, by name.
pub const ALL: &[(&str, fn())] = &[
    ("mse_gradient", mse_gradient),
    ("smooth_prox_partials", smooth_prox_partials),
    ("entropy_gradient", entropy_gradient),
    ("softmax_relaxation_per_sample", softmax_relaxation_per_sample),
    ("softmax_relaxation_top_m", softmax_relaxation_top_m),
    ("lista_gradients", lista_gradients),
    ("fc_gradients", fc_gradients),
    ("pg2d_gradients", pg2d_gradients),
    ("end_to_end_chain_lista", end_to_end_chain_lista),
    ("end_to_end_chain_fc", end_to_end_chain_fc),
    ("end_to_end_chain_pg2d", end_to_end_chain_pg2d),
];
