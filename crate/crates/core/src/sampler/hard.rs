//! Hard Gumbel-max sampling without replacement, with a tape of the
//! temperature-softmax relaxation used to route gradients back to the
//! logits (straight-through: hard one-hots forward, soft Jacobian backward).

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::math::{gumbel_noise, RngHandle, Scalar};
use crate::sampler::logits::masked_softmax;
use crate::sampler::{LogitBank, SamplerMode, SamplingPattern};

/// Index of the largest value among entries not yet `taken`; ties go to
/// the lowest index.
pub(crate) fn masked_argmax<T: Scalar>(values: impl Iterator<Item = T>, taken: &[bool]) -> usize {
    let mut best: Option<(usize, T)> = None;
    for (i, v) in values.enumerate() {
        if taken[i] {
            continue;
        }
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.expect("at least one untaken entry").0
}

/// Indices of the `m` largest entries, in decreasing order of value,
/// ties broken by lowest index.
pub(crate) fn top_m_order<T: Scalar>(values: ArrayView1<T>, m: usize) -> Vec<usize> {
    let cmp = |a: &usize, b: &usize| {
        values[*b]
            .partial_cmp(&values[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..values.len()).collect();
    if m == 0 {
        return Vec::new();
    }
    if m < idx.len() {
        idx.select_nth_unstable_by(m - 1, cmp);
        idx.truncate(m);
    }
    idx.sort_by(cmp);
    idx
}

fn log_add_exp<T: Scalar>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Gradient of a loss with respect to the `M x N` one-hot selection matrix,
/// kept as a sum of outer products `sum_t a_t b_t^T` (`a_t` length `M`,
/// `b_t` length `N`). Reconstruction networks produce this shape naturally
/// and it lets top-M backward run in `O(T (M + N))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGrad<T> {
    m: usize,
    n: usize,
    terms: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> SelectionGrad<T> {
    pub fn new(m: usize, n: usize) -> Self {
        Self {
            m,
            n,
            terms: Vec::new(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    pub fn terms(&self) -> &[(Vec<T>, Vec<T>)] {
        &self.terms
    }

    pub fn push(&mut self, rows: Vec<T>, cols: Vec<T>) {
        assert_eq!(rows.len(), self.m, "row factor length");
        assert_eq!(cols.len(), self.n, "column factor length");
        self.terms.push((rows, cols));
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.m, self.n));
        for (a, b) in &self.terms {
            for (mut row, &am) in out.rows_mut().into_iter().zip(a) {
                row.zip_mut_with(&ArrayView1::from(&b[..]), |o, &bn| *o += am * bn);
            }
        }
        out
    }

    fn row(&self, m: usize) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (a, b) in &self.terms {
            let am = a[m];
            if am != T::zero() {
                out.iter_mut().zip(b).for_each(|(o, &bn)| *o += am * bn);
            }
        }
        out
    }
}

/// Everything needed to evaluate the soft relaxation of one hard draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSampleTape<T> {
    mode: SamplerMode,
    tau: T,
    /// Perturbed keys `phi + e`: one row per draw (per-sample) or a single
    /// shared row (top-M).
    keys: Array2<T>,
    /// Selected indices in draw order; draw `m` masks `order[..m]`.
    order: Vec<usize>,
    /// Top-M only: `log sum exp(key/tau)` over the entries unmasked at draw
    /// `m`, for `m = 0..=M` (the last one covers never-selected entries).
    log_norm: Vec<T>,
}

impl<T: Scalar> SoftSampleTape<T> {
    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn draws(&self) -> usize {
        self.order.len()
    }

    pub fn n(&self) -> usize {
        self.keys.ncols()
    }

    /// Perturbed keys seen by draw `m` (before masking).
    pub fn keys(&self, m: usize) -> ArrayView1<'_, T> {
        match self.mode {
            SamplerMode::PerSample => self.keys.row(m),
            SamplerMode::TopM => self.keys.row(0),
        }
    }

    /// Indices masked at draw `m`.
    pub fn masked(&self, m: usize) -> &[usize] {
        &self.order[..m]
    }

    /// `softmax((w + phi + e) / tau)` of draw `m`, exactly zero on masked
    /// entries.
    pub fn softmax_row(&self, m: usize) -> Vec<T> {
        let mut keep = vec![true; self.n()];
        for &i in self.masked(m) {
            keep[i] = false;
        }
        masked_softmax(self.keys(m).iter().copied(), &keep, self.tau)
            .expect("draw index below N leaves an unmasked entry")
    }
}

fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if tau > T::zero() && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("temperature must be positive, got {tau}")))
    }
}

/// Draw `M` rows, row `m` from its own categorical with earlier picks
/// masked out.
pub fn sample_hard_per_sample<T: Scalar>(
    bank: &LogitBank<T>,
    rng: &mut RngHandle,
    tau: T,
) -> Result<(SamplingPattern, SoftSampleTape<T>)> {
    if bank.mode() != SamplerMode::PerSample {
        return Err(Error::WrongMode {
            expected: "per-sample",
        });
    }
    check_tau(tau)?;
    let (m, n) = bank.values.dim();
    if m > n {
        return Err(Error::TooManyDraws { m, n });
    }
    let mut keys = Array2::zeros((m, n));
    let mut taken = vec![false; n];
    let mut order = Vec::with_capacity(m);
    for (row, mut key_row) in bank.values.rows().into_iter().zip(keys.rows_mut()) {
        let noise: Vec<T> = gumbel_noise(n, rng);
        key_row.assign(&(&row + &ArrayView1::from(&noise[..])));
        let pick = masked_argmax(key_row.iter().copied(), &taken);
        taken[pick] = true;
        order.push(pick);
    }
    Ok((
        SamplingPattern::from_distinct(n, order.clone()),
        SoftSampleTape {
            mode: SamplerMode::PerSample,
            tau,
            keys,
            order,
            log_norm: Vec::new(),
        },
    ))
}

/// Perturb one shared logit vector once and keep the `M` largest keys.
pub fn sample_hard_top_m<T: Scalar>(
    bank: &LogitBank<T>,
    rng: &mut RngHandle,
    tau: T,
) -> Result<(SamplingPattern, SoftSampleTape<T>)> {
    if bank.mode() != SamplerMode::TopM {
        return Err(Error::WrongMode { expected: "top-m" });
    }
    check_tau(tau)?;
    let n = bank.n();
    let m = bank.draws();
    if m > n {
        return Err(Error::TooManyDraws { m, n });
    }
    let noise: Vec<T> = gumbel_noise(n, rng);
    let keys = &bank.values + &ArrayView2::from_shape((1, n), &noise[..]).expect("1 x n");
    let order = top_m_order(keys.row(0), m);

    let mut selected = vec![false; n];
    for &i in &order {
        selected[i] = true;
    }
    let scaled = |i: usize| keys[[0, i]] / tau;
    let mut log_norm = vec![T::neg_infinity(); m + 1];
    let rest_max = (0..n)
        .filter(|&i| !selected[i])
        .map(scaled)
        .fold(T::neg_infinity(), T::max);
    if rest_max > T::neg_infinity() {
        let s: T = (0..n)
            .filter(|&i| !selected[i])
            .map(|i| (scaled(i) - rest_max).exp())
            .sum();
        log_norm[m] = rest_max + s.ln();
    }
    for j in (0..m).rev() {
        log_norm[j] = log_add_exp(log_norm[j + 1], scaled(order[j]));
    }
    Ok((
        SamplingPattern::from_distinct(n, order.clone()),
        SoftSampleTape {
            mode: SamplerMode::TopM,
            tau,
            keys,
            order,
            log_norm,
        },
    ))
}

/// Dispatch on the bank's mode.
pub fn sample_hard<T: Scalar>(
    bank: &LogitBank<T>,
    rng: &mut RngHandle,
    tau: T,
) -> Result<(SamplingPattern, SoftSampleTape<T>)> {
    match bank.mode() {
        SamplerMode::PerSample => sample_hard_per_sample(bank, rng, tau),
        SamplerMode::TopM => sample_hard_top_m(bank, rng, tau),
    }
}

fn logit_rows(tape_mode: SamplerMode, draws: usize) -> usize {
    match tape_mode {
        SamplerMode::PerSample => draws,
        SamplerMode::TopM => 1,
    }
}

/// Softmax-Jacobian-vector product for one draw, accumulated into `out`:
/// `out_n += s_n (u_n - <s, u>) / tau`.
fn accumulate_draw<T: Scalar>(s: &[T], u: &[T], tau: T, out: &mut [T]) {
    let rho: T = s.iter().zip(u).map(|(&a, &b)| a * b).sum();
    for ((o, &sn), &un) in out.iter_mut().zip(s).zip(u) {
        *o += sn * (un - rho) / tau;
    }
}

/// Gradient with respect to the logits given the dense upstream gradient
/// with respect to the one-hot rows (`M x N`). Top-M draws sum into the
/// single shared logit row.
pub fn backward_logits<T: Scalar>(tape: &SoftSampleTape<T>, upstream: ArrayView2<T>) -> Result<Array2<T>> {
    let (m, n) = (tape.draws(), tape.n());
    if upstream.dim() != (m, n) {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match tape {m}x{n}",
            upstream.dim()
        )));
    }
    let mut grad = Array2::zeros((logit_rows(tape.mode, m), n));
    for (draw, u) in upstream.rows().into_iter().enumerate() {
        let s = tape.softmax_row(draw);
        let u = u.to_vec();
        let target = match tape.mode {
            SamplerMode::PerSample => draw,
            SamplerMode::TopM => 0,
        };
        let mut row = grad.row_mut(target);
        accumulate_draw(&s, &u, tape.tau, row.as_slice_mut().expect("standard layout"));
    }
    Ok(grad)
}

/// Same result as [`backward_logits`] for `upstream.to_dense()`, without
/// materializing the `M x N` matrix.
pub fn backward_logits_factored<T: Scalar>(
    tape: &SoftSampleTape<T>,
    upstream: &SelectionGrad<T>,
) -> Result<Array2<T>> {
    let (m, n) = (tape.draws(), tape.n());
    if upstream.dims() != (m, n) {
        return Err(Error::Shape(format!(
            "upstream {:?} does not match tape {m}x{n}",
            upstream.dims()
        )));
    }
    match tape.mode {
        SamplerMode::PerSample => {
            let mut grad = Array2::zeros((m, n));
            for draw in 0..m {
                let s = tape.softmax_row(draw);
                let u = upstream.row(draw);
                let mut row = grad.row_mut(draw);
                accumulate_draw(&s, &u, tape.tau, row.as_slice_mut().expect("standard layout"));
            }
            Ok(grad)
        }
        SamplerMode::TopM => Ok(top_m_factored(tape, upstream)),
    }
}

/// Top-M relaxation backward in `O(T (M + N))`.
///
/// With `K_n = key_n / tau` and `L_m` the log-normalizer of draw `m`, the
/// softmax of draw `m` is `exp(K_n - L_m)` on entries still unmasked. An
/// entry selected at draw `j` is unmasked for draws `0..=j`; unselected
/// entries are unmasked for every draw. Prefix sums over draws and suffix
/// sums over the selected entries, all with factors `<= 1`, give every
/// contraction without forming a softmax row.
fn top_m_factored<T: Scalar>(tape: &SoftSampleTape<T>, upstream: &SelectionGrad<T>) -> Array2<T> {
    let (m, n) = (tape.draws(), tape.n());
    let tau = tape.tau;
    let mut grad = Array2::zeros((1, n));
    if m == 0 {
        return grad;
    }
    let keys = tape.keys.row(0);
    let k = |i: usize| keys[i] / tau;
    let l = &tape.log_norm;
    let mut position = vec![None; n];
    for (j, &i) in tape.order.iter().enumerate() {
        position[i] = Some(j);
    }

    // sum over active draws of s_{m,i} a_m
    let prefix = |a: &[T]| -> Vec<T> {
        let mut p = vec![T::zero(); m];
        p[0] = a[0];
        for j in 1..m {
            p[j] = (l[j] - l[j - 1]).exp() * p[j - 1] + a[j];
        }
        p
    };
    let contract_draws = |p: &[T], i: usize| -> T {
        let j = position[i].unwrap_or(m - 1);
        (k(i) - l[j]).exp() * p[j]
    };
    // q_m = sum over entries active at draw m of s_{m,i} b_i
    let suffix = |b: &[T]| -> Vec<T> {
        let mut q = vec![T::zero(); m + 1];
        if l[m] > T::neg_infinity() {
            q[m] = (0..n)
                .filter(|&i| position[i].is_none())
                .map(|i| (k(i) - l[m]).exp() * b[i])
                .sum();
        }
        for j in (0..m).rev() {
            let carry = if l[j + 1] > T::neg_infinity() {
                (l[j + 1] - l[j]).exp() * q[j + 1]
            } else {
                T::zero()
            };
            let i = tape.order[j];
            q[j] = (k(i) - l[j]).exp() * b[i] + carry;
        }
        q
    };

    let mut rho = vec![T::zero(); m];
    let out = grad.row_mut(0).into_slice().expect("standard layout");
    for (a, b) in upstream.terms() {
        let p = prefix(a);
        for (i, o) in out.iter_mut().enumerate() {
            *o += b[i] * contract_draws(&p, i);
        }
        let q = suffix(b);
        for j in 0..m {
            rho[j] += a[j] * q[j];
        }
    }
    let p_rho = prefix(&rho);
    for (i, o) in out.iter_mut().enumerate() {
        *o = (*o - contract_draws(&p_rho, i)) / tau;
    }
    grad
}
