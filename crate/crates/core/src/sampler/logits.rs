use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{gaussian_noise, RngHandle, Scalar};

/// Standard deviation of the logit initialization (variance 1/4).
pub const LOGIT_INIT_STD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// One categorical per selected row (`M x N` logits).
    PerSample,
    /// One shared categorical, `M` draws without replacement.
    TopM,
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerMode::PerSample => "per-sample",
            SamplerMode::TopM => "top-m",
        })
    }
}

impl FromStr for SamplerMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-sample" => Ok(SamplerMode::PerSample),
            "top-m" => Ok(SamplerMode::TopM),
            other => Err(Error::InvalidParameter(format!("unknown sampler mode {other:?}"))),
        }
    }
}

/// Trainable unnormalized log-probabilities over the `N` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBank<T> {
    mode: SamplerMode,
    draws: usize,
    pub values: Array2<T>,
    pub grad: Array2<T>,
}

impl<T: Scalar> LogitBank<T> {
    pub fn zeros(mode: SamplerMode, draws: usize, n: usize) -> Result<Self> {
        if draws > n {
            return Err(Error::TooManyDraws { m: draws, n });
        }
        let rows = match mode {
            SamplerMode::PerSample => draws,
            SamplerMode::TopM => 1,
        };
        Ok(Self {
            mode,
            draws,
            values: Array2::zeros((rows, n)),
            grad: Array2::zeros((rows, n)),
        })
    }

    /// i.i.d. `N(0, 1/4)` initialization.
    pub fn init(mode: SamplerMode, draws: usize, n: usize, rng: &mut RngHandle) -> Result<Self> {
        let mut bank = Self::zeros(mode, draws, n)?;
        let noise = gaussian_noise(bank.values.len(), LOGIT_INIT_STD, rng);
        bank.values = Array2::from_shape_vec(bank.values.raw_dim(), noise)
            .expect("shape matches noise length");
        Ok(bank)
    }

    pub fn from_values(mode: SamplerMode, draws: usize, values: Array2<T>) -> Result<Self> {
        let expected_rows = match mode {
            SamplerMode::PerSample => draws,
            SamplerMode::TopM => 1,
        };
        if values.nrows() != expected_rows || draws > values.ncols() {
            return Err(Error::Shape(format!(
                "{mode} bank with {draws} draws cannot hold {}x{} logits",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite logit".into()));
        }
        let grad = Array2::zeros(values.raw_dim());
        Ok(Self {
            mode,
            draws,
            values,
            grad,
        })
    }

    pub fn mode(&self) -> SamplerMode {
        self.mode
    }

    /// Number of coefficients selected per pattern (`M`).
    pub fn draws(&self) -> usize {
        self.draws
    }

    /// Number of candidate coefficients (`N`).
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// CSV dump, one line per logit row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Noise-free pattern: per-sample banks take the masked argmax of each
    /// row in order, top-M banks take the `M` largest logits.
    pub fn mode_pattern(&self) -> super::SamplingPattern {
        let n = self.n();
        let indices = match self.mode {
            SamplerMode::PerSample => {
                let mut taken = vec![false; n];
                self.values
                    .rows()
                    .into_iter()
                    .map(|row| {
                        let i = super::hard::masked_argmax(row.iter().copied(), &taken);
                        taken[i] = true;
                        i
                    })
                    .collect()
            }
            SamplerMode::TopM => super::hard::top_m_order(self.values.row(0), self.draws),
        };
        super::SamplingPattern::from_distinct(n, indices)
    }
}

/// Softmax over the unmasked entries of `logits`, zero on masked ones.
pub fn normalize_probs<T: Scalar>(logits: &[T], masked: &[usize]) -> Result<Vec<T>> {
    let mut keep = vec![true; logits.len()];
    for &i in masked {
        if i >= logits.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                n: logits.len(),
            });
        }
        keep[i] = false;
    }
    masked_softmax(logits.iter().copied(), &keep, T::one()).ok_or(Error::AllMasked)
}

/// `softmax(keys / tau)` restricted to `keep`, max-subtracted.
pub(crate) fn masked_softmax<T: Scalar>(
    keys: impl Iterator<Item = T> + Clone,
    keep: &[bool],
    tau: T,
) -> Option<Vec<T>> {
    let max = keys
        .clone()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(v, _)| v)
        .fold(None, |acc: Option<T>, v| Some(acc.map_or(v, |a| a.max(v))))?;
    let mut out: Vec<T> = keys
        .zip(keep)
        .map(|(v, &k)| if k { ((v - max) / tau).exp() } else { T::zero() })
        .collect();
    let total: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= total;
    }
    Some(out)
}

fn entropy_row<T: Scalar>(row: ArrayView1<T>) -> (T, Vec<T>) {
    let keep = vec![true; row.len()];
    let probs = masked_softmax(row.iter().copied(), &keep, T::one()).expect("non-empty row");
    let h = -probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * p.ln())
        .sum::<T>();
    // dH/dphi_j = -pi_j (ln pi_j + H)
    let grad = probs
        .iter()
        .map(|&p| if p > T::zero() { -p * (p.ln() + h) } else { T::zero() })
        .collect();
    (h, grad)
}

/// Sum of Shannon entropies of the per-row categoricals and its gradient
/// with respect to the logits. Only defined for per-sample banks.
pub fn entropy_penalty<T: Scalar>(bank: &LogitBank<T>) -> Result<(T, Array2<T>)> {
    if bank.mode() != SamplerMode::PerSample {
        return Err(Error::WrongMode {
            expected: "per-sample",
        });
    }
    let mut total = T::zero();
    let mut grad = Array2::zeros(bank.values.raw_dim());
    for (m, row) in bank.values.rows().into_iter().enumerate() {
        let (h, g) = entropy_row(row);
        total += h;
        grad.row_mut(m).assign(&ArrayView1::from(&g[..]));
    }
    Ok((total, grad))
}

/// Mean per-row entropy, defined for both modes (reporting only).
pub fn mean_entropy<T: Scalar>(bank: &LogitBank<T>) -> T {
    let rows = bank.values.nrows();
    let total: T = bank.values.rows().into_iter().map(|r| entropy_row(r).0).sum();
    total / T::lit(rows as f64)
}
