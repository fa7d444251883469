use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ComplexVector, RngHandle, Scalar};

/// A realized subset selection: `M` distinct indices into `0..N`, in draw
/// order. Equivalent to the `M x N` matrix whose rows are one-hot vectors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingPattern {
    n: usize,
    indices: Vec<usize>,
}

impl SamplingPattern {
    pub fn new(n: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.len() > n {
            return Err(Error::TooManyDraws {
                m: indices.len(),
                n,
            });
        }
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        Ok(Self { n, indices })
    }

    /// Trusted constructor for samplers that guarantee distinctness.
    pub(crate) fn from_distinct(n: usize, indices: Vec<usize>) -> Self {
        debug_assert!(Self::new(n, indices.clone()).is_ok());
        Self { n, indices }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Boolean membership mask of length `N`.
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &i in &self.indices {
            mask[i] = true;
        }
        mask
    }

    /// One selected index per line, in draw order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for i in &self.indices {
            writeln!(w, "{i}")?;
        }
        Ok(())
    }

    /// Parse the format written by [`SamplingPattern::write_to`] for a
    /// signal of length `n`. Blank lines are ignored.
    pub fn read_from<R: BufRead>(r: R, n: usize) -> Result<Self> {
        let mut indices = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            indices.push(line.trim().parse().map_err(|_| Error::Format {
                path: "<pattern>".into(),
                reason: format!("bad index line {line:?}"),
            })?);
        }
        Self::new(n, indices)
    }
}

/// `y_m = x[indices[m]]`.
pub fn apply_pattern<T: Scalar>(
    pattern: &SamplingPattern,
    x: &ComplexVector<T>,
) -> Result<ComplexVector<T>> {
    if x.len() != pattern.n {
        return Err(Error::LengthMismatch {
            expected: pattern.n,
            got: x.len(),
        });
    }
    Ok(ComplexVector {
        re: pattern.indices.iter().map(|&i| x.re[i]).collect(),
        im: pattern.indices.iter().map(|&i| x.im[i]).collect(),
    })
}

/// Scatter `y` back to the selected indices, zero elsewhere.
pub fn adjoint_apply<T: Scalar>(
    pattern: &SamplingPattern,
    y: &ComplexVector<T>,
) -> Result<ComplexVector<T>> {
    if y.len() != pattern.m() {
        return Err(Error::LengthMismatch {
            expected: pattern.m(),
            got: y.len(),
        });
    }
    let mut out = ComplexVector::zeros(pattern.n);
    for (m, &i) in pattern.indices.iter().enumerate() {
        out.re[i] = y.re[m];
        out.im[i] = y.im[m];
    }
    Ok(out)
}

/// Zero-filled spectrum: the masking projector `A^T A x`.
pub fn project<T: Scalar>(pattern: &SamplingPattern, x: &ComplexVector<T>) -> Result<ComplexVector<T>> {
    adjoint_apply(pattern, &apply_pattern(pattern, x)?)
}

/// Non-learned baseline patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedKind {
    UniformRandom,
    LowPass,
}

impl fmt::Display for FixedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FixedKind::UniformRandom => "uniform-random",
            FixedKind::LowPass => "low-pass",
        })
    }
}

impl FromStr for FixedKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-random" | "random" => Ok(FixedKind::UniformRandom),
            "low-pass" | "lowpass" => Ok(FixedKind::LowPass),
            other => Err(Error::InvalidParameter(format!("unknown pattern kind {other:?}"))),
        }
    }
}

/// Shape of the coefficient set a pattern indexes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extent {
    Line(usize),
    Grid { rows: usize, cols: usize },
}

impl Extent {
    pub fn len(&self) -> usize {
        match *self {
            Extent::Line(n) => n,
            Extent::Grid { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Squared signed frequency magnitude of flat index `i` in unshifted
    /// FFT layout (DC at index 0).
    pub fn freq_radius_sq(&self, i: usize) -> usize {
        fn signed(k: usize, n: usize) -> usize {
            if k <= n / 2 {
                k
            } else {
                n - k
            }
        }
        match *self {
            Extent::Line(n) => signed(i, n).pow(2),
            Extent::Grid { rows, cols } => {
                signed(i / cols, rows).pow(2) + signed(i % cols, cols).pow(2)
            }
        }
    }
}

pub fn fixed_pattern(
    kind: FixedKind,
    extent: Extent,
    m: usize,
    rng: &mut RngHandle,
) -> Result<SamplingPattern> {
    let n = extent.len();
    if m > n {
        return Err(Error::TooManyDraws { m, n });
    }
    let indices = match kind {
        FixedKind::UniformRandom => index::sample(rng, n, m).into_vec(),
        FixedKind::LowPass => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| (extent.freq_radius_sq(i), i));
            order.truncate(m);
            order
        }
    };
    Ok(SamplingPattern::from_distinct(n, indices))
}
