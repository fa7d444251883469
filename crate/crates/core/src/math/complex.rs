use crate::error::{Error, Result};
use crate::math::Scalar;

/// Complex vector in split storage: real and imaginary parts side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector<T> {
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> ComplexVector<T> {
    pub fn new(re: Vec<T>, im: Vec<T>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::LengthMismatch {
                expected: re.len(),
                got: im.len(),
            });
        }
        Ok(Self { re, im })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            re: vec![T::zero(); n],
            im: vec![T::zero(); n],
        }
    }

    pub fn from_real(re: Vec<T>) -> Self {
        let im = vec![T::zero(); re.len()];
        Self { re, im }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Euclidean norm over both parts.
    pub fn norm(&self) -> T {
        self.re
            .iter()
            .chain(self.im.iter())
            .map(|&v| v * v)
            .sum::<T>()
            .sqrt()
    }

    /// Largest componentwise distance (over re and im) to `other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    /// Real inner product `<a, b> = sum(a.re*b.re + a.im*b.im)`.
    pub fn real_dot(&self, other: &Self) -> T {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(&a, &b)| a * b)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }
}

/// Row-major complex image, `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid<T> {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<T>,
    pub im: Vec<T>,
}

impl<T: Scalar> ComplexGrid<T> {
    pub fn new(rows: usize, cols: usize, re: Vec<T>, im: Vec<T>) -> Result<Self> {
        let n = rows * cols;
        for part in [&re, &im] {
            if part.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: part.len(),
                });
            }
        }
        Ok(Self { rows, cols, re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            re: vec![T::zero(); rows * cols],
            im: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_real(rows: usize, cols: usize, re: Vec<T>) -> Result<Self> {
        let im = vec![T::zero(); re.len()];
        Self::new(rows, cols, re, im)
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened row-major view as a vector of length `rows * cols`.
    pub fn to_vector(&self) -> ComplexVector<T> {
        ComplexVector {
            re: self.re.clone(),
            im: self.im.clone(),
        }
    }

    pub fn from_vector(rows: usize, cols: usize, v: ComplexVector<T>) -> Result<Self> {
        Self::new(rows, cols, v.re, v.im)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.re
            .iter()
            .zip(&other.re)
            .chain(self.im.iter().zip(&other.im))
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}
