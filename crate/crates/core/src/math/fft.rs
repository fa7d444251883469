//! Unitary radix-2 discrete Fourier transforms.
//!
//! Both directions scale by `1/sqrt(N)`, so the forward transform and the
//! inverse are exact adjoints and Parseval's identity holds.

use crate::error::{Error, Result};
use crate::math::{ComplexGrid, ComplexVector, Scalar};

/// Precomputed twiddles and bit-reversal table for one transform length.
#[derive(Debug, Clone)]
pub(crate) struct Radix2Plan<T> {
    n: usize,
    cos: Vec<T>,
    sin: Vec<T>,
    bitrev: Vec<usize>,
    scale: T,
}

impl<T: Scalar> Radix2Plan<T> {
    pub(crate) fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        let half = n / 2;
        // twiddles in f64 so f32 transforms do not accumulate phase error
        let (cos, sin) = (0..half)
            .map(|k| {
                let theta = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                (T::lit(theta.cos()), T::lit(theta.sin()))
            })
            .unzip();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self {
            n,
            cos,
            sin,
            bitrev,
            scale: T::one() / T::lit(n as f64).sqrt(),
        })
    }

    /// Transform `re`/`im` in place. `inverse` selects the conjugate kernel.
    pub(crate) fn process(&self, re: &mut [T], im: &mut [T], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(re.len(), n);
        debug_assert_eq!(im.len(), n);
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let wr = self.cos[k * stride];
                    let wi = if inverse {
                        -self.sin[k * stride]
                    } else {
                        self.sin[k * stride]
                    };
                    let a = start + k;
                    let b = a + half;
                    let tr = re[b] * wr - im[b] * wi;
                    let ti = re[b] * wi + im[b] * wr;
                    re[b] = re[a] - tr;
                    im[b] = im[a] - ti;
                    re[a] += tr;
                    im[a] += ti;
                }
            }
            len *= 2;
        }
        for v in re.iter_mut().chain(im.iter_mut()) {
            *v *= self.scale;
        }
    }
}

/// In-place unitary transform of split complex data of power-of-two length.
pub fn fft_in_place<T: Scalar>(re: &mut [T], im: &mut [T], inverse: bool) -> Result<()> {
    if re.len() != im.len() {
        return Err(Error::LengthMismatch {
            expected: re.len(),
            got: im.len(),
        });
    }
    Radix2Plan::new(re.len())?.process(re, im, inverse);
    Ok(())
}

fn transform<T: Scalar>(x: &ComplexVector<T>, inverse: bool) -> Result<ComplexVector<T>> {
    let mut out = x.clone();
    fft_in_place(&mut out.re, &mut out.im, inverse)?;
    Ok(out)
}

/// Unitary forward DFT, `X_k = N^{-1/2} sum_n x_n e^{-2 pi i k n / N}`.
pub fn dft_forward<T: Scalar>(x: &ComplexVector<T>) -> Result<ComplexVector<T>> {
    transform(x, false)
}

/// Unitary inverse DFT, the adjoint of [`dft_forward`].
pub fn dft_inverse<T: Scalar>(x: &ComplexVector<T>) -> Result<ComplexVector<T>> {
    transform(x, true)
}

pub(crate) fn transform2_in_place<T: Scalar>(
    rows: usize,
    cols: usize,
    re: &mut [T],
    im: &mut [T],
    inverse: bool,
) -> Result<()> {
    if re.len() != rows * cols || im.len() != rows * cols {
        return Err(Error::LengthMismatch {
            expected: rows * cols,
            got: re.len().max(im.len()),
        });
    }
    let row_plan = Radix2Plan::new(cols)?;
    let col_plan = Radix2Plan::new(rows)?;
    for r in 0..rows {
        let span = r * cols..(r + 1) * cols;
        row_plan.process(&mut re[span.clone()], &mut im[span], inverse);
    }
    let mut col_re = vec![T::zero(); rows];
    let mut col_im = vec![T::zero(); rows];
    for c in 0..cols {
        for r in 0..rows {
            col_re[r] = re[r * cols + c];
            col_im[r] = im[r * cols + c];
        }
        col_plan.process(&mut col_re, &mut col_im, inverse);
        for r in 0..rows {
            re[r * cols + c] = col_re[r];
            im[r * cols + c] = col_im[r];
        }
    }
    Ok(())
}

fn transform2<T: Scalar>(x: &ComplexGrid<T>, inverse: bool) -> Result<ComplexGrid<T>> {
    let mut out = x.clone();
    transform2_in_place(x.rows, x.cols, &mut out.re, &mut out.im, inverse)?;
    Ok(out)
}

/// Separable unitary 2D forward DFT (rows, then columns).
pub fn dft2_forward<T: Scalar>(x: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
    transform2(x, false)
}

/// Separable unitary 2D inverse DFT.
pub fn dft2_inverse<T: Scalar>(x: &ComplexGrid<T>) -> Result<ComplexGrid<T>> {
    transform2(x, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_maps_to_constant() {
        let x = ComplexVector::from_real(vec![1.0f64, 0.0, 0.0, 0.0]);
        let y = dft_forward(&x).unwrap();
        for k in 0..4 {
            assert!((y.re[k] - 0.5).abs() < 1e-15);
            assert_eq!(y.im[k], 0.0);
        }
        let back = dft_inverse(&y).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn zeros_stay_zero() {
        let x = ComplexVector::<f64>::zeros(128);
        assert_eq!(dft_forward(&x).unwrap(), x);
        let g = ComplexGrid::<f64>::zeros(8, 4);
        assert_eq!(dft2_forward(&g).unwrap(), g);
    }

    #[test]
    fn basis_vectors_round_trip() {
        for k in 0..8 {
            let mut re = vec![0.0; 8];
            re[k] = 1.0;
            let e = ComplexVector::from_real(re);
            let back = dft_inverse(&dft_forward(&e).unwrap()).unwrap();
            assert!(back.max_abs_diff(&e) < 1e-15, "basis {k}");
        }
    }

    #[test]
    fn impulse_2d_is_flat() {
        let mut re = vec![0.0f64; 16];
        re[0] = 1.0;
        let g = ComplexGrid::from_real(4, 4, re).unwrap();
        let f = dft2_forward(&g).unwrap();
        assert!(f.re.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(f.im.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_lengths() {
        let x = ComplexVector::from_real(vec![1.0f64; 6]);
        assert!(matches!(dft_forward(&x), Err(Error::NotPowerOfTwo(6))));
        let g = ComplexGrid::<f64>::zeros(3, 4);
        assert!(matches!(dft2_forward(&g), Err(Error::NotPowerOfTwo(3))));
        let mut re = vec![0.0f64; 4];
        let mut im = vec![0.0f64; 2];
        assert!(matches!(
            fft_in_place(&mut re, &mut im, false),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_precision_round_trip() {
        let x = ComplexVector::new(
            (0..64).map(|i| (i as f32 * 0.37).sin()).collect(),
            (0..64).map(|i| (i as f32 * 0.11).cos()).collect(),
        )
        .unwrap();
        let back = dft_inverse(&dft_forward(&x).unwrap()).unwrap();
        assert!(back.max_abs_diff(&x) < 1e-5);
    }
}
