//! Reconstruction quality: MSE, PSNR and windowed SSIM.

use std::io::Write;

use crate::error::{Error, Result};
use crate::math::Scalar;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse<T: Scalar>(est: &[T], truth: &[T]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            got: est.len(),
        });
    }
    if est.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = est
        .iter()
        .zip(truth)
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum();
    Ok(sum / est.len() as f64)
}

/// `10 log10(peak^2 / mse)`; identical inputs give `+inf`.
pub fn psnr<T: Scalar>(est: &[T], truth: &[T], peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be positive, got {peak}")));
    }
    let e = mse(est, truth)?;
    Ok(if e == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / e).log10() })
}

/// Mean SSIM over every `8 x 8` window position (stride 1, no padding),
/// uniform weights, population statistics and `C_i = (K_i peak)^2`.
///
/// The arithmetic is arranged so that `ssim(a, b) == ssim(b, a)` and
/// `ssim(a, a) == 1` hold bit-for-bit.
pub fn ssim<T: Scalar>(a: &[T], b: &[T], rows: usize, cols: usize, peak: f64) -> Result<f64> {
    if a.len() != rows * cols || b.len() != rows * cols {
        return Err(Error::Shape(format!(
            "ssim expects {rows}x{cols} images, got {} and {} values",
            a.len(),
            b.len()
        )));
    }
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Shape(format!("image {rows}x{cols} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")));
    }
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter(format!("peak must be positive, got {peak}")));
    }
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let count = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let at = |x: &[T], r: usize, c: usize| x[r * cols + c].as_f64();

    let mut total = 0.0;
    let mut windows = 0usize;
    for r0 in 0..=rows - SSIM_WINDOW {
        for c0 in 0..=cols - SSIM_WINDOW {
            let (mut sa, mut sb) = (0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                for c in c0..c0 + SSIM_WINDOW {
                    sa += at(a, r, c);
                    sb += at(b, r, c);
                }
            }
            let (ma, mb) = (sa / count, sb / count);
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for r in r0..r0 + SSIM_WINDOW {
                for c in c0..c0 + SSIM_WINDOW {
                    let da = at(a, r, c) - ma;
                    let db = at(b, r, c) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            }
            let (va, vb, cov) = (va / count, vb / count, cov / count);
            let num = (2.0 * (ma * mb) + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            windows += 1;
        }
    }
    Ok(total / windows as f64)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Where a report's PSNR peak comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Peak {
    Fixed(f64),
    /// `max |s|` of each ground-truth example.
    PerExample,
}

/// Per-example metrics plus their mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mse: Vec<f64>,
    pub psnr: Vec<f64>,
    /// Present for images only.
    pub ssim: Option<Vec<f64>>,
    pub peak: Peak,
}

impl MetricReport {
    /// `grid` gives the image shape when SSIM should be computed.
    pub fn compute<T: Scalar>(
        estimates: &[Vec<T>],
        truths: &[Vec<T>],
        grid: Option<(usize, usize)>,
        peak: Peak,
    ) -> Result<Self> {
        if estimates.len() != truths.len() {
            return Err(Error::LengthMismatch {
                expected: truths.len(),
                got: estimates.len(),
            });
        }
        let mut report = Self {
            mse: Vec::with_capacity(truths.len()),
            psnr: Vec::with_capacity(truths.len()),
            ssim: grid.map(|_| Vec::with_capacity(truths.len())),
            peak,
        };
        for (e, s) in estimates.iter().zip(truths) {
            let p = match peak {
                Peak::Fixed(p) => p,
                Peak::PerExample => s.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max),
            };
            report.mse.push(mse(e, s)?);
            report.psnr.push(if p > 0.0 { psnr(e, s, p)? } else { f64::NAN });
            if let (Some((rows, cols)), Some(out)) = (grid, report.ssim.as_mut()) {
                out.push(ssim(e, s, rows, cols, p)?);
            }
        }
        Ok(report)
    }

    pub fn len(&self) -> usize {
        self.mse.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mse.is_empty()
    }

    pub fn mse_stats(&self) -> (f64, f64) {
        mean_std(&self.mse)
    }

    pub fn psnr_stats(&self) -> (f64, f64) {
        mean_std(&self.psnr)
    }

    pub fn ssim_stats(&self) -> Option<(f64, f64)> {
        self.ssim.as_deref().map(mean_std)
    }

    /// A `#` comment with the metric settings, a column header, one row per
    /// example, then `mean` and `std` footer rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let peak = match self.peak {
            Peak::Fixed(p) => format!("{p}"),
            Peak::PerExample => "per-example-max-abs".into(),
        };
        writeln!(
            w,
            "# psnr_peak={peak} ssim_window={SSIM_WINDOW} ssim_k1={SSIM_K1} ssim_k2={SSIM_K2}"
        )?;
        let with_ssim = self.ssim.is_some();
        writeln!(w, "{}", if with_ssim { "index,mse,psnr,ssim" } else { "index,mse,psnr" })?;
        for i in 0..self.len() {
            write!(w, "{i},{:e},{}", self.mse[i], self.psnr[i])?;
            if let Some(s) = &self.ssim {
                write!(w, ",{}", s[i])?;
            }
            writeln!(w)?;
        }
        let stats: [(&str, fn((f64, f64)) -> f64); 2] = [("mean", |s| s.0), ("std", |s| s.1)];
        for (label, pick) in stats {
            write!(w, "{label},{:e},{}", pick(self.mse_stats()), pick(self.psnr_stats()))?;
            if let Some(s) = self.ssim_stats() {
                write!(w, ",{}", pick(s))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rows: usize, cols: usize) -> Vec<f64> {
        (0..rows * cols).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()
    }

    #[test]
    fn psnr_values() {
        let s = vec![0.0f64; 100];
        assert_eq!(psnr(&s, &s, 1.0).unwrap(), f64::INFINITY);
        let e = vec![0.1f64; 100];
        assert!((psnr(&e, &s, 1.0).unwrap() - 20.0).abs() < 1e-12);
        let e = vec![0.01f64; 100];
        assert!((psnr(&e, &s, 1.0).unwrap() - 40.0).abs() < 1e-12);
        assert!(psnr(&e, &s, 0.0).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let a = ramp(16, 16);
        let b: Vec<f64> = a.iter().map(|v| v * 0.7 + 0.05).collect();
        assert_eq!(ssim(&a, &a, 16, 16, 1.0).unwrap(), 1.0);
        assert_eq!(ssim(&a, &b, 16, 16, 1.0).unwrap(), ssim(&b, &a, 16, 16, 1.0).unwrap());
    }

    #[test]
    fn anticorrelated_is_negative() {
        let a: Vec<f64> = ramp(16, 16).iter().map(|v| v - 0.5).collect();
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!(ssim(&a, &neg, 16, 16, 1.0).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = vec![0.0f64; 49];
        assert!(ssim(&a, &a, 7, 7, 1.0).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let truths = vec![ramp(8, 8), ramp(8, 8)];
        let ests = vec![ramp(8, 8), vec![0.5; 64]];
        let r = MetricReport::compute(&ests, &truths, Some((8, 8)), Peak::Fixed(1.0)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 1 + 2 + 2);
        assert!(lines[0].starts_with('#'));
        assert_eq!(lines[1], "index,mse,psnr,ssim");
        assert!(lines[4].starts_with("mean,"));
    }
}
