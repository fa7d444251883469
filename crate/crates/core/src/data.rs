//! Synthetic sparse signals and images, their spectra, and the on-disk
//! dataset format.
//!
//! File layout: 8-byte magic, little-endian `u32` version, `u32` header
//! length, a JSON header, then for each example the signal followed by the
//! real and imaginary spectrum, all as little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dft2_forward, dft_forward, ComplexGrid, ComplexVector, RngHandle, Scalar};
use crate::sampler::Extent;

pub const DATASET_MAGIC: &[u8; 8] = b"KSDPSDS\0";
pub const DATASET_VERSION: u32 = 1;

const DATA_STREAM: u64 = 0xDA7A;

/// Sparse 1D signals: `k` non-zeros with standard-normal amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseSignalSpec {
    pub n: usize,
    pub k: usize,
}

impl Default for SparseSignalSpec {
    fn default() -> Self {
        Self { n: 128, k: 5 }
    }
}

/// Sparse images: `k` point scatterers with half-normal amplitudes,
/// optionally blurred by a periodic Gaussian, scaled so the maximum is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseImageSpec {
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub blur_sigma: f64,
}

impl Default for SparseImageSpec {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 64,
            k: 30,
            blur_sigma: 1.0,
        }
    }
}

fn check_sparsity(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::InvalidParameter(format!("sparsity {k} exceeds length {n}")));
    }
    Ok(())
}

/// Support drawn uniformly without replacement, amplitudes i.i.d. `N(0,1)`.
/// Returns the signal and its unitary spectrum.
pub fn gen_sparse_1d<T: Scalar>(spec: &SparseSignalSpec, rng: &mut RngHandle) -> Result<(Vec<T>, ComplexVector<T>)> {
    check_sparsity(spec.k, spec.n)?;
    let mut s = vec![T::zero(); spec.n];
    for i in index::sample(rng, spec.n, spec.k).into_iter() {
        s[i] = T::lit(rng.standard_normal());
    }
    let x = dft_forward(&ComplexVector::from_real(s.clone()))?;
    Ok((s, x))
}

/// Point scatterers before blurring: exactly `k` non-zero pixels.
pub fn scatter_points<T: Scalar>(rows: usize, cols: usize, k: usize, rng: &mut RngHandle) -> Result<Vec<T>> {
    check_sparsity(k, rows * cols)?;
    let mut img = vec![T::zero(); rows * cols];
    for i in index::sample(rng, rows * cols, k).into_iter() {
        // half-normal, bounded away from zero so every scatterer is non-zero
        img[i] = T::lit(rng.standard_normal().abs().max(1e-3));
    }
    Ok(img)
}

/// Periodic Gaussian blur with truncation radius `ceil(3 sigma)`.
pub fn gaussian_blur<T: Scalar>(img: &[T], rows: usize, cols: usize, sigma: f64) -> Vec<T> {
    if sigma <= 0.0 {
        return img.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let taps: Vec<T> = taps.iter().map(|&t| T::lit(t / norm)).collect();
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![T::zero(); img.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = T::zero();
            for (t, d) in taps.iter().zip(-radius..=radius) {
                acc += *t * img[r * cols + wrap(c as isize + d, cols)];
            }
            tmp[r * cols + c] = acc;
        }
    }
    let mut out = vec![T::zero(); img.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = T::zero();
            for (t, d) in taps.iter().zip(-radius..=radius) {
                acc += *t * tmp[wrap(r as isize + d, rows) * cols + c];
            }
            out[r * cols + c] = acc;
        }
    }
    out
}

/// Blurred scatterer image normalized to `[0, 1]`, with its 2D spectrum.
pub fn gen_sparse_2d<T: Scalar>(spec: &SparseImageSpec, rng: &mut RngHandle) -> Result<(Vec<T>, ComplexGrid<T>)> {
    let points = scatter_points(spec.rows, spec.cols, spec.k, rng)?;
    let mut img = gaussian_blur(&points, spec.rows, spec.cols, spec.blur_sigma);
    let peak = img.iter().copied().fold(T::zero(), T::max);
    if peak > T::zero() {
        img.iter_mut().for_each(|v| *v /= peak);
    }
    let x = dft2_forward(&ComplexGrid::from_real(spec.rows, spec.cols, img.clone())?)?;
    Ok((img, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Val => 2,
            Split::Test => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SignalSpec {
    Line(SparseSignalSpec),
    Grid(SparseImageSpec),
}

impl SignalSpec {
    pub fn extent(&self) -> Extent {
        match self {
            SignalSpec::Line(s) => Extent::Line(s.n),
            SignalSpec::Grid(s) => Extent::Grid {
                rows: s.rows,
                cols: s.cols,
            },
        }
    }

    /// Example `index` of a regenerable stream keyed by `(seed, split)`.
    pub fn generate_one<T: Scalar>(&self, rng: &mut RngHandle) -> Result<(Vec<T>, ComplexVector<T>)> {
        match self {
            SignalSpec::Line(s) => gen_sparse_1d(s, rng),
            SignalSpec::Grid(s) => {
                let (img, x) = gen_sparse_2d(s, rng)?;
                Ok((img, x.to_vector()))
            }
        }
    }
}

/// How the examples of a dataset came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// Regenerable from `(spec, seed, split)`.
    Generated,
    /// Network outputs exported for inspection.
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub spec: SignalSpec,
    pub seed: u64,
    pub split: Split,
    pub count: usize,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub header: DatasetHeader,
    pub signals: Vec<Vec<T>>,
    pub spectra: Vec<ComplexVector<T>>,
}

impl<T: Scalar> Dataset<T> {
    /// Deterministic: example `i` draws from the substream `(seed, split, i)`.
    pub fn generate(spec: SignalSpec, seed: u64, split: Split, count: usize) -> Result<Self> {
        let root = RngHandle::new(seed);
        let mut signals = Vec::with_capacity(count);
        let mut spectra = Vec::with_capacity(count);
        for i in 0..count {
            let mut rng = root.derive(&[DATA_STREAM, split.tag(), i as u64]);
            let (s, x) = spec.generate_one(&mut rng)?;
            signals.push(s);
            spectra.push(x);
        }
        Ok(Self {
            header: DatasetHeader {
                version: DATASET_VERSION,
                spec,
                seed,
                split,
                count,
                origin: Origin::Generated,
            },
            signals,
            spectra,
        })
    }

    /// Wrap real-valued outputs (e.g. reconstructions) in the dataset format;
    /// spectra are recomputed from the signals.
    pub fn from_signals(spec: SignalSpec, seed: u64, split: Split, signals: Vec<Vec<T>>) -> Result<Self> {
        let spectra = signals
            .iter()
            .map(|s| match spec {
                SignalSpec::Line(_) => dft_forward(&ComplexVector::from_real(s.clone())),
                SignalSpec::Grid(g) => {
                    dft2_forward(&ComplexGrid::from_real(g.rows, g.cols, s.clone())?).map(|x| x.to_vector())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            header: DatasetHeader {
                version: DATASET_VERSION,
                spec,
                seed,
                split,
                count: signals.len(),
                origin: Origin::Reconstruction,
            },
            signals,
            spectra,
        })
    }

    pub fn len(&self) -> usize {
        self.signals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn signal_len(&self) -> usize {
        self.header.spec.extent().len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(DATASET_MAGIC)?;
        w.write_all(&DATASET_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for (s, x) in self.signals.iter().zip(&self.spectra) {
            for v in s.iter().chain(&x.re).chain(&x.im) {
                w.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let bad = |reason: &str| Error::Format {
            path: "<dataset>".into(),
            reason: reason.to_string(),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated magic"))?;
        if &magic != DATASET_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = read_u32(r).map_err(|_| bad("truncated version"))?;
        if version != DATASET_VERSION {
            return Err(Error::Version {
                found: version,
                expected: DATASET_VERSION,
            });
        }
        let len = read_u32(r).map_err(|_| bad("truncated header length"))? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
        let header: DatasetHeader = serde_json::from_slice(&buf).map_err(|e| bad(&format!("header: {e}")))?;
        if header.version != version {
            return Err(bad("header version disagrees with preamble"));
        }
        let n = header.spec.extent().len();
        let mut signals = Vec::with_capacity(header.count);
        let mut spectra = Vec::with_capacity(header.count);
        for _ in 0..header.count {
            let s = read_f64s(r, n).map_err(|_| bad("truncated payload"))?;
            let re = read_f64s(r, n).map_err(|_| bad("truncated payload"))?;
            let im = read_f64s(r, n).map_err(|_| bad("truncated payload"))?;
            signals.push(s);
            spectra.push(ComplexVector { re, im });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Self {
            header,
            signals,
            spectra,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read, T: Scalar>(r: &mut R, n: usize) -> std::io::Result<Vec<T>> {
    let mut bytes = vec![0u8; 8 * n];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
        .collect())
}
