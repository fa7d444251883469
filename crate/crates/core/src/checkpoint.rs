//! Binary checkpoints: 8-byte magic, little-endian `u32` version, `u32`
//! header length, JSON header describing every array's shape, then all
//! parameters as little-endian `f64` (network parameters first, logits
//! last). Reading back yields a bit-identical model.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::read_f64s;
use crate::engine::{Model, SamplerState};
use crate::error::{Error, Result};
use crate::math::Scalar;
use crate::params::ParamSet;
use crate::recon::{FcParams, ListaParams, PgParams2D, ReconParams};
use crate::sampler::{Extent, FixedKind, LogitBank, SamplerMode, SamplingPattern};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KSDPSCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ReconLayout {
    Lista { n: usize, sharpness: f64 },
    Fc { input: usize, hidden: Vec<usize>, output: usize, slope: f64 },
    Pg2d { rows: usize, cols: usize, sharpness: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum SamplerLayout {
    Learned { mode: SamplerMode, draws: usize, n: usize },
    Fixed { pattern: FixedKind, n: usize, indices: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    version: u32,
    extent: Extent,
    recon: ReconLayout,
    sampler: SamplerLayout,
    /// Free-form run metadata (e.g. the training configuration).
    meta: serde_json::Value,
}

fn layout<T: Scalar>(model: &Model<T>) -> (ReconLayout, SamplerLayout) {
    let recon = match &model.recon {
        ReconParams::Lista(p) => ReconLayout::Lista {
            n: p.n,
            sharpness: p.sharpness.as_f64(),
        },
        ReconParams::Fc(p) => ReconLayout::Fc {
            input: p.input_dim(),
            hidden: p.hidden(),
            output: p.output_dim(),
            slope: p.slope.as_f64(),
        },
        ReconParams::Pg2d(p) => ReconLayout::Pg2d {
            rows: p.rows,
            cols: p.cols,
            sharpness: p.sharpness.as_f64(),
        },
    };
    let sampler = match &model.sampler {
        SamplerState::Learned(bank) => SamplerLayout::Learned {
            mode: bank.mode(),
            draws: bank.draws(),
            n: bank.n(),
        },
        SamplerState::Fixed { kind, pattern } => SamplerLayout::Fixed {
            pattern: *kind,
            n: pattern.n(),
            indices: pattern.indices().to_vec(),
        },
    };
    (recon, sampler)
}

fn write_slice<W: Write, T: Scalar>(w: &mut W, s: &[T]) -> std::io::Result<()> {
    for v in s {
        w.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

pub fn write_checkpoint<W: Write, T: Scalar>(w: &mut W, model: &Model<T>, meta: &serde_json::Value) -> Result<()> {
    let (recon, sampler) = layout(model);
    let header = serde_json::to_vec(&Header {
        version: CHECKPOINT_VERSION,
        extent: model.extent,
        recon,
        sampler,
        meta: meta.clone(),
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for s in model.recon.slices() {
        write_slice(w, s)?;
    }
    if let Some(bank) = model.logits() {
        for s in bank.values.slices() {
            write_slice(w, s)?;
        }
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(path: &Path, model: &Model<T>, meta: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, model, meta)?;
    w.flush()?;
    Ok(())
}

/// Returns the model and the metadata stored with it.
pub fn read_checkpoint<R: Read, T: Scalar>(r: &mut R) -> Result<(Model<T>, serde_json::Value)> {
    let bad = |reason: String| Error::Format {
        path: "<checkpoint>".into(),
        reason,
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| bad("truncated magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word).map_err(|_| bad("truncated version".into()))?;
    let version = u32::from_le_bytes(word);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    r.read_exact(&mut word).map_err(|_| bad("truncated header length".into()))?;
    let mut buf = vec![0u8; u32::from_le_bytes(word) as usize];
    r.read_exact(&mut buf).map_err(|_| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&buf).map_err(|e| bad(format!("header: {e}")))?;

    let mut recon = match &header.recon {
        ReconLayout::Lista { n, sharpness } => {
            let mut p = ListaParams::zeros(*n);
            p.sharpness = T::lit(*sharpness);
            ReconParams::Lista(p)
        }
        ReconLayout::Fc {
            input,
            hidden,
            output,
            slope,
        } => {
            let mut p = FcParams::zeros(*input, hidden, *output);
            p.slope = T::lit(*slope);
            ReconParams::Fc(p)
        }
        ReconLayout::Pg2d { rows, cols, sharpness } => {
            let mut p = PgParams2D::new(*rows, *cols, 0.0, 1.0)?;
            p.sharpness = T::lit(*sharpness);
            ReconParams::Pg2d(p)
        }
    };
    for s in recon.slices_mut() {
        let vals: Vec<T> = read_f64s(r, s.len()).map_err(|_| bad("truncated parameters".into()))?;
        s.copy_from_slice(&vals);
    }
    let sampler = match header.sampler {
        SamplerLayout::Learned { mode, draws, n } => {
            let rows = match mode {
                SamplerMode::PerSample => draws,
                SamplerMode::TopM => 1,
            };
            let vals: Vec<T> = read_f64s(r, rows * n).map_err(|_| bad("truncated logits".into()))?;
            let values = Array2::from_shape_vec((rows, n), vals).expect("sized above");
            SamplerState::Learned(LogitBank::from_values(mode, draws, values)?)
        }
        SamplerLayout::Fixed { pattern, n, indices } => SamplerState::Fixed {
            kind: pattern,
            pattern: SamplingPattern::new(n, indices)?,
        },
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(bad("trailing bytes after parameters".into()));
    }
    Ok((
        Model {
            sampler,
            recon,
            extent: header.extent,
        },
        header.meta,
    ))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Model<T>, serde_json::Value)> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r).map_err(|e| match e {
        Error::Format { reason, .. } => Error::Format {
            path: path.to_path_buf(),
            reason,
        },
        other => other,
    })
}
