use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{RngHandle, Scalar};
use crate::recon::{FcParams, ListaParams, PgParams2D, ReconKind, ReconParams, FC_HIDDEN};
use crate::sampler::{
    fixed_pattern, sample_hard, Extent, FixedKind, LogitBank, SamplerMode, SamplingPattern, SoftSampleTape,
};

/// Step size of the unrolled iteration the shrinkage network starts from.
pub const MB_STEP: f64 = 0.5;
/// Initial per-layer threshold of the 1D shrinkage network.
pub const MB_THRESHOLD: f64 = 0.05;
/// Standard deviation of the perturbation added to its initial operators.
pub const MB_JITTER: f64 = 1e-3;
/// Initial step and threshold of the 2D proximal-gradient network.
pub const PG_STEP: f64 = 1.0;
pub const PG_THRESHOLD: f64 = 0.02;

const LOGIT_STREAM: u64 = 0x1061;
const PATTERN_STREAM: u64 = 0x9A77;
const RECON_STREAM: u64 = 0x2EC0;

/// Which subsampling strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// Learned, one categorical per measurement.
    #[serde(rename = "dps-top1")]
    DpsTop1,
    /// Learned, one shared categorical drawn `M` times without replacement.
    #[serde(rename = "dps-topM")]
    DpsTopM,
    #[serde(rename = "random")]
    Random,
    #[serde(rename = "lowpass")]
    LowPass,
}

impl SamplerKind {
    pub fn is_learned(self) -> bool {
        matches!(self, SamplerKind::DpsTop1 | SamplerKind::DpsTopM)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerKind::DpsTop1 => "dps-top1",
            SamplerKind::DpsTopM => "dps-topM",
            SamplerKind::Random => "random",
            SamplerKind::LowPass => "lowpass",
        })
    }
}

impl FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dps-top1" => Ok(SamplerKind::DpsTop1),
            "dps-topm" => Ok(SamplerKind::DpsTopM),
            "random" | "uniform-random" => Ok(SamplerKind::Random),
            "lowpass" | "low-pass" => Ok(SamplerKind::LowPass),
            other => Err(Error::InvalidParameter(format!("unknown sampler {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerState<T> {
    Learned(LogitBank<T>),
    Fixed { kind: FixedKind, pattern: SamplingPattern },
}

/// Sampler plus reconstruction network over a fixed signal extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub sampler: SamplerState<T>,
    pub recon: ReconParams<T>,
    pub extent: Extent,
}

impl<T: Scalar> Model<T> {
    /// Fresh model; every random choice comes from a substream of `seed`.
    pub fn build(sampler: SamplerKind, recon: ReconKind, extent: Extent, m: usize, seed: u64) -> Result<Self> {
        let root = RngHandle::new(seed);
        let n = extent.len();
        if m == 0 || m > n {
            return Err(Error::TooManyDraws { m, n });
        }
        let sampler = match sampler {
            SamplerKind::DpsTop1 => SamplerState::Learned(LogitBank::init(
                SamplerMode::PerSample,
                m,
                n,
                &mut root.derive(&[LOGIT_STREAM]),
            )?),
            SamplerKind::DpsTopM => {
                SamplerState::Learned(LogitBank::init(SamplerMode::TopM, m, n, &mut root.derive(&[LOGIT_STREAM]))?)
            }
            SamplerKind::Random | SamplerKind::LowPass => {
                let kind = if sampler == SamplerKind::Random {
                    FixedKind::UniformRandom
                } else {
                    FixedKind::LowPass
                };
                let pattern = fixed_pattern(kind, extent, m, &mut root.derive(&[PATTERN_STREAM]))?;
                SamplerState::Fixed { kind, pattern }
            }
        };
        let mut rng = root.derive(&[RECON_STREAM]);
        let recon = match (recon, extent) {
            (ReconKind::Lista, Extent::Line(n)) => {
                let coverage = match &sampler {
                    SamplerState::Fixed { pattern, .. } => {
                        pattern.mask().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
                    }
                    SamplerState::Learned(_) => vec![m as f64 / n as f64; n],
                };
                ReconParams::Lista(ListaParams::model_based(&coverage, MB_STEP, MB_THRESHOLD, MB_JITTER, &mut rng)?)
            }
            (ReconKind::Fc, Extent::Line(n)) => ReconParams::Fc(FcParams::init(2 * m, &FC_HIDDEN, n, &mut rng)),
            (ReconKind::Pg2d, Extent::Grid { rows, cols }) => {
                ReconParams::Pg2d(PgParams2D::new(rows, cols, PG_STEP, PG_THRESHOLD)?)
            }
            (kind, extent) => {
                return Err(Error::InvalidParameter(format!("{kind} network cannot reconstruct {extent:?}")))
            }
        };
        Ok(Self { sampler, recon, extent })
    }

    pub fn n(&self) -> usize {
        self.extent.len()
    }

    pub fn m(&self) -> usize {
        match &self.sampler {
            SamplerState::Learned(bank) => bank.draws(),
            SamplerState::Fixed { pattern, .. } => pattern.m(),
        }
    }

    pub fn logits(&self) -> Option<&LogitBank<T>> {
        match &self.sampler {
            SamplerState::Learned(bank) => Some(bank),
            SamplerState::Fixed { .. } => None,
        }
    }

    pub fn sampler_kind(&self) -> SamplerKind {
        match &self.sampler {
            SamplerState::Learned(b) if b.mode() == SamplerMode::PerSample => SamplerKind::DpsTop1,
            SamplerState::Learned(_) => SamplerKind::DpsTopM,
            SamplerState::Fixed {
                kind: FixedKind::UniformRandom,
                ..
            } => SamplerKind::Random,
            SamplerState::Fixed { .. } => SamplerKind::LowPass,
        }
    }

    /// One hard pattern; learned samplers also return the relaxation tape.
    pub fn draw(&self, rng: &mut RngHandle, tau: T) -> Result<(SamplingPattern, Option<SoftSampleTape<T>>)> {
        match &self.sampler {
            SamplerState::Learned(bank) => {
                let (p, tape) = sample_hard(bank, rng, tau)?;
                Ok((p, Some(tape)))
            }
            SamplerState::Fixed { pattern, .. } => Ok((pattern.clone(), None)),
        }
    }

    /// Noise-free pattern: the fixed pattern, or the mode of the learned
    /// distribution.
    pub fn mode_pattern(&self) -> SamplingPattern {
        match &self.sampler {
            SamplerState::Learned(bank) => bank.mode_pattern(),
            SamplerState::Fixed { pattern, .. } => pattern.clone(),
        }
    }
}
