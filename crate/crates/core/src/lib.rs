//! Learned Fourier-domain subsampling with unrolled reconstruction.
//!
//! A trainable distribution over Fourier coefficients is sampled with the
//! Gumbel-max trick (hard patterns forward, temperature-softmax gradients
//! backward) and paired with a reconstruction network that recovers the
//! signal from the selected coefficients. Everything is generic over the
//! scalar type; the aliases below fix it to `f64` or `f32`.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod math;
pub mod metrics;
pub mod params;
pub mod recon;
pub mod sampler;

pub use error::{Error, Result};

pub type ComplexVec = math::ComplexVector<f64>;
pub type ComplexVecF32 = math::ComplexVector<f32>;
pub type Logits = sampler::LogitBank<f64>;
pub type LogitsF32 = sampler::LogitBank<f32>;
pub type Network = recon::ReconParams<f64>;
pub type NetworkF32 = recon::ReconParams<f32>;
pub type DpsModel = engine::Model<f64>;
pub type DpsModelF32 = engine::Model<f32>;
pub type SignalSet = data::Dataset<f64>;
pub type SignalSetF32 = data::Dataset<f32>;
