//! Numeric building blocks: the scalar trait, split complex storage,
//! unitary radix-2 Fourier transforms and seeded noise sources.

mod complex;
pub(crate) mod fft;
mod rng;
mod scalar;

pub use complex::{ComplexGrid, ComplexVector};
pub use fft::{dft2_forward, dft2_inverse, dft_forward, dft_inverse, fft_in_place};
pub use rng::{gaussian_noise, gumbel_noise, RngHandle, GUMBEL_U_MAX, GUMBEL_U_MIN};
pub use scalar::Scalar;
