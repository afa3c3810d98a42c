//! Numerical core for unsupervised speech enhancement with a diffusion-based
//! clean-speech prior and an NMF noise model.
//!
//! Everything here is `no_std` (with `alloc`): the crate holds the
//! variance-exploding SDE, score models, the predictor-corrector samplers,
//! the Itakura-Saito NMF M-step, the EM loop and SI-SDR. Audio and model
//! file formats, the STFT and the command line live in the `udiffse` crate.
//!
//! All complex Gaussians are proper: `N_C(0, v)` has independent real and
//! imaginary parts with variance `v / 2` each. Scores are reported as
//! `d log p / d conj(s)`, so the score of `N_C(m, v)` is `(m - s) / v`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod compression;
pub mod em;
pub mod error;
pub mod metrics;
pub mod nmf;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod sde;
pub mod spectrogram;
pub mod waveform;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub use spectrogram::{ComplexSpectrogram, RealGrid};
