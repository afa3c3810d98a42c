//! File formats, the STFT front-end and the command line around
//! `udiffse-core`.
//!
//! The enhancement pipeline is: WAV in, STFT with amplitude compression,
//! EM over diffusion posterior samples and NMF noise factors, inverse STFT,
//! WAV out.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod stft;
pub mod synthetic;
pub mod wav;

pub use error::{Error, Result};
pub use udiffse_core as core;
