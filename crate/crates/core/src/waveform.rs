//! Time-domain signals and synthetic mixture construction.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample_rate", "must be positive"));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite {
                what: "waveform",
                index,
            });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        mean_power(&self.samples)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * factor).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn mean_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

/// Fits `noise` to `len` samples: a seeded random crop when it is longer, or
/// tiling from a seeded offset when it is shorter.
pub fn fit_noise_length(noise: &[f64], len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::seeded(seed);
    let n = noise.len();
    if n == 0 {
        return Vec::new();
    }
    let offset = if n > len {
        rng.random_range(0..=n - len)
    } else {
        rng.random_range(0..n)
    };
    (0..len).map(|i| noise[(offset + i) % n]).collect()
}

/// Mixes `clean + scale * noise` so that the clean-to-scaled-noise power
/// ratio equals `snr_db`. Returns the mixture and `scale`.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<(Waveform, f64)> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", alloc::format!("{snr_db} is not finite")));
    }
    if clean.sample_rate != noise.sample_rate {
        return Err(Error::invalid(
            "sample_rate",
            alloc::format!("clean {} Hz vs noise {} Hz", clean.sample_rate, noise.sample_rate),
        ));
    }
    if clean.is_empty() {
        return Err(Error::Empty("clean waveform"));
    }
    let clean_power = clean.power();
    if clean_power == 0.0 {
        return Err(Error::ZeroPower("clean signal"));
    }
    let fitted = fit_noise_length(&noise.samples, clean.len(), seed);
    let noise_power = mean_power(&fitted);
    if noise_power == 0.0 {
        return Err(Error::ZeroPower("noise signal"));
    }
    let scale = libm::sqrt(clean_power / (noise_power * libm::pow(10.0, snr_db / 10.0)));
    let samples = clean
        .samples
        .iter()
        .zip(&fitted)
        .map(|(s, n)| s + scale * n)
        .collect();
    Ok((Waveform::new(samples, clean.sample_rate)?, scale))
}
