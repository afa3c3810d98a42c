//! Exponential amplitude compression applied to STFT coefficients.
//!
//! `c -> beta * |c|^alpha * exp(i arg c)` flattens the heavy-tailed amplitude
//! distribution of speech spectra. The map is a bijection on the complex
//! plane for `alpha` in (0, 1] and `beta` > 0; zero maps to zero.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeCompression {
    alpha: f64,
    beta: f64,
}

impl Default for AmplitudeCompression {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.15,
        }
    }
}

impl AmplitudeCompression {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::invalid("compress_alpha", alloc::format!("{alpha} not in (0, 1]")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid("compress_beta", alloc::format!("{beta} must be positive")));
        }
        Ok(Self { alpha, beta })
    }

    /// Identity transform (`alpha = beta = 1`).
    pub fn identity() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn compress(&self, c: Complex64) -> Complex64 {
        self.rescale(c, self.alpha, self.beta)
    }

    pub fn decompress(&self, c: Complex64) -> Complex64 {
        let inv_alpha = 1.0 / self.alpha;
        // |c| = beta |y|^alpha  =>  |y| = (|c| / beta)^(1/alpha)
        self.rescale(c, inv_alpha, libm::pow(self.beta, -inv_alpha))
    }

    fn rescale(&self, c: Complex64, exponent: f64, gain: f64) -> Complex64 {
        let mag = c.norm();
        if mag == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if exponent == 1.0 {
            return c * gain;
        }
        let new_mag = gain * libm::pow(mag, exponent);
        c * (new_mag / mag)
    }

    pub fn compress_spectrogram(&self, spec: &ComplexSpectrogram) -> ComplexSpectrogram {
        spec.map(|c| self.compress(c))
    }

    pub fn decompress_spectrogram(&self, spec: &ComplexSpectrogram) -> ComplexSpectrogram {
        spec.map(|c| self.decompress(c))
    }
}
