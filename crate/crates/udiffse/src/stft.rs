//! Short-time Fourier transform with amplitude compression.
//!
//! Frames are centred: frame `t` covers samples
//! `[t * hop - window_len / 2, t * hop + window_len / 2)` of the zero-padded
//! signal, and `T = ceil(n / hop) + 1`. The FFT length equals the window
//! length, so a 510-sample window gives 256 bins. Synthesis is weighted
//! overlap-add normalised by the summed squared window.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use udiffse_core::compression::AmplitudeCompression;
use udiffse_core::waveform::Waveform;
use udiffse_core::ComplexSpectrogram;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

/// Floor on the summed squared window during synthesis.
const WINDOW_SUM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub compression: AmplitudeCompression,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 510,
            hop: 128,
            compression: AmplitudeCompression::default(),
            sample_rate: SAMPLE_RATE,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len < 2 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Usage(format!(
                "need 0 < hop <= window_len and window_len >= 2, got hop {} window {}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }

    pub fn f_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn frames_for(&self, n_samples: usize) -> usize {
        n_samples.div_ceil(self.hop) + 1
    }

    fn pad(&self) -> usize {
        self.window_len / 2
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

/// Reusable FFT plans and window for one configuration.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg,
            window: hann(cfg.window_len),
            forward: planner.plan_fft_forward(cfg.window_len),
            inverse: planner.plan_fft_inverse(cfg.window_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Uncompressed analysis.
    pub fn analyse(&self, samples: &[f64]) -> Result<ComplexSpectrogram> {
        if samples.is_empty() {
            return Err(udiffse_core::Error::Empty("waveform").into());
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(udiffse_core::Error::NonFinite { what: "waveform", index }.into());
        }
        let (w, hop, pad) = (self.cfg.window_len, self.cfg.hop, self.cfg.pad());
        let frames = self.cfg.frames_for(samples.len());
        let bins = self.cfg.f_bins();
        let mut out = ComplexSpectrogram::zeros(bins, frames);
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        for t in 0..frames {
            for (n, b) in buf.iter_mut().enumerate() {
                let idx = (t * hop + n).checked_sub(pad);
                let x = idx.and_then(|i| samples.get(i)).copied().unwrap_or(0.0);
                *b = Complex64::new(x * self.window[n], 0.0);
            }
            self.forward.process(&mut buf);
            for (f, &c) in buf.iter().take(bins).enumerate() {
                out.set(f, t, c);
            }
        }
        Ok(out)
    }

    /// Uncompressed synthesis to `out_len` samples.
    pub fn synthesise(&self, spec: &ComplexSpectrogram, out_len: usize) -> Result<Vec<f64>> {
        let (w, hop, pad) = (self.cfg.window_len, self.cfg.hop, self.cfg.pad());
        let bins = self.cfg.f_bins();
        if spec.f_bins() != bins {
            return Err(udiffse_core::Error::ShapeMismatch {
                expected: (bins, spec.t_frames()),
                got: spec.shape(),
            }
            .into());
        }
        if spec.t_frames() != self.cfg.frames_for(out_len) {
            return Err(Error::Usage(format!(
                "{} frames cannot synthesise {out_len} samples (need {})",
                spec.t_frames(),
                self.cfg.frames_for(out_len)
            )));
        }
        let total = (spec.t_frames() - 1) * hop + w;
        let mut acc = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); w];
        let scale = 1.0 / w as f64;
        for t in 0..spec.t_frames() {
            for k in 0..w {
                buf[k] = if k < bins {
                    spec.get(k, t)
                } else {
                    spec.get(w - k, t).conj()
                };
            }
            // the Hermitian extension needs real DC and (for even w) Nyquist bins
            buf[0].im = 0.0;
            if w % 2 == 0 {
                buf[w / 2].im = 0.0;
            }
            self.inverse.process(&mut buf);
            for n in 0..w {
                let win = self.window[n];
                acc[t * hop + n] += buf[n].re * scale * win;
                norm[t * hop + n] += win * win;
            }
        }
        Ok((0..out_len)
            .map(|i| acc[i + pad] / norm[i + pad].max(WINDOW_SUM_FLOOR))
            .collect())
    }

    /// Analysis followed by amplitude compression.
    pub fn stft(&self, w: &Waveform) -> Result<ComplexSpectrogram> {
        let raw = self.analyse(w.samples())?;
        Ok(self.cfg.compression.compress_spectrogram(&raw))
    }

    /// Decompression followed by synthesis.
    pub fn istft(&self, spec: &ComplexSpectrogram, out_len: usize) -> Result<Waveform> {
        let raw = self.cfg.compression.decompress_spectrogram(spec);
        let samples = self.synthesise(&raw, out_len)?;
        Ok(Waveform::new(samples, self.cfg.sample_rate)?)
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(*cfg)?.stft(w)
}

pub fn istft(spec: &ComplexSpectrogram, cfg: &StftConfig, out_len: usize) -> Result<Waveform> {
    Stft::new(*cfg)?.istft(spec, out_len)
}
