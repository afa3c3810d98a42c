//! Time-frequency grids.
//!
//! Both grids are stored row-major with frequency as the outer index, so the
//! entry for bin `f` and frame `t` lives at `f * t_frames + t`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// F x T grid of complex STFT coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    f_bins: usize,
    t_frames: usize,
    data: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn zeros(f_bins: usize, t_frames: usize) -> Self {
        assert!(f_bins > 0 && t_frames > 0, "spectrogram dimensions must be positive");
        Self {
            f_bins,
            t_frames,
            data: vec![Complex64::new(0.0, 0.0); f_bins * t_frames],
        }
    }

    /// Builds a grid from F-major data, rejecting empty shapes and non-finite entries.
    pub fn from_vec(f_bins: usize, t_frames: usize, data: Vec<Complex64>) -> Result<Self> {
        if f_bins == 0 || t_frames == 0 {
            return Err(Error::Empty("spectrogram"));
        }
        if data.len() != f_bins * t_frames {
            return Err(Error::ShapeMismatch {
                expected: (f_bins, t_frames),
                got: (data.len(), 1),
            });
        }
        if let Some(index) = data.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite {
                what: "spectrogram",
                index,
            });
        }
        Ok(Self {
            f_bins,
            t_frames,
            data,
        })
    }

    pub fn from_fn(f_bins: usize, t_frames: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(f_bins, t_frames);
        for fi in 0..f_bins {
            for ti in 0..t_frames {
                out.data[fi * t_frames + ti] = f(fi, ti);
            }
        }
        out
    }

    pub fn f_bins(&self) -> usize {
        self.f_bins
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.f_bins, self.t_frames)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, f: usize, t: usize) -> Complex64 {
        self.data[f * self.t_frames + t]
    }

    pub fn set(&mut self, f: usize, t: usize, value: Complex64) {
        self.data[f * self.t_frames + t] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Complex64> {
        self.data.iter()
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Self {
        Self {
            f_bins: self.f_bins,
            t_frames: self.t_frames,
            data: self.data.iter().map(|&c| f(c)).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map(|c| c * factor)
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<()> {
        self.check_same_shape(other.shape())?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * factor;
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: (usize, usize)) -> Result<()> {
        if self.shape() == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape(),
                got: other,
            })
        }
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.data
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
    }

    /// Sum of `|c|^2` over all entries.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn mean_power(&self) -> f64 {
        self.energy() / self.data.len() as f64
    }

    /// Real inner product of the stacked (re, im) vectors.
    pub fn real_dot(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    /// Copies frames `start..start + len` into a new grid.
    pub fn frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.t_frames {
            return Err(Error::invalid(
                "frame range",
                alloc::format!("{start}..{} exceeds {} frames", start + len, self.t_frames),
            ));
        }
        Ok(Self::from_fn(self.f_bins, len, |f, t| self.get(f, start + t)))
    }
}

/// F x T grid of real values, used for noise variances and residual powers.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    f_bins: usize,
    t_frames: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn filled(f_bins: usize, t_frames: usize, value: f64) -> Self {
        assert!(f_bins > 0 && t_frames > 0, "grid dimensions must be positive");
        Self {
            f_bins,
            t_frames,
            data: vec![value; f_bins * t_frames],
        }
    }

    pub fn from_vec(f_bins: usize, t_frames: usize, data: Vec<f64>) -> Result<Self> {
        if f_bins == 0 || t_frames == 0 {
            return Err(Error::Empty("grid"));
        }
        if data.len() != f_bins * t_frames {
            return Err(Error::ShapeMismatch {
                expected: (f_bins, t_frames),
                got: (data.len(), 1),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "grid", index });
        }
        Ok(Self {
            f_bins,
            t_frames,
            data,
        })
    }

    pub fn from_fn(f_bins: usize, t_frames: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Self::filled(f_bins, t_frames, 0.0);
        for fi in 0..f_bins {
            for ti in 0..t_frames {
                out.data[fi * t_frames + ti] = f(fi, ti);
            }
        }
        out
    }

    pub fn f_bins(&self) -> usize {
        self.f_bins
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.f_bins, self.t_frames)
    }

    pub fn get(&self, f: usize, t: usize) -> f64 {
        self.data[f * self.t_frames + t]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }
}
