use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use super::ScoreModel;
use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::sde::SdeSchedule;
use crate::spectrogram::{ComplexSpectrogram, RealGrid};

/// Independent per-entry prior `s_0 ~ N_C(mean, var0)`.
///
/// Under the perturbation kernel the marginal at time `t` stays Gaussian,
/// `N_C(delta_t mean, delta_t^2 var0 + sigma(t)^2)`, so its score is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticGaussianPrior {
    mean: ComplexSpectrogram,
    var0: RealGrid,
    sched: SdeSchedule,
}

impl AnalyticGaussianPrior {
    pub fn new(mean: ComplexSpectrogram, var0: RealGrid, sched: SdeSchedule) -> Result<Self> {
        mean.check_same_shape(var0.shape())?;
        if let Some(index) = var0.as_slice().iter().position(|&v| v < 0.0) {
            return Err(Error::invalid("var0", alloc::format!("negative variance at index {index}")));
        }
        Ok(Self { mean, var0, sched })
    }

    pub fn isotropic(f_bins: usize, t_frames: usize, mean: Complex64, var0: f64, sched: SdeSchedule) -> Result<Self> {
        Self::new(
            ComplexSpectrogram::from_fn(f_bins, t_frames, |_, _| mean),
            RealGrid::filled(f_bins, t_frames, var0),
            sched,
        )
    }

    /// Zero-mean prior whose variance depends on the frequency bin only.
    pub fn per_frequency(profile: &[f64], t_frames: usize, sched: SdeSchedule) -> Result<Self> {
        if profile.is_empty() {
            return Err(Error::Empty("variance profile"));
        }
        Self::new(
            ComplexSpectrogram::zeros(profile.len(), t_frames),
            RealGrid::from_fn(profile.len(), t_frames, |f, _| profile[f]),
            sched,
        )
    }

    pub fn mean(&self) -> &ComplexSpectrogram {
        &self.mean
    }

    pub fn var0(&self) -> &RealGrid {
        &self.var0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mean.shape()
    }

    /// Draws `s_0` from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ComplexSpectrogram {
        let data: Vec<Complex64> = self
            .mean
            .iter()
            .zip(self.var0.as_slice())
            .map(|(&m, &v)| m + complex_normal(rng) * libm::sqrt(v))
            .collect();
        let (f, t) = self.shape();
        ComplexSpectrogram::from_vec(f, t, data).expect("prior draws are finite")
    }

    /// Elementwise `(delta_t mean - s_t) / (delta_t^2 var0 + sigma(t)^2)`.
    pub fn gaussian_score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        self.mean.check_same_shape(state.shape())?;
        let m = self.sched.kernel_moments(t)?;
        let d2 = m.delta * m.delta;
        let mut out = ComplexSpectrogram::zeros(state.f_bins(), state.t_frames());
        for (((o, &s), &mu), &v0) in out
            .as_mut_slice()
            .iter_mut()
            .zip(state.as_slice())
            .zip(self.mean.as_slice())
            .zip(self.var0.as_slice())
        {
            let total = d2 * v0 + m.var;
            if total <= 0.0 {
                return Err(Error::DegenerateVariance { t });
            }
            *o = (mu * m.delta - s) / total;
        }
        Ok(out)
    }
}

impl ScoreModel for AnalyticGaussianPrior {
    fn schedule(&self) -> &SdeSchedule {
        &self.sched
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        self.gaussian_score(state, t)
    }
}

/// Zero-mean prior with a per-frequency variance profile and any number of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGaussianPrior {
    profile: Vec<f64>,
    sched: SdeSchedule,
}

impl FrequencyGaussianPrior {
    pub fn new(profile: Vec<f64>, sched: SdeSchedule) -> Result<Self> {
        if profile.is_empty() {
            return Err(Error::Empty("variance profile"));
        }
        if let Some(index) = profile.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("var0", alloc::format!("bad variance at bin {index}")));
        }
        Ok(Self { profile, sched })
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn f_bins(&self) -> usize {
        self.profile.len()
    }

    /// The equivalent fixed-shape prior.
    pub fn at_frames(&self, t_frames: usize) -> Result<AnalyticGaussianPrior> {
        AnalyticGaussianPrior::per_frequency(&self.profile, t_frames, self.sched)
    }

    pub fn sample<R: Rng + ?Sized>(&self, t_frames: usize, rng: &mut R) -> ComplexSpectrogram {
        ComplexSpectrogram::from_fn(self.f_bins(), t_frames, |f, _| complex_normal(rng) * libm::sqrt(self.profile[f]))
    }
}

impl ScoreModel for FrequencyGaussianPrior {
    fn schedule(&self) -> &SdeSchedule {
        &self.sched
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        if state.f_bins() != self.f_bins() {
            return Err(Error::ShapeMismatch {
                expected: (self.f_bins(), state.t_frames()),
                got: state.shape(),
            });
        }
        let m = self.sched.kernel_moments(t)?;
        let d2 = m.delta * m.delta;
        let frames = state.t_frames();
        let mut out = state.clone();
        for (k, o) in out.as_mut_slice().iter_mut().enumerate() {
            let total = d2 * self.profile[k / frames] + m.var;
            if total <= 0.0 {
                return Err(Error::DegenerateVariance { t });
            }
            *o = -*o / total;
        }
        Ok(out)
    }
}
