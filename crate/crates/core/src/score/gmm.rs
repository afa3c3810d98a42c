use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use super::ScoreModel;
use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::sde::SdeSchedule;
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Complex64,
    pub var: f64,
}

/// Every entry is an independent draw from the same complex Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixturePrior {
    components: Vec<MixtureComponent>,
    sched: SdeSchedule,
}

impl GaussianMixturePrior {
    pub fn new(components: Vec<MixtureComponent>, sched: SdeSchedule) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if components.iter().any(|c| !(c.weight > 0.0) || !(c.var >= 0.0)) {
            return Err(Error::invalid("mixture", "weights must be positive and variances non-negative"));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if libm::fabs(total - 1.0) > 1e-9 {
            return Err(Error::invalid("mixture", alloc::format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components, sched })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    /// Draws a prior sample and the component index of every entry.
    pub fn sample<R: Rng + ?Sized>(&self, f_bins: usize, t_frames: usize, rng: &mut R) -> (ComplexSpectrogram, Vec<usize>) {
        let mut labels = Vec::with_capacity(f_bins * t_frames);
        let mut out = ComplexSpectrogram::zeros(f_bins, t_frames);
        for c in out.as_mut_slice() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut k = self.components.len() - 1;
            for (i, comp) in self.components.iter().enumerate() {
                acc += comp.weight;
                if u < acc {
                    k = i;
                    break;
                }
            }
            let comp = &self.components[k];
            *c = comp.mean + complex_normal(rng) * libm::sqrt(comp.var);
            labels.push(k);
        }
        (out, labels)
    }

    /// Score of the perturbed mixture `sum_k w_k N_C(delta m_k, delta^2 v_k + sigma^2)`,
    /// with responsibilities computed by log-sum-exp.
    pub fn gmm_score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        let m = self.sched.kernel_moments(t)?;
        let d2 = m.delta * m.delta;
        let perturbed: Vec<(f64, Complex64, f64)> = self
            .components
            .iter()
            .map(|c| (libm::log(c.weight), c.mean * m.delta, d2 * c.var + m.var))
            .collect();
        if perturbed.iter().any(|p| p.2 <= 0.0) {
            return Err(Error::DegenerateVariance { t });
        }
        let mut logits = Vec::with_capacity(perturbed.len());
        Ok(state.map(|s| {
            logits.clear();
            logits.extend(
                perturbed
                    .iter()
                    .map(|&(lw, mu, v)| lw - libm::log(v) - (s - mu).norm_sqr() / v),
            );
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut norm = 0.0;
            let mut acc = Complex64::new(0.0, 0.0);
            for (&l, &(_, mu, v)) in logits.iter().zip(&perturbed) {
                let r = libm::exp(l - max);
                norm += r;
                acc += (mu - s) * (r / v);
            }
            acc / norm
        }))
    }
}

impl ScoreModel for GaussianMixturePrior {
    fn schedule(&self) -> &SdeSchedule {
        &self.sched
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        self.gmm_score(state, t)
    }
}
