//! Synthetic clean-speech priors and NMF-structured noise for toy runs.

use rand::Rng;
use udiffse_core::nmf::NmfParams;
use udiffse_core::rng::complex_normal;
use udiffse_core::score::FrequencyGaussianPrior;
use udiffse_core::sde::SdeSchedule;
use udiffse_core::waveform::Waveform;
use udiffse_core::ComplexSpectrogram;

use crate::error::Result;
use crate::stft::Stft;

/// Decaying per-frequency variance `0.3 exp(-3 f / F) + 0.02` in the
/// compressed domain.
pub fn toy_profile(f_bins: usize) -> Vec<f64> {
    (0..f_bins)
        .map(|f| 0.3 * (-3.0 * f as f64 / f_bins as f64).exp() + 0.02)
        .collect()
}

pub fn toy_prior(f_bins: usize, sched: SdeSchedule) -> FrequencyGaussianPrior {
    FrequencyGaussianPrior::new(toy_profile(f_bins), sched).expect("toy profile is positive")
}

/// Training spectrograms drawn from `prior`.
pub fn prior_dataset<R: Rng + ?Sized>(
    prior: &FrequencyGaussianPrior,
    items: usize,
    t_frames: usize,
    rng: &mut R,
) -> Vec<ComplexSpectrogram> {
    (0..items).map(|_| prior.sample(t_frames, rng)).collect()
}

fn exp1<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

/// Random rank-`rank` factors with squared unit-exponential entries.
pub fn random_noise_factors<R: Rng + ?Sized>(f_bins: usize, t_frames: usize, rank: usize, rng: &mut R) -> NmfParams {
    let mut draw = |n: usize| (0..n).map(|_| exp1(rng).powi(2)).collect::<Vec<_>>();
    let w = draw(f_bins * rank);
    let h = draw(rank * t_frames);
    NmfParams::new(f_bins, t_frames, rank, w, h).expect("exponential draws are finite and positive")
}

/// Complex Gaussian spectrogram with per-entry variance `W H`.
pub fn nmf_noise_spectrogram<R: Rng + ?Sized>(factors: &NmfParams, rng: &mut R) -> ComplexSpectrogram {
    let v = factors.variance();
    ComplexSpectrogram::from_fn(v.f_bins(), v.t_frames(), |f, t| complex_normal(rng) * v.get(f, t).sqrt())
}

/// Waveform whose compressed spectrogram is a prior draw.
pub fn clean_utterance<R: Rng + ?Sized>(
    prior: &FrequencyGaussianPrior,
    stft: &Stft,
    n_samples: usize,
    rng: &mut R,
) -> Result<Waveform> {
    let spec = prior.sample(stft.config().frames_for(n_samples), rng);
    stft.istft(&spec, n_samples)
}

/// Waveform whose compressed spectrogram has rank-`rank` NMF variance.
pub fn nmf_noise_utterance<R: Rng + ?Sized>(stft: &Stft, n_samples: usize, rank: usize, rng: &mut R) -> Result<Waveform> {
    let frames = stft.config().frames_for(n_samples);
    let factors = random_noise_factors(stft.config().f_bins(), frames, rank, rng);
    let spec = nmf_noise_spectrogram(&factors, rng);
    stft.istft(&spec, n_samples)
}
