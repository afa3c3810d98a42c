//! Score models `S(s_t, t) ~ d log p_t(s_t) / d conj(s_t)`.
//!
//! Two analytic priors (a per-entry Gaussian and a per-entry Gaussian
//! mixture) give exact scores through the perturbation kernel and serve as
//! oracles. [`ToyScoreNet`] is a small trainable network fitted with the
//! denoising score-matching objective.

mod dsm;
mod gaussian;
mod gmm;
mod net;
mod train;

pub use dsm::{dsm_loss, dsm_loss_and_grad, dsm_loss_with, TrainBatch};
pub use gaussian::{AnalyticGaussianPrior, FrequencyGaussianPrior};
pub use gmm::{GaussianMixturePrior, MixtureComponent};
pub use net::{NetArch, NetView, ToyScoreNet};
pub use train::{train, Adam, Ema, EpochStats, TrainConfig, TrainReport};

use crate::error::Result;
use crate::sde::SdeSchedule;
use crate::spectrogram::ComplexSpectrogram;

pub trait ScoreModel {
    /// Schedule the model was built or trained for.
    fn schedule(&self) -> &SdeSchedule;

    /// Score estimate at process time `t`, same shape as `state`.
    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram>;
}

impl<M: ScoreModel + ?Sized> ScoreModel for &M {
    fn schedule(&self) -> &SdeSchedule {
        (**self).schedule()
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        (**self).score(state, t)
    }
}
