//! Score models that can be stored in a checkpoint.

use udiffse_core::score::{FrequencyGaussianPrior, ScoreModel, ToyScoreNet};
use udiffse_core::sde::SdeSchedule;
use udiffse_core::ComplexSpectrogram;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Net(ToyScoreNet),
    /// Zero-mean analytic prior with a per-frequency variance.
    Gaussian(FrequencyGaussianPrior),
}

impl Model {
    pub fn f_bins(&self) -> usize {
        match self {
            Model::Net(n) => n.arch().f_bins,
            Model::Gaussian(g) => g.f_bins(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Net(_) => "net",
            Model::Gaussian(_) => "gaussian",
        }
    }
}

impl ScoreModel for Model {
    fn schedule(&self) -> &SdeSchedule {
        match self {
            Model::Net(n) => n.schedule(),
            Model::Gaussian(g) => g.schedule(),
        }
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> udiffse_core::Result<ComplexSpectrogram> {
        match self {
            Model::Net(n) => n.score(state, t),
            Model::Gaussian(g) => g.score(state, t),
        }
    }
}
