use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("process time {t} outside [{lo}, {hi}]")]
    TimeOutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("{0} has zero power")]
    ZeroPower(&'static str),

    #[error("perturbed marginal has zero variance at t = {t}")]
    DegenerateVariance { t: f64 },

    #[error("score model returned a non-finite value at tau = {tau} (flat index {index})")]
    NonFiniteScore { tau: f64, index: usize },

    #[error("score model schedule does not match the sampler schedule")]
    ScheduleMismatch,

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: u64, loss: f64 },

    #[error("NMF update produced a non-finite value")]
    NmfNonFinite,

    #[error("EM iteration {iteration} failed: {source}")]
    EmIteration { iteration: usize, source: Box<Error> },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
