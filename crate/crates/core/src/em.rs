//! Expectation-maximisation over clean speech and the NMF noise variance.
//!
//! Each iteration draws `b` posterior samples under the current noise
//! variance, averages them into `s_hat`, then refits `W, H` on
//! `|x - s_hat|^2`. Chain `j` of iteration `k` (both from zero) uses random
//! stream `k * b + j + 1` of the master seed, so results do not depend on the
//! order in which chains run.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nmf::{self, NmfParams, DEFAULT_INNER_UPDATES};
use crate::rng;
use crate::sampler::{posterior_sample, SamplerConfig};
use crate::score::ScoreModel;
use crate::sde::SdeSchedule;
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhancementConfig {
    pub em_iters: usize,
    pub sampler: SamplerConfig,
    pub nmf_rank: usize,
    /// Posterior chains averaged per E-step.
    pub batch: usize,
    pub seed: u64,
    pub nmf_inner_updates: usize,
    /// When false the noise variance keeps its initial value.
    pub update_noise: bool,
}

impl Default for EnhancementConfig {
    fn default() -> Self {
        Self {
            em_iters: 5,
            sampler: SamplerConfig::default(),
            nmf_rank: 4,
            batch: 4,
            seed: 0,
            nmf_inner_updates: DEFAULT_INNER_UPDATES,
            update_noise: true,
        }
    }
}

impl EnhancementConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        for (name, v) in [
            ("em_iters", self.em_iters),
            ("nmf_rank", self.nmf_rank),
            ("batch", self.batch),
            ("nmf_inner_updates", self.nmf_inner_updates),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Random stream used by chain `chain` of EM iteration `iteration`.
    pub fn chain_stream(&self, iteration: usize, chain: usize) -> u64 {
        (iteration * self.batch + chain + 1) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmIterationTrace {
    pub iteration: usize,
    /// Mean of `|x - s_hat|^2`.
    pub residual_power: f64,
    pub objective_before: f64,
    pub objective_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancementResult {
    pub s_hat: ComplexSpectrogram,
    pub nmf: NmfParams,
    pub trace: Vec<EmIterationTrace>,
}

/// Runs the `b` chains of one E-step. Implementations may run them in any
/// order or concurrently but must return results indexed by chain.
pub trait ChainRunner {
    fn run<F>(&self, chains: usize, chain: F) -> Vec<Result<ComplexSpectrogram>>
    where
        F: Fn(usize) -> Result<ComplexSpectrogram> + Sync;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChainRunner for Sequential {
    fn run<F>(&self, chains: usize, chain: F) -> Vec<Result<ComplexSpectrogram>>
    where
        F: Fn(usize) -> Result<ComplexSpectrogram> + Sync,
    {
        (0..chains).map(chain).collect()
    }
}

/// Elementwise complex mean.
pub fn average(samples: &[ComplexSpectrogram]) -> Result<ComplexSpectrogram> {
    let first = samples.first().ok_or(Error::Empty("chain outputs"))?;
    let mut acc = ComplexSpectrogram::zeros(first.f_bins(), first.t_frames());
    for s in samples {
        acc.add_scaled(s, 1.0)?;
    }
    Ok(acc.scaled(1.0 / samples.len() as f64))
}

/// Enhancement with the NMF initialised from the mixture power.
pub fn enhance_spectrogram<M: ScoreModel + Sync + ?Sized>(
    x: &ComplexSpectrogram,
    model: &M,
    sched: &SdeSchedule,
    cfg: &EnhancementConfig,
) -> Result<EnhancementResult> {
    let init = initial_nmf(x, cfg)?;
    enhance_from(x, model, sched, cfg, init, &Sequential)
}

pub fn initial_nmf(x: &ComplexSpectrogram, cfg: &EnhancementConfig) -> Result<NmfParams> {
    let power = x.mean_power();
    let scale = if power > 0.0 { power } else { nmf::NMF_FLOOR };
    nmf::init_nmf(x.f_bins(), x.t_frames(), cfg.nmf_rank, scale, cfg.seed)
}

/// Enhancement from explicit initial noise factors and a chain runner.
pub fn enhance_from<M: ScoreModel + Sync + ?Sized, C: ChainRunner + ?Sized>(
    x: &ComplexSpectrogram,
    model: &M,
    sched: &SdeSchedule,
    cfg: &EnhancementConfig,
    init: NmfParams,
    runner: &C,
) -> Result<EnhancementResult> {
    cfg.validate()?;
    if model.schedule() != sched {
        return Err(Error::ScheduleMismatch);
    }
    if (init.f_bins(), init.t_frames()) != x.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape(),
            got: (init.f_bins(), init.t_frames()),
        });
    }
    let mut params = init;
    let mut trace = Vec::with_capacity(cfg.em_iters);
    let mut s_hat = x.clone();
    for k in 0..cfg.em_iters {
        let wrap = |e: Error| Error::EmIteration {
            iteration: k,
            source: Box::new(e),
        };
        let v_phi = params.variance();
        let outputs = runner.run(cfg.batch, |j| {
            let mut r = rng::stream(cfg.seed, cfg.chain_stream(k, j));
            posterior_sample(x, model, sched, &cfg.sampler, &v_phi, &mut r)
        });
        let samples = outputs.into_iter().collect::<Result<Vec<_>>>().map_err(wrap)?;
        s_hat = average(&samples).map_err(wrap)?;
        let p = nmf::residual_power(x, &s_hat).map_err(wrap)?;
        let objective_before = nmf::is_objective(&p, &params).map_err(wrap)?;
        if cfg.update_noise {
            params = nmf::fit(&p, &params, cfg.nmf_inner_updates).map_err(wrap)?;
        }
        let objective_after = nmf::is_objective(&p, &params).map_err(wrap)?;
        trace.push(EmIterationTrace {
            iteration: k,
            residual_power: p.mean(),
            objective_before,
            objective_after,
        });
    }
    Ok(EnhancementResult {
        s_hat,
        nmf: params,
        trace,
    })
}
