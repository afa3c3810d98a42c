use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::dsm::{dsm_loss_and_grad, TrainBatch};
use super::{ScoreModel, ToyScoreNet};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectrogram::ComplexSpectrogram;

/// Adaptive moment estimation.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / (libm::sqrt(*v / bc2) + self.eps);
        }
    }
}

/// Exponential moving average of a parameter vector, seeded with its initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Ema {
    decay: f64,
    shadow: Vec<f64>,
}

impl Ema {
    pub fn new(decay: f64, initial: &[f64]) -> Self {
        Self {
            decay,
            shadow: initial.to_vec(),
        }
    }

    pub fn update(&mut self, params: &[f64]) {
        let d = self.decay;
        for (s, p) in self.shadow.iter_mut().zip(params) {
            *s = d * *s + (1.0 - d) * p;
        }
    }

    pub fn shadow(&self) -> &[f64] {
        &self.shadow
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Frames per random training patch.
    pub patch_frames: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            batch_size: 16,
            epochs: 1,
            patch_frames: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Global optimiser step count at the end of the epoch.
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Loss of the live weights on a fixed held-out batch before training.
    pub heldout_before: f64,
    pub heldout_after: f64,
}

fn random_patch<R: Rng + ?Sized>(spec: &ComplexSpectrogram, frames: usize, rng: &mut R) -> Result<ComplexSpectrogram> {
    let start = rng.random_range(0..=spec.t_frames() - frames);
    spec.frames(start, frames)
}

fn draw_batch<R: Rng + ?Sized>(
    model: &ToyScoreNet,
    dataset: &[ComplexSpectrogram],
    indices: &[usize],
    patch_frames: usize,
    rng: &mut R,
) -> Result<TrainBatch> {
    let patches = indices
        .iter()
        .map(|&i| random_patch(&dataset[i], patch_frames, rng))
        .collect::<Result<Vec<_>>>()?;
    TrainBatch::sample(patches, model.schedule(), rng)
}

/// Trains `model` in place with denoising score matching and Adam, keeping
/// the EMA weights in step. Each epoch visits every dataset item once, in a
/// seeded random order, as a random patch of `patch_frames` frames.
pub fn train(
    model: &mut ToyScoreNet,
    dataset: &[ComplexSpectrogram],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    if cfg.batch_size == 0 || cfg.patch_frames == 0 {
        return Err(Error::invalid("training config", "batch_size and patch_frames must be >= 1"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::invalid("learning_rate", alloc::format!("{}", cfg.learning_rate)));
    }
    let arch = model.arch();
    for item in dataset {
        if item.f_bins() != arch.f_bins || item.t_frames() < cfg.patch_frames {
            return Err(Error::invalid(
                "training dataset",
                alloc::format!(
                    "item of shape {:?} cannot yield {}x{} patches",
                    item.shape(),
                    arch.f_bins,
                    cfg.patch_frames
                ),
            ));
        }
    }
    let sched = *model.schedule();
    // the held-out batch comes from its own stream so it never depends on epochs
    let mut heldout_rng = rng::stream(cfg.seed, u64::MAX);
    let heldout_idx: Vec<usize> = (0..cfg.batch_size.min(dataset.len())).collect();
    let heldout = draw_batch(model, dataset, &heldout_idx, cfg.patch_frames, &mut heldout_rng)?;

    let mut params = model.live_f64();
    let mut ema = Ema::new(model.ema_decay(), model.ema_f64());
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut step = model.step();
    let heldout_before = dsm_loss_and_grad(arch, &sched, &params, &heldout)?.0;

    let mut rng = rng::stream(cfg.seed, step);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = draw_batch(model, dataset, chunk, cfg.patch_frames, &mut rng)?;
            let (loss, grad) = dsm_loss_and_grad(arch, &sched, &params, &batch)?;
            step += 1;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { step, loss });
            }
            adam.step(&mut params, &grad);
            ema.update(&params);
            loss_sum += loss;
            n_batches += 1;
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / n_batches as f64,
            step,
        };
        on_epoch(&stats);
        epochs.push(stats);
    }
    let heldout_after = dsm_loss_and_grad(arch, &sched, &params, &heldout)?.0;
    if cfg.epochs > 0 {
        model.store(&params, ema.shadow(), step);
    }
    Ok(TrainReport {
        epochs,
        heldout_before,
        heldout_after,
    })
}
