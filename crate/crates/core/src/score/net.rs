//! Small per-bin score network.
//!
//! Each TF bin is scored independently by a tanh MLP (equivalently a stack
//! of 1x1 convolutions over the stacked real/imaginary channels). Inputs per
//! bin are the preconditioned real and imaginary parts, a log-sigma noise
//! embedding, the process time and the normalised frequency index. The two
//! outputs are divided by `sigma(t)`, so the network regresses `-zeta`
//! rather than the unbounded score itself.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use rand::Rng;

use super::ScoreModel;
use crate::error::{Error, Result};
use crate::rng;
use crate::sde::SdeSchedule;
use crate::spectrogram::ComplexSpectrogram;

pub(crate) const INPUT_FEATURES: usize = 5;
const OUTPUTS: usize = 2;
/// Nominal variance of clean coefficients used for input preconditioning.
const DATA_VAR: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetArch {
    /// Number of frequency bins the network is conditioned on.
    pub f_bins: usize,
    /// Width of each hidden layer.
    pub hidden: usize,
    /// Number of hidden layers.
    pub depth: usize,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

impl NetArch {
    pub fn new(f_bins: usize, hidden: usize, depth: usize) -> Result<Self> {
        if f_bins == 0 || hidden == 0 || depth == 0 {
            return Err(Error::invalid("network architecture", "f_bins, hidden and depth must be >= 1"));
        }
        Ok(Self { f_bins, hidden, depth })
    }

    fn layers(&self) -> Vec<Layer> {
        let mut dims = Vec::with_capacity(self.depth + 1);
        dims.push((INPUT_FEATURES, self.hidden));
        for _ in 1..self.depth {
            dims.push((self.hidden, self.hidden));
        }
        dims.push((self.hidden, OUTPUTS));
        let mut offset = 0;
        dims.into_iter()
            .map(|(fan_in, fan_out)| {
                let layer = Layer {
                    w: offset,
                    b: offset + fan_in * fan_out,
                    fan_in,
                    fan_out,
                };
                offset += fan_in * fan_out + fan_out;
                layer
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.fan_in * l.fan_out + l.fan_out).sum()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng::seeded(seed);
        let mut params = vec![0.0; self.param_count()];
        for layer in self.layers() {
            let limit = libm::sqrt(6.0 / (layer.fan_in + layer.fan_out) as f64);
            for w in &mut params[layer.w..layer.b] {
                *w = rng.random_range(-limit..limit);
            }
        }
        params
    }

    fn freq_feature(&self, f: usize) -> f64 {
        if self.f_bins <= 1 {
            0.0
        } else {
            2.0 * f as f64 / (self.f_bins - 1) as f64 - 1.0
        }
    }
}

/// Per-call conditioning derived from the process time.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TimeConditioning {
    c_in: f64,
    c_noise: f64,
    t_feature: f64,
    inv_sigma: f64,
}

impl TimeConditioning {
    pub(crate) fn new(sched: &SdeSchedule, t: f64) -> Result<Self> {
        let m = sched.kernel_moments(t)?;
        if m.var <= 0.0 {
            return Err(Error::DegenerateVariance { t });
        }
        let sigma = m.std();
        Ok(Self {
            c_in: 1.0 / libm::sqrt(m.delta * m.delta * DATA_VAR + m.var),
            c_noise: (libm::log(sigma) + 2.5) / 1.5,
            t_feature: 2.0 * t - 1.0,
            inv_sigma: 1.0 / sigma,
        })
    }

    pub(crate) fn inv_sigma(&self) -> f64 {
        self.inv_sigma
    }
}

/// Forward/backward passes over a flat parameter vector.
pub(crate) struct Mlp<'a> {
    arch: NetArch,
    layers: Vec<Layer>,
    params: &'a [f64],
}

/// Scratch space for one bin: post-activation values of every hidden layer.
pub(crate) struct Scratch {
    acts: Vec<f64>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
    first_bias: Vec<f64>,
}

impl<'a> Mlp<'a> {
    pub(crate) fn new(arch: NetArch, params: &'a [f64]) -> Self {
        assert_eq!(params.len(), arch.param_count(), "parameter vector length");
        Self {
            arch,
            layers: arch.layers(),
            params,
        }
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let h = self.arch.hidden;
        Scratch {
            acts: vec![0.0; h * self.arch.depth],
            delta: vec![0.0; h],
            delta_next: vec![0.0; h],
            first_bias: vec![0.0; h * self.arch.f_bins],
        }
    }

    /// First-layer pre-activation contributed by the features that are
    /// constant across a frequency row (noise level, time, frequency).
    pub(crate) fn prepare(&self, cond: &TimeConditioning, scratch: &mut Scratch) {
        let l0 = self.layers[0];
        let h = self.arch.hidden;
        for f in 0..self.arch.f_bins {
            let ff = self.arch.freq_feature(f);
            for j in 0..h {
                let row = &self.params[l0.w + j * INPUT_FEATURES..l0.w + (j + 1) * INPUT_FEATURES];
                scratch.first_bias[f * h + j] =
                    self.params[l0.b + j] + row[2] * cond.c_noise + row[3] * cond.t_feature + row[4] * ff;
            }
        }
    }

    /// Raw network outputs for one bin; `prepare` must have run for `cond`.
    pub(crate) fn forward(&self, f: usize, s: Complex64, cond: &TimeConditioning, scratch: &mut Scratch) -> [f64; OUTPUTS] {
        let h = self.arch.hidden;
        let p = self.params;
        let (xr, xi) = (s.re * cond.c_in, s.im * cond.c_in);
        let l0 = self.layers[0];
        for j in 0..h {
            let w = l0.w + j * INPUT_FEATURES;
            scratch.acts[j] = libm::tanh(scratch.first_bias[f * h + j] + p[w] * xr + p[w + 1] * xi);
        }
        for (li, layer) in self.layers[1..self.arch.depth].iter().enumerate() {
            let (prev, cur) = scratch.acts.split_at_mut((li + 1) * h);
            let input = &prev[li * h..];
            for j in 0..h {
                let row = &p[layer.w + j * h..layer.w + (j + 1) * h];
                let z = p[layer.b + j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                cur[j] = libm::tanh(z);
            }
        }
        let out = self.layers[self.arch.depth];
        let last = &scratch.acts[(self.arch.depth - 1) * h..];
        let mut o = [0.0; OUTPUTS];
        for (k, ok) in o.iter_mut().enumerate() {
            let row = &p[out.w + k * h..out.w + (k + 1) * h];
            *ok = p[out.b + k] + row.iter().zip(last).map(|(a, b)| a * b).sum::<f64>();
        }
        o
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d outputs`
    /// for the bin whose activations `forward` just left in `scratch`.
    pub(crate) fn backward(
        &self,
        f: usize,
        s: Complex64,
        cond: &TimeConditioning,
        d_out: [f64; OUTPUTS],
        scratch: &mut Scratch,
        grad: &mut [f64],
    ) {
        let h = self.arch.hidden;
        let depth = self.arch.depth;
        let p = self.params;

        let out = self.layers[depth];
        let last = &scratch.acts[(depth - 1) * h..depth * h];
        scratch.delta.iter_mut().for_each(|d| *d = 0.0);
        for (k, &dk) in d_out.iter().enumerate() {
            grad[out.b + k] += dk;
            for i in 0..h {
                grad[out.w + k * h + i] += dk * last[i];
                scratch.delta[i] += dk * p[out.w + k * h + i];
            }
        }

        for l in (0..depth).rev() {
            let a = &scratch.acts[l * h..(l + 1) * h];
            for i in 0..h {
                scratch.delta[i] *= 1.0 - a[i] * a[i];
            }
            let layer = self.layers[l];
            if l == 0 {
                let x = [s.re * cond.c_in, s.im * cond.c_in, cond.c_noise, cond.t_feature, self.arch.freq_feature(f)];
                for j in 0..h {
                    let dj = scratch.delta[j];
                    grad[layer.b + j] += dj;
                    for (i, xi) in x.iter().enumerate() {
                        grad[layer.w + j * INPUT_FEATURES + i] += dj * xi;
                    }
                }
            } else {
                let input = &scratch.acts[(l - 1) * h..l * h];
                scratch.delta_next.iter_mut().for_each(|d| *d = 0.0);
                for j in 0..h {
                    let dj = scratch.delta[j];
                    grad[layer.b + j] += dj;
                    let row = layer.w + j * h;
                    for i in 0..h {
                        grad[row + i] += dj * input[i];
                        scratch.delta_next[i] += dj * p[row + i];
                    }
                }
                core::mem::swap(&mut scratch.delta, &mut scratch.delta_next);
            }
        }
    }
}

/// A score network evaluated with a borrowed `f64` parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct NetView<'a> {
    pub arch: NetArch,
    pub sched: SdeSchedule,
    pub params: &'a [f64],
}

impl ScoreModel for NetView<'_> {
    fn schedule(&self) -> &SdeSchedule {
        &self.sched
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        if state.f_bins() != self.arch.f_bins {
            return Err(Error::ShapeMismatch {
                expected: (self.arch.f_bins, state.t_frames()),
                got: state.shape(),
            });
        }
        let cond = TimeConditioning::new(&self.sched, t)?;
        let mlp = Mlp::new(self.arch, self.params);
        let mut scratch = mlp.scratch();
        mlp.prepare(&cond, &mut scratch);
        let frames = state.t_frames();
        let mut out = ComplexSpectrogram::zeros(state.f_bins(), frames);
        for (i, (o, &s)) in out.as_mut_slice().iter_mut().zip(state.as_slice()).enumerate() {
            let [re, im] = mlp.forward(i / frames, s, &cond, &mut scratch);
            *o = Complex64::new(re, im) * cond.inv_sigma;
        }
        Ok(out)
    }
}

/// Trainable score network with an exponential moving average of its weights.
///
/// Weights are stored as `f32` (the checkpoint precision) and evaluated in
/// `f64`. Inference uses the EMA weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyScoreNet {
    arch: NetArch,
    sched: SdeSchedule,
    params: Vec<f32>,
    ema: Vec<f32>,
    ema_decay: f64,
    step: u64,
    ema_f64: Vec<f64>,
}

impl ToyScoreNet {
    pub const DEFAULT_EMA_DECAY: f64 = 0.999;

    pub fn new(arch: NetArch, sched: SdeSchedule, seed: u64) -> Self {
        let params: Vec<f32> = arch.init_params(seed).iter().map(|&p| p as f32).collect();
        Self::from_parts(arch, sched, params.clone(), params, Self::DEFAULT_EMA_DECAY, 0)
            .expect("freshly initialised parameters are valid")
    }

    pub fn from_parts(
        arch: NetArch,
        sched: SdeSchedule,
        params: Vec<f32>,
        ema: Vec<f32>,
        ema_decay: f64,
        step: u64,
    ) -> Result<Self> {
        let n = arch.param_count();
        if params.len() != n || ema.len() != n {
            return Err(Error::invalid(
                "parameters",
                alloc::format!("expected {n} values, got {} and {}", params.len(), ema.len()),
            ));
        }
        if let Some(index) = params.iter().chain(&ema).position(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                what: "network parameters",
                index,
            });
        }
        if !(ema_decay > 0.0 && ema_decay <= 1.0) {
            return Err(Error::invalid("ema_decay", alloc::format!("{ema_decay} not in (0, 1]")));
        }
        let ema_f64 = ema.iter().map(|&p| p as f64).collect();
        Ok(Self {
            arch,
            sched,
            params,
            ema,
            ema_decay,
            step,
            ema_f64,
        })
    }

    pub fn arch(&self) -> NetArch {
        self.arch
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn ema_params(&self) -> &[f32] {
        &self.ema
    }

    pub fn ema_decay(&self) -> f64 {
        self.ema_decay
    }

    /// Optimiser steps taken so far, across resumed runs.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn live_f64(&self) -> Vec<f64> {
        self.params.iter().map(|&p| p as f64).collect()
    }

    pub(crate) fn ema_f64(&self) -> &[f64] {
        &self.ema_f64
    }

    pub(crate) fn store(&mut self, params: &[f64], ema: &[f64], step: u64) {
        self.params = params.iter().map(|&p| p as f32).collect();
        self.ema = ema.iter().map(|&p| p as f32).collect();
        self.ema_f64 = self.ema.iter().map(|&p| p as f64).collect();
        self.step = step;
    }

    /// View over the live (non-averaged) weights.
    pub fn with_live_weights<T>(&self, f: impl FnOnce(NetView<'_>) -> T) -> T {
        let live = self.live_f64();
        f(NetView {
            arch: self.arch,
            sched: self.sched,
            params: &live,
        })
    }

    fn inference_view(&self) -> NetView<'_> {
        NetView {
            arch: self.arch,
            sched: self.sched,
            params: &self.ema_f64,
        }
    }
}

impl ScoreModel for ToyScoreNet {
    fn schedule(&self) -> &SdeSchedule {
        &self.sched
    }

    fn score(&self, state: &ComplexSpectrogram, t: f64) -> Result<ComplexSpectrogram> {
        self.inference_view().score(state, t)
    }
}
