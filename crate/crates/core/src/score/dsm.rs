//! Denoising score matching.
//!
//! For `s_t = delta_t s_0 + sigma(t) zeta` the per-item loss is
//! `|| S(s_t, t) + zeta / sigma(t) ||^2`, summed over every real and
//! imaginary component, and the batch loss is the mean over items.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::net::{Mlp, NetArch, TimeConditioning};
use super::{NetView, ScoreModel, ToyScoreNet};
use crate::error::{Error, Result};
use crate::rng::complex_normal_grid;
use crate::sde::SdeSchedule;
use crate::spectrogram::ComplexSpectrogram;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    s0: Vec<ComplexSpectrogram>,
    t: Vec<f64>,
    zeta: Vec<ComplexSpectrogram>,
}

impl TrainBatch {
    pub fn new(s0: Vec<ComplexSpectrogram>, t: Vec<f64>, zeta: Vec<ComplexSpectrogram>) -> Result<Self> {
        let first = s0.first().ok_or(Error::Empty("training batch"))?.shape();
        if t.len() != s0.len() || zeta.len() != s0.len() {
            return Err(Error::invalid(
                "training batch",
                alloc::format!("{} patches, {} times, {} noise draws", s0.len(), t.len(), zeta.len()),
            ));
        }
        for item in s0.iter().chain(&zeta) {
            if item.shape() != first {
                return Err(Error::ShapeMismatch {
                    expected: first,
                    got: item.shape(),
                });
            }
        }
        Ok(Self { s0, t, zeta })
    }

    /// Pairs clean patches with `t ~ U[t_min, 1]` and `zeta ~ N_C(0, I)`.
    pub fn sample<R: Rng + ?Sized>(s0: Vec<ComplexSpectrogram>, sched: &SdeSchedule, rng: &mut R) -> Result<Self> {
        let (f, frames) = s0.first().ok_or(Error::Empty("training batch"))?.shape();
        let mut t = Vec::with_capacity(s0.len());
        let mut zeta = Vec::with_capacity(s0.len());
        for _ in 0..s0.len() {
            t.push(rng.random_range(sched.t_min()..=1.0));
            zeta.push(complex_normal_grid(f, frames, rng));
        }
        Self::new(s0, t, zeta)
    }

    pub fn len(&self) -> usize {
        self.s0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s0.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn noise(&self) -> &[ComplexSpectrogram] {
        &self.zeta
    }

    pub fn clean(&self) -> &[ComplexSpectrogram] {
        &self.s0
    }

    /// Returns the batch with items in the order given by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            s0: order.iter().map(|&i| self.s0[i].clone()).collect(),
            t: order.iter().map(|&i| self.t[i]).collect(),
            zeta: order.iter().map(|&i| self.zeta[i].clone()).collect(),
        }
    }

    fn perturbed(&self, i: usize, sched: &SdeSchedule) -> Result<(ComplexSpectrogram, f64)> {
        let t = self.t[i];
        if t < sched.t_min() || t > 1.0 {
            return Err(Error::TimeOutOfRange {
                t,
                lo: sched.t_min(),
                hi: 1.0,
            });
        }
        let m = sched.kernel_moments(t)?;
        let mut st = self.s0[i].scaled(m.delta);
        st.add_scaled(&self.zeta[i], m.std())?;
        Ok((st, m.std()))
    }
}

/// Loss for an arbitrary scorer, called once per item with `(s_t, t)`.
pub fn dsm_loss_with(
    batch: &TrainBatch,
    sched: &SdeSchedule,
    mut scorer: impl FnMut(&ComplexSpectrogram, f64) -> Result<ComplexSpectrogram>,
) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..batch.len() {
        let (st, sigma) = batch.perturbed(i, sched)?;
        let score = scorer(&st, batch.t[i])?;
        st.check_same_shape(score.shape())?;
        total += score
            .iter()
            .zip(batch.zeta[i].iter())
            .map(|(s, z)| (s + z / sigma).norm_sqr())
            .sum::<f64>();
    }
    Ok(total / batch.len() as f64)
}

/// Loss of the live (non-averaged) weights of `model`.
pub fn dsm_loss(model: &ToyScoreNet, batch: &TrainBatch, sched: &SdeSchedule) -> Result<f64> {
    model.with_live_weights(|view| dsm_loss_with(batch, sched, |st, t| view.score(st, t)))
}

/// Loss and its exact gradient with respect to a flat parameter vector.
pub fn dsm_loss_and_grad(arch: NetArch, sched: &SdeSchedule, params: &[f64], batch: &TrainBatch) -> Result<(f64, Vec<f64>)> {
    if params.len() != arch.param_count() {
        return Err(Error::invalid(
            "parameters",
            alloc::format!("expected {} values, got {}", arch.param_count(), params.len()),
        ));
    }
    let view = NetView {
        arch,
        sched: *sched,
        params,
    };
    let mlp = Mlp::new(arch, params);
    let mut scratch = mlp.scratch();
    let mut grad = vec![0.0; params.len()];
    let mut total = 0.0;
    let inv_batch = 1.0 / batch.len() as f64;
    for i in 0..batch.len() {
        let (st, _) = batch.perturbed(i, sched)?;
        if st.f_bins() != arch.f_bins {
            return Err(Error::ShapeMismatch {
                expected: (arch.f_bins, st.t_frames()),
                got: st.shape(),
            });
        }
        let cond = TimeConditioning::new(&view.sched, batch.t[i])?;
        let inv_sigma = cond.inv_sigma();
        mlp.prepare(&cond, &mut scratch);
        let frames = st.t_frames();
        for (k, (&s, z)) in st.as_slice().iter().zip(batch.zeta[i].iter()).enumerate() {
            let f = k / frames;
            let [o_re, o_im] = mlp.forward(f, s, &cond, &mut scratch);
            // residual = (o + zeta) / sigma
            let r_re = (o_re + z.re) * inv_sigma;
            let r_im = (o_im + z.im) * inv_sigma;
            total += r_re * r_re + r_im * r_im;
            let scale = 2.0 * inv_sigma * inv_batch;
            mlp.backward(f, s, &cond, [scale * r_re, scale * r_im], &mut scratch, &mut grad);
        }
    }
    Ok((total * inv_batch, grad))
}
