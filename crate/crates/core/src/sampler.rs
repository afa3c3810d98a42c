//! Predictor-corrector reverse-SDE sampling, unconditional and posterior-guided.
//!
//! Reverse time runs over `tau_i = max(i / N, t_min)` for `i = N..1` with
//! `dtau = 1 / N`. Each step applies, in order, an annealed Langevin
//! corrector, an Euler-Maruyama predictor and, on steps with
//! `i % posterior_every == 0`, a data-consistency update driven by the
//! noise-perturbed pseudo-likelihood score
//!
//! ```text
//! (1 / delta) (x - s / delta) / (sigma^2 / delta^2 + v_phi)
//! ```
//!
//! The guidance update integrates the conditional drift
//! `lambda g(tau)^2 * score` over the `posterior_every * dtau` of reverse
//! time elapsed since the previous guided step.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{complex_normal, complex_normal_grid};
use crate::score::ScoreModel;
use crate::sde::SdeSchedule;
use crate::spectrogram::{ComplexSpectrogram, RealGrid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Number of reverse steps `N`.
    pub n_steps: usize,
    /// Guidance stride `l`.
    pub posterior_every: usize,
    /// Guidance weight `lambda`.
    pub guidance_weight: f64,
    /// Langevin corrector steps per predictor step; 0 disables the corrector.
    pub corrector_steps: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 30,
            posterior_every: 2,
            guidance_weight: 1.5,
            corrector_steps: 1,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be >= 1"));
        }
        if self.posterior_every == 0 {
            return Err(Error::invalid("posterior_every", "must be >= 1"));
        }
        if !(self.guidance_weight >= 0.0 && self.guidance_weight.is_finite()) {
            return Err(Error::invalid("guidance_weight", alloc::format!("{} must be >= 0", self.guidance_weight)));
        }
        Ok(())
    }

    /// Reverse-time grid `(i, tau_i)` for `i = N..1`.
    pub fn time_grid(&self, sched: &SdeSchedule) -> impl Iterator<Item = (usize, f64)> {
        let n = self.n_steps;
        let t_min = sched.t_min();
        (1..=n).rev().map(move |i| (i, (i as f64 / n as f64).max(t_min)))
    }

    pub fn step_size(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

/// Observation and noise variances for posterior guidance.
#[derive(Debug, Clone, Copy)]
pub struct GuidanceContext<'a> {
    pub x: &'a ComplexSpectrogram,
    pub v_phi: &'a RealGrid,
}

impl<'a> GuidanceContext<'a> {
    pub fn new(x: &'a ComplexSpectrogram, v_phi: &'a RealGrid) -> Result<Self> {
        x.check_same_shape(v_phi.shape())?;
        if let Some(index) = v_phi.as_slice().iter().position(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("v_phi", alloc::format!("negative or NaN variance at index {index}")));
        }
        Ok(Self { x, v_phi })
    }
}

fn check_schedule<M: ScoreModel + ?Sized>(model: &M, sched: &SdeSchedule) -> Result<()> {
    if model.schedule() == sched {
        Ok(())
    } else {
        Err(Error::ScheduleMismatch)
    }
}

fn checked_score<M: ScoreModel + ?Sized>(model: &M, state: &ComplexSpectrogram, tau: f64) -> Result<ComplexSpectrogram> {
    let score = model.score(state, tau)?;
    state.check_same_shape(score.shape())?;
    match score.first_non_finite() {
        Some(index) => Err(Error::NonFiniteScore { tau, index }),
        None => Ok(score),
    }
}

/// Euler-Maruyama reverse step with given score and noise draw:
/// `s + gamma s dtau + g^2 score dtau + g sqrt(dtau) noise`.
pub fn predictor_update(
    state: &mut ComplexSpectrogram,
    score: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
    tau: f64,
    dtau: f64,
    sched: &SdeSchedule,
) -> Result<()> {
    state.check_same_shape(score.shape())?;
    state.check_same_shape(noise.shape())?;
    let g = sched.diffusion_coeff(tau)?;
    let keep = 1.0 + sched.gamma() * dtau;
    let drift = g * g * dtau;
    let diffusion = g * libm::sqrt(dtau);
    for ((s, sc), z) in state.as_mut_slice().iter_mut().zip(score.iter()).zip(noise.iter()) {
        *s = *s * keep + sc * drift + z * diffusion;
    }
    Ok(())
}

/// Langevin step with given score and noise: `s + eps score + sqrt(2 eps) noise`,
/// `eps = (sigma(tau) / 2)^2`.
pub fn corrector_update(
    state: &mut ComplexSpectrogram,
    score: &ComplexSpectrogram,
    noise: &ComplexSpectrogram,
    tau: f64,
    sched: &SdeSchedule,
) -> Result<()> {
    state.check_same_shape(score.shape())?;
    state.check_same_shape(noise.shape())?;
    let eps = corrector_step_size(tau, sched)?;
    let diffusion = libm::sqrt(2.0 * eps);
    for ((s, sc), z) in state.as_mut_slice().iter_mut().zip(score.iter()).zip(noise.iter()) {
        *s += sc * eps + z * diffusion;
    }
    Ok(())
}

pub fn corrector_step_size(tau: f64, sched: &SdeSchedule) -> Result<f64> {
    Ok(sched.kernel_moments(tau)?.var / 4.0)
}

pub fn predictor_step<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    state: &mut ComplexSpectrogram,
    tau: f64,
    dtau: f64,
    model: &M,
    sched: &SdeSchedule,
    rng: &mut R,
) -> Result<()> {
    let score = checked_score(model, state, tau)?;
    let noise = complex_normal_grid(state.f_bins(), state.t_frames(), rng);
    predictor_update(state, &score, &noise, tau, dtau, sched)
}

pub fn corrector_step<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    state: &mut ComplexSpectrogram,
    tau: f64,
    model: &M,
    sched: &SdeSchedule,
    rng: &mut R,
) -> Result<()> {
    let score = checked_score(model, state, tau)?;
    let noise = complex_normal_grid(state.f_bins(), state.t_frames(), rng);
    corrector_update(state, &score, &noise, tau, sched)
}

/// Gradient of `log N_C(x; s / delta, sigma^2 / delta^2 + v_phi)` with respect to `conj(s)`.
pub fn pseudo_likelihood_score(
    state: &ComplexSpectrogram,
    tau: f64,
    ctx: &GuidanceContext<'_>,
    sched: &SdeSchedule,
) -> Result<ComplexSpectrogram> {
    state.check_same_shape(ctx.x.shape())?;
    let m = sched.kernel_moments(tau)?;
    let delta = m.delta;
    let inflated = m.var / (delta * delta);
    let mut out = ComplexSpectrogram::zeros(state.f_bins(), state.t_frames());
    for (((o, &s), &x), &v) in out
        .as_mut_slice()
        .iter_mut()
        .zip(state.as_slice())
        .zip(ctx.x.as_slice())
        .zip(ctx.v_phi.as_slice())
    {
        let total = inflated + v;
        if total <= 0.0 {
            return Err(Error::DegenerateVariance { t: tau });
        }
        *o = (x - s / delta) / (delta * total);
    }
    Ok(out)
}

/// Runs the reverse loop from `state` at `tau = 1`, with optional guidance.
fn reverse_loop<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    mut state: ComplexSpectrogram,
    model: &M,
    sched: &SdeSchedule,
    cfg: &SamplerConfig,
    guidance: Option<&GuidanceContext<'_>>,
    rng: &mut R,
) -> Result<ComplexSpectrogram> {
    let dtau = cfg.step_size();
    let guidance_span = cfg.posterior_every as f64 * dtau;
    for (i, tau) in cfg.time_grid(sched) {
        for _ in 0..cfg.corrector_steps {
            corrector_step(&mut state, tau, model, sched, rng)?;
        }
        predictor_step(&mut state, tau, dtau, model, sched, rng)?;
        if let Some(ctx) = guidance {
            if cfg.guidance_weight > 0.0 && i % cfg.posterior_every == 0 {
                let g = sched.diffusion_coeff(tau)?;
                let grad = pseudo_likelihood_score(&state, tau, ctx, sched)?;
                state.add_scaled(&grad, cfg.guidance_weight * g * g * guidance_span)?;
            }
        }
    }
    Ok(state)
}

/// Posterior sampling: starts from `N_C(x, I)` and runs the guided
/// predictor-corrector loop. Returns the estimate of `s_0`.
pub fn posterior_sample<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    x: &ComplexSpectrogram,
    model: &M,
    sched: &SdeSchedule,
    cfg: &SamplerConfig,
    v_phi: &RealGrid,
    rng: &mut R,
) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    check_schedule(model, sched)?;
    let ctx = GuidanceContext::new(x, v_phi)?;
    let init = x.map(|c| c + complex_normal(rng));
    reverse_loop(init, model, sched, cfg, Some(&ctx), rng)
}

/// Prior sampling: starts from `N_C(0, sigma(1)^2 I)` and runs the
/// predictor-corrector loop without guidance.
pub fn unconditional_sample<M: ScoreModel + ?Sized, R: Rng + ?Sized>(
    shape: (usize, usize),
    model: &M,
    sched: &SdeSchedule,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ComplexSpectrogram> {
    cfg.validate()?;
    check_schedule(model, sched)?;
    if shape.0 == 0 || shape.1 == 0 {
        return Err(Error::Empty("sample shape"));
    }
    let sigma1 = sched.kernel_moments(1.0)?.std();
    let init = complex_normal_grid(shape.0, shape.1, rng).scaled(sigma1);
    reverse_loop(init, model, sched, cfg, None, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::score::AnalyticGaussianPrior;
    use num_complex::Complex64;

    struct ZeroScore(SdeSchedule);

    impl ScoreModel for ZeroScore {
        fn schedule(&self) -> &SdeSchedule {
            &self.0
        }
        fn score(&self, state: &ComplexSpectrogram, _t: f64) -> Result<ComplexSpectrogram> {
            Ok(ComplexSpectrogram::zeros(state.f_bins(), state.t_frames()))
        }
    }

    struct NanScore(SdeSchedule);

    impl ScoreModel for NanScore {
        fn schedule(&self) -> &SdeSchedule {
            &self.0
        }
        fn score(&self, state: &ComplexSpectrogram, _t: f64) -> Result<ComplexSpectrogram> {
            let mut s = ComplexSpectrogram::zeros(state.f_bins(), state.t_frames());
            s.as_mut_slice()[3] = Complex64::new(f64::NAN, 0.0);
            Ok(s)
        }
    }

    fn probe() -> ComplexSpectrogram {
        ComplexSpectrogram::from_fn(3, 4, |f, t| Complex64::new(f as f64 - 1.0, 0.5 * t as f64))
    }

    #[test]
    fn time_grid_is_i_over_n() {
        let cfg = SamplerConfig::default();
        let grid: alloc::vec::Vec<_> = cfg.time_grid(&SdeSchedule::default()).collect();
        assert_eq!(grid.len(), 30);
        assert_eq!(grid[0], (30, 1.0));
        assert_eq!(grid[29].0, 1);
        assert!((grid[29].1 - 1.0 / 30.0).abs() < 1e-15);
        assert!((cfg.step_size() - 1.0 / 30.0).abs() < 1e-15);
        let coarse = SamplerConfig { n_steps: 10, ..cfg };
        let sched = SdeSchedule::new(1.5, 0.05, 0.5, 0.15).unwrap();
        assert_eq!(coarse.time_grid(&sched).last().unwrap().1, 0.15);
    }

    #[test]
    fn zero_score_and_noise_without_drift_is_identity() {
        let sched = SdeSchedule::new(0.0, 0.05, 0.5, 0.03).unwrap();
        let zero = ComplexSpectrogram::zeros(3, 4);
        let mut s = probe();
        predictor_update(&mut s, &zero, &zero, 0.5, 1.0 / 30.0, &sched).unwrap();
        assert_eq!(s, probe());
        corrector_update(&mut s, &zero, &zero, 0.5, &SdeSchedule::default()).unwrap();
        assert_eq!(s, probe());
    }

    #[test]
    fn predictor_moves_toward_marginal_mean() {
        let sched = SdeSchedule::default();
        let mean = Complex64::new(1.0, -0.5);
        let prior = AnalyticGaussianPrior::isotropic(3, 4, mean, 0.5, sched).unwrap();
        let tau = 0.7;
        let target = prior.mean().scaled(sched.kernel_moments(tau).unwrap().delta);
        let s0 = probe();
        let mut s = s0.clone();
        let score = prior.gaussian_score(&s, tau).unwrap();
        predictor_update(&mut s, &score, &ComplexSpectrogram::zeros(3, 4), tau, 1.0 / 30.0, &sched).unwrap();
        let mut step = s.clone();
        step.add_scaled(&s0, -1.0).unwrap();
        let mut towards = target.clone();
        towards.add_scaled(&s0, -1.0).unwrap();
        assert!(step.real_dot(&towards) > 0.0);
    }

    #[test]
    fn corrector_step_size_at_one() {
        let eps = corrector_step_size(1.0, &SdeSchedule::default()).unwrap();
        assert!((eps - 0.15131 / 4.0).abs() < 1e-5);
        assert!((eps - 0.03783).abs() < 1e-5);
    }

    #[test]
    fn likelihood_score_vanishes_at_mode_and_for_huge_noise() {
        let sched = SdeSchedule::default();
        let x = probe();
        let tau = 0.4;
        let delta = sched.kernel_moments(tau).unwrap().delta;
        let v = RealGrid::filled(3, 4, 0.3);
        let ctx = GuidanceContext::new(&x, &v).unwrap();
        let at_mode = pseudo_likelihood_score(&x.scaled(delta), tau, &ctx, &sched).unwrap();
        assert!(at_mode.iter().all(|c| c.norm() < 1e-14));
        let huge = RealGrid::filled(3, 4, 1e30);
        let ctx = GuidanceContext::new(&x, &huge).unwrap();
        let s = pseudo_likelihood_score(&ComplexSpectrogram::zeros(3, 4), tau, &ctx, &sched).unwrap();
        assert!(s.iter().all(|c| c.norm() < 1e-25));
    }

    #[test]
    fn guidance_points_toward_data_consistency() {
        let sched = SdeSchedule::default();
        let x = probe();
        let v = RealGrid::from_fn(3, 4, |f, t| 0.1 + 0.05 * (f + t) as f64);
        let ctx = GuidanceContext::new(&x, &v).unwrap();
        let mut rng = seeded(4);
        for k in 1..=20 {
            let tau = k as f64 / 20.0;
            let delta = sched.kernel_moments(tau).unwrap().delta;
            let s = complex_normal_grid(3, 4, &mut rng);
            let grad = pseudo_likelihood_score(&s, tau, &ctx, &sched).unwrap();
            let mut resid = x.clone();
            resid.add_scaled(&s, -1.0 / delta).unwrap();
            assert!(grad.real_dot(&resid) >= 0.0);
        }
    }

    #[test]
    fn non_finite_scores_abort() {
        let sched = SdeSchedule::default();
        let mut s = probe();
        let err = predictor_step(&mut s, 0.5, 0.1, &NanScore(sched), &sched, &mut seeded(1)).unwrap_err();
        assert_eq!(err, Error::NonFiniteScore { tau: 0.5, index: 3 });
    }

    #[test]
    fn schedule_mismatch_is_rejected() {
        let model = ZeroScore(SdeSchedule::new(1.0, 0.05, 0.5, 0.03).unwrap());
        let err = unconditional_sample((2, 2), &model, &SdeSchedule::default(), &SamplerConfig::default(), &mut seeded(1));
        assert_eq!(err, Err(Error::ScheduleMismatch));
    }

    #[test]
    fn sampling_is_seed_deterministic_and_shape_preserving() {
        let sched = SdeSchedule::default();
        let prior = AnalyticGaussianPrior::isotropic(3, 4, Complex64::new(0.2, 0.1), 1.0, sched).unwrap();
        let cfg = SamplerConfig::default();
        let a = unconditional_sample((3, 4), &prior, &sched, &cfg, &mut seeded(8)).unwrap();
        let b = unconditional_sample((3, 4), &prior, &sched, &cfg, &mut seeded(8)).unwrap();
        assert_eq!(a, b);
        let v = RealGrid::filled(3, 4, 1.0);
        let p = posterior_sample(&probe(), &prior, &sched, &cfg, &v, &mut seeded(8)).unwrap();
        let q = posterior_sample(&probe(), &prior, &sched, &cfg, &v, &mut seeded(8)).unwrap();
        assert_eq!(p, q);
        assert_eq!(p.shape(), (3, 4));
        assert!(p.first_non_finite().is_none());
    }

    #[test]
    fn config_validation() {
        assert!(SamplerConfig { n_steps: 0, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { posterior_every: 0, ..SamplerConfig::default() }.validate().is_err());
        assert!(SamplerConfig { guidance_weight: -1.0, ..SamplerConfig::default() }.validate().is_err());
    }
}
