//! Variance-exploding SDE with an Ornstein-Uhlenbeck drift.
//!
//! Forward process `ds = -gamma s dt + g(t) dw` with
//! `g(t) = sigma_min (sigma_max / sigma_min)^t sqrt(2 ln(sigma_max / sigma_min))`.
//! Its perturbation kernel is `N_C(delta_t s_0, sigma(t)^2 I)` with
//! `delta_t = exp(-gamma t)` and
//!
//! ```text
//! sigma(t)^2 = sigma_min^2 ((sigma_max/sigma_min)^(2t) - delta_t^2) L / (gamma + L),   L = ln(sigma_max/sigma_min)
//! ```
//!
//! which solves `d sigma^2 / dt = -2 gamma sigma^2 + g(t)^2` from zero.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::complex_normal;
use crate::spectrogram::ComplexSpectrogram;

/// Leading coefficient of the diffusion term.
///
/// `SigmaMinLeading` is the form for which the closed-form variance is exact.
/// `SigmaMaxLeading` scales `g` by `sigma_max / sigma_min` and exists so the
/// variance-ODE check can demonstrate the mismatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffusionCoefficient {
    #[default]
    SigmaMinLeading,
    SigmaMaxLeading,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeSchedule {
    gamma: f64,
    sigma_min: f64,
    sigma_max: f64,
    t_min: f64,
    diffusion: DiffusionCoefficient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    /// Mean scale `delta_t`.
    pub delta: f64,
    /// Variance `sigma(t)^2`.
    pub var: f64,
}

impl KernelMoments {
    pub fn std(&self) -> f64 {
        libm::sqrt(self.var)
    }
}

impl Default for SdeSchedule {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            sigma_min: 0.05,
            sigma_max: 0.5,
            t_min: 0.03,
            diffusion: DiffusionCoefficient::SigmaMinLeading,
        }
    }
}

pub const T_MAX: f64 = 1.0;

impl SdeSchedule {
    /// `gamma = 0` is accepted and gives the pure variance-exploding SDE.
    pub fn new(gamma: f64, sigma_min: f64, sigma_max: f64, t_min: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma", alloc::format!("{gamma} must be finite and >= 0")));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::invalid(
                "sigma",
                alloc::format!("need 0 < sigma_min < sigma_max, got {sigma_min}, {sigma_max}"),
            ));
        }
        if !(t_min > 0.0 && t_min < T_MAX) {
            return Err(Error::invalid("t_min", alloc::format!("{t_min} not in (0, 1)")));
        }
        Ok(Self {
            gamma,
            sigma_min,
            sigma_max,
            t_min,
            diffusion: DiffusionCoefficient::SigmaMinLeading,
        })
    }

    pub fn with_diffusion(mut self, diffusion: DiffusionCoefficient) -> Self {
        self.diffusion = diffusion;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn diffusion(&self) -> DiffusionCoefficient {
        self.diffusion
    }

    fn log_ratio(&self) -> f64 {
        libm::log(self.sigma_max / self.sigma_min)
    }

    fn check_time(t: f64) -> Result<()> {
        if (0.0..=T_MAX).contains(&t) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, lo: 0.0, hi: T_MAX })
        }
    }

    /// `f(s) = -gamma s`.
    pub fn drift(&self, state: &ComplexSpectrogram) -> ComplexSpectrogram {
        state.scaled(-self.gamma)
    }

    /// `g(t)` on `[0, 1]`.
    pub fn diffusion_coeff(&self, t: f64) -> Result<f64> {
        Self::check_time(t)?;
        Ok(self.diffusion_unchecked(t))
    }

    fn diffusion_unchecked(&self, t: f64) -> f64 {
        let ratio = self.sigma_max / self.sigma_min;
        let lead = match self.diffusion {
            DiffusionCoefficient::SigmaMinLeading => self.sigma_min,
            DiffusionCoefficient::SigmaMaxLeading => self.sigma_max,
        };
        lead * libm::pow(ratio, t) * libm::sqrt(2.0 * self.log_ratio())
    }

    pub fn kernel_moments(&self, t: f64) -> Result<KernelMoments> {
        Self::check_time(t)?;
        Ok(self.moments_unchecked(t))
    }

    fn moments_unchecked(&self, t: f64) -> KernelMoments {
        let delta = libm::exp(-self.gamma * t);
        let ratio = self.sigma_max / self.sigma_min;
        let l = self.log_ratio();
        let var = self.sigma_min * self.sigma_min * (libm::pow(ratio, 2.0 * t) - delta * delta) * l / (self.gamma + l);
        KernelMoments {
            delta,
            var: var.max(0.0),
        }
    }

    /// Draws `s_t = delta_t s_0 + sigma(t) zeta` with `zeta ~ N_C(0, I)`.
    pub fn perturb<R: Rng + ?Sized>(&self, s0: &ComplexSpectrogram, t: f64, rng: &mut R) -> Result<ComplexSpectrogram> {
        let m = self.kernel_moments(t)?;
        let std = m.std();
        let mut out = s0.scaled(m.delta);
        if std > 0.0 {
            for c in out.as_mut_slice() {
                *c += complex_normal(rng) * std;
            }
        }
        Ok(out)
    }
}

/// Result of integrating the variance ODE and comparing with the closed form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceOdeCheck {
    pub max_rel_error: f64,
    pub worst_t: f64,
    pub steps: usize,
}

impl VarianceOdeCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Integrates `d v / dt = -2 gamma v + g(t)^2` with classical RK4 from `v(0) = 0`
/// and reports the worst relative deviation from `kernel_moments` on the grid.
pub fn check_variance_ode(sched: &SdeSchedule, steps: usize) -> VarianceOdeCheck {
    let steps = steps.max(1);
    let h = T_MAX / steps as f64;
    let rate = |t: f64, v: f64| {
        let g = sched.diffusion_unchecked(t);
        -2.0 * sched.gamma * v + g * g
    };
    let mut v = 0.0;
    let mut worst = (0.0, 0.0);
    for k in 0..steps {
        let t = k as f64 * h;
        let k1 = rate(t, v);
        let k2 = rate(t + 0.5 * h, v + 0.5 * h * k1);
        let k3 = rate(t + 0.5 * h, v + 0.5 * h * k2);
        let k4 = rate(t + h, v + h * k3);
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t_next = (k + 1) as f64 * h;
        let exact = sched.moments_unchecked(t_next).var;
        let rel = libm::fabs(v - exact) / libm::fabs(exact).max(f64::MIN_POSITIVE);
        if rel > worst.0 {
            worst = (rel, t_next);
        }
    }
    VarianceOdeCheck {
        max_rel_error: worst.0,
        worst_t: worst.1,
        steps,
    }
}
