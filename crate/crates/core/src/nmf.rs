//! Low-rank noise variance `V = W H` fitted under the Itakura-Saito divergence.
//!
//! The M-step minimises `sum_ft P_ft / V_ft + ln V_ft` over nonnegative
//! `W` (F x r) and `H` (r x T), where `P_ft = |x_ft - s_ft|^2`, with the
//! classical multiplicative updates
//!
//! ```text
//! W <- W * ((V^-2 * P) H^T) / (V^-1 H^T)
//! H <- H * (W^T (V^-2 * P)) / (W^T V^-1)
//! ```
//!
//! applied in sequence with `V` recomputed in between.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::spectrogram::{ComplexSpectrogram, RealGrid};

/// Floor applied to every entry of `W`, `H` and `V`.
pub const NMF_FLOOR: f64 = 1e-10;

pub const DEFAULT_INNER_UPDATES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct NmfParams {
    f_bins: usize,
    t_frames: usize,
    rank: usize,
    /// Row-major F x r.
    w: Vec<f64>,
    /// Row-major r x T.
    h: Vec<f64>,
}

impl NmfParams {
    pub fn new(f_bins: usize, t_frames: usize, rank: usize, w: Vec<f64>, h: Vec<f64>) -> Result<Self> {
        if f_bins == 0 || t_frames == 0 || rank == 0 {
            return Err(Error::Empty("nmf factors"));
        }
        if w.len() != f_bins * rank || h.len() != rank * t_frames {
            return Err(Error::invalid(
                "nmf factors",
                alloc::format!(
                    "W has {} entries (want {}), H has {} (want {})",
                    w.len(),
                    f_bins * rank,
                    h.len(),
                    rank * t_frames
                ),
            ));
        }
        if let Some(index) = w.iter().chain(&h).position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "nmf factors", index });
        }
        if w.iter().chain(&h).any(|&v| v < 0.0) {
            return Err(Error::invalid("nmf factors", "entries must be nonnegative"));
        }
        let mut p = Self {
            f_bins,
            t_frames,
            rank,
            w,
            h,
        };
        p.apply_floor();
        Ok(p)
    }

    /// Rank-one factors giving `V = value` everywhere.
    pub fn constant(f_bins: usize, t_frames: usize, value: f64) -> Result<Self> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::invalid("noise variance", alloc::format!("{value} must be positive")));
        }
        Self::new(f_bins, t_frames, 1, vec![value; f_bins], vec![1.0; t_frames])
    }

    pub fn f_bins(&self) -> usize {
        self.f_bins
    }

    pub fn t_frames(&self) -> usize {
        self.t_frames
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn w_grid(&self) -> RealGrid {
        RealGrid::from_fn(self.f_bins, self.rank, |f, k| self.w[f * self.rank + k])
    }

    pub fn h_grid(&self) -> RealGrid {
        RealGrid::from_fn(self.rank, self.t_frames, |k, t| self.h[k * self.t_frames + t])
    }

    fn apply_floor(&mut self) {
        for v in self.w.iter_mut().chain(self.h.iter_mut()) {
            *v = v.max(NMF_FLOOR);
        }
    }

    fn product_into(&self, out: &mut [f64]) {
        let (r, tf) = (self.rank, self.t_frames);
        for f in 0..self.f_bins {
            let row = &mut out[f * tf..(f + 1) * tf];
            row.fill(0.0);
            for k in 0..r {
                let w = self.w[f * r + k];
                for (o, &h) in row.iter_mut().zip(&self.h[k * tf..(k + 1) * tf]) {
                    *o += w * h;
                }
            }
            for o in row.iter_mut() {
                *o = o.max(NMF_FLOOR);
            }
        }
    }

    /// `V = max(W H, floor)`.
    pub fn variance(&self) -> RealGrid {
        let mut v = vec![0.0; self.f_bins * self.t_frames];
        self.product_into(&mut v);
        RealGrid::from_fn(self.f_bins, self.t_frames, |f, t| v[f * self.t_frames + t])
    }

    fn check_shape(&self, shape: (usize, usize)) -> Result<()> {
        if shape == (self.f_bins, self.t_frames) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: (self.f_bins, self.t_frames),
                got: shape,
            })
        }
    }
}

/// Seeded uniform factors on `[0.5, 1.5)`, rescaled so that `mean(W H) = power_scale`.
pub fn init_nmf(f_bins: usize, t_frames: usize, rank: usize, power_scale: f64, seed: u64) -> Result<NmfParams> {
    if rank == 0 {
        return Err(Error::invalid("nmf rank", "must be >= 1"));
    }
    if rank > f_bins.min(t_frames) {
        return Err(Error::invalid(
            "nmf rank",
            alloc::format!("rank {rank} exceeds min(F, T) = {}", f_bins.min(t_frames)),
        ));
    }
    if !(power_scale > 0.0 && power_scale.is_finite()) {
        return Err(Error::invalid("power_scale", alloc::format!("{power_scale} must be positive")));
    }
    let mut r = rng::seeded(seed);
    let w: Vec<f64> = (0..f_bins * rank).map(|_| r.random_range(0.5..1.5)).collect();
    let h: Vec<f64> = (0..rank * t_frames).map(|_| r.random_range(0.5..1.5)).collect();
    let mut p = NmfParams::new(f_bins, t_frames, rank, w, h)?;
    let k = libm::sqrt(power_scale / p.variance().mean());
    for v in p.w.iter_mut().chain(p.h.iter_mut()) {
        *v *= k;
    }
    p.apply_floor();
    Ok(p)
}

/// `P_ft = |x_ft - s_ft|^2`.
pub fn residual_power(x: &ComplexSpectrogram, s_hat: &ComplexSpectrogram) -> Result<RealGrid> {
    x.check_same_shape(s_hat.shape())?;
    let mut p = RealGrid::filled(x.f_bins(), x.t_frames(), 0.0);
    for (o, (a, b)) in p.as_mut_slice().iter_mut().zip(x.iter().zip(s_hat.iter())) {
        *o = (a - b).norm_sqr();
    }
    Ok(p)
}

fn check_power(p: &RealGrid) -> Result<()> {
    match p.as_slice().iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(index) => Err(Error::NonFinite {
            what: "residual power",
            index,
        }),
        None => Ok(()),
    }
}

/// `sum_ft P_ft / V_ft + ln V_ft` with `V = W H`.
pub fn is_objective(p: &RealGrid, params: &NmfParams) -> Result<f64> {
    params.check_shape(p.shape())?;
    let v = params.variance();
    Ok(p
        .as_slice()
        .iter()
        .zip(v.as_slice())
        .map(|(&p, &v)| p / v + libm::log(v))
        .sum())
}

/// Reusable buffers for the multiplicative updates.
struct Workspace {
    v: Vec<f64>,
    /// `P / V^2`
    a: Vec<f64>,
    /// `1 / V`
    b: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0.0; n],
            a: vec![0.0; n],
            b: vec![0.0; n],
        }
    }

    fn refresh(&mut self, params: &NmfParams, p: &[f64]) {
        params.product_into(&mut self.v);
        for ((a, b), (&v, &p)) in self.a.iter_mut().zip(self.b.iter_mut()).zip(self.v.iter().zip(p)) {
            let inv = 1.0 / v;
            *b = inv;
            *a = p * inv * inv;
        }
    }
}

fn update_in_place(p: &[f64], params: &mut NmfParams, ws: &mut Workspace) -> Result<()> {
    let (fb, tf, r) = (params.f_bins, params.t_frames, params.rank);
    ws.refresh(params, p);
    for f in 0..fb {
        let a_row = &ws.a[f * tf..(f + 1) * tf];
        let b_row = &ws.b[f * tf..(f + 1) * tf];
        for k in 0..r {
            let h_row = &params.h[k * tf..(k + 1) * tf];
            let (mut num, mut den) = (0.0, 0.0);
            for t in 0..tf {
                num += a_row[t] * h_row[t];
                den += b_row[t] * h_row[t];
            }
            let w = &mut params.w[f * r + k];
            *w = (*w * num / den).max(NMF_FLOOR);
        }
    }
    ws.refresh(params, p);
    for k in 0..r {
        for t in 0..tf {
            let (mut num, mut den) = (0.0, 0.0);
            for f in 0..fb {
                let w = params.w[f * r + k];
                num += w * ws.a[f * tf + t];
                den += w * ws.b[f * tf + t];
            }
            let h = &mut params.h[k * tf + t];
            *h = (*h * num / den).max(NMF_FLOOR);
        }
    }
    if params.w.iter().chain(&params.h).any(|v| !v.is_finite()) {
        return Err(Error::NmfNonFinite);
    }
    Ok(())
}

/// One W update followed by one H update.
pub fn update_step(p: &RealGrid, params: &NmfParams) -> Result<NmfParams> {
    params.check_shape(p.shape())?;
    check_power(p)?;
    let mut next = params.clone();
    let mut ws = Workspace::new(p.as_slice().len());
    update_in_place(p.as_slice(), &mut next, &mut ws)?;
    Ok(next)
}

/// Runs `n_updates` update steps on a fixed residual power.
pub fn fit(p: &RealGrid, params: &NmfParams, n_updates: usize) -> Result<NmfParams> {
    params.check_shape(p.shape())?;
    check_power(p)?;
    let mut next = params.clone();
    let mut ws = Workspace::new(p.as_slice().len());
    for _ in 0..n_updates {
        update_in_place(p.as_slice(), &mut next, &mut ws)?;
    }
    Ok(next)
}

/// Residual power from `(x, s_hat)` followed by `n_updates` update steps.
pub fn m_step(x: &ComplexSpectrogram, s_hat: &ComplexSpectrogram, params: &NmfParams, n_updates: usize) -> Result<NmfParams> {
    let p = residual_power(x, s_hat)?;
    fit(&p, params, n_updates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn random_factors(f: usize, t: usize, r: usize, seed: u64) -> NmfParams {
        let mut g = rng::seeded(seed);
        let w = (0..f * r).map(|_| g.random_range(0.1..2.0)).collect();
        let h = (0..r * t).map(|_| g.random_range(0.1..2.0)).collect();
        NmfParams::new(f, t, r, w, h).unwrap()
    }

    #[test]
    fn objective_matches_double_loop() {
        let params = random_factors(5, 7, 2, 1);
        let mut g = rng::seeded(2);
        let p = RealGrid::from_fn(5, 7, |_, _| g.random_range(0.0..3.0));
        let mut expected = 0.0;
        for f in 0..5 {
            for t in 0..7 {
                let v: f64 = (0..2).map(|k| params.w()[f * 2 + k] * params.h()[k * 7 + t]).sum();
                expected += p.get(f, t) / v + libm::log(v);
            }
        }
        assert!((is_objective(&p, &params).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn objective_trivial_cases() {
        let params = random_factors(4, 3, 2, 3);
        let v = params.variance();
        let lb: f64 = v.as_slice().iter().map(|v| 1.0 + libm::log(*v)).sum();
        assert!((is_objective(&v, &params).unwrap() - lb).abs() < 1e-12);
        let logs: f64 = v.as_slice().iter().map(|v| libm::log(*v)).sum();
        let zero = RealGrid::filled(4, 3, 0.0);
        assert!((is_objective(&zero, &params).unwrap() - logs).abs() < 1e-12);
    }

    #[test]
    fn exact_factorisation_is_a_fixed_point() {
        let params = random_factors(6, 8, 3, 4);
        let p = params.variance();
        let next = update_step(&p, &params).unwrap();
        for (a, b) in next.w().iter().chain(next.h()).zip(params.w().iter().chain(params.h())) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn rank_one_recovery() {
        let target = random_factors(8, 10, 1, 5);
        let p = target.variance();
        let start = NmfParams::constant(8, 10, 1.0).unwrap();
        let fitted = fit(&p, &start, 2000).unwrap();
        let v = fitted.variance();
        let num: f64 = v.as_slice().iter().zip(p.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = p.as_slice().iter().map(|b| b * b).sum();
        assert!(libm::sqrt(num / den) < 1e-8);
    }

    #[test]
    fn init_scaling_and_determinism() {
        let a = init_nmf(20, 30, 4, 0.3, 9).unwrap();
        assert_eq!(a, init_nmf(20, 30, 4, 0.3, 9).unwrap());
        let ratio = a.variance().mean() / 0.3;
        assert!((0.5..=2.0).contains(&ratio));
        assert!((ratio - 1.0).abs() < 1e-12);
        assert!(init_nmf(3, 30, 4, 1.0, 0).is_err());
        assert!(init_nmf(30, 30, 0, 1.0, 0).is_err());
        assert!(init_nmf(30, 30, 2, 0.0, 0).is_err());
    }

    #[test]
    fn m_step_with_perfect_estimate_drives_variance_down() {
        let x = ComplexSpectrogram::from_fn(4, 5, |f, t| Complex64::new(f as f64, t as f64));
        let start = init_nmf(4, 5, 2, 1.0, 1).unwrap();
        let after = m_step(&x, &x, &start, 50).unwrap();
        assert!(after.variance().mean() < 1e-3 * start.variance().mean());
        assert!(after.w().iter().chain(after.h()).all(|&v| v >= NMF_FLOOR));
    }

    #[test]
    fn shape_and_value_checks() {
        let params = random_factors(3, 3, 1, 1);
        assert!(is_objective(&RealGrid::filled(3, 4, 1.0), &params).is_err());
        let mut bad = RealGrid::filled(3, 3, 1.0);
        bad.as_mut_slice()[2] = f64::NAN;
        assert!(update_step(&bad, &params).is_err());
        assert!(NmfParams::new(2, 2, 1, vec![1.0, -1.0], vec![1.0, 1.0]).is_err());
        assert!(NmfParams::constant(2, 2, 0.0).is_err());
    }
}
