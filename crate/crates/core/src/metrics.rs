//! Scale-invariant signal-to-distortion ratio.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Value reported when the residual vanishes.
pub const SI_SDR_CAP_DB: f64 = 140.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SiSdrOptions {
    /// Subtract each signal's mean before projecting.
    pub zero_mean: bool,
}

/// `10 log10(|a r|^2 / |e - a r|^2)` with `a = <e, r> / <r, r>`, clamped to `+-140 dB`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    si_sdr_with(estimate, reference, SiSdrOptions::default())
}

pub fn si_sdr_with(estimate: &[f64], reference: &[f64], opts: SiSdrOptions) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(Error::invalid(
            "si_sdr",
            alloc::format!("estimate has {} samples, reference {}", estimate.len(), reference.len()),
        ));
    }
    if reference.is_empty() {
        return Err(Error::Empty("reference signal"));
    }
    if let Some(index) = estimate.iter().chain(reference).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "si_sdr input", index });
    }
    let (me, mr) = if opts.zero_mean {
        let n = reference.len() as f64;
        (estimate.iter().sum::<f64>() / n, reference.iter().sum::<f64>() / n)
    } else {
        (0.0, 0.0)
    };
    let mut dot = 0.0;
    let mut ref_energy = 0.0;
    for (&e, &r) in estimate.iter().zip(reference) {
        dot += (e - me) * (r - mr);
        ref_energy += (r - mr) * (r - mr);
    }
    if ref_energy == 0.0 {
        return Err(Error::ZeroPower("reference signal"));
    }
    let alpha = dot / ref_energy;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (&e, &r) in estimate.iter().zip(reference) {
        let proj = alpha * (r - mr);
        let res = (e - me) - proj;
        target += proj * proj;
        residual += res * res;
    }
    if residual == 0.0 {
        return Ok(SI_SDR_CAP_DB);
    }
    if target == 0.0 {
        return Ok(-SI_SDR_CAP_DB);
    }
    Ok((10.0 * libm::log10(target / residual)).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    pub si_sdr: f64,
    pub input_si_sdr: f64,
    /// `si_sdr - input_si_sdr`.
    pub delta: f64,
}

pub fn evaluate_pair(noisy: &[f64], enhanced: &[f64], clean: &[f64]) -> Result<MetricReport> {
    evaluate_pair_with(noisy, enhanced, clean, SiSdrOptions::default())
}

pub fn evaluate_pair_with(noisy: &[f64], enhanced: &[f64], clean: &[f64], opts: SiSdrOptions) -> Result<MetricReport> {
    let input_si_sdr = si_sdr_with(noisy, clean, opts)?;
    let si_sdr = si_sdr_with(enhanced, clean, opts)?;
    Ok(MetricReport {
        si_sdr,
        input_si_sdr,
        delta: si_sdr - input_si_sdr,
    })
}

/// Sample mean with a normal-approximation 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub half_width: f64,
    pub count: usize,
}

impl MeanCi {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("metric values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let half_width = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            1.96 * libm::sqrt(var / n)
        } else {
            0.0
        };
        Ok(Self {
            mean,
            half_width,
            count: values.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateReport {
    pub si_sdr: MeanCi,
    pub input_si_sdr: MeanCi,
    pub delta: MeanCi,
}

pub fn aggregate(reports: &[MetricReport]) -> Result<AggregateReport> {
    let pick = |f: fn(&MetricReport) -> f64| -> Result<MeanCi> {
        let v: Vec<f64> = reports.iter().map(f).collect();
        MeanCi::from_values(&v)
    };
    Ok(AggregateReport {
        si_sdr: pick(|r| r.si_sdr)?,
        input_si_sdr: pick(|r| r.input_si_sdr)?,
        delta: pick(|r| r.delta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn reference() -> Vec<f64> {
        (0..64).map(|n| libm::sin(0.3 * n as f64) + 0.2).collect()
    }

    #[test]
    fn exact_match_and_scaled_copy_hit_the_cap() {
        let r = reference();
        assert_eq!(si_sdr(&r, &r).unwrap(), SI_SDR_CAP_DB);
        let doubled: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&doubled, &r).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn orthogonal_noise_gives_power_ratio() {
        let r = reference();
        let mut n: Vec<f64> = (0..64).map(|k| libm::cos(1.1 * k as f64) - 0.1).collect();
        let rr: f64 = r.iter().map(|v| v * v).sum();
        let proj: f64 = n.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
        for (a, b) in n.iter_mut().zip(&r) {
            *a -= proj * b;
        }
        let nn: f64 = n.iter().map(|v| v * v).sum();
        let k = libm::sqrt(rr / (10.0 * nn));
        let e: Vec<f64> = r.iter().zip(&n).map(|(a, b)| a + k * b).collect();
        assert!((si_sdr(&e, &r).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn scale_invariance() {
        let r = reference();
        let e: Vec<f64> = r.iter().enumerate().map(|(k, v)| v + 0.3 * libm::sin(2.0 * k as f64)).collect();
        let base = si_sdr(&e, &r).unwrap();
        for a in [-3.0, 0.01, 7.5] {
            let scaled: Vec<f64> = e.iter().map(|v| a * v).collect();
            assert!((si_sdr(&scaled, &r).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_mean_option_removes_offsets() {
        let r = reference();
        let e: Vec<f64> = r.iter().map(|v| v + 5.0).collect();
        assert!(si_sdr(&e, &r).unwrap() < 20.0);
        assert_eq!(si_sdr_with(&e, &r, SiSdrOptions { zero_mean: true }).unwrap(), SI_SDR_CAP_DB);
    }

    #[test]
    fn errors() {
        assert!(si_sdr(&[1.0], &[1.0, 2.0]).is_err());
        assert_eq!(si_sdr(&[1.0, 1.0], &[0.0, 0.0]), Err(Error::ZeroPower("reference signal")));
        assert!(si_sdr(&[], &[]).is_err());
    }

    #[test]
    fn pair_evaluation_trivial_cases() {
        let r = reference();
        let noisy: Vec<f64> = r.iter().enumerate().map(|(k, v)| v + 0.5 * libm::cos(0.9 * k as f64)).collect();
        let same = evaluate_pair(&noisy, &noisy, &r).unwrap();
        assert_eq!(same.delta, 0.0);
        let perfect = evaluate_pair(&noisy, &r, &r).unwrap();
        assert_eq!(perfect.delta, SI_SDR_CAP_DB - perfect.input_si_sdr);
    }

    #[test]
    fn aggregate_statistics() {
        let v = MeanCi::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(v.mean, 2.5);
        let sd = libm::sqrt(5.0 / 3.0);
        assert!((v.half_width - 1.96 * sd / 2.0).abs() < 1e-12);
        assert_eq!(MeanCi::from_values(&[3.0]).unwrap().half_width, 0.0);
        assert!(aggregate(&[]).is_err());
        let reps = vec![
            MetricReport {
                si_sdr: 5.0,
                input_si_sdr: 1.0,
                delta: 4.0
            };
            3
        ];
        assert_eq!(aggregate(&reps).unwrap().delta.mean, 4.0);
    }
}
