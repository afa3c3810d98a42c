use proptest::prelude::*;
use udiffse_core::compression::AmplitudeCompression;
use udiffse_core::metrics::si_sdr;
use udiffse_core::nmf::{init_nmf, is_objective, update_step};
use udiffse_core::{Complex64, RealGrid};

fn grid() -> impl Strategy<Value = RealGrid> {
    (2usize..12, 2usize..12).prop_flat_map(|(f, t)| {
        prop::collection::vec(1e-3f64..10.0, f * t).prop_map(move |v| RealGrid::from_vec(f, t, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nmf_updates_never_increase_the_objective(p in grid(), rank in 1usize..3, seed in 0u64..1000) {
        let rank = rank.min(p.f_bins()).min(p.t_frames());
        let mut params = init_nmf(p.f_bins(), p.t_frames(), rank, p.mean(), seed).unwrap();
        let mut obj = is_objective(&p, &params).unwrap();
        for _ in 0..20 {
            params = update_step(&p, &params).unwrap();
            let next = is_objective(&p, &params).unwrap();
            prop_assert!(next <= obj + 1e-10 * obj.abs().max(1.0));
            obj = next;
        }
    }

    #[test]
    fn si_sdr_ignores_estimate_scale(
        r in prop::collection::vec(-1.0f64..1.0, 32),
        e in prop::collection::vec(-1.0f64..1.0, 32),
        a in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
    ) {
        prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        prop_assume!(e.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let base = si_sdr(&e, &r).unwrap();
        let scaled: Vec<f64> = e.iter().map(|v| a * v).collect();
        let got = si_sdr(&scaled, &r).unwrap();
        prop_assert!((got - base).abs() < 1e-8);
    }

    #[test]
    fn compression_round_trips(re in -50.0f64..50.0, im in -50.0f64..50.0) {
        let c = AmplitudeCompression::default();
        let z = Complex64::new(re, im);
        let back = c.decompress(c.compress(z));
        prop_assert!((back - z).norm() <= 1e-9 * (1.0 + z.norm()));
        let phase = c.compress(z) * z.conj();
        prop_assert!(phase.im.abs() <= 1e-9 * (1.0 + phase.norm()) && phase.re >= 0.0);
    }
}
