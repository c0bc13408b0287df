use proptest::prelude::*;
use qrng_core::noise_model::{
    bandwidth_3db, cmrr_from_imbalance, density_to_dbm_per_hz, log_grid, noise_spectrum, qcnr,
    shot_noise_density, sweep_feedback, tia_gain, tia_gain_expanded, DetectorConfig, OutputStages,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_config(rng: &mut impl Rng) -> DetectorConfig {
    let mut cfg = DetectorConfig::gesi_reference();
    cfg.photodiode.shunt_resistance = 10f64.powf(rng.random_range(4.0..12.0));
    cfg.photodiode.junction_capacitance = 10f64.powf(rng.random_range(-15.0..-11.0));
    cfg.photodiode.dark_current = 10f64.powf(rng.random_range(-13.0..-6.0));
    cfg.frontend.feedback_resistance = 10f64.powf(rng.random_range(3.0..7.0));
    cfg.frontend.feedback_capacitance = rng.random_range(0.0..1e-12);
    cfg.frontend.feedback_parasitic = rng.random_range(0.0..1e-12);
    cfg.frontend.input_parasitic = rng.random_range(0.0..2e-11);
    cfg.frontend.gain_bandwidth = 10f64.powf(rng.random_range(6.0..10.0));
    cfg.temperature = rng.random_range(4.0..400.0);
    cfg.photocurrent = 10f64.powf(rng.random_range(-8.0..-2.0));
    cfg
}

#[test]
fn expanded_and_compact_gain_agree() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let cfg = random_config(&mut rng);
        let f = 10f64.powf(rng.random_range(0.0..10.0));
        let a = tia_gain(&cfg, f).unwrap();
        let b = tia_gain_expanded(&cfg, f).unwrap();
        assert!((a - b).norm() <= 1e-12 * a.norm(), "f = {f}: {a} vs {b}");
    }
}

#[test]
fn gain_magnitude_non_increasing() {
    let cfg = DetectorConfig::gesi_reference();
    assert_eq!(tia_gain(&cfg, 0.0).unwrap().norm(), 510e3);
    // Below ~1 Hz |G| equals R_F to within rounding; allow a few ulps.
    let mut prev = f64::INFINITY;
    for f in std::iter::once(0.0).chain(log_grid(1e-3, 1e10, 200).unwrap()) {
        let g = tia_gain(&cfg, f).unwrap().norm();
        assert!(g <= prev * (1.0 + 4.0 * f64::EPSILON), "rises at {f}");
        prev = g;
    }
}

#[test]
fn bandwidth_ordering_in_feedback_capacitance() {
    let bw = |c: f64| {
        let mut cfg = DetectorConfig::gesi_reference();
        cfg.frontend.feedback_parasitic = c;
        bandwidth_3db(&cfg).unwrap()
    };
    let (b1, b3, b5) = (bw(0.1e-12), bw(0.3e-12), bw(0.5e-12));
    assert!(b1 > b3 && b3 > b5, "{b1} {b3} {b5}");
    assert!((1.05e6..=1.35e6).contains(&b3));
}

#[test]
fn qcnr_flat_across_mid_decade() {
    let cfg = DetectorConfig::gesi_reference();
    let q: Vec<f64> = log_grid(1e4, 1e5, 50)
        .unwrap()
        .iter()
        .map(|&f| qcnr(&cfg, f).unwrap())
        .collect();
    let spread =
        q.iter().cloned().fold(f64::MIN, f64::max) - q.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.5, "{spread}");
}

#[test]
fn sweep_ranks_by_qcnr_with_bandwidth_floor() {
    let cfg = DetectorConfig::gesi_reference();
    let rfs = [100e3, 510e3, 2e6];
    let out = sweep_feedback(&cfg, &rfs, &[0.3e-12], 1e6).unwrap();
    for c in &out {
        assert!(c.bandwidth_hz >= 1e6);
    }
    for w in out.windows(2) {
        assert!(w[0].qcnr_db >= w[1].qcnr_db);
    }
    let pos = |r: f64| out.iter().position(|c| c.feedback_resistance == r);
    let (p510, p100) = (pos(510e3).unwrap(), pos(100e3).unwrap());
    assert!(p510 < p100);
    // 2 MΩ is present exactly when its computed bandwidth clears the floor.
    let mut big = cfg.clone();
    big.frontend.feedback_resistance = 2e6;
    big.frontend.feedback_capacitance = 0.0;
    big.frontend.feedback_parasitic = 0.3e-12;
    let bw_2m = bandwidth_3db(&big).unwrap();
    assert_eq!(pos(2e6).is_some(), bw_2m >= 1e6);
    assert!(sweep_feedback(&cfg, &rfs, &[0.3e-12], 1e9)
        .unwrap()
        .is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quadrature_identity_on_every_point(seed in any::<u64>()) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cfg = random_config(&mut rng);
        let grid = log_grid(1.0, 1e8, 10).unwrap();
        let s = noise_spectrum(&cfg, &grid, Some(OutputStages::default())).unwrap();
        for k in 0..s.len() {
            let sum_sq = s.i_pdt[k].powi(2) + s.i_pdd[k].powi(2) + s.i_nc[k].powi(2)
                + s.i_rft[k].powi(2) + s.i_nv[k].powi(2);
            prop_assert_eq!(s.total_classical[k], sum_sq.sqrt());
            for v in [s.i_pdt[k], s.i_pdd[k], s.i_rft[k], s.i_nc[k], s.i_nv[k], s.shot[k]] {
                prop_assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn shot_noise_scales_as_root_current(i in 1e-12f64..1e-2, alpha in 1e-3f64..1e3) {
        let ratio = shot_noise_density(alpha * i).unwrap() / shot_noise_density(i).unwrap();
        prop_assert!((ratio / alpha.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dbm_monotone_and_20_db_per_decade(u in 1e-12f64..1.0, k in 1.0001f64..100.0) {
        let a = density_to_dbm_per_hz(u, 50.0).unwrap();
        prop_assert!(density_to_dbm_per_hz(u * k, 50.0).unwrap() > a);
        let ten = density_to_dbm_per_hz(u * 10.0, 50.0).unwrap();
        prop_assert!((ten - a - 20.0).abs() < 1e-9);
    }

    #[test]
    fn cmrr_invariant_under_common_scaling(
        a in 0.01f64..1.0, b in 0.01f64..1.0, mis in -0.5f64..0.5, s in 1e-3f64..1e3,
    ) {
        let base = cmrr_from_imbalance(a, b, mis).unwrap();
        let scaled = cmrr_from_imbalance(a * s, b * s, mis).unwrap();
        prop_assert!((base - scaled).abs() < 1e-6 || base == scaled);
    }
}
