//! Quadrature against an independent Monte-Carlo oracle, plus the
//! structural properties of the entropy curve.

use qrng_core::entropy::{
    average_min_entropy, curve_peak, default_ratio_grid, hmin_curve, AdcModel, BinConvention,
    EntropyEstimate, GaussianNoiseModel, Integration,
};
use qrng_core::special::normal_cdf;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

/// Best-guess probability given `e`, from first principles: bins laid out
/// independently of the library, masses from CDF differences over the
/// containing bin, two neighbors each side and both open edge bins.
fn oracle_pmax(e: f64, sigma_q: f64, range: f64, bits: u32, convention: BinConvention) -> f64 {
    let count = 1i64 << bits;
    let span = match convention {
        BinConvention::FullSpan => 2.0 * range,
        BinConvention::HalfSpan => range,
    };
    let width = span / count as f64;
    let lo = -span / 2.0;
    let edge = |j: i64| lo + j as f64 * width;
    let cdf = |x: f64| normal_cdf((x - e) / sigma_q);
    let bottom = cdf(edge(1));
    let top = 1.0 - cdf(edge(count - 1));
    let k = (((e - lo) / width).floor() as i64).clamp(0, count - 1);
    let mut best = bottom.max(top);
    for j in (k - 2).max(1)..=(k + 2).min(count - 2) {
        best = best.max(cdf(edge(j + 1)) - cdf(edge(j)));
    }
    best
}

struct McResult {
    mean_pmax: f64,
    std_error: f64,
}

fn monte_carlo(
    model: &GaussianNoiseModel,
    range: f64,
    bits: u32,
    convention: BinConvention,
    samples: usize,
    seed: u64,
) -> McResult {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, model.sigma_e).unwrap();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let p = oracle_pmax(
            normal.sample(&mut rng),
            model.sigma_q,
            range,
            bits,
            convention,
        );
        sum += p;
        sum_sq += p * p;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    McResult {
        mean_pmax: mean,
        std_error: (var / n).sqrt(),
    }
}

/// |quadrature − oracle| in probability space, in units of the combined
/// standard error.
fn disagreement(est: &EntropyEstimate, mc: &McResult) -> f64 {
    let p_quad = 2f64.powf(-est.hmin);
    let quad_err = p_quad * std::f64::consts::LN_2 * est.quadrature_error;
    let combined = (mc.std_error.powi(2) + quad_err.powi(2)).sqrt();
    (p_quad - mc.mean_pmax).abs() / combined
}

#[test]
fn reference_point_matches_monte_carlo() {
    let model = GaussianNoiseModel::new(0.2685, 0.028).unwrap();
    for (convention, expected, seed) in [
        (BinConvention::HalfSpan, 5.117, 1),
        (BinConvention::FullSpan, 4.1, 2),
    ] {
        let adc = AdcModel::new(5.0, 8, convention).unwrap();
        let est = average_min_entropy(&model, &adc, &Integration::default()).unwrap();
        assert!(
            (est.hmin - expected).abs() < 0.05,
            "{convention:?}: {}",
            est.hmin
        );
        let mc = monte_carlo(&model, 5.0, 8, convention, 10_000_000, seed);
        let z = disagreement(&est, &mc);
        assert!(z < 3.0, "{convention:?}: {z:.2} standard errors");
    }
}

#[test]
fn random_draws_match_monte_carlo() {
    let mut rng = ChaCha20Rng::seed_from_u64(20);
    for draw in 0..20 {
        let sigma_q = rng.random_range(0.05..2.0);
        let sigma_e = sigma_q * rng.random_range(0.01..1.0);
        let range = sigma_q * rng.random_range(0.5..8.0);
        let bits = [2, 4, 6, 8, 10][rng.random_range(0..5)];
        let convention = if rng.random() {
            BinConvention::FullSpan
        } else {
            BinConvention::HalfSpan
        };
        let model = GaussianNoiseModel::new(sigma_q, sigma_e).unwrap();
        let adc = AdcModel::new(range, bits, convention).unwrap();
        let est = average_min_entropy(&model, &adc, &Integration::default()).unwrap();
        let mc = monte_carlo(&model, range, bits, convention, 10_000_000, 100 + draw);
        let z = disagreement(&est, &mc);
        assert!(
            z < 3.0,
            "draw {draw}: σ_Q={sigma_q} σ_E={sigma_e} R={range} n={bits} {convention:?}: {z:.2}"
        );
    }
}

#[test]
fn scale_invariance() {
    let mut rng = ChaCha20Rng::seed_from_u64(30);
    let base_model = GaussianNoiseModel::new(0.2685, 0.028).unwrap();
    let base = average_min_entropy(&base_model, &AdcModel::reference(), &Integration::default())
        .unwrap()
        .hmin;
    for _ in 0..10 {
        let s = 10f64.powf(rng.random_range(-3.0..3.0));
        let model = GaussianNoiseModel::new(0.2685 * s, 0.028 * s).unwrap();
        let adc = AdcModel::new(5.0 * s, 8, BinConvention::HalfSpan).unwrap();
        let h = average_min_entropy(&model, &adc, &Integration::default())
            .unwrap()
            .hmin;
        assert!((h / base - 1.0).abs() < 1e-9, "scale {s}: {h} vs {base}");
    }
}

#[test]
fn higher_qcnr_dominates_and_peaks_earlier() {
    let grid = default_ratio_grid();
    // Past the peak the likeliest bin tracks e and the curves coincide to
    // within quadrature precision.
    let estimates: Vec<Vec<EntropyEstimate>> = [10.0, 15.0, 20.0]
        .iter()
        .map(|&q: &f64| {
            let model = GaussianNoiseModel::new(1.0, 10f64.powf(-q / 20.0)).unwrap();
            grid.iter()
                .map(|&r| {
                    let adc = AdcModel::new(r, 8, BinConvention::FullSpan).unwrap();
                    average_min_entropy(&model, &adc, &Integration::default()).unwrap()
                })
                .collect()
        })
        .collect();
    for pair in estimates.windows(2) {
        for (lo, hi) in pair[0].iter().zip(&pair[1]) {
            let slack = lo.quadrature_error + hi.quadrature_error + 1e-12;
            assert!(hi.hmin >= lo.hmin - slack, "R = {}", lo.adc.range);
        }
    }
    let peaks: Vec<f64> = [10.0, 15.0, 20.0]
        .iter()
        .map(|&q| {
            curve_peak(&hmin_curve(q, &grid, 8, BinConvention::FullSpan).unwrap())
                .unwrap()
                .ratio
        })
        .collect();
    assert!(peaks[0] > peaks[1] && peaks[1] > peaks[2], "{peaks:?}");
}

#[test]
fn curve_unimodal_on_default_grid() {
    for convention in [BinConvention::FullSpan, BinConvention::HalfSpan] {
        let curve = hmin_curve(20.0, &default_ratio_grid(), 8, convention).unwrap();
        let peak = curve
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.hmin_bits.total_cmp(&b.1.hmin_bits))
            .unwrap()
            .0;
        for w in curve[..=peak].windows(2) {
            assert!(
                w[1].hmin_bits >= w[0].hmin_bits,
                "{convention:?} rising at {}",
                w[1].ratio
            );
        }
        for w in curve[peak..].windows(2) {
            assert!(
                w[1].hmin_bits <= w[0].hmin_bits,
                "{convention:?} falling at {}",
                w[1].ratio
            );
        }
    }
}

#[test]
fn coarse_bins_approach_single_threshold_limit() {
    // With bins much wider than σ_Q only the threshold at 0 matters:
    // pmax = Φ(|e|/σ_Q), and E[Φ(a|Z|)] = 1/2 + arctan(a)/π.
    let sigma_e: f64 = 0.1;
    let limit = -(0.5 + sigma_e.atan() / std::f64::consts::PI).log2();
    let curve = hmin_curve(20.0, &[50.0, 500.0, 5000.0], 8, BinConvention::FullSpan).unwrap();
    assert!(curve[0].hmin_bits > curve[1].hmin_bits);
    assert!(curve[1].hmin_bits > curve[2].hmin_bits);
    assert!(
        (curve[2].hmin_bits - limit).abs() < 1e-3,
        "{} vs {limit}",
        curve[2].hmin_bits
    );
}

#[test]
fn heavy_clipping_drives_entropy_toward_edge_bins() {
    // Tiny range: nearly all mass lands in the two edge bins.
    let curve = hmin_curve(20.0, &[0.001, 0.1, 1.0], 8, BinConvention::FullSpan).unwrap();
    assert!(curve[0].hmin_bits < 1.01);
    assert!(curve[0].hmin_bits < curve[1].hmin_bits);
    assert!(curve[1].hmin_bits < curve[2].hmin_bits);
}
