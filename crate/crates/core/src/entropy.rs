//! Average conditional min-entropy of a digitized Gaussian homodyne signal.
//!
//! The measured voltage is `m = q + e` with independent zero-mean Gaussian
//! quantum noise `q ~ N(0, σ_Q)` and classical noise `e ~ N(0, σ_E)`. The
//! adversary is allowed to know `e` exactly (infinite range, vanishing bin
//! width on their side) but has no control over it. For each `e` their best
//! guess of the ADC output succeeds with probability
//! `max_i P(m ∈ bin_i | e)`; the min-entropy is `−log₂` of that probability
//! averaged over `e`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};
use crate::special::normal_interval_mass;

/// Gaussian decomposition of the sampled voltage into quantum and classical parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianNoiseModel {
    /// Standard deviation of the quantum (shot) noise, V.
    pub sigma_q: f64,
    /// Standard deviation of the classical (electronic) noise, V.
    pub sigma_e: f64,
}

impl GaussianNoiseModel {
    pub fn new(sigma_q: f64, sigma_e: f64) -> Result<Self> {
        let m = Self { sigma_q, sigma_e };
        m.validate()?;
        Ok(m)
    }

    /// Standard deviation of the total measured noise, `√(σ_Q² + σ_E²)`.
    pub fn sigma_m(&self) -> f64 {
        self.sigma_q.hypot(self.sigma_e)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("sigma_q", self.sigma_q)?;
        ensure_non_negative("sigma_e", self.sigma_e)
    }
}

/// How the `2ⁿ` bins are laid over the converter range `±R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BinConvention {
    /// `δ = 2R/2ⁿ`: the bins tile the whole `[−R, R]` span.
    FullSpan,
    /// `δ = R/2ⁿ`: the bins tile `[−R/2, R/2]`.
    HalfSpan,
}

impl BinConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            BinConvention::FullSpan => "FULL_SPAN",
            BinConvention::HalfSpan => "HALF_SPAN",
        }
    }
}

impl std::str::FromStr for BinConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "FULL_SPAN" | "FULL" => Ok(BinConvention::FullSpan),
            "HALF_SPAN" | "HALF" => Ok(BinConvention::HalfSpan),
            _ => Err(Error::param(
                "bin_convention",
                format!("expected FULL_SPAN or HALF_SPAN, got {s:?}"),
            )),
        }
    }
}

pub const MAX_ADC_BITS: u32 = 24;

/// Converter model for entropy estimation. The outermost bins extend to ±∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcModel {
    /// Full-scale range `R` (input span `±R`), V.
    pub range: f64,
    pub bits: u32,
    pub bin_convention: BinConvention,
}

impl AdcModel {
    pub fn new(range: f64, bits: u32, bin_convention: BinConvention) -> Result<Self> {
        let adc = Self {
            range,
            bits,
            bin_convention,
        };
        adc.validate()?;
        Ok(adc)
    }

    /// ±5 V, 8-bit converter with the half-span bin layout.
    pub fn reference() -> Self {
        Self {
            range: 5.0,
            bits: 8,
            bin_convention: BinConvention::HalfSpan,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("range", self.range)?;
        if !(1..=MAX_ADC_BITS).contains(&self.bits) {
            return Err(Error::param(
                "bits",
                format!("must lie in 1..={MAX_ADC_BITS}, got {}", self.bits),
            ));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        1usize << self.bits
    }

    /// Bin width `δ`, V.
    pub fn bin_width(&self) -> f64 {
        let span = match self.bin_convention {
            BinConvention::FullSpan => 2.0 * self.range,
            BinConvention::HalfSpan => self.range,
        };
        span / self.bin_count() as f64
    }

    /// Lower edge of bin 0 before it is extended to −∞.
    fn first_edge(&self) -> f64 {
        -0.5 * self.bin_width() * self.bin_count() as f64
    }

    /// Bounds of bin `j`, with the edge bins open to ±∞.
    pub fn bin_bounds(&self, j: usize) -> (f64, f64) {
        let n = self.bin_count();
        let delta = self.bin_width();
        let lo = self.first_edge() + j as f64 * delta;
        let a = if j == 0 { f64::NEG_INFINITY } else { lo };
        let b = if j + 1 == n {
            f64::INFINITY
        } else {
            lo + delta
        };
        (a, b)
    }

    /// Index of the bin containing `v`.
    pub fn bin_index(&self, v: f64) -> usize {
        let k = ((v - self.first_edge()) / self.bin_width()).floor();
        if k.is_nan() || k < 0.0 {
            0
        } else {
            (k as usize).min(self.bin_count() - 1)
        }
    }
}

/// Composite Simpson settings for the average over the classical noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Integration {
    /// Integration limits are `±half_width_sigmas·σ_E`.
    pub half_width_sigmas: f64,
    /// Node budget, odd and at least 3. Nodes are shared among the pieces
    /// between bin edges, so the count actually used can differ slightly.
    pub node_count: usize,
}

impl Default for Integration {
    fn default() -> Self {
        Self {
            half_width_sigmas: 10.0,
            node_count: 4001,
        }
    }
}

impl Integration {
    pub fn validate(&self) -> Result<()> {
        ensure_positive("half_width_sigmas", self.half_width_sigmas)?;
        if self.node_count < 3 || self.node_count.is_multiple_of(2) {
            return Err(Error::param(
                "node_count",
                format!("must be odd and >= 3, got {}", self.node_count),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Bits per sample, within `[0, adc.bits]`.
    pub hmin: f64,
    /// Node-halving difference of the estimate, bits.
    pub quadrature_error: f64,
    pub model: GaussianNoiseModel,
    pub adc: AdcModel,
}

/// `σ_Q = σ_E · 10^(qcnr/20)`.
pub fn sigma_from_qcnr(qcnr_db: f64, sigma_e: f64) -> Result<f64> {
    if !qcnr_db.is_finite() {
        return Err(Error::param(
            "qcnr_db",
            format!("must be finite, got {qcnr_db}"),
        ));
    }
    ensure_positive("sigma_e", sigma_e)?;
    Ok(sigma_e * 10f64.powf(qcnr_db / 20.0))
}

/// Adversary's best guessing probability for the ADC output given classical
/// noise value `e`.
///
/// The maximizing bin is the one containing `e`, a neighbor, or an edge bin;
/// only those are evaluated. `σ_Q = 0` is the point-mass limit and yields 1.
pub fn conditional_pmax(e: f64, model: &GaussianNoiseModel, adc: &AdcModel) -> Result<f64> {
    if !e.is_finite() {
        return Err(Error::param("e", format!("must be finite, got {e}")));
    }
    ensure_non_negative("sigma_q", model.sigma_q)?;
    adc.validate()?;
    Ok(pmax_unchecked(e, model.sigma_q, adc))
}

pub(crate) fn pmax_unchecked(e: f64, sigma_q: f64, adc: &AdcModel) -> f64 {
    if sigma_q == 0.0 {
        return 1.0;
    }
    let n = adc.bin_count();
    let k = adc.bin_index(e);
    let mass = |j: usize| {
        let (a, b) = adc.bin_bounds(j);
        normal_interval_mass((a - e) / sigma_q, (b - e) / sigma_q)
    };
    let mut best = mass(k).max(mass(0)).max(mass(n - 1));
    if k > 0 {
        best = best.max(mass(k - 1));
    }
    if k + 1 < n {
        best = best.max(mass(k + 1));
    }
    best.min(1.0)
}

/// `H̄min = −log₂ ∫ N(e; 0, σ_E) · pmax(e) de`, by composite Simpson on
/// pieces between bin edges.
pub fn average_min_entropy(
    model: &GaussianNoiseModel,
    adc: &AdcModel,
    integration: &Integration,
) -> Result<EntropyEstimate> {
    model.validate()?;
    adc.validate()?;
    integration.validate()?;

    let bits = adc.bits as f64;
    let to_bits = |p: f64| (-p.log2()).clamp(0.0, bits);
    if model.sigma_e == 0.0 {
        return Ok(EntropyEstimate {
            hmin: to_bits(pmax_unchecked(0.0, model.sigma_q, adc)),
            quadrature_error: 0.0,
            model: *model,
            adc: *adc,
        });
    }

    let half_width = integration.half_width_sigmas * model.sigma_e;
    let norm = 1.0 / (model.sigma_e * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |e: f64| {
        let z = e / model.sigma_e;
        norm * (-0.5 * z * z).exp() * pmax_unchecked(e, model.sigma_q, adc)
    };

    let (mut fine, mut coarse) = (0.0, 0.0);
    for (a, b, intervals) in panels(adc, half_width, integration.node_count) {
        let h = (b - a) / intervals as f64;
        let values: Vec<f64> = (0..=intervals)
            .map(|i| integrand(a + i as f64 * h))
            .collect();
        fine += simpson(&values, h);
        coarse += if intervals % 4 == 0 {
            let half: Vec<f64> = values.iter().step_by(2).copied().collect();
            simpson(&half, 2.0 * h)
        } else {
            trapezoid(&values, h)
        };
    }

    Ok(EntropyEstimate {
        hmin: to_bits(fine),
        quadrature_error: (fine.log2() - coarse.log2()).abs(),
        model: *model,
        adc: *adc,
    })
}

/// Splits `[−half_width, half_width]` at the interior bin edges, where the
/// likeliest bin changes and the integrand has a kink, and shares
/// `node_count − 1` intervals among the pieces by length (a multiple of 4
/// each, so every piece also has a half-resolution Simpson estimate).
/// Falls back to one uniform piece when the edges are too dense to resolve.
fn panels(adc: &AdcModel, half_width: f64, node_count: usize) -> Vec<(f64, f64, usize)> {
    let budget = node_count - 1;
    let delta = adc.bin_width();
    let first = adc.first_edge();
    let count = adc.bin_count();
    let lo_j = (((-half_width - first) / delta).floor() as i64 + 1).max(1);
    let hi_j = (((half_width - first) / delta).ceil() as i64 - 1).min(count as i64 - 1);
    let interior = (hi_j - lo_j + 1).max(0) as usize;
    if interior + 1 > budget / 4 {
        return vec![(-half_width, half_width, budget)];
    }
    let mut cuts = Vec::with_capacity(interior + 2);
    cuts.push(-half_width);
    for j in lo_j..=hi_j {
        let x = first + j as f64 * delta;
        if x > -half_width && x < half_width {
            cuts.push(x);
        }
    }
    cuts.push(half_width);
    let total = 2.0 * half_width;
    let quads = budget / 4;
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let share = ((w[1] - w[0]) / total * quads as f64).round() as usize;
            (w[0], w[1], 4 * share.max(1))
        })
        .collect()
}

fn simpson(values: &[f64], h: f64) -> f64 {
    debug_assert!(values.len() >= 3 && values.len() % 2 == 1);
    let last = values.len() - 1;
    let mut sum = values[0] + values[last];
    for (i, v) in values.iter().enumerate().take(last).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * h / 3.0
}

fn trapezoid(values: &[f64], h: f64) -> f64 {
    let last = values.len() - 1;
    let inner: f64 = values[1..last].iter().sum();
    h * (0.5 * (values[0] + values[last]) + inner)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// `R/σ_Q`.
    pub ratio: f64,
    pub hmin_bits: f64,
}

/// `H̄min` against `R/σ_Q` at fixed QCNR, with `σ_Q = 1` and
/// `σ_E = 10^(−qcnr/20)`.
///
/// Points are evaluated in parallel; each point is computed independently so
/// the result matches a sequential evaluation bit for bit.
pub fn hmin_curve(
    qcnr_db: f64,
    ratios: &[f64],
    bits: u32,
    convention: BinConvention,
) -> Result<Vec<CurvePoint>> {
    if !qcnr_db.is_finite() {
        return Err(Error::param(
            "qcnr_db",
            format!("must be finite, got {qcnr_db}"),
        ));
    }
    for &r in ratios {
        ensure_positive("ratio", r)?;
    }
    let model = GaussianNoiseModel::new(1.0, 10f64.powf(-qcnr_db / 20.0))?;
    let integration = Integration::default();
    ratios
        .par_iter()
        .map(|&ratio| {
            let adc = AdcModel::new(ratio, bits, convention)?;
            let est = average_min_entropy(&model, &adc, &integration)?;
            Ok(CurvePoint {
                ratio,
                hmin_bits: est.hmin,
            })
        })
        .collect()
}

/// `R/σ_Q` from 0.1 to 10 in steps of 0.05.
pub fn default_ratio_grid() -> Vec<f64> {
    (2..=200).map(|k| k as f64 * 0.05).collect()
}

/// Ratio with the highest entropy on a computed curve.
pub fn curve_peak(curve: &[CurvePoint]) -> Option<CurvePoint> {
    curve
        .iter()
        .copied()
        .max_by(|a, b| a.hmin_bits.total_cmp(&b.hmin_bits))
}

/// Extractable bits per second at `hmin` bits per sample.
pub fn extractable_rate(hmin: f64, sample_rate: f64) -> Result<f64> {
    ensure_non_negative("hmin", hmin)?;
    ensure_non_negative("sample_rate", sample_rate)?;
    Ok(hmin * sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::erf;

    fn reference_model() -> GaussianNoiseModel {
        GaussianNoiseModel::new(0.2685, 0.028).unwrap()
    }

    /// Max over every bin, no neighborhood shortcut.
    fn pmax_all_bins(e: f64, sigma_q: f64, adc: &AdcModel) -> f64 {
        (0..adc.bin_count())
            .map(|j| {
                let (a, b) = adc.bin_bounds(j);
                normal_interval_mass((a - e) / sigma_q, (b - e) / sigma_q)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn bin_geometry() {
        let full = AdcModel::new(5.0, 8, BinConvention::FullSpan).unwrap();
        assert_eq!(full.bin_width(), 0.0390625);
        assert_eq!(full.bin_index(0.0), 128);
        assert_eq!(full.bin_index(-100.0), 0);
        assert_eq!(full.bin_index(100.0), 255);
        let half = AdcModel::reference();
        assert_eq!(half.bin_width(), 0.01953125);
        assert_eq!(half.bin_bounds(0).0, f64::NEG_INFINITY);
        assert_eq!(half.bin_bounds(255).1, f64::INFINITY);
        assert_eq!(half.bin_bounds(1).0, -2.5 + 0.01953125);
        assert!(AdcModel::new(5.0, 0, BinConvention::FullSpan).is_err());
        assert!(AdcModel::new(5.0, 25, BinConvention::FullSpan).is_err());
    }

    #[test]
    fn convention_parses() {
        assert_eq!(
            "half_span".parse::<BinConvention>().unwrap(),
            BinConvention::HalfSpan
        );
        assert_eq!(
            "FULL_SPAN".parse::<BinConvention>().unwrap(),
            BinConvention::FullSpan
        );
        assert!("quarter".parse::<BinConvention>().is_err());
        let json = serde_json::to_string(&BinConvention::HalfSpan).unwrap();
        assert_eq!(json, "\"HALF_SPAN\"");
    }

    #[test]
    fn sigma_from_qcnr_values() {
        assert_eq!(sigma_from_qcnr(0.0, 1.0).unwrap(), 1.0);
        assert!((sigma_from_qcnr(20.0, 0.028).unwrap() - 0.28).abs() < 1e-15);
        let s = sigma_from_qcnr(19.6, 0.028).unwrap();
        let target = (0.27f64 * 0.27 - 0.028 * 0.028).sqrt();
        assert!((s / target - 1.0).abs() < 0.005, "{s} vs {target}");
        assert!(sigma_from_qcnr(10.0, 0.0).is_err());
    }

    #[test]
    fn one_bit_symmetric_split() {
        let adc = AdcModel::new(1.0, 1, BinConvention::FullSpan).unwrap();
        for sq in [1e-3, 0.3, 7.0] {
            let m = GaussianNoiseModel::new(sq, 0.0).unwrap();
            assert_eq!(conditional_pmax(0.0, &m, &adc).unwrap(), 0.5);
            let est = average_min_entropy(&m, &adc, &Integration::default()).unwrap();
            assert_eq!(est.hmin, 1.0);
        }
    }

    #[test]
    fn pmax_tends_to_one_far_outside_range() {
        let adc = AdcModel::reference();
        let p = conditional_pmax(1e3, &reference_model(), &adc).unwrap();
        assert_eq!(p, 1.0);
        let p = conditional_pmax(-1e3, &reference_model(), &adc).unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn pmax_bin_center_closed_form() {
        let adc = AdcModel::new(5.0, 8, BinConvention::FullSpan).unwrap();
        let delta = adc.bin_width();
        let (a, _) = adc.bin_bounds(128);
        let center = a + delta / 2.0;
        let sq = 0.2685;
        let m = GaussianNoiseModel::new(sq, 0.028).unwrap();
        let p = conditional_pmax(center, &m, &adc).unwrap();
        let closed = erf(delta / (2.0 * std::f64::consts::SQRT_2 * sq));
        assert!((p - closed).abs() < 1e-15);
        assert!((p - 0.0580).abs() < 1e-4, "{p}");
    }

    #[test]
    fn pmax_degenerate_sigma() {
        let m = GaussianNoiseModel {
            sigma_q: 0.0,
            sigma_e: 0.0,
        };
        assert_eq!(
            conditional_pmax(0.3, &m, &AdcModel::reference()).unwrap(),
            1.0
        );
    }

    #[test]
    fn neighborhood_search_matches_exhaustive_max() {
        for adc in [
            AdcModel::new(5.0, 8, BinConvention::FullSpan).unwrap(),
            AdcModel::new(0.7, 6, BinConvention::HalfSpan).unwrap(),
            AdcModel::new(2.0, 3, BinConvention::FullSpan).unwrap(),
        ] {
            for sq in [0.01, 0.2685, 3.0] {
                for k in -400..=400 {
                    let e = k as f64 * 0.0173;
                    let fast = pmax_unchecked(e, sq, &adc);
                    let slow = pmax_all_bins(e, sq, &adc);
                    assert_eq!(fast, slow, "e={e} sq={sq} adc={adc:?}");
                }
            }
        }
    }

    #[test]
    fn pmax_non_decreasing_beyond_range() {
        let adc = AdcModel::new(1.0, 8, BinConvention::FullSpan).unwrap();
        let m = GaussianNoiseModel::new(0.3, 0.0).unwrap();
        let mut prev = 0.0;
        for k in 0..200 {
            let e = 1.0 + k as f64 * 0.01;
            let p = pmax_unchecked(e, m.sigma_q, &adc);
            assert!(p >= prev && p > 0.0 && p <= 1.0);
            prev = p;
        }
    }

    #[test]
    fn reference_operating_point_half_span() {
        let est = average_min_entropy(
            &reference_model(),
            &AdcModel::reference(),
            &Integration::default(),
        )
        .unwrap();
        assert!((est.hmin - 5.117).abs() < 0.05, "{}", est.hmin);
        assert!(est.quadrature_error < 1e-4, "{}", est.quadrature_error);
    }

    #[test]
    fn reference_operating_point_full_span() {
        let adc = AdcModel::new(5.0, 8, BinConvention::FullSpan).unwrap();
        let est = average_min_entropy(&reference_model(), &adc, &Integration::default()).unwrap();
        assert!((est.hmin - 4.1).abs() < 0.05, "{}", est.hmin);
    }

    #[test]
    fn integration_validation() {
        let bad = Integration {
            half_width_sigmas: 10.0,
            node_count: 4000,
        };
        assert!(average_min_entropy(&reference_model(), &AdcModel::reference(), &bad).is_err());
        let bad = Integration {
            half_width_sigmas: 10.0,
            node_count: 1,
        };
        assert!(average_min_entropy(&reference_model(), &AdcModel::reference(), &bad).is_err());
        let tiny = Integration {
            half_width_sigmas: 10.0,
            node_count: 3,
        };
        assert!(average_min_entropy(&reference_model(), &AdcModel::reference(), &tiny).is_ok());
    }

    #[test]
    fn rate_accounting() {
        assert_eq!(extractable_rate(5.117, 200_000.0).unwrap(), 1_023_400.0);
        assert_eq!(extractable_rate(0.0, 123.0).unwrap(), 0.0);
        assert_eq!(extractable_rate(8.0, 200_000.0).unwrap(), 1.6e6);
        assert!(extractable_rate(-1.0, 1.0).is_err());
    }

    #[test]
    fn curve_points_bounded_and_parallel_matches_sequential() {
        let ratios: Vec<f64> = (1..=30).map(|k| k as f64 * 0.25).collect();
        let curve = hmin_curve(20.0, &ratios, 8, BinConvention::FullSpan).unwrap();
        assert!(curve
            .iter()
            .all(|p| p.hmin_bits <= 8.0 && p.hmin_bits >= 0.0));
        let model = GaussianNoiseModel::new(1.0, 0.1).unwrap();
        for p in curve.iter().step_by(7) {
            let adc = AdcModel::new(p.ratio, 8, BinConvention::FullSpan).unwrap();
            let seq = average_min_entropy(&model, &adc, &Integration::default()).unwrap();
            assert_eq!(seq.hmin.to_bits(), p.hmin_bits.to_bits());
        }
    }
}
