//! Simulation to tested output in one call.
//!
//! simulate trace → min-entropy → block sizing → Toeplitz stream → battery.

use serde::{Deserialize, Serialize};

use crate::entropy::{average_min_entropy, extractable_rate, EntropyEstimate, Integration};
use crate::error::{Error, Result};
use crate::extractor::{
    generate_seed, output_length, stream_extract, BitBlock, EntropySource, ExtractorParams,
    StreamReport, ToeplitzExtractor,
};
use crate::randtest::{run_battery, BatteryConfig, TestReport};
use crate::trace::{generate_gaussian_trace, SampleTrace, TraceConfig};

pub const DEFAULT_SAMPLES_PER_BLOCK: usize = 4096;
pub const DEFAULT_SECURITY_LOG2: u32 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub trace: TraceConfig,
    #[serde(default = "default_samples_per_block")]
    pub samples_per_block: usize,
    #[serde(default = "default_security_log2")]
    pub security_log2: u32,
    #[serde(default)]
    pub integration: Integration,
    #[serde(default)]
    pub battery: BatteryConfig,
}

fn default_samples_per_block() -> usize {
    DEFAULT_SAMPLES_PER_BLOCK
}

fn default_security_log2() -> u32 {
    DEFAULT_SECURITY_LOG2
}

impl PipelineConfig {
    pub fn reference(rng_seed: u64) -> Self {
        Self {
            trace: TraceConfig::reference(rng_seed),
            samples_per_block: DEFAULT_SAMPLES_PER_BLOCK,
            security_log2: DEFAULT_SECURITY_LOG2,
            integration: Integration::default(),
            battery: BatteryConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub sample_count: usize,
    pub sample_rate_hz: f64,
    pub rng_seed: u64,
    pub clipped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub trace: TraceSummary,
    pub entropy: EntropyEstimate,
    /// `hmin × sample_rate`, bits/s.
    pub extractable_rate_bps: f64,
    /// Output bits per second of sampled signal: `m / samples_per_block × sample_rate`.
    pub extraction_rate_bps: f64,
    pub samples_per_block: usize,
    pub extraction: StreamReport,
    /// Wall-clock extraction keeps up with the sampled stream.
    pub real_time: bool,
    /// `None` when the output is too short for the battery.
    pub randomness: Option<TestReport>,
    pub randomness_skipped: Option<String>,
}

pub struct PipelineOutput {
    pub report: PipelineReport,
    pub trace: SampleTrace,
    /// Extracted bytes, LSB-first, last byte zero-padded.
    pub output: Vec<u8>,
}

impl PipelineOutput {
    /// Extracted bits without padding.
    pub fn output_bits(&self) -> Result<Vec<bool>> {
        let len = self.report.extraction.output_bits as usize;
        Ok(BitBlock::from_bytes(&self.output, len)?.to_bools())
    }
}

pub fn run_pipeline(cfg: &PipelineConfig, seed_source: &EntropySource) -> Result<PipelineOutput> {
    let trace = generate_gaussian_trace(&cfg.trace)?;
    let adc = &cfg.trace.adc;
    let entropy = average_min_entropy(&cfg.trace.model, adc, &cfg.integration)?;
    let m = output_length(
        cfg.samples_per_block,
        adc.bits,
        entropy.hmin,
        cfg.security_log2,
    )?;
    let n = cfg.samples_per_block * adc.bits as usize;
    let seed = generate_seed(ExtractorParams::seed_len(n, m), seed_source)?;
    let extractor = ToeplitzExtractor::new(ExtractorParams::new(n, m, cfg.security_log2, seed)?)?;

    let mut output = Vec::new();
    let extraction = stream_extract(
        trace.codes.iter().map(|&c| Ok(c)),
        adc.bits,
        &extractor,
        &mut output,
    )?;

    let sample_rate = cfg.trace.sample_rate;
    let extraction_rate_bps = m as f64 / cfg.samples_per_block as f64 * sample_rate;
    let real_time = extraction.blocks > 0 && extraction.bits_per_second >= extraction_rate_bps;

    let bits = BitBlock::from_bytes(&output, extraction.output_bits as usize)?.to_bools();
    let (randomness, randomness_skipped) = match run_battery(&bits, &cfg.battery) {
        Ok(r) => (Some(r), None),
        Err(e @ Error::InsufficientBits { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };

    let report = PipelineReport {
        trace: TraceSummary {
            sample_count: trace.len(),
            sample_rate_hz: sample_rate,
            rng_seed: cfg.trace.rng_seed,
            clipped_fraction: trace.clipped_fraction(),
        },
        extractable_rate_bps: extractable_rate(entropy.hmin, sample_rate)?,
        entropy,
        extraction_rate_bps,
        samples_per_block: cfg.samples_per_block,
        extraction,
        real_time,
        randomness,
        randomness_skipped,
    };
    Ok(PipelineOutput {
        report,
        trace,
        output,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> PipelineConfig {
        let mut cfg = PipelineConfig::reference(seed);
        cfg.trace.sample_count = 50_000;
        cfg
    }

    #[test]
    fn reference_profile_rates() {
        let out = run_pipeline(&small(1), &EntropySource::Seeded(2)).unwrap();
        let r = &out.report;
        assert!((r.entropy.hmin - 5.117).abs() < 0.05);
        assert!((r.extractable_rate_bps - 1.0234e6).abs() < 1e4);
        assert_eq!(r.extraction.n, 32_768);
        assert_eq!(r.extraction.blocks, 12);
        // 50 000 samples -> 12 blocks of 4096, 848 samples left over.
        assert_eq!(r.extraction.discarded_bits, 848 * 8);
        assert_eq!(out.output.len() as u64, r.extraction.output_bytes);
        assert_eq!(
            out.output_bits().unwrap().len() as u64,
            r.extraction.output_bits
        );
        let battery = r.randomness.as_ref().unwrap();
        assert_eq!(battery.results.len(), 6);
    }

    #[test]
    fn deterministic_with_seeded_sources() {
        let a = run_pipeline(&small(3), &EntropySource::Seeded(4)).unwrap();
        let b = run_pipeline(&small(3), &EntropySource::Seeded(4)).unwrap();
        assert_eq!(a.output, b.output);
        let c = run_pipeline(&small(3), &EntropySource::Seeded(5)).unwrap();
        assert_ne!(a.output, c.output);
    }

    #[test]
    fn short_trace_skips_battery() {
        let mut cfg = small(1);
        cfg.trace.sample_count = 4000;
        let out = run_pipeline(&cfg, &EntropySource::Seeded(1)).unwrap();
        assert_eq!(out.report.extraction.blocks, 0);
        assert!(out.output.is_empty());
        assert!(!out.report.real_time);
        assert!(out.report.randomness.is_none());
        assert!(out.report.randomness_skipped.is_some());
    }

    #[test]
    fn config_json_defaults() {
        let json = serde_json::json!({ "trace": TraceConfig::reference(7) });
        let cfg: PipelineConfig = serde_json::from_value(json).unwrap();
        assert_eq!(cfg, PipelineConfig::reference(7));
    }
}
