//! Command-line surface. Numeric flags take SI base units; dB and dBm appear
//! only in outputs.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qrng_core::entropy::BinConvention;
use qrng_core::noise_model::DetectorConfig;

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "qrng",
    version,
    about = "Vacuum-noise QRNG signal chain: detector noise, min-entropy, simulation, extraction, testing",
    propagate_version = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run configuration (JSON); used instead of a profile
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "profile")]
    pub config: Option<PathBuf>,

    /// Parameter profile [default: gesi-paper]
    #[arg(long, global = true, value_name = "NAME")]
    pub profile: Option<String>,

    /// Directory of <NAME>.json profiles, used instead of the bundled set
    #[arg(long, global = true, value_name = "DIR", env = "QRNG_PROFILE_DIR")]
    pub profile_dir: Option<PathBuf>,

    /// Output file, written atomically; stdout when omitted
    #[arg(long, global = true, value_name = "PATH", value_parser = any_path)]
    pub out: Option<PathBuf>,

    /// Output format; each subcommand has its own default
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// 64-bit key, in hex, for the Toeplitz seed generator (reproducible)
    #[arg(long, global = true, value_name = "HEX", value_parser = parse_hex_key)]
    pub seed: Option<u64>,

    /// Draw the Toeplitz seed from the operating system (not reproducible)
    #[arg(long, global = true, conflicts_with = "seed")]
    pub platform_entropy: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-source and total noise densities over a log frequency grid
    #[command(allow_negative_numbers = true)]
    Spectrum(SpectrumArgs),
    /// Complex TIA transimpedance over a log frequency grid
    #[command(allow_negative_numbers = true)]
    Gain(GainArgs),
    /// Quantum-to-classical noise ratio at one frequency
    #[command(allow_negative_numbers = true)]
    Qcnr(QcnrArgs),
    /// 3-dB bandwidth of the TIA gain
    #[command(allow_negative_numbers = true)]
    Bandwidth(BandwidthArgs),
    /// Common-mode rejection from splitter and responsivity imbalance
    #[command(allow_negative_numbers = true)]
    Cmrr(CmrrArgs),
    /// Rank feedback networks by QCNR subject to a bandwidth floor
    #[command(allow_negative_numbers = true)]
    Sweep(SweepArgs),
    /// Average conditional min-entropy per sample
    #[command(allow_negative_numbers = true)]
    Hmin(HminArgs),
    /// Min-entropy against converter range at fixed noise ratio
    #[command(allow_negative_numbers = true)]
    Curve(CurveArgs),
    /// Simulate a quantized Gaussian sample trace
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Toeplitz-hash a trace into output bits
    #[command(allow_negative_numbers = true)]
    Extract(ExtractArgs),
    /// Run the statistical test battery on a bit file
    #[command(allow_negative_numbers = true)]
    Test(TestArgs),
    /// Simulate, estimate, extract and test in one run
    #[command(allow_negative_numbers = true)]
    Pipeline(PipelineArgs),
}

/// Overrides applied on top of the configured detector.
#[derive(Debug, Default, Args)]
pub struct DetectorArgs {
    /// Photoelectron current I_PD of the series pair [A]
    #[arg(long)]
    pub photocurrent: Option<f64>,
    /// Temperature [K]
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Photodiode dark current [A]
    #[arg(long)]
    pub dark_current: Option<f64>,
    /// Feedback resistance R_F [Ω]
    #[arg(long)]
    pub feedback_resistance: Option<f64>,
    /// Discrete feedback capacitance C_F [F]
    #[arg(long)]
    pub feedback_capacitance: Option<f64>,
    /// Feedback parasitic capacitance C_FP [F]
    #[arg(long)]
    pub feedback_parasitic: Option<f64>,
    /// Amplifier gain-bandwidth product [Hz]
    #[arg(long)]
    pub gain_bandwidth: Option<f64>,
    /// High-pass filter cutoff, 0 disables the filter [Hz]
    #[arg(long)]
    pub hpf_cutoff: Option<f64>,
}

impl DetectorArgs {
    pub fn apply(&self, cfg: &mut DetectorConfig) {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.photocurrent, self.photocurrent);
        set(&mut cfg.temperature, self.temperature);
        set(&mut cfg.photodiode.dark_current, self.dark_current);
        set(
            &mut cfg.frontend.feedback_resistance,
            self.feedback_resistance,
        );
        set(
            &mut cfg.frontend.feedback_capacitance,
            self.feedback_capacitance,
        );
        set(
            &mut cfg.frontend.feedback_parasitic,
            self.feedback_parasitic,
        );
        set(&mut cfg.frontend.gain_bandwidth, self.gain_bandwidth);
        set(&mut cfg.hpf_cutoff, self.hpf_cutoff);
    }
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Lowest frequency [Hz]
    #[arg(long, default_value_t = 1e3)]
    pub fmin: f64,
    /// Highest frequency [Hz]
    #[arg(long, default_value_t = 1e7)]
    pub fmax: f64,
    /// Grid density [points/decade]
    #[arg(long, default_value_t = 50)]
    pub points_per_decade: usize,
    /// Leave shot noise out of the output voltage and power columns
    #[arg(long)]
    pub no_shot: bool,
    /// Leave the high-pass filter out of the output columns
    #[arg(long)]
    pub no_hpf: bool,
    /// Include the second-stage voltage gain in the output columns
    #[arg(long)]
    pub second_stage: bool,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    /// Lowest frequency [Hz]
    #[arg(long, default_value_t = 1.0)]
    pub fmin: f64,
    /// Highest frequency [Hz]
    #[arg(long, default_value_t = 1e9)]
    pub fmax: f64,
    /// Grid density [points/decade]
    #[arg(long, default_value_t = 20)]
    pub points_per_decade: usize,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct QcnrArgs {
    /// Evaluation frequency [Hz]
    #[arg(long, default_value_t = 1e5)]
    pub freq: f64,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct BandwidthArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
}

#[derive(Debug, Args)]
pub struct CmrrArgs {
    /// Optical power fraction into arm A [fraction]
    #[arg(long, default_value_t = 0.5, conflicts_with = "imbalance")]
    pub split_a: f64,
    /// Optical power fraction into arm B [fraction]
    #[arg(long, default_value_t = 0.5, conflicts_with = "imbalance")]
    pub split_b: f64,
    /// Relative responsivity difference between the photodiodes [fraction]
    #[arg(long, default_value_t = 0.0)]
    pub mismatch: f64,
    /// Difference-to-sum ratio of the split, sets arms to (1 ± x)/2 [fraction]
    #[arg(long)]
    pub imbalance: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Smallest feedback resistance [Ω]
    #[arg(long, default_value_t = 1e5)]
    pub rf_min: f64,
    /// Largest feedback resistance [Ω]
    #[arg(long, default_value_t = 2e6)]
    pub rf_max: f64,
    /// Log-spaced resistance values [count]
    #[arg(long, default_value_t = 14)]
    pub rf_points: usize,
    /// Smallest total feedback capacitance [F]
    #[arg(long, default_value_t = 0.1e-12)]
    pub ctf_min: f64,
    /// Largest total feedback capacitance [F]
    #[arg(long, default_value_t = 1e-12)]
    pub ctf_max: f64,
    /// Linearly spaced capacitance values [count]
    #[arg(long, default_value_t = 10)]
    pub ctf_points: usize,
    /// Bandwidth floor [Hz]
    #[arg(long, default_value_t = 1e6)]
    pub min_bandwidth: f64,
    #[command(flatten)]
    pub detector: DetectorArgs,
}

/// Overrides for the noise model and converter.
#[derive(Debug, Default, Args)]
pub struct AdcArgs {
    /// Quantum noise standard deviation σ_Q [V]
    #[arg(long)]
    pub sigma_q: Option<f64>,
    /// Classical noise standard deviation σ_E [V]
    #[arg(long)]
    pub sigma_e: Option<f64>,
    /// Converter range ±R [V]
    #[arg(long)]
    pub range: Option<f64>,
    /// Converter resolution [bits]
    #[arg(long)]
    pub bits: Option<u32>,
    /// Bin layout over the range
    #[arg(long, value_name = "FULL_SPAN|HALF_SPAN", value_parser = parse_convention)]
    pub convention: Option<BinConvention>,
}

#[derive(Debug, Args)]
pub struct HminArgs {
    #[command(flatten)]
    pub adc: AdcArgs,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Noise amplitude ratio σ_Q/σ_E; the configured model's ratio when omitted [dimensionless]
    #[arg(long)]
    pub noise_ratio: Option<f64>,
    /// Converter resolution [bits]
    #[arg(long)]
    pub bits: Option<u32>,
    /// Bin layout over the range
    #[arg(long, value_name = "FULL_SPAN|HALF_SPAN", value_parser = parse_convention)]
    pub convention: Option<BinConvention>,
    /// First range-to-noise ratio R/σ_Q [dimensionless]
    #[arg(long, default_value_t = 0.1)]
    pub from: f64,
    /// Last range-to-noise ratio R/σ_Q [dimensionless]
    #[arg(long, default_value_t = 10.0)]
    pub to: f64,
    /// Ratio step [dimensionless]
    #[arg(long, default_value_t = 0.05)]
    pub step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TraceFormat {
    /// Binary trace with metadata header
    Qrt,
    /// `index,code` CSV
    Csv,
}

/// Overrides for trace generation.
#[derive(Debug, Default, Args)]
pub struct TraceArgs {
    /// Trace length [samples]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sampling rate [Hz]
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Simulation generator seed [integer]
    #[arg(long)]
    pub rng_seed: Option<u64>,
    #[command(flatten)]
    pub adc: AdcArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Encoding of the trace written to --out
    #[arg(long, value_enum, default_value_t = TraceFormat::Qrt)]
    pub trace_format: TraceFormat,
    #[command(flatten)]
    pub trace: TraceArgs,
}

/// Overrides for block geometry.
#[derive(Debug, Default, Args)]
pub struct BlockArgs {
    /// Block length [samples]
    #[arg(long)]
    pub samples_per_block: Option<usize>,
    /// Security parameter s, ε = 2^-s [bits]
    #[arg(long)]
    pub security_log2: Option<u32>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Trace to hash (binary trace, or `index,code` CSV)
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Input encoding; inferred from the extension when omitted
    #[arg(long, value_enum)]
    pub input_format: Option<TraceFormat>,
    /// Bits per code of a CSV input; the configured converter when omitted [bits]
    #[arg(long)]
    pub bits: Option<u32>,
    /// Min-entropy used for block sizing; estimated from the model when omitted [bits/sample]
    #[arg(long)]
    pub hmin: Option<f64>,
    #[command(flatten)]
    pub block: BlockArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BitFormat {
    /// Packed bytes, least significant bit first
    Bytes,
    /// '0'/'1' characters, whitespace ignored
    Ascii,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Bit file to test
    #[arg(long, value_name = "PATH")]
    pub input: PathBuf,
    /// Input encoding; `.txt`/`.asc` files are read as ASCII when omitted
    #[arg(long, value_enum)]
    pub input_format: Option<BitFormat>,
    /// Test only the first N bits [bits]
    #[arg(long)]
    pub bit_count: Option<usize>,
    /// Significance level [probability]
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Block frequency block length [bits]
    #[arg(long)]
    pub block_len: Option<usize>,
    /// Serial test pattern length [bits]
    #[arg(long)]
    pub serial_m: Option<u32>,
    /// Also write the bits as ASCII for external test suites
    #[arg(long, value_name = "PATH")]
    pub export_ascii: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[command(flatten)]
    pub block: BlockArgs,
    /// Write the extracted bytes here
    #[arg(long, value_name = "PATH")]
    pub bits_out: Option<PathBuf>,
    /// Write the simulated trace here
    #[arg(long, value_name = "PATH")]
    pub trace_out: Option<PathBuf>,
}

/// Accepts the empty path too, so writing to it fails as an I/O error.
fn any_path(s: &str) -> Result<PathBuf, String> {
    Ok(PathBuf::from(s))
}

fn parse_hex_key(s: &str) -> Result<u64, String> {
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .unwrap_or(s);
    if digits.is_empty() || digits.len() > 16 {
        return Err(format!("expected 1 to 16 hex digits, got {s:?}"));
    }
    u64::from_str_radix(digits, 16).map_err(|e| format!("{s:?}: {e}"))
}

fn parse_convention(s: &str) -> Result<BinConvention, String> {
    s.parse().map_err(|e: qrng_core::Error| e.to_string())
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_numeric_flag_states_units() {
        // Non-numeric values are paths, names, keys and enumerations.
        let textual = ["PATH", "NAME", "DIR", "HEX", "FULL_SPAN|HALF_SPAN"];
        let mut cmd = Cli::command();
        cmd.build();
        let mut checked = 0;
        for sub in cmd.get_subcommands() {
            for arg in sub.get_arguments() {
                let names = arg.get_value_names().unwrap_or_default();
                if !arg.get_action().takes_values()
                    || !arg.get_possible_values().is_empty()
                    || names.iter().any(|n| textual.contains(&n.as_str()))
                {
                    continue;
                }
                let help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
                let unit = help.rfind('[').zip(help.rfind(']')).filter(|(a, b)| a < b);
                assert!(
                    unit.is_some(),
                    "{} --{}: {help:?}",
                    sub.get_name(),
                    arg.get_id()
                );
                checked += 1;
            }
        }
        assert!(checked > 40, "{checked}");
    }

    #[test]
    fn hex_keys() {
        assert_eq!(parse_hex_key("0x2a"), Ok(42));
        assert_eq!(parse_hex_key("ffffffffffffffff"), Ok(u64::MAX));
        assert!(parse_hex_key("").is_err());
        assert!(parse_hex_key("0x").is_err());
        assert!(parse_hex_key("12345678901234567").is_err());
        assert!(parse_hex_key("xyz").is_err());
    }
}
