//! Simulated ADC noise traces and their on-disk format.
//!
//! Binary trace layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 8    | magic `QRNGTRC\0`                         |
//! | 8      | 2    | format version (1)                        |
//! | 10     | 1    | bytes per code (1 for n ≤ 8, 2 for n ≤ 16) |
//! | 11     | 1    | ADC bits `n`                              |
//! | 12     | 4    | reserved, zero                            |
//! | 16     | 4    | metadata length `L`                       |
//! | 20     | L    | JSON [`TraceMetadata`]                    |
//! | 20+L   | …    | `sample_count` packed codes               |

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::entropy::{AdcModel, GaussianNoiseModel};
use crate::error::{ensure_positive, Error, Result};

pub const TRACE_MAGIC: [u8; 8] = *b"QRNGTRC\0";
pub const TRACE_VERSION: u16 = 1;
const HEADER_LEN: usize = 16;

/// Widest ADC a trace can hold.
pub const MAX_TRACE_BITS: u32 = 16;

/// Identity of the simulation generator. Simulation randomness is not product
/// randomness; it only has to be reproducible.
pub const SIMULATION_GENERATOR: &str =
    "ChaCha20Rng::seed_from_u64 + rand_distr::Normal (q then e per sample)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    pub model: GaussianNoiseModel,
    pub adc: AdcModel,
    /// Samples per second, Hz.
    pub sample_rate: f64,
    pub sample_count: usize,
    pub rng_seed: u64,
}

impl TraceConfig {
    /// σ_Q = 0.2685 V, σ_E = 0.028 V, ±5 V 8-bit ADC at 200 kHz, 10⁶ samples.
    pub fn reference(rng_seed: u64) -> Self {
        Self {
            model: GaussianNoiseModel {
                sigma_q: 0.2685,
                sigma_e: 0.028,
            },
            adc: AdcModel::reference(),
            sample_rate: 200e3,
            sample_count: 1_000_000,
            rng_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        validate_trace_adc(&self.adc)?;
        ensure_positive("sample_rate", self.sample_rate)?;
        if self.sample_count == 0 {
            return Err(Error::param("sample_count", "must be > 0"));
        }
        Ok(())
    }
}

fn validate_trace_adc(adc: &AdcModel) -> Result<()> {
    adc.validate()?;
    if adc.bits > MAX_TRACE_BITS {
        return Err(Error::param(
            "bits",
            format!(
                "traces hold at most {MAX_TRACE_BITS}-bit codes, got {}",
                adc.bits
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub config: TraceConfig,
    pub generator: String,
    pub created_by: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub codes: Vec<u16>,
    pub metadata: TraceMetadata,
}

impl SampleTrace {
    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn adc(&self) -> &AdcModel {
        &self.metadata.config.adc
    }

    /// Samples reconstructed at their bin centers.
    pub fn volts(&self) -> Vec<f64> {
        let adc = *self.adc();
        self.codes.iter().map(|&c| dequantize(c, &adc)).collect()
    }

    /// Fraction of samples in the two extreme codes.
    pub fn clipped_fraction(&self) -> f64 {
        let max = (1u32 << self.adc().bits) - 1;
        let clipped = self
            .codes
            .iter()
            .filter(|&&c| c == 0 || u32::from(c) == max)
            .count();
        clipped as f64 / self.codes.len().max(1) as f64
    }
}

/// Width of one output code, always `2R/2ⁿ` regardless of the entropy model's
/// bin convention.
pub fn code_width(adc: &AdcModel) -> f64 {
    2.0 * adc.range / (1u64 << adc.bits) as f64
}

fn quantize_unchecked(v: f64, adc: &AdcModel) -> u16 {
    let max = (1u32 << adc.bits) - 1;
    let k = ((v + adc.range) / code_width(adc)).floor();
    if k <= 0.0 {
        0
    } else if k >= max as f64 {
        max as u16
    } else {
        k as u16
    }
}

/// Uniform mid-rise quantizer, `clamp(floor((v + R)/δ), 0, 2ⁿ − 1)`.
pub fn quantize(volts: &[f64], adc: &AdcModel) -> Result<Vec<u16>> {
    validate_trace_adc(adc)?;
    volts
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v.is_finite() {
                Ok(quantize_unchecked(v, adc))
            } else {
                Err(Error::param("volts", format!("sample {i} is not finite")))
            }
        })
        .collect()
}

/// Center of code `code`'s bin, V.
pub fn dequantize(code: u16, adc: &AdcModel) -> f64 {
    -adc.range + (f64::from(code) + 0.5) * code_width(adc)
}

/// Draws `m = q + e` per sample and quantizes it. Same config and seed give
/// the same codes.
pub fn generate_gaussian_trace(cfg: &TraceConfig) -> Result<SampleTrace> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.rng_seed);
    let quantum =
        Normal::new(0.0, cfg.model.sigma_q).map_err(|e| Error::param("sigma_q", e.to_string()))?;
    let classical =
        Normal::new(0.0, cfg.model.sigma_e).map_err(|e| Error::param("sigma_e", e.to_string()))?;
    let codes = (0..cfg.sample_count)
        .map(|_| {
            let q = quantum.sample(&mut rng);
            let e = classical.sample(&mut rng);
            quantize_unchecked(q + e, &cfg.adc)
        })
        .collect();
    Ok(SampleTrace {
        codes,
        metadata: TraceMetadata {
            config: cfg.clone(),
            generator: SIMULATION_GENERATOR.into(),
            created_by: concat!("qrng-core ", env!("CARGO_PKG_VERSION")).into(),
        },
    })
}

fn bytes_per_code(bits: u32) -> usize {
    if bits <= 8 {
        1
    } else {
        2
    }
}

pub fn write_trace<W: Write>(trace: &SampleTrace, mut w: W) -> Result<()> {
    let cfg = &trace.metadata.config;
    cfg.validate()?;
    if trace.codes.len() != cfg.sample_count {
        return Err(Error::param(
            "sample_count",
            format!(
                "metadata says {} samples but trace holds {}",
                cfg.sample_count,
                trace.codes.len()
            ),
        ));
    }
    let bits = cfg.adc.bits;
    let max = (1u32 << bits) - 1;
    if let Some(i) = trace.codes.iter().position(|&c| u32::from(c) > max) {
        return Err(Error::param(
            "codes",
            format!("code at index {i} exceeds {max}"),
        ));
    }
    let width = bytes_per_code(bits);
    let meta = serde_json::to_vec(&trace.metadata)?;

    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(&TRACE_MAGIC);
    header[8..10].copy_from_slice(&TRACE_VERSION.to_le_bytes());
    header[10] = width as u8;
    header[11] = bits as u8;
    w.write_all(&header)?;
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(&meta)?;

    let mut payload = Vec::with_capacity(trace.codes.len() * width);
    for &c in &trace.codes {
        if width == 1 {
            payload.push(c as u8);
        } else {
            payload.extend_from_slice(&c.to_le_bytes());
        }
    }
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

fn format_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::TraceFormat {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Parses a complete binary trace. Errors carry the byte offset of the fault.
pub fn parse_trace(bytes: &[u8]) -> Result<SampleTrace> {
    if bytes.len() < HEADER_LEN + 4 {
        return Err(format_err(
            bytes.len(),
            format!(
                "header truncated: need {} bytes, found {}",
                HEADER_LEN + 4,
                bytes.len()
            ),
        ));
    }
    if bytes[..8] != TRACE_MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    let version = u16::from_le_bytes([bytes[8], bytes[9]]);
    if version != TRACE_VERSION {
        return Err(format_err(8, format!("unsupported version {version}")));
    }
    let width = bytes[10] as usize;
    let bits = u32::from(bytes[11]);
    if !(1..=MAX_TRACE_BITS).contains(&bits) {
        return Err(format_err(11, format!("unsupported bit depth {bits}")));
    }
    if width != bytes_per_code(bits) {
        return Err(format_err(
            10,
            format!("{width} bytes per code invalid for {bits}-bit codes"),
        ));
    }

    let meta_len = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let meta_start = HEADER_LEN + 4;
    let meta_end = meta_start
        .checked_add(meta_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| {
            format_err(
                bytes.len(),
                format!(
                    "metadata truncated: expected {meta_len} bytes, found {}",
                    bytes.len() - meta_start
                ),
            )
        })?;
    let metadata: TraceMetadata = serde_json::from_slice(&bytes[meta_start..meta_end])
        .map_err(|e| format_err(meta_start, format!("metadata: {e}")))?;
    let cfg = &metadata.config;
    if cfg.adc.bits != bits {
        return Err(format_err(
            11,
            format!("header says {bits} bits, metadata says {}", cfg.adc.bits),
        ));
    }
    cfg.validate()
        .map_err(|e| format_err(meta_start, format!("metadata: {e}")))?;

    let payload = &bytes[meta_end..];
    let expected = cfg.sample_count * width;
    if payload.len() != expected {
        let kind = if payload.len() < expected {
            "truncated"
        } else {
            "oversized"
        };
        return Err(format_err(
            meta_end + payload.len().min(expected),
            format!(
                "payload {kind}: expected {expected} bytes ({} codes), found {}",
                cfg.sample_count,
                payload.len()
            ),
        ));
    }
    let max = (1u32 << bits) - 1;
    let mut codes = Vec::with_capacity(cfg.sample_count);
    for (i, chunk) in payload.chunks_exact(width).enumerate() {
        let code = if width == 1 {
            u16::from(chunk[0])
        } else {
            u16::from_le_bytes([chunk[0], chunk[1]])
        };
        if u32::from(code) > max {
            return Err(format_err(
                meta_end + i * width,
                format!("code {code} out of range for {bits}-bit ADC"),
            ));
        }
        codes.push(code);
    }
    Ok(SampleTrace { codes, metadata })
}

pub fn read_trace<R: Read>(mut r: R) -> Result<SampleTrace> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_trace(&bytes)
}

pub fn save_trace(trace: &SampleTrace, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_trace(path: impl AsRef<Path>) -> Result<SampleTrace> {
    parse_trace(&fs::read(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRecord {
    index: usize,
    code: u16,
}

/// `index,code` CSV.
pub fn write_codes_csv<W: Write>(codes: &[u16], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    for (index, &code) in codes.iter().enumerate() {
        w.serialize(CsvRecord { index, code })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `index,code` CSV, checking indices are consecutive from 0 and codes
/// fit in `bits`.
pub fn read_codes_csv<R: Read>(r: R, bits: u32) -> Result<Vec<u16>> {
    if !(1..=MAX_TRACE_BITS).contains(&bits) {
        return Err(Error::param(
            "bits",
            format!("must lie in 1..={MAX_TRACE_BITS}"),
        ));
    }
    let max = (1u32 << bits) - 1;
    let mut rdr = csv::Reader::from_reader(r);
    let mut codes = Vec::new();
    for (i, rec) in rdr.deserialize::<CsvRecord>().enumerate() {
        let rec = rec?;
        if rec.index != i {
            return Err(Error::param(
                "index",
                format!("row {i} has index {}", rec.index),
            ));
        }
        if u32::from(rec.code) > max {
            return Err(Error::param(
                "code",
                format!("row {i}: code {} out of range for {bits}-bit ADC", rec.code),
            ));
        }
        codes.push(rec.code);
    }
    Ok(codes)
}

/// Measured noise standard deviations at the second-stage magnifications and
/// photocurrents of the hardware detector.
pub mod table1 {
    pub const MAGNIFICATIONS: [f64; 4] = [10.0, 20.0, 50.0, 100.0];
    /// A.
    pub const PHOTOCURRENTS: [f64; 3] = [1e-6, 10e-6, 100e-6];
    /// σ_E per magnification, V.
    pub const SIGMA_E: [f64; 4] = [0.0058, 0.0112, 0.0282, 0.0566];
    /// σ_Q per magnification (rows) and photocurrent (columns), V.
    pub const SIGMA_Q: [[f64; 3]; 4] = [
        [0.0153, 0.0474, 0.1537],
        [0.0267, 0.0933, 0.2923],
        [0.0746, 0.2068, 0.6607],
        [0.1386, 0.4402, 1.3764],
    ];

    /// Relative deviation of each adjacent-photocurrent σ_Q ratio from √(I₂/I₁).
    pub fn current_scaling_deviations() -> Vec<f64> {
        let mut out = Vec::new();
        for row in SIGMA_Q {
            for j in 1..row.len() {
                let expected = (PHOTOCURRENTS[j] / PHOTOCURRENTS[j - 1]).sqrt();
                out.push((row[j] / row[j - 1] / expected - 1.0).abs());
            }
        }
        out
    }

    /// Relative deviation of each adjacent-magnification σ ratio (σ_E and every
    /// σ_Q column) from the magnification ratio.
    pub fn magnification_scaling_deviations() -> Vec<f64> {
        let mut out = Vec::new();
        for i in 1..MAGNIFICATIONS.len() {
            let expected = MAGNIFICATIONS[i] / MAGNIFICATIONS[i - 1];
            out.push((SIGMA_E[i] / SIGMA_E[i - 1] / expected - 1.0).abs());
            for (hi, lo) in SIGMA_Q[i].iter().zip(&SIGMA_Q[i - 1]) {
                out.push((hi / lo / expected - 1.0).abs());
            }
        }
        out
    }
}
