use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use qrng_core::entropy::{
    average_min_entropy, curve_peak, hmin_curve, AdcModel, CurvePoint, EntropyEstimate,
    GaussianNoiseModel,
};
use qrng_core::extractor::{
    generate_seed, output_length, stream_extract, BitBlock, EntropySource, ExtractorParams,
    StreamReport, ToeplitzExtractor,
};
use qrng_core::noise_model::{
    bandwidth_3db, cmrr_from_imbalance, log_grid, noise_spectrum, qcnr, shot_noise_density,
    sweep_feedback, tia_gain, total_classical_density, DetectorConfig, FeedbackCandidate,
    OutputStages, MEASURED_CMRR_LOWER_BOUND_DB, SPECTRUM_CSV_HEADER,
};
use qrng_core::pipeline::{run_pipeline, PipelineConfig, PipelineReport};
use qrng_core::randtest::{read_ascii_bits, run_battery, write_ascii_bits, TestReport};
use qrng_core::trace::{
    generate_gaussian_trace, parse_trace, read_codes_csv, write_codes_csv, write_trace,
    SampleTrace, TraceConfig,
};
use serde::Serialize;
use serde_json::Value;

use crate::cli::{
    AdcArgs, BandwidthArgs, BitFormat, BlockArgs, CmrrArgs, Command, CurveArgs, DetectorArgs,
    ExtractArgs, GainArgs, HminArgs, PipelineArgs, QcnrArgs, SimulateArgs, SpectrumArgs, SweepArgs,
    TestArgs, TraceArgs, TraceFormat,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::output::{csv_table, emit, json, read_file, write_atomic, Format};

/// Everything resolved from the global flags.
pub struct Context {
    pub cfg: RunConfig,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<EntropySource>,
}

impl Context {
    fn format_or(&self, default: Format) -> Format {
        self.format.unwrap_or(default)
    }

    fn emit(&self, bytes: &[u8]) -> Result<()> {
        emit(self.out.as_deref(), bytes)
    }

    fn required_out(&self, command: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::invalid("out", format!("{command} needs --out PATH")))
    }

    fn seed_source(&self) -> Result<(&EntropySource, String)> {
        let source = self.seed.as_ref().ok_or_else(|| {
            CliError::invalid(
                "seed",
                "pass --seed HEX for a reproducible Toeplitz seed or --platform-entropy",
            )
        })?;
        let label = match source {
            EntropySource::Seeded(key) => format!("chacha20:{key:#018x}"),
            EntropySource::Platform => "platform".to_string(),
            EntropySource::Fixed(_) => "fixed".to_string(),
        };
        Ok((source, label))
    }
}

pub fn run(command: &Command, ctx: &Context) -> Result<()> {
    match command {
        Command::Spectrum(a) => spectrum(a, ctx),
        Command::Gain(a) => gain(a, ctx),
        Command::Qcnr(a) => qcnr_cmd(a, ctx),
        Command::Bandwidth(a) => bandwidth(a, ctx),
        Command::Cmrr(a) => cmrr(a, ctx),
        Command::Sweep(a) => sweep(a, ctx),
        Command::Hmin(a) => hmin(a, ctx),
        Command::Curve(a) => curve(a, ctx),
        Command::Simulate(a) => simulate(a, ctx),
        Command::Extract(a) => extract(a, ctx),
        Command::Test(a) => test(a, ctx),
        Command::Pipeline(a) => pipeline(a, ctx),
    }
}

fn detector(ctx: &Context, overrides: &DetectorArgs) -> Result<DetectorConfig> {
    let mut cfg = ctx.cfg.detector.clone();
    overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// A single record as a one-row table or a JSON object.
fn record<T: Serialize>(ctx: &Context, header: &[&str], row: &T) -> Result<()> {
    let bytes = match ctx.format_or(Format::Json) {
        Format::Json => json(row)?,
        Format::Csv => csv_table(header, std::slice::from_ref(row))?,
    };
    ctx.emit(&bytes)
}

/// A nested report as JSON, or as `key,value` rows with dotted keys.
fn render_report<T: Serialize>(format: Format, value: &T) -> Result<Vec<u8>> {
    match format {
        Format::Json => json(value),
        Format::Csv => {
            let tree = serde_json::to_value(value).map_err(qrng_core::Error::from)?;
            let mut rows = Vec::new();
            flatten("", &tree, &mut rows);
            csv_table(&["key", "value"], &rows)
        }
    }
}

fn flatten(prefix: &str, v: &Value, rows: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, rows);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, rows);
            }
        }
        Value::String(s) => rows.push((prefix.to_string(), s.clone())),
        Value::Null => rows.push((prefix.to_string(), String::new())),
        other => rows.push((prefix.to_string(), other.to_string())),
    }
}

fn spectrum(a: &SpectrumArgs, ctx: &Context) -> Result<()> {
    let cfg = detector(ctx, &a.detector)?;
    let grid = log_grid(a.fmin, a.fmax, a.points_per_decade)?;
    let stages = OutputStages {
        shot: !a.no_shot,
        hpf: !a.no_hpf,
        second_stage: a.second_stage,
    };
    let spec = noise_spectrum(&cfg, &grid, Some(stages))?;
    let bytes = match ctx.format_or(Format::Csv) {
        Format::Json => json(&spec.rows())?,
        Format::Csv => {
            let header: Vec<&str> = SPECTRUM_CSV_HEADER.split(',').collect();
            csv_table(&header, &spec.rows())?
        }
    };
    ctx.emit(&bytes)
}

#[derive(Serialize)]
struct GainRow {
    freq_hz: f64,
    re_ohm: f64,
    im_ohm: f64,
    magnitude_ohm: f64,
    phase_deg: f64,
}

fn gain(a: &GainArgs, ctx: &Context) -> Result<()> {
    let cfg = detector(ctx, &a.detector)?;
    let rows = log_grid(a.fmin, a.fmax, a.points_per_decade)?
        .into_iter()
        .map(|f| {
            let g = tia_gain(&cfg, f)?;
            Ok(GainRow {
                freq_hz: f,
                re_ohm: g.re,
                im_ohm: g.im,
                magnitude_ohm: g.norm(),
                phase_deg: g.arg() * 180.0 / PI,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = match ctx.format_or(Format::Csv) {
        Format::Json => json(&rows)?,
        Format::Csv => csv_table(
            &["freq_hz", "re_ohm", "im_ohm", "magnitude_ohm", "phase_deg"],
            &rows,
        )?,
    };
    ctx.emit(&bytes)
}

#[derive(Serialize)]
struct QcnrRow {
    freq_hz: f64,
    photocurrent_a: f64,
    shot_a_rthz: f64,
    classical_a_rthz: f64,
    qcnr_db: f64,
}

fn qcnr_cmd(a: &QcnrArgs, ctx: &Context) -> Result<()> {
    let cfg = detector(ctx, &a.detector)?;
    let row = QcnrRow {
        freq_hz: a.freq,
        photocurrent_a: cfg.photocurrent,
        shot_a_rthz: shot_noise_density(cfg.photocurrent)?,
        classical_a_rthz: total_classical_density(&cfg, a.freq)?,
        qcnr_db: qcnr(&cfg, a.freq)?,
    };
    record(
        ctx,
        &[
            "freq_hz",
            "photocurrent_a",
            "shot_a_rthz",
            "classical_a_rthz",
            "qcnr_db",
        ],
        &row,
    )
}

#[derive(Serialize)]
struct BandwidthRow {
    bandwidth_hz: f64,
    feedback_resistance_ohm: f64,
    total_feedback_capacitance_f: f64,
    gain_bandwidth_hz: f64,
}

fn bandwidth(a: &BandwidthArgs, ctx: &Context) -> Result<()> {
    let cfg = detector(ctx, &a.detector)?;
    let row = BandwidthRow {
        bandwidth_hz: bandwidth_3db(&cfg)?,
        feedback_resistance_ohm: cfg.frontend.feedback_resistance,
        total_feedback_capacitance_f: cfg.frontend.total_feedback_capacitance(),
        gain_bandwidth_hz: cfg.frontend.gain_bandwidth,
    };
    record(
        ctx,
        &[
            "bandwidth_hz",
            "feedback_resistance_ohm",
            "total_feedback_capacitance_f",
            "gain_bandwidth_hz",
        ],
        &row,
    )
}

#[derive(Serialize)]
struct CmrrRow {
    split_a: f64,
    split_b: f64,
    mismatch: f64,
    cmrr_db: f64,
    /// The hardware detector was measured above this; a bound, not a model output.
    measured_lower_bound_db: f64,
}

fn cmrr(a: &CmrrArgs, ctx: &Context) -> Result<()> {
    let (split_a, split_b) = match a.imbalance {
        Some(x) => {
            if !(x.is_finite() && (0.0..1.0).contains(&x.abs())) {
                return Err(CliError::invalid(
                    "imbalance",
                    format!("must lie in (-1, 1), got {x}"),
                ));
            }
            ((1.0 + x) / 2.0, (1.0 - x) / 2.0)
        }
        None => (a.split_a, a.split_b),
    };
    let row = CmrrRow {
        split_a,
        split_b,
        mismatch: a.mismatch,
        cmrr_db: cmrr_from_imbalance(split_a, split_b, a.mismatch)?,
        measured_lower_bound_db: MEASURED_CMRR_LOWER_BOUND_DB,
    };
    record(
        ctx,
        &[
            "split_a",
            "split_b",
            "mismatch",
            "cmrr_db",
            "measured_lower_bound_db",
        ],
        &row,
    )
}

/// `points` values from `lo` to `hi` inclusive; a single point is `lo`.
fn spaced(field: &str, lo: f64, hi: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if points == 0 {
        return Err(CliError::invalid(field, "needs at least one point"));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo || (log && lo <= 0.0) {
        return Err(CliError::invalid(field, format!("bad range {lo} .. {hi}")));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            let t = k as f64 / last;
            if log {
                lo * (hi / lo).powf(t)
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect())
}

fn sweep(a: &SweepArgs, ctx: &Context) -> Result<()> {
    let cfg = detector(ctx, &a.detector)?;
    let rfs = spaced("rf_points", a.rf_min, a.rf_max, a.rf_points, true)?;
    let ctfs = spaced("ctf_points", a.ctf_min, a.ctf_max, a.ctf_points, false)?;
    let candidates: Vec<FeedbackCandidate> = sweep_feedback(&cfg, &rfs, &ctfs, a.min_bandwidth)?;
    let bytes = match ctx.format_or(Format::Csv) {
        Format::Json => json(&candidates)?,
        Format::Csv => csv_table(
            &[
                "feedback_resistance",
                "total_feedback_capacitance",
                "bandwidth_hz",
                "qcnr_db",
            ],
            &candidates,
        )?,
    };
    ctx.emit(&bytes)
}

fn apply_adc(base: &TraceConfig, a: &AdcArgs) -> Result<(GaussianNoiseModel, AdcModel)> {
    let model = GaussianNoiseModel::new(
        a.sigma_q.unwrap_or(base.model.sigma_q),
        a.sigma_e.unwrap_or(base.model.sigma_e),
    )?;
    let adc = AdcModel::new(
        a.range.unwrap_or(base.adc.range),
        a.bits.unwrap_or(base.adc.bits),
        a.convention.unwrap_or(base.adc.bin_convention),
    )?;
    Ok((model, adc))
}

#[derive(Serialize)]
struct HminRow {
    hmin_bits: f64,
    quadrature_error_bits: f64,
    sigma_q: f64,
    sigma_e: f64,
    range: f64,
    bits: u32,
    convention: &'static str,
}

impl From<&EntropyEstimate> for HminRow {
    fn from(e: &EntropyEstimate) -> Self {
        Self {
            hmin_bits: e.hmin,
            quadrature_error_bits: e.quadrature_error,
            sigma_q: e.model.sigma_q,
            sigma_e: e.model.sigma_e,
            range: e.adc.range,
            bits: e.adc.bits,
            convention: e.adc.bin_convention.as_str(),
        }
    }
}

fn hmin(a: &HminArgs, ctx: &Context) -> Result<()> {
    let (model, adc) = apply_adc(&ctx.cfg.trace, &a.adc)?;
    let est = average_min_entropy(&model, &adc, &ctx.cfg.integration)?;
    record(
        ctx,
        &[
            "hmin_bits",
            "quadrature_error_bits",
            "sigma_q",
            "sigma_e",
            "range",
            "bits",
            "convention",
        ],
        &HminRow::from(&est),
    )
}

#[derive(Serialize)]
struct CurveReport {
    qcnr_db: f64,
    bits: u32,
    convention: &'static str,
    peak: Option<CurvePoint>,
    points: Vec<CurvePoint>,
}

fn curve(a: &CurveArgs, ctx: &Context) -> Result<()> {
    let model = &ctx.cfg.trace.model;
    let ratio = a.noise_ratio.unwrap_or(model.sigma_q / model.sigma_e);
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(CliError::invalid(
            "noise_ratio",
            format!("must be finite and > 0, got {ratio}"),
        ));
    }
    if !(a.step.is_finite() && a.step > 0.0) {
        return Err(CliError::invalid(
            "step",
            format!("must be finite and > 0, got {}", a.step),
        ));
    }
    if !(a.from.is_finite() && a.to.is_finite() && a.from <= a.to) {
        return Err(CliError::invalid(
            "to",
            format!("must be >= from ({}), got {}", a.from, a.to),
        ));
    }
    let count = ((a.to - a.from) / a.step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|k| a.from + k as f64 * a.step).collect();
    let bits = a.bits.unwrap_or(ctx.cfg.trace.adc.bits);
    let convention = a.convention.unwrap_or(ctx.cfg.trace.adc.bin_convention);
    let qcnr_db = 20.0 * ratio.log10();
    let points = hmin_curve(qcnr_db, &grid, bits, convention)?;
    let bytes = match ctx.format_or(Format::Csv) {
        Format::Json => json(&CurveReport {
            qcnr_db,
            bits,
            convention: convention.as_str(),
            peak: curve_peak(&points),
            points,
        })?,
        Format::Csv => csv_table(&["ratio", "hmin_bits"], &points)?,
    };
    ctx.emit(&bytes)
}

fn trace_config(ctx: &Context, a: &TraceArgs) -> Result<TraceConfig> {
    let base = &ctx.cfg.trace;
    let (model, adc) = apply_adc(base, &a.adc)?;
    let cfg = TraceConfig {
        model,
        adc,
        sample_rate: a.sample_rate.unwrap_or(base.sample_rate),
        sample_count: a.samples.unwrap_or(base.sample_count),
        rng_seed: a.rng_seed.unwrap_or(base.rng_seed),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct TraceStats {
    path: String,
    format: &'static str,
    sample_count: usize,
    sample_rate_hz: f64,
    rng_seed: u64,
    clipped_fraction: f64,
    mean_v: f64,
    sd_v: f64,
}

fn trace_stats(trace: &SampleTrace, path: &Path, format: TraceFormat) -> TraceStats {
    let volts = trace.volts();
    let n = volts.len() as f64;
    let mean = volts.iter().sum::<f64>() / n;
    let var = volts.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let cfg = &trace.metadata.config;
    TraceStats {
        path: path.display().to_string(),
        format: match format {
            TraceFormat::Qrt => "qrt",
            TraceFormat::Csv => "csv",
        },
        sample_count: trace.len(),
        sample_rate_hz: cfg.sample_rate,
        rng_seed: cfg.rng_seed,
        clipped_fraction: trace.clipped_fraction(),
        mean_v: mean,
        sd_v: var.sqrt(),
    }
}

fn save_trace_as(trace: &SampleTrace, path: &Path, format: TraceFormat) -> Result<()> {
    write_atomic(path, |w| {
        match format {
            TraceFormat::Qrt => write_trace(trace, w)?,
            TraceFormat::Csv => write_codes_csv(&trace.codes, w)?,
        }
        Ok(())
    })
}

fn simulate(a: &SimulateArgs, ctx: &Context) -> Result<()> {
    let path = ctx.required_out("simulate")?;
    let cfg = trace_config(ctx, &a.trace)?;
    let trace = generate_gaussian_trace(&cfg)?;
    save_trace_as(&trace, path, a.trace_format)?;
    let stats = trace_stats(&trace, path, a.trace_format);
    // The trace went to --out; the summary goes to stdout.
    emit(None, &render_report(ctx.format_or(Format::Json), &stats)?)
}

fn block_settings(ctx: &Context, a: &BlockArgs) -> Result<(usize, u32)> {
    let spb = a
        .samples_per_block
        .unwrap_or(ctx.cfg.extractor.samples_per_block);
    if spb == 0 {
        return Err(CliError::invalid("samples_per_block", "must be >= 1"));
    }
    Ok((
        spb,
        a.security_log2.unwrap_or(ctx.cfg.extractor.security_log2),
    ))
}

fn infer_trace_format(path: &Path) -> TraceFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => TraceFormat::Csv,
        _ => TraceFormat::Qrt,
    }
}

#[derive(Serialize)]
struct ExtractReport {
    input: String,
    input_samples: usize,
    adc_bits: u32,
    hmin_bits_per_sample: f64,
    hmin_source: &'static str,
    seed_source: String,
    #[serde(flatten)]
    stream: StreamReport,
}

fn extract(a: &ExtractArgs, ctx: &Context) -> Result<()> {
    let out = ctx.required_out("extract")?;
    let (source, seed_label) = ctx.seed_source()?;
    let (spb, security_log2) = block_settings(ctx, &a.block)?;

    let format = a
        .input_format
        .unwrap_or_else(|| infer_trace_format(&a.input));
    let (codes, model, adc) = match format {
        TraceFormat::Qrt => {
            let trace = parse_trace(&read_file(&a.input)?)?;
            let cfg = trace.metadata.config;
            (trace.codes, cfg.model, cfg.adc)
        }
        TraceFormat::Csv => {
            let base = &ctx.cfg.trace;
            let bits = a.bits.unwrap_or(base.adc.bits);
            let adc = AdcModel::new(base.adc.range, bits, base.adc.bin_convention)?;
            let file = File::open(&a.input).map_err(|e| CliError::io(&a.input, e))?;
            (read_codes_csv(BufReader::new(file), bits)?, base.model, adc)
        }
    };
    let (hmin, hmin_source) = match a.hmin {
        Some(h) => (h, "flag"),
        None => (
            average_min_entropy(&model, &adc, &ctx.cfg.integration)?.hmin,
            "model",
        ),
    };
    let m = output_length(spb, adc.bits, hmin, security_log2)?;
    let n = spb * adc.bits as usize;
    let seed = generate_seed(ExtractorParams::seed_len(n, m), source)?;
    let extractor = ToeplitzExtractor::new(ExtractorParams::new(n, m, security_log2, seed)?)?;

    let mut stream = None;
    write_atomic(out, |w| {
        stream = Some(stream_extract(
            codes.iter().map(|&c| Ok(c)),
            adc.bits,
            &extractor,
            w,
        )?);
        Ok(())
    })?;
    let report_row = ExtractReport {
        input: a.input.display().to_string(),
        input_samples: codes.len(),
        adc_bits: adc.bits,
        hmin_bits_per_sample: hmin,
        hmin_source,
        seed_source: seed_label,
        stream: stream.expect("filled by the writer"),
    };
    emit(
        None,
        &render_report(ctx.format_or(Format::Json), &report_row)?,
    )
}

fn read_bits(a: &TestArgs) -> Result<Vec<bool>> {
    let format = a.input_format.unwrap_or_else(|| {
        match a
            .input
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("txt" | "asc" | "ascii") => BitFormat::Ascii,
            _ => BitFormat::Bytes,
        }
    });
    let mut bits = match format {
        BitFormat::Bytes => {
            let bytes = read_file(&a.input)?;
            BitBlock::from_bytes(&bytes, bytes.len() * 8)?.to_bools()
        }
        BitFormat::Ascii => {
            let file = File::open(&a.input).map_err(|e| CliError::io(&a.input, e))?;
            read_ascii_bits(BufReader::new(file))?
        }
    };
    if let Some(count) = a.bit_count {
        if count > bits.len() {
            return Err(CliError::invalid(
                "bit_count",
                format!(
                    "{} holds only {} bits, asked for {count}",
                    a.input.display(),
                    bits.len()
                ),
            ));
        }
        bits.truncate(count);
    }
    Ok(bits)
}

#[derive(Serialize)]
struct TestRow<'a> {
    name: &'a str,
    statistic: f64,
    p_value: f64,
    pass: bool,
    p_values: String,
}

fn test(a: &TestArgs, ctx: &Context) -> Result<()> {
    let mut battery = ctx.cfg.battery;
    if let Some(alpha) = a.alpha {
        battery.alpha = alpha;
    }
    if let Some(b) = a.block_len {
        battery.block_len = b;
    }
    if a.serial_m.is_some() {
        battery.serial_m = a.serial_m;
    }
    battery.validate()?;
    let bits = read_bits(a)?;
    if let Some(path) = &a.export_ascii {
        write_atomic(path, |w| Ok(write_ascii_bits(&bits, w)?))?;
    }
    let report: TestReport = run_battery(&bits, &battery)?;
    let bytes = match ctx.format_or(Format::Csv) {
        Format::Json => json(&report)?,
        Format::Csv => {
            let rows: Vec<TestRow> = report
                .results
                .iter()
                .map(|r| TestRow {
                    name: &r.name,
                    statistic: r.statistic,
                    p_value: r.p_value,
                    pass: r.pass,
                    p_values: r
                        .p_values
                        .iter()
                        .map(f64::to_string)
                        .collect::<Vec<_>>()
                        .join(";"),
                })
                .collect();
            csv_table(&["name", "statistic", "p_value", "pass", "p_values"], &rows)?
        }
    };
    ctx.emit(&bytes)
}

#[derive(Serialize)]
struct PipelineView<'a> {
    seed_source: String,
    #[serde(flatten)]
    report: &'a PipelineReport,
}

fn pipeline(a: &PipelineArgs, ctx: &Context) -> Result<()> {
    let (source, seed_label) = ctx.seed_source()?;
    let (samples_per_block, security_log2) = block_settings(ctx, &a.block)?;
    let cfg = PipelineConfig {
        trace: trace_config(ctx, &a.trace)?,
        samples_per_block,
        security_log2,
        integration: ctx.cfg.integration,
        battery: ctx.cfg.battery,
    };
    let result = run_pipeline(&cfg, source)?;
    if let Some(path) = &a.trace_out {
        save_trace_as(&result.trace, path, TraceFormat::Qrt)?;
    }
    if let Some(path) = &a.bits_out {
        write_atomic(path, |w| {
            w.write_all(&result.output)
                .map_err(|e| CliError::io(path, e))
        })?;
    }
    let view = PipelineView {
        seed_source: seed_label,
        report: &result.report,
    };
    ctx.emit(&render_report(ctx.format_or(Format::Json), &view)?)
}
