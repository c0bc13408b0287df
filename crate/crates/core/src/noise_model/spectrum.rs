use std::io::Write;

use serde::{Deserialize, Serialize};

use super::circuit::bandwidth_3db;
use super::density::{densities_unchecked, output_unchecked, qcnr_unchecked, shot_unchecked};
use super::power::dbm_unchecked;
use super::{DetectorConfig, OutputStages};
use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

pub const DEFAULT_POINTS_PER_DECADE: usize = 50;

/// Frequency inside the flat region at which sweeps rank QCNR.
pub const QCNR_REFERENCE_FREQUENCY_HZ: f64 = 1e5;

pub const SPECTRUM_CSV_HEADER: &str =
    "freq_hz,i_pdt,i_pdd,i_rft,i_nc,i_nv,i_total,i_shot,u_out_v_rthz,s_dbm_hz";

/// Per-source and total noise densities on a frequency grid.
///
/// `total_classical[k]` is the root-sum-square of the five source densities
/// at `frequencies[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpectrum {
    pub frequencies: Vec<f64>,
    pub i_pdt: Vec<f64>,
    pub i_pdd: Vec<f64>,
    pub i_rft: Vec<f64>,
    pub i_nc: Vec<f64>,
    pub i_nv: Vec<f64>,
    pub total_classical: Vec<f64>,
    pub shot: Vec<f64>,
    /// Output voltage density, V/√Hz, when output stages were requested.
    pub output_voltage: Option<Vec<f64>>,
    /// Analyzer power density of `output_voltage`, dBm/Hz.
    pub power_dbm_per_hz: Option<Vec<f64>>,
}

/// One CSV/JSON record of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub freq_hz: f64,
    pub i_pdt: f64,
    pub i_pdd: f64,
    pub i_rft: f64,
    pub i_nc: f64,
    pub i_nv: f64,
    pub i_total: f64,
    pub i_shot: f64,
    pub u_out_v_rthz: Option<f64>,
    pub s_dbm_hz: Option<f64>,
}

impl NoiseSpectrum {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    pub fn rows(&self) -> Vec<SpectrumRow> {
        (0..self.len())
            .map(|k| SpectrumRow {
                freq_hz: self.frequencies[k],
                i_pdt: self.i_pdt[k],
                i_pdd: self.i_pdd[k],
                i_rft: self.i_rft[k],
                i_nc: self.i_nc[k],
                i_nv: self.i_nv[k],
                i_total: self.total_classical[k],
                i_shot: self.shot[k],
                u_out_v_rthz: self.output_voltage.as_ref().map(|u| u[k]),
                s_dbm_hz: self.power_dbm_per_hz.as_ref().map(|s| s[k]),
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.rows() {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON array of [`SpectrumRow`] objects.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows())?)
    }
}

/// Log-spaced grid from `fmin` to `fmax` inclusive.
pub fn log_grid(fmin: f64, fmax: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    ensure_positive("fmin", fmin)?;
    ensure_positive("fmax", fmax)?;
    if fmax <= fmin {
        return Err(Error::param(
            "fmax",
            format!("must exceed fmin ({fmin}), got {fmax}"),
        ));
    }
    if points_per_decade == 0 {
        return Err(Error::param("points_per_decade", "must be >= 1"));
    }
    let ratio = fmax / fmin;
    let steps = ((ratio.log10() * points_per_decade as f64).round() as usize).max(1);
    let mut grid: Vec<f64> = (0..steps)
        .map(|k| fmin * ratio.powf(k as f64 / steps as f64))
        .collect();
    grid.push(fmax);
    Ok(grid)
}

/// Evaluates every noise density on `grid`. Output voltage and analyzer power
/// are included when `stages` is given.
pub fn noise_spectrum(
    cfg: &DetectorConfig,
    grid: &[f64],
    stages: Option<OutputStages>,
) -> Result<NoiseSpectrum> {
    cfg.validate()?;
    for (k, &f) in grid.iter().enumerate() {
        ensure_positive("frequency", f)?;
        if k > 0 && f <= grid[k - 1] {
            return Err(Error::param(
                "frequency",
                format!("grid must be strictly increasing (index {k})"),
            ));
        }
    }

    let n = grid.len();
    let mut spec = NoiseSpectrum {
        frequencies: grid.to_vec(),
        i_pdt: Vec::with_capacity(n),
        i_pdd: Vec::with_capacity(n),
        i_rft: Vec::with_capacity(n),
        i_nc: Vec::with_capacity(n),
        i_nv: Vec::with_capacity(n),
        total_classical: Vec::with_capacity(n),
        shot: Vec::with_capacity(n),
        output_voltage: stages.map(|_| Vec::with_capacity(n)),
        power_dbm_per_hz: stages.map(|_| Vec::with_capacity(n)),
    };
    let shot = shot_unchecked(cfg.photocurrent);
    for &f in grid {
        let d = densities_unchecked(cfg, f);
        spec.i_pdt.push(d.i_pdt);
        spec.i_pdd.push(d.i_pdd);
        spec.i_rft.push(d.i_rft);
        spec.i_nc.push(d.i_nc);
        spec.i_nv.push(d.i_nv);
        spec.total_classical.push(d.total());
        spec.shot.push(shot);
        if let Some(stages) = stages {
            let u = output_unchecked(cfg, f, stages);
            spec.output_voltage.as_mut().unwrap().push(u);
            spec.power_dbm_per_hz
                .as_mut()
                .unwrap()
                .push(dbm_unchecked(u, cfg.load_resistance));
        }
    }
    Ok(spec)
}

/// A feasible feedback network from [`sweep_feedback`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCandidate {
    pub feedback_resistance: f64,
    pub total_feedback_capacitance: f64,
    pub bandwidth_hz: f64,
    /// QCNR at [`QCNR_REFERENCE_FREQUENCY_HZ`].
    pub qcnr_db: f64,
}

/// Grid search over `R_F × C_TF`. Candidates whose bandwidth reaches
/// `min_bandwidth` are returned best QCNR first; an empty list means nothing
/// was feasible.
///
/// Each `C_TF` value is applied as pure parasitic (`C_F = 0`).
pub fn sweep_feedback(
    cfg: &DetectorConfig,
    feedback_resistances: &[f64],
    feedback_capacitances: &[f64],
    min_bandwidth: f64,
) -> Result<Vec<FeedbackCandidate>> {
    cfg.validate()?;
    if feedback_resistances.is_empty() {
        return Err(Error::param("feedback_resistances", "range is empty"));
    }
    if feedback_capacitances.is_empty() {
        return Err(Error::param("feedback_capacitances", "range is empty"));
    }
    ensure_non_negative("min_bandwidth", min_bandwidth)?;

    let mut out = Vec::new();
    for &r_f in feedback_resistances {
        ensure_positive("feedback_resistances", r_f)?;
        for &c_tf in feedback_capacitances {
            ensure_non_negative("feedback_capacitances", c_tf)?;
            let mut trial = cfg.clone();
            trial.frontend.feedback_resistance = r_f;
            trial.frontend.feedback_capacitance = 0.0;
            trial.frontend.feedback_parasitic = c_tf;
            let bandwidth_hz = match bandwidth_3db(&trial) {
                Ok(bw) => bw,
                Err(Error::BandwidthNotFound { .. }) => continue,
                Err(e) => return Err(e),
            };
            if bandwidth_hz < min_bandwidth {
                continue;
            }
            out.push(FeedbackCandidate {
                feedback_resistance: r_f,
                total_feedback_capacitance: c_tf,
                bandwidth_hz,
                qcnr_db: qcnr_unchecked(&trial, QCNR_REFERENCE_FREQUENCY_HZ),
            });
        }
    }
    out.sort_by(|a, b| b.qcnr_db.total_cmp(&a.qcnr_db));
    Ok(out)
}
