use serde::{Deserialize, Serialize};

use super::circuit::{gain_unchecked, hpf_unchecked, noise_gain_admittance};
use super::{ensure_frequency, DetectorConfig};
use crate::constants::{BOLTZMANN, ELEMENTARY_CHARGE};
use crate::error::{ensure_non_negative, ensure_positive, Result};

/// Input-referred current noise densities of the classical sources, A/√Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceDensities {
    /// Thermal noise of the pair's shunt resistance `R_PD/2`.
    pub i_pdt: f64,
    /// Shot noise of the dark current through both diodes.
    pub i_pdd: f64,
    /// Thermal noise of `R_F`.
    pub i_rft: f64,
    /// Amplifier input current noise.
    pub i_nc: f64,
    /// Amplifier voltage noise referred to the input. `+inf` at DC when the
    /// flicker coefficient is nonzero.
    pub i_nv: f64,
}

impl SourceDensities {
    /// Root-sum-square of all five sources.
    pub fn total(&self) -> f64 {
        (self.i_pdt.powi(2)
            + self.i_pdd.powi(2)
            + self.i_nc.powi(2)
            + self.i_rft.powi(2)
            + self.i_nv.powi(2))
        .sqrt()
    }
}

/// Which stages contribute to an output voltage density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputStages {
    pub shot: bool,
    pub hpf: bool,
    pub second_stage: bool,
}

impl Default for OutputStages {
    fn default() -> Self {
        Self {
            shot: true,
            hpf: true,
            second_stage: false,
        }
    }
}

pub(crate) fn densities_unchecked(cfg: &DetectorConfig, f: f64) -> SourceDensities {
    let kt4 = 4.0 * BOLTZMANN * cfg.temperature;
    let fe = &cfg.frontend;
    let flicker = if fe.flicker_coefficient == 0.0 {
        0.0
    } else {
        fe.flicker_coefficient / f.sqrt()
    };
    let u_nv = fe.voltage_noise_white.hypot(flicker);
    SourceDensities {
        i_pdt: (kt4 / (cfg.photodiode.shunt_resistance / 2.0)).sqrt(),
        i_pdd: shot_unchecked(cfg.photodiode.dark_current),
        i_rft: (kt4 / fe.feedback_resistance).sqrt(),
        i_nc: fe.current_noise,
        i_nv: noise_gain_admittance(cfg, f) * u_nv,
    }
}

pub(crate) fn shot_unchecked(current: f64) -> f64 {
    (2.0 * ELEMENTARY_CHARGE * 2.0 * current).sqrt()
}

/// Current noise densities of every classical source at frequency `f`.
pub fn classical_source_densities(cfg: &DetectorConfig, f: f64) -> Result<SourceDensities> {
    cfg.validate()?;
    ensure_frequency(f)?;
    Ok(densities_unchecked(cfg, f))
}

/// Total classical (electronic) noise density at `f`.
pub fn total_classical_density(cfg: &DetectorConfig, f: f64) -> Result<f64> {
    classical_source_densities(cfg, f).map(|d| d.total())
}

/// Shot noise density `√(2e·2I)` of a photocurrent `I` flowing through the
/// series pair, A/√Hz.
pub fn shot_noise_density(photocurrent: f64) -> Result<f64> {
    ensure_non_negative("photocurrent", photocurrent)?;
    Ok(shot_unchecked(photocurrent))
}

/// Output voltage density at `f` in V/√Hz.
pub fn output_voltage_density(cfg: &DetectorConfig, f: f64, stages: OutputStages) -> Result<f64> {
    cfg.validate()?;
    ensure_positive("frequency", f)?;
    Ok(output_unchecked(cfg, f, stages))
}

pub(crate) fn output_unchecked(cfg: &DetectorConfig, f: f64, stages: OutputStages) -> f64 {
    let classical = densities_unchecked(cfg, f).total();
    let current = if stages.shot {
        classical.hypot(shot_unchecked(cfg.photocurrent))
    } else {
        classical
    };
    let mut u = current * gain_unchecked(cfg, f).norm();
    if stages.hpf {
        u *= hpf_unchecked(cfg.hpf_cutoff, f).norm();
    }
    if stages.second_stage {
        u *= cfg.second_stage_gain;
    }
    u
}

/// Quantum-to-classical noise ratio at `f`, dB.
///
/// Returns `-inf` when the photocurrent is zero.
pub fn qcnr(cfg: &DetectorConfig, f: f64) -> Result<f64> {
    cfg.validate()?;
    ensure_positive("frequency", f)?;
    Ok(qcnr_unchecked(cfg, f))
}

pub(crate) fn qcnr_unchecked(cfg: &DetectorConfig, f: f64) -> f64 {
    let shot = shot_unchecked(cfg.photocurrent);
    if shot == 0.0 {
        return f64::NEG_INFINITY;
    }
    20.0 * (shot / densities_unchecked(cfg, f).total()).log10()
}
