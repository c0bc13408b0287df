//! Analog noise model of a balanced homodyne detector (BHD) built from two
//! series photodiodes and a transimpedance amplifier (TIA).
//!
//! Every noise source is referred to the TIA input as a current density in
//! A/√Hz so sources can be compared directly; output voltage densities follow
//! by multiplying with the TIA gain magnitude. All quantities are SI.

mod circuit;
mod density;
mod power;
mod spectrum;

pub use circuit::{
    bandwidth_3db, feedback_impedance, hpf_response, input_impedance, tia_gain, tia_gain_expanded,
    BANDWIDTH_SEARCH_MAX_HZ, BANDWIDTH_SEARCH_MIN_HZ,
};
pub use density::{
    classical_source_densities, output_voltage_density, qcnr, shot_noise_density,
    total_classical_density, OutputStages, SourceDensities,
};
pub use power::{
    cmrr_from_imbalance, density_to_dbm_per_hz, power_in_rbw, CMRR_CAP_DB,
    MEASURED_CMRR_LOWER_BOUND_DB,
};
pub use spectrum::{
    log_grid, noise_spectrum, sweep_feedback, FeedbackCandidate, NoiseSpectrum, SpectrumRow,
    DEFAULT_POINTS_PER_DECADE, QCNR_REFERENCE_FREQUENCY_HZ, SPECTRUM_CSV_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// One photodiode of the series pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotodiodeModel {
    /// Shunt resistance `R_PD`, Ω.
    pub shunt_resistance: f64,
    /// Junction capacitance `C_PD`, F.
    pub junction_capacitance: f64,
    /// Dark current `I_PDD`, A.
    pub dark_current: f64,
    #[serde(default)]
    pub label: String,
}

impl PhotodiodeModel {
    /// Hybrid-chip GeSi photodiode with the 4×10⁻⁸ A dark current measured at 2 V bias.
    pub fn gesi() -> Self {
        Self {
            shunt_resistance: 2.47e6,
            junction_capacitance: 40e-15,
            dark_current: 4e-8,
            label: "GeSi".into(),
        }
    }

    /// GeSi variant with 5×10⁻⁸ A dark current, which gives a
    /// 1.790×10⁻¹³ A/√Hz dark-current noise density.
    pub fn gesi_alt_dark() -> Self {
        Self {
            dark_current: 5e-8,
            label: "GeSi (5e-8 A dark current)".into(),
            ..Self::gesi()
        }
    }

    /// Commercial InGaAs photodiode. The dark current is back-derived from a
    /// 1.790×10⁻¹⁵ A/√Hz density and is not a measured value.
    pub fn ingaas() -> Self {
        Self {
            shunt_resistance: 1e11,
            junction_capacitance: 0.8e-12,
            dark_current: 5e-12,
            label: "InGaAs".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("photodiode.shunt_resistance", self.shunt_resistance)?;
        ensure_positive("photodiode.junction_capacitance", self.junction_capacitance)?;
        ensure_non_negative("photodiode.dark_current", self.dark_current)
    }
}

/// Transimpedance amplifier and its parasitics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontEndModel {
    /// `R_F`, Ω.
    pub feedback_resistance: f64,
    /// Discrete feedback capacitor `C_F`, F (0 when unpopulated).
    pub feedback_capacitance: f64,
    /// Feedback parasitic `C_FP`, F.
    pub feedback_parasitic: f64,
    /// Amplifier input capacitance `C_IN`, F.
    pub amp_input_capacitance: f64,
    /// Input circuit parasitic `C_INP`, F.
    pub input_parasitic: f64,
    /// Gain-bandwidth product, Hz. May be `inf` for an ideal amplifier.
    pub gain_bandwidth: f64,
    /// White input voltage noise, V/√Hz.
    pub voltage_noise_white: f64,
    /// 1/f voltage noise numerator, V; density is `flicker_coefficient / √f`.
    pub flicker_coefficient: f64,
    /// Input current noise `i_NC`, A/√Hz.
    pub current_noise: f64,
}

impl Default for FrontEndModel {
    fn default() -> Self {
        Self {
            feedback_resistance: 510e3,
            feedback_capacitance: 0.0,
            feedback_parasitic: 0.3e-12,
            amp_input_capacitance: 1.4e-12,
            input_parasitic: 6.62e-12,
            gain_bandwidth: 410e6,
            voltage_noise_white: 4e-9,
            flicker_coefficient: 553.25e-9,
            current_noise: 2.5e-15,
        }
    }
}

impl FrontEndModel {
    /// Total feedback capacitance `C_TF = C_F + C_FP`.
    pub fn total_feedback_capacitance(&self) -> f64 {
        self.feedback_capacitance + self.feedback_parasitic
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("frontend.feedback_resistance", self.feedback_resistance)?;
        ensure_non_negative("frontend.feedback_capacitance", self.feedback_capacitance)?;
        ensure_non_negative("frontend.feedback_parasitic", self.feedback_parasitic)?;
        ensure_positive("frontend.amp_input_capacitance", self.amp_input_capacitance)?;
        ensure_non_negative("frontend.input_parasitic", self.input_parasitic)?;
        if self.gain_bandwidth.is_nan() || self.gain_bandwidth <= 0.0 {
            return Err(Error::param(
                "frontend.gain_bandwidth",
                format!("must be > 0, got {}", self.gain_bandwidth),
            ));
        }
        ensure_positive("frontend.voltage_noise_white", self.voltage_noise_white)?;
        ensure_non_negative("frontend.flicker_coefficient", self.flicker_coefficient)?;
        ensure_positive("frontend.current_noise", self.current_noise)
    }
}

fn default_hpf_order() -> u32 {
    1
}

fn default_load_resistance() -> f64 {
    50.0
}

/// Complete detector operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub photodiode: PhotodiodeModel,
    pub frontend: FrontEndModel,
    /// K.
    pub temperature: f64,
    /// Photoelectron current of the series pair `I_PD`, A.
    pub photocurrent: f64,
    /// High-pass filter 3-dB frequency, Hz (0 disables the filter).
    pub hpf_cutoff: f64,
    /// Only first-order filters are modeled.
    #[serde(default = "default_hpf_order")]
    pub hpf_order: u32,
    /// Voltage gain of the post-TIA amplifier. Adds no noise.
    pub second_stage_gain: f64,
    /// Spectrum analyzer input resistance, Ω.
    #[serde(default = "default_load_resistance")]
    pub load_resistance: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::gesi_reference()
    }
}

impl DetectorConfig {
    /// GeSi hybrid-chip detector at 295 K and 1 µA.
    pub fn gesi_reference() -> Self {
        Self::with_photodiode(PhotodiodeModel::gesi())
    }

    /// GeSi detector with the 5×10⁻⁸ A dark-current variant.
    pub fn gesi_alt_dark() -> Self {
        Self::with_photodiode(PhotodiodeModel::gesi_alt_dark())
    }

    /// InGaAs comparison detector on the same TIA.
    pub fn ingaas_reference() -> Self {
        Self::with_photodiode(PhotodiodeModel::ingaas())
    }

    fn with_photodiode(photodiode: PhotodiodeModel) -> Self {
        Self {
            photodiode,
            frontend: FrontEndModel::default(),
            temperature: 295.0,
            photocurrent: 1e-6,
            hpf_cutoff: 1.6e3,
            hpf_order: 1,
            second_stage_gain: 10.0,
            load_resistance: 50.0,
        }
    }

    /// Total input capacitance `C_TIN = 2·C_PD + C_INP + C_IN`.
    pub fn total_input_capacitance(&self) -> f64 {
        2.0 * self.photodiode.junction_capacitance
            + self.frontend.input_parasitic
            + self.frontend.amp_input_capacitance
    }

    pub fn validate(&self) -> Result<()> {
        self.photodiode.validate()?;
        self.frontend.validate()?;
        ensure_positive("temperature", self.temperature)?;
        ensure_non_negative("photocurrent", self.photocurrent)?;
        ensure_non_negative("hpf_cutoff", self.hpf_cutoff)?;
        if self.hpf_order != 1 {
            return Err(Error::param(
                "hpf_order",
                format!(
                    "only first-order filters are modeled, got {}",
                    self.hpf_order
                ),
            ));
        }
        if !(self.second_stage_gain.is_finite() && self.second_stage_gain >= 1.0) {
            return Err(Error::param(
                "second_stage_gain",
                format!("must be >= 1, got {}", self.second_stage_gain),
            ));
        }
        ensure_positive("load_resistance", self.load_resistance)
    }
}

pub(crate) fn ensure_frequency(f: f64) -> Result<()> {
    ensure_non_negative("frequency", f)
}
