use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;

use super::{ensure_frequency, DetectorConfig};
use crate::error::{ensure_non_negative, Error, Result};

pub const BANDWIDTH_SEARCH_MIN_HZ: f64 = 1.0;
pub const BANDWIDTH_SEARCH_MAX_HZ: f64 = 1e10;

const SCAN_POINTS_PER_DECADE: usize = 200;
const BISECTION_REL_TOL: f64 = 1e-6;

fn input_admittance(cfg: &DetectorConfig, f: f64) -> Complex64 {
    Complex64::new(
        2.0 / cfg.photodiode.shunt_resistance,
        2.0 * PI * f * cfg.total_input_capacitance(),
    )
}

fn feedback_admittance(cfg: &DetectorConfig, f: f64) -> Complex64 {
    Complex64::new(
        1.0 / cfg.frontend.feedback_resistance,
        2.0 * PI * f * cfg.frontend.total_feedback_capacitance(),
    )
}

/// `Z_IN`: half the photodiode shunt resistance in parallel with `C_TIN`.
pub fn input_impedance(cfg: &DetectorConfig, f: f64) -> Result<Complex64> {
    cfg.validate()?;
    ensure_frequency(f)?;
    Ok(input_admittance(cfg, f).inv())
}

/// `Z_F`: `R_F` in parallel with `C_TF`.
pub fn feedback_impedance(cfg: &DetectorConfig, f: f64) -> Result<Complex64> {
    cfg.validate()?;
    ensure_frequency(f)?;
    Ok(feedback_admittance(cfg, f).inv())
}

/// `|1/Z_IN + 1/Z_F|`, the factor converting TIA input voltage noise into an
/// equivalent input current noise.
pub(crate) fn noise_gain_admittance(cfg: &DetectorConfig, f: f64) -> f64 {
    (input_admittance(cfg, f) + feedback_admittance(cfg, f)).norm()
}

pub(crate) fn gain_unchecked(cfg: &DetectorConfig, f: f64) -> Complex64 {
    let y_f = feedback_admittance(cfg, f);
    let y_in = input_admittance(cfg, f);
    let jf_over_gbw = Complex64::new(0.0, f / cfg.frontend.gain_bandwidth);
    -(y_f + jf_over_gbw * (y_f + y_in)).inv()
}

/// Closed-loop transimpedance with a single-pole amplifier of finite GBW,
/// `G(f) = −1 / (1/Z_F + (if/GBW)(1/Z_F + 1/Z_IN))`, in V/A.
pub fn tia_gain(cfg: &DetectorConfig, f: f64) -> Result<Complex64> {
    cfg.validate()?;
    ensure_frequency(f)?;
    Ok(gain_unchecked(cfg, f))
}

/// The same gain written as `−R_F / polynomial(f)`.
///
/// The f² coefficient carries `C_TF + C_TIN`; dropping `C_TF` there does not
/// reproduce [`tia_gain`].
pub fn tia_gain_expanded(cfg: &DetectorConfig, f: f64) -> Result<Complex64> {
    cfg.validate()?;
    ensure_frequency(f)?;
    let r_f = cfg.frontend.feedback_resistance;
    let gbw = cfg.frontend.gain_bandwidth;
    let c_tf = cfg.frontend.total_feedback_capacitance();
    let c_tin = cfg.total_input_capacitance();
    let r_pd = cfg.photodiode.shunt_resistance;
    let re = 1.0 - 2.0 * PI * f * f * r_f * (c_tf + c_tin) / gbw;
    let im = f / gbw + f * r_f / gbw * (2.0 / r_pd) + 2.0 * PI * f * c_tf * r_f;
    Ok(-r_f / Complex64::new(re, im))
}

/// First-order high-pass response `(if/fc) / (1 + if/fc)`; `cutoff = 0` is a pass-through.
pub fn hpf_response(cutoff: f64, f: f64) -> Result<Complex64> {
    ensure_non_negative("hpf_cutoff", cutoff)?;
    ensure_frequency(f)?;
    Ok(hpf_unchecked(cutoff, f))
}

pub(crate) fn hpf_unchecked(cutoff: f64, f: f64) -> Complex64 {
    if cutoff == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let x = Complex64::new(0.0, f / cutoff);
    x / (1.0 + x)
}

/// Lowest frequency at which `|G(f)|` has dropped to `|G(0)|/√2`.
///
/// A log-spaced scan over `[1 Hz, 10 GHz]` brackets the first crossing, then
/// bisection narrows it to a relative width of 10⁻⁶.
pub fn bandwidth_3db(cfg: &DetectorConfig) -> Result<f64> {
    cfg.validate()?;
    let target = gain_unchecked(cfg, 0.0).norm() * FRAC_1_SQRT_2;
    let below = |f: f64| gain_unchecked(cfg, f).norm() < target;
    let not_found = Error::BandwidthNotFound {
        lo_hz: BANDWIDTH_SEARCH_MIN_HZ,
        hi_hz: BANDWIDTH_SEARCH_MAX_HZ,
    };

    if below(BANDWIDTH_SEARCH_MIN_HZ) {
        return Err(not_found);
    }
    let decades = (BANDWIDTH_SEARCH_MAX_HZ / BANDWIDTH_SEARCH_MIN_HZ).log10();
    let steps = (decades * SCAN_POINTS_PER_DECADE as f64).round() as usize;
    let mut lo = BANDWIDTH_SEARCH_MIN_HZ;
    let mut hi = None;
    for k in 1..=steps {
        let f = BANDWIDTH_SEARCH_MIN_HZ * 10f64.powf(k as f64 / SCAN_POINTS_PER_DECADE as f64);
        if below(f) {
            hi = Some(f);
            break;
        }
        lo = f;
    }
    let mut hi = hi.ok_or(not_found)?;
    while (hi - lo) > BISECTION_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if below(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
