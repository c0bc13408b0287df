use crate::error::{ensure_non_negative, ensure_positive, Error, Result};

/// Returned by [`cmrr_from_imbalance`] for a perfectly balanced detector.
pub const CMRR_CAP_DB: f64 = 200.0;

/// The GeSi hybrid-chip detector was measured above this CMRR at 200 kHz,
/// 500 kHz and 1 MHz. A bound, not a simulated value.
pub const MEASURED_CMRR_LOWER_BOUND_DB: f64 = 40.0;

/// Spectrum-analyzer power density in dBm/Hz for a TIA output density `u`.
///
/// The TIA's 50 Ω output and the analyzer input form a divider, so the
/// analyzer sees `u/2` across `load`.
pub fn density_to_dbm_per_hz(u: f64, load: f64) -> Result<f64> {
    ensure_non_negative("voltage_density", u)?;
    ensure_positive("load_resistance", load)?;
    Ok(dbm_unchecked(u, load))
}

pub(crate) fn dbm_unchecked(u: f64, load: f64) -> f64 {
    let watts_per_hz = (u / 2.0).powi(2) / load;
    10.0 * (watts_per_hz / 1e-3).log10()
}

/// Power in dBm within a resolution bandwidth `rbw` (Hz) of a flat density `s` (dBm/Hz).
pub fn power_in_rbw(s: f64, rbw: f64) -> Result<f64> {
    if s.is_nan() {
        return Err(Error::param("density_dbm_per_hz", "is NaN"));
    }
    ensure_positive("rbw", rbw)?;
    Ok(s + 10.0 * rbw.log10())
}

/// Common-mode rejection from an imperfect splitter and photodiode mismatch.
///
/// The two arms receive `split_a·(1 + mismatch/2)` and `split_b·(1 − mismatch/2)`;
/// the CMRR is the sum over the absolute difference in dB, capped at
/// [`CMRR_CAP_DB`].
pub fn cmrr_from_imbalance(split_a: f64, split_b: f64, responsivity_mismatch: f64) -> Result<f64> {
    ensure_positive("split_a", split_a)?;
    ensure_positive("split_b", split_b)?;
    if !(responsivity_mismatch.is_finite() && responsivity_mismatch.abs() < 2.0) {
        return Err(Error::param(
            "responsivity_mismatch",
            format!("must lie in (-2, 2), got {responsivity_mismatch}"),
        ));
    }
    let p_a = split_a * (1.0 + responsivity_mismatch / 2.0);
    let p_b = split_b * (1.0 - responsivity_mismatch / 2.0);
    let diff = (p_a - p_b).abs();
    if diff == 0.0 {
        return Ok(CMRR_CAP_DB);
    }
    Ok((20.0 * ((p_a + p_b) / diff).log10()).min(CMRR_CAP_DB))
}
