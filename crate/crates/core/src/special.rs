//! Special functions shared by the entropy estimator and the test battery.
//!
//! `erf`/`erfc` come from `libm` and the regularized incomplete gamma
//! function from `statrs`; this module adds the edge handling the callers rely on
//! (infinite arguments, `x = 0` for the gamma tail, cancellation-free
//! interval masses).

use std::f64::consts::SQRT_2;

pub use libm::{erf, erfc};

/// Upper regularized incomplete gamma `Q(a, x)`, the `igamc` of the
/// SP 800-22 reference code. Defined as 1 at `x <= 0` and 0 at `x = inf`.
pub fn igamc(a: f64, x: f64) -> f64 {
    if x.is_nan() || a.is_nan() {
        return f64::NAN;
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    statrs::function::gamma::gamma_ur(a, x).clamp(0.0, 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal mass on `[lo, hi]` (either bound may be infinite).
///
/// When both bounds sit on the same side of zero the mass is formed from the
/// tail on that side so narrow intervals far from the mean keep their
/// relative precision.
pub fn normal_interval_mass(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    let mass = if lo >= 0.0 {
        0.5 * (erfc(lo / SQRT_2) - erfc(hi / SQRT_2))
    } else if hi <= 0.0 {
        0.5 * (erfc(-hi / SQRT_2) - erfc(-lo / SQRT_2))
    } else {
        0.5 * (erf(hi / SQRT_2) - erf(lo / SQRT_2))
    };
    mass.max(0.0)
}
