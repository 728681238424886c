//! Standard normal density and distribution functions.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Values below this are treated as exactly zero.
pub const DENSITY_FLUSH: f64 = 1e-300;

#[inline]
pub fn pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[inline]
pub fn ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * PI).ln()
}

/// Φ(z), computed through erfc so the lower tail keeps relative accuracy.
#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// 1 − Φ(z) without cancellation.
#[inline]
pub fn sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// Density of N(mean, sd²) at `y`; `sd` must be positive.
#[inline]
pub fn density(y: f64, mean: f64, sd: f64) -> f64 {
    pdf((y - mean) / sd) / sd
}

#[inline]
pub fn flush(v: f64) -> f64 {
    if v < DENSITY_FLUSH {
        0.0
    } else {
        v
    }
}

/// Inverse of Φ by bisection on the monotone cdf. Only used for grid setup.
pub fn quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0, 1)");
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
