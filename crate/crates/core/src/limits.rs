//! Predicted limits of the GMLE in the inconsistent regimes, and the η
//! fixed point that locates the boundary band of the symmetric case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Location, MixingDistribution};
use crate::normal;
use crate::quadrature;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSolution {
    pub c: f64,
    pub b: f64,
    pub eta: f64,
    pub residual: f64,
}

fn eta_gap(eta: f64, c: f64, b: f64) -> f64 {
    eta - c * (-c * (c - eta) / (b * b)).exp()
}

/// Smallest root in `(0, c)` of `η = c·exp(−c(c−η)/b²)`.
///
/// `η = c` always solves the equation. For `c > b` the map
/// `g(η) = η − c·e^{−c(c−η)/b²}` is concave, negative at 0 and positive at
/// its maximiser `c − (b²/c)·ln(c²/b²)`; the interior root lies below that.
pub fn solve_eta(c: f64, b: f64) -> Result<EtaSolution> {
    check_eta_args(c, b)?;
    let peak = c - (b * b / c) * (c * c / (b * b)).ln();
    solve_eta_bracketed(c, b, 0.0, peak)
}

/// Bisection for the root of `g` inside `[lo, hi]`, which must bracket a
/// sign change.
pub fn solve_eta_bracketed(c: f64, b: f64, lo: f64, hi: f64) -> Result<EtaSolution> {
    check_eta_args(c, b)?;
    let (mut lo, mut hi) = (lo.max(0.0), hi.min(c));
    let (glo, ghi) = (eta_gap(lo, c, b), eta_gap(hi, c, b));
    if !(glo < 0.0 && ghi > 0.0) {
        return Err(Error::NoInteriorRoot { c, b });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if eta_gap(mid, c, b) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rlo, rhi) = (eta_gap(lo, c, b), eta_gap(hi, c, b));
    let (eta, residual) = if rlo.abs() <= rhi.abs() { (lo, rlo) } else { (hi, rhi) };
    Ok(EtaSolution { c, b, eta, residual })
}

fn check_eta_args(c: f64, b: f64) -> Result<()> {
    if !(c.is_finite() && b.is_finite() && c > 0.0 && b > 0.0) {
        return Err(Error::InvalidConfig("c and b must be positive and finite".into()));
    }
    if c <= b {
        return Err(Error::NoInteriorRoot { c, b });
    }
    Ok(())
}

/// `F(y ∧ 0) + (1 − F(0))·Φ(y)` for the half-line family with `S = {0, 1}`.
pub fn limit_cdf_halfline<F: Fn(f64) -> f64>(y: f64, f_truth: F) -> f64 {
    f_truth(y.min(0.0)) + (1.0 - f_truth(0.0)) * normal::cdf(y)
}

/// Predicted limit of the location marginal of the symmetric-family GMLE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricLimit {
    pub c: f64,
    pub b: f64,
    pub eta: f64,
    /// Mass on `(−c+η, c−η)`.
    pub interior_mass: f64,
    /// Mass on `[c−η, c]`, and likewise on its mirror.
    pub band_mass_per_side: f64,
    /// Location cdf of the limit on the interior grid.
    pub interior_grid: Vec<f64>,
    pub interior_cdf: Vec<f64>,
}

/// Symmetrised `F` on the interior, with the mass of `(c−η, c)`, of its
/// mirror and of `|Y| > c` collected in the two bands:
/// `½F(c−η, c) + ½F(−c, −c+η) + ½F(|Y| > c)` per side.
pub fn limit_mixing_symmetric<F: Fn(f64) -> f64>(
    f_truth: F,
    c: f64,
    b: f64,
    grid_points: usize,
) -> Result<SymmetricLimit> {
    let eta = solve_eta(c, b)?.eta;
    let inner = c - eta;
    let (f_c, f_mc, f_in, f_min) = (f_truth(c), f_truth(-c), f_truth(inner), f_truth(-inner));
    let band = 0.5 * (f_c - f_in) + 0.5 * (f_min - f_mc) + 0.5 * (1.0 - f_c + f_mc);
    let interior = f_in - f_min;
    let interior_grid = crate::solver::linspace(-inner, inner, grid_points.max(2));
    let interior_cdf = interior_grid
        .iter()
        .map(|&x| band + 0.5 * (f_truth(x) - f_min) + 0.5 * (f_in - f_truth(-x)))
        .collect();
    Ok(SymmetricLimit {
        c,
        b,
        eta,
        interior_mass: interior,
        band_mass_per_side: band,
        interior_grid,
        interior_cdf,
    })
}

/// `∫_{−∞}^0 φ(y−x)φ(x) dx = (1/√2)·φ(y/√2)·Φ(−y/√2)`.
pub fn truncnorm_conv_density(y: f64) -> f64 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    r * normal::pdf(y * r) * normal::cdf(-y * r)
}

/// `½Φ(y∧0) + ¼ − ¼Φ²(−y/√2) + ½Φ(y)`: the independence-model limit for a
/// standard normal truth.
pub fn limit_cdf_independent_gaussian(y: f64) -> f64 {
    let t = normal::cdf(-y * std::f64::consts::FRAC_1_SQRT_2);
    0.5 * normal::cdf(y.min(0.0)) + 0.25 - 0.25 * t * t + 0.5 * normal::cdf(y)
}

/// `F(0)F(y∧0) + (1−F(0))∫_{−∞}^0 Φ(y−x) dF(x) + (1−F(0))Φ(y)`, with `F` the
/// observable cdf of the mixture `truth`.
pub fn limit_cdf_independent_general(y: f64, truth: &MixingDistribution) -> Result<f64> {
    let f0 = truth.cdf(0.0);
    let weighted = truth
        .atoms()
        .iter()
        .map(|a| -> Result<f64> {
            let sd = a.total_sd();
            let m = a.location.center();
            if sd == 0.0 {
                return Ok(if m <= 0.0 { a.weight * normal::cdf(y - m) } else { 0.0 });
            }
            let lo = m - 12.0 * sd;
            let hi = (m + 12.0 * sd).min(0.0);
            if lo >= hi {
                return Ok(0.0);
            }
            let v = quadrature::integrate(
                |x| normal::cdf(y - x) * normal::density(x, m, sd),
                lo,
                hi,
                1e-11,
            )?;
            Ok(a.weight * v)
        })
        .collect::<Result<Vec<f64>>>()?;
    let integral: f64 = weighted.iter().sum();
    let v = f0 * truth.cdf(y.min(0.0)) + (1.0 - f0) * integral + (1.0 - f0) * normal::cdf(y);
    Ok(v.clamp(0.0, 1.0))
}

/// Standard normal truth as a mixing distribution: a point mass at 0 with
/// unit scale.
pub fn standard_normal_truth() -> MixingDistribution {
    MixingDistribution::degenerate(Location::Point { x: 0.0 }, 1.0).expect("valid")
}
