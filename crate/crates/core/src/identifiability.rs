//! Two distinct mixing distributions with the same observable mixture, and
//! the structural check for location laws that carry no normal factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Atom, Location, MixingDistribution};
use crate::solver::linspace;

/// Wraps the scale support of `pi_bar` around its midpoint
/// `m = (a_bar + b_bar)/2`. Atoms at scale `t ≤ m` are kept. An atom at
/// `t > m` moves to scale `s = t − m` and its location law is convolved with
/// `N(0, δ(s))`, `δ(s) = s(a_bar + b_bar) + (a_bar + b_bar)²/4`, so that
/// `s² + δ(s) = t²` and the observable mixture is unchanged.
pub fn wrap_mixing(pi_bar: &MixingDistribution, a_bar: f64, b_bar: f64) -> Result<MixingDistribution> {
    if !(a_bar.is_finite() && b_bar.is_finite() && 0.0 < a_bar && a_bar < b_bar) {
        return Err(Error::InvalidConfig("need 0 < a_bar < b_bar".into()));
    }
    if let Some(a) = pi_bar.atoms().iter().find(|a| a.scale < a_bar || a.scale > b_bar) {
        return Err(Error::ScaleOutOfRange {
            scale: a.scale,
            lo: a_bar,
            hi: b_bar,
        });
    }
    let m = 0.5 * (a_bar + b_bar);
    let atoms = pi_bar
        .atoms()
        .iter()
        .map(|a| {
            if a.scale <= m {
                return *a;
            }
            let s = a.scale - m;
            let d = wrap_delta(s, a_bar, b_bar);
            Atom {
                location: Location::Blob {
                    mu: a.location.center(),
                    tau2: a.location.tau2() + d,
                },
                scale: s,
                weight: a.weight,
            }
        })
        .collect();
    MixingDistribution::new(atoms, pi_bar.is_symmetric())
}

/// `δ(s) = s(a_bar + b_bar) + (a_bar + b_bar)²/4`.
pub fn wrap_delta(s: f64, a_bar: f64, b_bar: f64) -> f64 {
    let w = a_bar + b_bar;
    s * w + 0.25 * w * w
}

/// Weight on atoms that [`wrap_mixing`] moves.
pub fn moved_weight(pi_bar: &MixingDistribution, a_bar: f64, b_bar: f64) -> f64 {
    let m = 0.5 * (a_bar + b_bar);
    pi_bar.atoms().iter().filter(|a| a.scale > m).map(|a| a.weight).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureGap {
    pub max_density_gap: f64,
    pub max_cdf_gap: f64,
}

/// Largest density and cdf differences of the two mixtures on a uniform grid.
pub fn densities_equal(
    pi1: &MixingDistribution,
    pi2: &MixingDistribution,
    grid_lo: f64,
    grid_hi: f64,
    n_points: usize,
) -> MixtureGap {
    let mut gap = MixtureGap {
        max_density_gap: 0.0,
        max_cdf_gap: 0.0,
    };
    for y in linspace(grid_lo, grid_hi, n_points) {
        gap.max_density_gap = gap.max_density_gap.max((pi1.density(y) - pi2.density(y)).abs());
        gap.max_cdf_gap = gap.max_cdf_gap.max((pi1.cdf(y) - pi2.cdf(y)).abs());
    }
    gap
}

/// Grid bounds covering both mixtures' effective supports.
pub fn joint_range(pi1: &MixingDistribution, pi2: &MixingDistribution) -> (f64, f64) {
    let (a, b) = (pi1.effective_range(), pi2.effective_range());
    (a.0.min(b.0), a.1.max(b.1))
}

/// `sup_s |P₁(S ≤ s) − P₂(S ≤ s)|`, evaluated at every atom scale of either
/// distribution (the scale marginals are step functions).
pub fn scale_marginal_distance(pi1: &MixingDistribution, pi2: &MixingDistribution) -> f64 {
    pi1.atoms()
        .iter()
        .chain(pi2.atoms())
        .map(|a| (pi1.scale_cdf(a.scale) - pi2.scale_cdf(a.scale)).abs())
        .fold(0.0, f64::max)
}

/// Whether the location law (marginal, or conditional on each scale when
/// `conditional`) contains a point mass. A finite mixture with an atom has
/// no normal convolution factor; a law made only of normal blobs has one.
pub fn is_ncn_structural(pi: &MixingDistribution, conditional: bool) -> bool {
    let atoms = pi.atoms();
    if !conditional {
        return atoms.iter().any(|a| matches!(a.location, Location::Point { .. }));
    }
    let mut scales: Vec<f64> = atoms.iter().map(|a| a.scale).collect();
    scales.sort_by(f64::total_cmp);
    scales.dedup();
    scales.iter().all(|&s| {
        atoms
            .iter()
            .any(|a| a.scale == s && matches!(a.location, Location::Point { .. }))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(location: Location, scale: f64) -> MixingDistribution {
        MixingDistribution::degenerate(location, scale).unwrap()
    }

    #[test]
    fn boundary_atom_is_kept() {
        let p = one(Location::Point { x: 0.0 }, 2.0);
        assert_eq!(wrap_mixing(&p, 1.0, 3.0).unwrap(), p);
    }

    #[test]
    fn single_atom_wrap() {
        let p = one(Location::Point { x: 1.0 }, 3.0);
        let w = wrap_mixing(&p, 1.0, 3.0).unwrap();
        assert_eq!(w.atoms(), &[Atom::blob(1.0, 8.0, 1.0, 1.0)]);
    }

    #[test]
    fn two_atom_wrap() {
        let p = MixingDistribution::new(
            vec![Atom::point(0.0, 1.2, 0.4), Atom::point(2.0, 2.8, 0.6)],
            false,
        )
        .unwrap();
        let w = wrap_mixing(&p, 1.0, 3.0).unwrap();
        let upper = w.atoms().iter().find(|a| a.scale != 1.2).unwrap();
        assert!((upper.scale - 0.8).abs() < 1e-15);
        assert!((upper.location.tau2() - 7.2).abs() < 1e-14);
        assert!((upper.scale.powi(2) + upper.location.tau2() - 2.8f64.powi(2)).abs() < 1e-13);
        let (lo, hi) = joint_range(&p, &w);
        assert!(densities_equal(&p, &w, lo, hi, 1000).max_density_gap <= 1e-12);
        assert!(scale_marginal_distance(&p, &w) >= moved_weight(&p, 1.0, 3.0) - 1e-15);
    }

    #[test]
    fn scale_out_of_range() {
        let p = one(Location::Point { x: 0.0 }, 0.5);
        assert_eq!(
            wrap_mixing(&p, 1.0, 3.0),
            Err(Error::ScaleOutOfRange {
                scale: 0.5,
                lo: 1.0,
                hi: 3.0
            })
        );
    }

    #[test]
    fn variance_identity_grid() {
        let (a, b) = (0.7, 2.9);
        let m = 0.5 * (a + b);
        for s in linspace(0.0, b - m, 1001) {
            let t = s + m;
            assert!((s * s + wrap_delta(s, a, b) - t * t).abs() <= 1e-14 * t * t);
        }
    }

    #[test]
    fn gaps_on_distinct_mixtures() {
        let p = one(Location::Point { x: 0.0 }, 1.0);
        let q = one(Location::Point { x: 0.0 }, 1.1);
        assert_eq!(densities_equal(&p, &p, -8.0, 8.0, 1000).max_density_gap, 0.0);
        assert!(densities_equal(&p, &q, -8.0, 8.0, 1000).max_density_gap >= 0.01);
    }

    #[test]
    fn ncn_examples() {
        assert!(is_ncn_structural(&one(Location::Point { x: 0.0 }, 1.0), false));
        assert!(!is_ncn_structural(&one(Location::Blob { mu: 0.0, tau2: 4.0 }, 1.0), false));
        let mixed = MixingDistribution::new(
            vec![Atom::point(0.0, 1.0, 0.5), Atom::blob(1.0, 2.0, 1.0, 0.5)],
            false,
        )
        .unwrap();
        assert!(is_ncn_structural(&mixed, false));
        assert!(is_ncn_structural(&mixed, true));
        let split = MixingDistribution::new(
            vec![Atom::point(0.0, 1.0, 0.5), Atom::blob(1.0, 2.0, 2.0, 0.5)],
            false,
        )
        .unwrap();
        assert!(is_ncn_structural(&split, false));
        assert!(!is_ncn_structural(&split, true));
    }
}
