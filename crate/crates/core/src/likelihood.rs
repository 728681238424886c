//! Likelihoods with respect to Lebesgue measure plus counting measure on a
//! finite atom set, and the Kiefer–Wolfowitz pairwise dominance test.

use crate::error::{Error, Result};
use crate::model::{pairwise_sum, MixingDistribution, Sample};

/// Lebesgue measure plus counting measure on `atom_points`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatingMeasure {
    atom_points: Vec<f64>,
    lebesgue: bool,
}

impl DominatingMeasure {
    pub fn lebesgue() -> Self {
        DominatingMeasure {
            atom_points: Vec::new(),
            lebesgue: true,
        }
    }

    pub fn with_points(mut points: Vec<f64>) -> Self {
        points.retain(|p| p.is_finite());
        for p in points.iter_mut() {
            if *p == 0.0 {
                *p = 0.0;
            }
        }
        points.sort_by(f64::total_cmp);
        points.dedup();
        DominatingMeasure {
            atom_points: points,
            lebesgue: true,
        }
    }

    /// Counting measure on every observation.
    pub fn on_observations(sample: &Sample) -> Self {
        Self::with_points(sample.values().to_vec())
    }

    /// Counting measure on the observations accepted by `keep`, and on their
    /// mirror images when `mirrored`.
    pub fn on_selected<F: Fn(f64) -> bool>(sample: &Sample, keep: F, mirrored: bool) -> Self {
        let mut pts = Vec::new();
        for &y in sample.values().iter().filter(|&&y| keep(y)) {
            pts.push(y);
            if mirrored {
                pts.push(-y);
            }
        }
        Self::with_points(pts)
    }

    pub fn atom_points(&self) -> &[f64] {
        &self.atom_points
    }

    pub fn has_atom(&self, y: f64) -> bool {
        self.atom_points
            .binary_search_by(|p| p.total_cmp(&if y == 0.0 { 0.0 } else { y }))
            .is_ok()
    }
}

/// Log-likelihood contribution of one observation: the atomic mass of `pi`
/// at `y` when `y` is an atom of the dominating measure and that mass is
/// positive, the Lebesgue density otherwise.
pub fn log_contribution(pi: &MixingDistribution, y: f64, dom: &DominatingMeasure) -> f64 {
    if dom.has_atom(y) {
        let mass = pi.atomic_mass(y);
        if mass > 0.0 {
            return mass.ln();
        }
    }
    if dom.lebesgue {
        pi.density(y).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// `ℓ(Π; Y₁…Y_n)`; `-inf` when some observation has zero contribution.
pub fn loglik(pi: &MixingDistribution, sample: &Sample, dom: &DominatingMeasure) -> f64 {
    let terms: Vec<f64> = sample
        .values()
        .iter()
        .map(|&y| log_contribution(pi, y, dom))
        .collect();
    if terms.iter().any(|t| *t == f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    pairwise_sum(&terms)
}

/// `Σ_i [log dP̂/d(P̂+P̃) − log dP̃/d(P̂+P̃)](Y_i)` for the induced mixtures.
///
/// At an observation where either mixture has an atom, the derivatives are
/// ratios of atomic masses and continuous densities count as zero; elsewhere
/// they are ratios of densities. Positive means `p_hat` dominates.
pub fn gmle_dominance(
    p_hat: &MixingDistribution,
    p_tilde: &MixingDistribution,
    sample: &Sample,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(sample.len());
    let (mut pos_inf, mut neg_inf) = (false, false);
    for &y in sample.values() {
        let (ah, at) = (p_hat.atomic_mass(y), p_tilde.atomic_mass(y));
        let (num, den) = if ah > 0.0 || at > 0.0 {
            (ah, at)
        } else {
            (p_hat.density(y), p_tilde.density(y))
        };
        match (num > 0.0, den > 0.0) {
            (false, false) => return Err(Error::Indeterminate(y)),
            (true, false) => pos_inf = true,
            (false, true) => neg_inf = true,
            (true, true) => terms.push(num.ln() - den.ln()),
        }
    }
    match (pos_inf, neg_inf) {
        (true, true) => Err(Error::Indeterminate(f64::NAN)),
        (true, false) => Ok(f64::INFINITY),
        (false, true) => Ok(f64::NEG_INFINITY),
        (false, false) => Ok(pairwise_sum(&terms)),
    }
}
