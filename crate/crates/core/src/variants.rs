//! Censored and truncated likelihoods, replicated pairs, the independence
//! model on the negative half-line, and the scale KL projection.

use std::io::Read;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{self, DominatingMeasure};
use crate::model::{pairwise_sum, Atom, Location, MixingDistribution, Sample, SupportSpec};
use crate::normal;
use crate::solver::{self, CandidateGrid, Component, ContinuousProblem, FitConfig, FitResult};

/// `N₋·log P(Y ≤ 0) + Σ_{Y_i > 0} log f(Y_i)`: observations at or below zero
/// are only known to be there.
pub fn censored_loglik(pi: &MixingDistribution, sample: &Sample) -> f64 {
    let neg = sample.values().iter().filter(|&&y| y <= 0.0).count();
    let mut terms: Vec<f64> = sample
        .values()
        .iter()
        .filter(|&&y| y > 0.0)
        .map(|&y| pi.density(y).ln())
        .collect();
    if neg > 0 {
        terms.push(neg as f64 * pi.cdf(0.0).ln());
    }
    if terms.iter().any(|t| *t == f64::NEG_INFINITY) {
        return f64::NEG_INFINITY;
    }
    pairwise_sum(&terms)
}

/// `Σ_i log[f(Y_i) / P(Y > 0)]` for a sample observed only above zero.
pub fn truncated_loglik(pi: &MixingDistribution, sample: &Sample) -> Result<f64> {
    if let Some(&y) = sample.values().iter().find(|&&y| y <= 0.0) {
        return Err(Error::InvalidObservation(format!(
            "truncated sample must be positive, got {y}"
        )));
    }
    let mass = pi.sf(0.0);
    if mass <= 0.0 {
        return Err(Error::ZeroTruncationMass);
    }
    let ln_mass = mass.ln();
    let terms: Vec<f64> = sample
        .values()
        .iter()
        .map(|&y| pi.density(y).ln() - ln_mass)
        .collect();
    if terms.iter().any(|t| *t == f64::NEG_INFINITY) {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(pairwise_sum(&terms))
}

/// Two draws `(Y_{i1}, Y_{i2})` sharing one latent `(X_i, S_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSample {
    pairs: Vec<(f64, f64)>,
}

impl PairedSample {
    pub fn new(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::NoObservations);
        }
        if let Some(p) = pairs.iter().find(|(a, b)| !(a.is_finite() && b.is_finite())) {
            return Err(Error::InvalidObservation(format!("non-finite pair {p:?}")));
        }
        Ok(PairedSample { pairs })
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Two-column CSV with header `y1,y2`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "y1" || &headers[1] != "y2" {
            return Err(Error::InvalidObservation(
                "paired CSV needs the header row y1,y2".into(),
            ));
        }
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|_| {
                    Error::InvalidObservation(format!("not a number: {:?}", &rec[k]))
                })
            };
            pairs.push((parse(0)?, parse(1)?));
        }
        Self::new(pairs)
    }

    fn means_and_within(&self) -> (Vec<f64>, Vec<f64>) {
        self.pairs
            .iter()
            .map(|&(a, b)| {
                let d = a - b;
                (0.5 * (a + b), 0.5 * d * d)
            })
            .unzip()
    }
}

/// Density of one pair: `Σ_j p_j ∫ φ_s(y₁−x)φ_s(y₂−x) dL_j(x)`. A normal blob
/// location makes the pair bivariate normal with covariance `τ²` between
/// the draws.
pub fn bivariate_density(y1: f64, y2: f64, pi: &MixingDistribution) -> f64 {
    let terms: Vec<f64> = pi
        .atoms()
        .iter()
        .map(|a| {
            let s2 = a.scale * a.scale;
            let (mu, tau2) = (a.location.center(), a.location.tau2());
            let (u, v) = (y1 - mu, y2 - mu);
            let det = s2 * (s2 + 2.0 * tau2);
            if det == 0.0 {
                return if u == 0.0 && v == 0.0 { f64::INFINITY } else { 0.0 };
            }
            let q = ((s2 + tau2) * (u * u + v * v) - 2.0 * tau2 * u * v) / det;
            a.weight * (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
        })
        .collect();
    normal::flush(pairwise_sum(&terms))
}

/// `2 / (π (y₁ − y₂)²)`, the bound on [`bivariate_density`] over all `Π`.
pub fn bivariate_bound(y1: f64, y2: f64) -> f64 {
    let d = y1 - y2;
    2.0 / (std::f64::consts::PI * d * d)
}

fn replicated_loglik(pi: &MixingDistribution, sample: &PairedSample) -> f64 {
    let terms: Vec<f64> = sample
        .pairs()
        .iter()
        .map(|&(a, b)| bivariate_density(a, b, pi).ln())
        .collect();
    pairwise_sum(&terms)
}

/// EM fit of the pair mixture against Lebesgue measure on `ℝ²`. The pair
/// density is bounded, so no observation atoms are needed; scales are kept
/// at or above `cfg.scale_floor`.
pub fn fit_replicated(sample: &PairedSample, spec: &SupportSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let (means, within) = sample.means_and_within();
    let mean_sample = Sample::new(means.clone())?;
    let positive = spec.scales.positive_points();
    if positive.as_ref().is_some_and(|p| p.is_empty()) || spec.scales.max() <= 0.0 {
        return Err(Error::InvalidSupport("replicated fits need a positive scale".into()));
    }
    let problem = ContinuousProblem {
        ys: &means,
        within: &within,
        replicates: 2.0,
        mirrored: spec.symmetric,
        loc_clamp: if spec.symmetric { (0.0, spec.loc_hi) } else { (spec.loc_lo, spec.loc_hi) },
        scale_clamp: solver::scale_bounds(spec, cfg),
        scales_fixed: positive.is_some(),
        total_mass: 1.0,
    };
    let init = solver::initial_components(&mean_sample, spec, cfg, 1.0);
    let (comps, iterations, converged) = solver::run_em(&problem, init, cfg);
    let pi_hat = MixingDistribution::new(solver::component_atoms(&comps, spec.symmetric), spec.symmetric)?;
    let final_loglik = replicated_loglik(&pi_hat, sample);
    let grid = CandidateGrid::default_for(&mean_sample, spec, cfg);
    let gradient_sup = certify_replicated(&pi_hat, sample, spec.symmetric, &grid);
    Ok(FitResult {
        pi_hat,
        final_loglik,
        iterations,
        converged,
        gradient_sup,
    })
}

fn certify_replicated(pi: &MixingDistribution, sample: &PairedSample, mirrored: bool, grid: &CandidateGrid) -> f64 {
    let fhat: Vec<f64> = sample.pairs().iter().map(|&(a, b)| bivariate_density(a, b, pi)).collect();
    let n = sample.len() as f64;
    let candidates: Vec<(f64, f64)> = grid
        .locations
        .iter()
        .flat_map(|&x| grid.scales.iter().filter(|&&s| s > 0.0).map(move |&s| (x, s)))
        .collect();
    candidates
        .par_iter()
        .map(|&(x, s)| {
            let k = |a: f64, b: f64| normal::density(a, x, s) * normal::density(b, x, s);
            let terms: Vec<f64> = sample
                .pairs()
                .iter()
                .zip(&fhat)
                .map(|(&(a, b), &f)| {
                    let kv = if mirrored {
                        0.5 * (k(a, b) + normal::density(a, -x, s) * normal::density(b, -x, s))
                    } else {
                        k(a, b)
                    };
                    if kv == 0.0 {
                        0.0
                    } else {
                        kv / f
                    }
                })
                .collect();
            pairwise_sum(&terms) / n - 1.0
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// The product-form fit `Π = Π_X ⊗ Π_S` on `(−∞, 0] × S` with `0 ∈ S`.
///
/// `Π_S` puts `q̂ = N₋/n` at scale 0. `Π_X` puts `1/n` on each observation at
/// or below zero and `N₊/n` at 0. The positive part `H` of `Π_S` maximizes
/// `Σ_{Y_i > 0} log Σ_k h_k φ_{s_k}(Y_i)` by EM over location-0 components.
/// `gradient_sup` certifies that scale subproblem.
pub fn fit_independent(sample: &Sample, spec: &SupportSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if spec.symmetric || spec.loc_lo != f64::NEG_INFINITY || spec.loc_hi != 0.0 {
        return Err(Error::InvalidSupport(
            "the independence model needs locations in (-inf, 0]".into(),
        ));
    }
    if !spec.scales.contains_zero() {
        return Err(Error::InvalidSupport("the independence model needs 0 in S".into()));
    }
    let n = sample.len() as f64;
    let (neg, pos): (Vec<f64>, Vec<f64>) = sample.values().iter().partition(|&&y| y <= 0.0);
    let q = neg.len() as f64 / n;

    let mut loc_marginal: Vec<(f64, f64)> = neg.iter().map(|&y| (y, 1.0 / n)).collect();
    let mut scale_marginal = vec![(0.0, q)];
    let (mut iterations, mut converged, mut gradient_sup) = (0, true, -1.0);
    if !pos.is_empty() {
        loc_marginal.push((0.0, pos.len() as f64 / n));
        let positive = spec.scales.positive_points();
        if positive.as_ref().is_some_and(|p| p.is_empty()) || spec.scales.max() <= 0.0 {
            return Err(Error::InvalidSupport(
                "positive observations need a positive scale".into(),
            ));
        }
        let scale_clamp = solver::scale_bounds(spec, cfg);
        let problem = ContinuousProblem {
            ys: &pos,
            within: &[],
            replicates: 1.0,
            mirrored: false,
            loc_clamp: (0.0, 0.0),
            scale_clamp,
            scales_fixed: positive.is_some(),
            total_mass: 1.0,
        };
        let scales = positive
            .clone()
            .unwrap_or_else(|| solver::geomspace(scale_clamp.0, scale_clamp.1, cfg.scale_grid_size));
        let init: Vec<Component> = scales
            .iter()
            .map(|&s| Component {
                x: 0.0,
                s,
                mass: 1.0 / scales.len() as f64,
            })
            .collect();
        let (h, it, conv) = solver::run_em(&problem, init, cfg);
        iterations = it;
        converged = conv;
        let g: Vec<f64> = pos
            .iter()
            .map(|&y| pairwise_sum(&h.iter().map(|c| c.mass * normal::density(y, 0.0, c.s)).collect::<Vec<_>>()))
            .collect();
        let candidate_scales = positive.unwrap_or_else(|| solver::geomspace(scale_clamp.0, scale_clamp.1, 81));
        gradient_sup = candidate_scales
            .iter()
            .map(|&s| {
                let t: Vec<f64> = pos.iter().zip(&g).map(|(&y, &gy)| normal::density(y, 0.0, s) / gy).collect();
                pairwise_sum(&t) / pos.len() as f64 - 1.0
            })
            .fold(f64::NEG_INFINITY, f64::max);
        scale_marginal.extend(h.iter().map(|c| (c.s, (1.0 - q) * c.mass)));
    }
    let mut atoms = Vec::with_capacity(loc_marginal.len() * scale_marginal.len());
    for &(x, wx) in &loc_marginal {
        for &(s, ws) in &scale_marginal {
            if wx * ws > 0.0 {
                atoms.push(Atom::point(x, s, wx * ws));
            }
        }
    }
    let pi_hat = MixingDistribution::new(atoms, false)?;
    let dom = DominatingMeasure::on_selected(sample, |y| y <= 0.0, false);
    let final_loglik = likelihood::loglik(&pi_hat, sample, &dom);
    Ok(FitResult {
        pi_hat,
        final_loglik,
        iterations,
        converged,
        gradient_sup,
    })
}

/// Weights over a fixed scale grid maximizing the KL affinity
/// `∫_0^∞ log Σ_k h_k s_k⁻¹ e^{−y²/2s_k²} dG(y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleProjection {
    pub scales: Vec<f64>,
    pub weights: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ScaleProjection {
    pub fn as_mixing(&self) -> Result<MixingDistribution> {
        MixingDistribution::new(
            self.scales
                .iter()
                .zip(&self.weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&s, &w)| Atom {
                    location: Location::Point { x: 0.0 },
                    scale: s,
                    weight: w,
                })
                .collect(),
            false,
        )
    }
}

const KL_CELLS: usize = 4000;
const KL_MAX_ITERS: usize = 200_000;

/// The outer integral is a midpoint Stieltjes sum over `KL_CELLS` cells of
/// `(0, y_max]`, against `G` normalized to `(0, ∞)`; `y_max` is where the
/// remaining mass drops below `1e-13`. Weights follow the EM fixed point
/// `h_k ← h_k ∫ k_k / Σ_l h_l k_l dG`, which is monotone because every
/// kernel has the same integral over `(0, ∞)`.
pub fn kl_scale_projection<G: Fn(f64) -> f64>(g_cdf: G, b: f64, scale_grid: &[f64]) -> Result<ScaleProjection> {
    if scale_grid.is_empty() || scale_grid.iter().any(|&s| !(s > 0.0 && s <= b)) {
        return Err(Error::InvalidConfig("scale grid must lie in (0, b]".into()));
    }
    let problem = KlProblem::new(g_cdf, scale_grid)?;
    let k = scale_grid.len();
    let mut h = vec![1.0 / k as f64; k];
    let mut obj = problem.objective(&h);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < KL_MAX_ITERS {
        let next = problem.update(&h);
        let new_obj = problem.objective(&next);
        iterations += 1;
        h = next;
        let improved = new_obj - obj;
        obj = new_obj;
        if improved.abs() <= 1e-9 * obj.abs().max(1e-300) {
            converged = true;
            break;
        }
    }
    Ok(ScaleProjection {
        scales: scale_grid.to_vec(),
        weights: h,
        objective: obj,
        iterations,
        converged,
    })
}

/// Discretized KL objective: cell midpoints with their `G` mass, and the
/// kernel `s⁻¹e^{−y²/2s²}` at every midpoint and grid scale.
struct KlProblem {
    cells: Vec<(f64, f64)>,
    kernel: Vec<Vec<f64>>,
}

impl KlProblem {
    fn new<G: Fn(f64) -> f64>(g_cdf: G, scale_grid: &[f64]) -> Result<Self> {
        let (g0, g_inf) = (g_cdf(0.0), g_cdf(f64::INFINITY).min(1.0));
        let total = g_inf - g0;
        if !(total > 0.0) {
            return Err(Error::QuadratureFailure("G has no mass on (0, inf)".into()));
        }
        let mut y_max = 1.0;
        while (g_inf - g_cdf(y_max)) / total > 1e-13 {
            y_max *= 2.0;
            if y_max > 1e6 {
                return Err(Error::QuadratureFailure("tail of G does not vanish".into()));
            }
        }
        let edges = solver::linspace(0.0, y_max, KL_CELLS + 1);
        let cells: Vec<(f64, f64)> = edges
            .windows(2)
            .map(|e| (0.5 * (e[0] + e[1]), (g_cdf(e[1]) - g_cdf(e[0])) / total))
            .filter(|&(_, m)| m > 0.0)
            .collect();
        let kernel = cells
            .iter()
            .map(|&(y, _)| scale_grid.iter().map(|&s| (-0.5 * (y / s).powi(2)).exp() / s).collect())
            .collect();
        Ok(KlProblem { cells, kernel })
    }

    fn objective(&self, h: &[f64]) -> f64 {
        let t: Vec<f64> = self
            .cells
            .iter()
            .zip(&self.kernel)
            .map(|(&(_, m), row)| m * row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>().ln())
            .collect();
        pairwise_sum(&t)
    }

    fn update(&self, h: &[f64]) -> Vec<f64> {
        let mut next = vec![0.0; h.len()];
        for (&(_, m), row) in self.cells.iter().zip(&self.kernel) {
            let mix: f64 = row.iter().zip(h).map(|(a, b)| a * b).sum();
            for j in 0..h.len() {
                next[j] += m * h[j] * row[j] / mix;
            }
        }
        let norm: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= norm);
        next
    }
}
