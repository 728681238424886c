//! Generalized maximum likelihood for normal location-scale mixtures
//! `Y = X + S·ε`.

pub mod cli;
pub mod error;
pub mod identifiability;
pub mod json;
pub mod likelihood;
pub mod limits;
pub mod model;
pub mod normal;
pub mod quadrature;
pub mod simulation;
pub mod solver;
pub mod variants;

pub use error::{Error, Result};
pub use likelihood::{gmle_dominance, loglik, DominatingMeasure};
pub use model::{Atom, Location, MixingDistribution, Sample, ScaleSupport, SupportSpec};
pub use solver::{certify_gmle, closed_form_halfline, em_step, fit_em, fit_gmle, CandidateGrid, FitConfig, FitResult};
pub use limits::{solve_eta, EtaSolution};
pub use simulation::{run_experiment, sample_mixture, ExperimentConfig, ExperimentReport};

/// Lebesgue density of the observable mixture at `y`.
pub fn mixture_density(y: f64, pi: &MixingDistribution) -> f64 {
    pi.density(y)
}

/// Point mass of the observable mixture at `y` (from atoms with zero scale).
pub fn atomic_mass(y: f64, pi: &MixingDistribution) -> f64 {
    pi.atomic_mass(y)
}

/// Right-continuous cdf of the observable mixture.
pub fn mixture_cdf(y: f64, pi: &MixingDistribution) -> f64 {
    pi.cdf(y)
}

/// `E[X | Y = y]` under `pi`.
pub fn eb_posterior_mean(y: f64, pi: &MixingDistribution) -> Result<f64> {
    pi.posterior_mean(y)
}
