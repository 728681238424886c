//! Seeded sampling from mixtures, Kolmogorov distances, and the experiment
//! sweep comparing fitted cdfs with the truth and the predicted limits.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limits;
use crate::model::{Location, MixingDistribution, Sample, SupportSpec};
use crate::solver::{self, FitConfig};
use crate::variants;

/// `n` iid draws of `X + S·ε`, sorted.
pub fn sample_mixture(pi: &MixingDistribution, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let atoms = pi.atoms();
    let mut cum = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight;
        cum.push(acc);
    }
    let values = (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cum.partition_point(|&c| c <= u).min(atoms.len() - 1);
            let a = &atoms[k];
            let x = match a.location {
                Location::Point { x } => x,
                Location::Blob { mu, tau2 } => {
                    let z: f64 = rng.sample(StandardNormal);
                    mu + tau2.sqrt() * z
                }
            };
            if a.scale > 0.0 {
                let e: f64 = rng.sample(StandardNormal);
                x + a.scale * e
            } else {
                x
            }
        })
        .collect();
    Sample::new(values)
}

/// `max_y |F_a(y) − F_b(y)|` over `grid`.
pub fn ks_distance<A: Fn(f64) -> f64, B: Fn(f64) -> f64>(cdf_a: A, cdf_b: B, grid: &[f64]) -> f64 {
    grid.iter()
        .map(|&y| (cdf_a(y) - cdf_b(y)).abs())
        .fold(0.0, f64::max)
}

/// A KS grid: `n` uniform points over `[lo, hi]` plus every jump point and
/// the float immediately to its left, so step cdfs are compared at both
/// one-sided limits.
pub fn ks_grid(lo: f64, hi: f64, n: usize, jumps: &[f64]) -> Vec<f64> {
    let mut g = solver::linspace(lo, hi, n);
    for &j in jumps {
        g.push(j);
        g.push(j.next_down());
    }
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Which estimator an experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Gmle,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Comparison {
    Truth,
    LimitOracle,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub truth: MixingDistribution,
    pub spec: SupportSpec,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub comparison: Comparison,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub fit: FitConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(Error::InvalidConfig("sample sizes must be positive".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig("sample sizes must be increasing".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        self.fit.validate()
    }
}

/// One `(n, replication)` cell. Distances not requested, or not defined for
/// the spec, are `None`; a failed fit leaves every metric `None` and records
/// the error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub replication: usize,
    pub seed: u64,
    pub ks_to_truth: Option<f64>,
    pub ks_to_limit: Option<f64>,
    pub cdf_gap_at_zero: Option<f64>,
    pub fitted_band_mass: Option<f64>,
    pub converged: Option<bool>,
    pub runtime_ms: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub replications: usize,
    pub failures: usize,
    pub ks_to_truth: Option<Quartiles>,
    pub ks_to_limit: Option<Quartiles>,
    pub cdf_gap_at_zero: Option<Quartiles>,
    pub fitted_band_mass: Option<Quartiles>,
}

/// Linear-interpolation quartiles (type 7).
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let (i, f) = (h.floor() as usize, h - h.floor());
        if i + 1 < v.len() {
            v[i] + f * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    Some(Quartiles {
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
    })
}

impl ExperimentReport {
    /// Equality on everything except wall-clock runtimes.
    pub fn same_results(&self, other: &ExperimentReport) -> bool {
        self.cells.len() == other.cells.len()
            && self.cells.iter().zip(&other.cells).all(|(a, b)| {
                Cell {
                    runtime_ms: 0,
                    ..a.clone()
                } == Cell {
                    runtime_ms: 0,
                    ..b.clone()
                }
            })
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut sizes: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        sizes.dedup();
        sizes
            .into_iter()
            .map(|n| {
                let cells: Vec<&Cell> = self.cells.iter().filter(|c| c.n == n).collect();
                let pick = |f: fn(&Cell) -> Option<f64>| {
                    quartiles(&cells.iter().filter_map(|c| f(c)).collect::<Vec<_>>())
                };
                SummaryRow {
                    n,
                    replications: cells.len(),
                    failures: cells.iter().filter(|c| c.error.is_some()).count(),
                    ks_to_truth: pick(|c| c.ks_to_truth),
                    ks_to_limit: pick(|c| c.ks_to_limit),
                    cdf_gap_at_zero: pick(|c| c.cdf_gap_at_zero),
                    fitted_band_mass: pick(|c| c.fitted_band_mass),
                }
            })
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "n",
            "replication",
            "seed",
            "ks_to_truth",
            "ks_to_limit",
            "cdf_gap_at_zero",
            "fitted_band_mass",
            "converged",
            "runtime_ms",
            "error",
        ])?;
        let num = |v: Option<f64>| v.map(crate::json::fmt17).unwrap_or_default();
        for c in &self.cells {
            out.write_record([
                c.n.to_string(),
                c.replication.to_string(),
                c.seed.to_string(),
                num(c.ks_to_truth),
                num(c.ks_to_limit),
                num(c.cdf_gap_at_zero),
                num(c.fitted_band_mass),
                c.converged.map(|b| b.to_string()).unwrap_or_default(),
                c.runtime_ms.to_string(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function; a bijection on `u64`.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of cell `(n_index, rep_index)`: splitmix64 at position
/// `n_index·replications + rep_index + 1` of the stream rooted at `root`.
/// Distinct cells of one sweep get distinct counters and so distinct seeds.
pub fn child_seed(root: u64, n_index: usize, rep_index: usize, replications: usize) -> u64 {
    let counter = (n_index as u64) * (replications as u64) + rep_index as u64 + 1;
    mix64(root.wrapping_add(GOLDEN.wrapping_mul(counter)))
}

/// Location mass of `pi` on `[c − η, c]`.
pub fn band_mass(pi: &MixingDistribution, c: f64, eta: f64) -> f64 {
    pi.atoms()
        .iter()
        .filter(|a| {
            let x = a.location.center();
            x >= c - eta && x <= c
        })
        .map(|a| a.weight)
        .sum()
}

enum LimitOracle {
    None,
    Truth,
    Halfline,
    Independent,
    Symmetric(f64),
}

fn limit_oracle(cfg: &ExperimentConfig) -> Result<LimitOracle> {
    let spec = &cfg.spec;
    Ok(match cfg.estimator {
        Estimator::Independent => LimitOracle::Independent,
        Estimator::Gmle if spec.is_real_line() && spec.scales.contains_zero() => LimitOracle::Truth,
        Estimator::Gmle if spec.is_halfline_binary() => LimitOracle::Halfline,
        Estimator::Gmle if spec.symmetric && spec.loc_hi > spec.scales.max() => {
            LimitOracle::Symmetric(limits::solve_eta(spec.loc_hi, spec.scales.max())?.eta)
        }
        Estimator::Gmle => LimitOracle::None,
    })
}

fn run_cell(cfg: &ExperimentConfig, oracle: &LimitOracle, n: usize, rep: usize, seed: u64) -> Cell {
    let start = Instant::now();
    let mut cell = Cell {
        n,
        replication: rep,
        seed,
        ks_to_truth: None,
        ks_to_limit: None,
        cdf_gap_at_zero: None,
        fitted_band_mass: None,
        converged: None,
        runtime_ms: 0,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let sample = sample_mixture(&cfg.truth, n, seed)?;
        let fit = match cfg.estimator {
            Estimator::Gmle => solver::fit_gmle(&sample, &cfg.spec, &cfg.fit)?,
            Estimator::Independent => variants::fit_independent(&sample, &cfg.spec, &cfg.fit)?,
        };
        cell.converged = Some(fit.converged);
        let pi = &fit.pi_hat;
        let (tlo, thi) = cfg.truth.effective_range();
        let (flo, fhi) = pi.effective_range();
        let mut jumps = pi.jump_points();
        jumps.extend(cfg.truth.jump_points());
        jumps.push(0.0);
        let grid = ks_grid(tlo.min(flo), thi.max(fhi), 2001, &jumps);
        let want_truth = cfg.comparison != Comparison::LimitOracle;
        let want_limit = cfg.comparison != Comparison::Truth;
        if want_truth {
            cell.ks_to_truth = Some(ks_distance(|y| pi.cdf(y), |y| cfg.truth.cdf(y), &grid));
            cell.cdf_gap_at_zero = Some((pi.cdf(0.0) - cfg.truth.cdf(0.0)).abs());
        }
        if want_limit {
            cell.ks_to_limit = match oracle {
                LimitOracle::Truth => Some(ks_distance(|y| pi.cdf(y), |y| cfg.truth.cdf(y), &grid)),
                LimitOracle::Halfline => Some(ks_distance(
                    |y| pi.cdf(y),
                    |y| limits::limit_cdf_halfline(y, |t| cfg.truth.cdf(t)),
                    &grid,
                )),
                LimitOracle::Independent => {
                    let lim: Vec<f64> = grid
                        .iter()
                        .map(|&y| limits::limit_cdf_independent_general(y, &cfg.truth))
                        .collect::<Result<_>>()?;
                    Some(
                        grid.iter()
                            .zip(&lim)
                            .map(|(&y, &l)| (pi.cdf(y) - l).abs())
                            .fold(0.0, f64::max),
                    )
                }
                LimitOracle::Symmetric(_) | LimitOracle::None => None,
            };
        }
        if let LimitOracle::Symmetric(eta) = oracle {
            cell.fitted_band_mass = Some(band_mass(pi, cfg.spec.loc_hi, *eta));
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        cell = Cell {
            ks_to_truth: None,
            ks_to_limit: None,
            cdf_gap_at_zero: None,
            fitted_band_mass: None,
            converged: None,
            error: Some(e.to_string()),
            ..cell
        };
    }
    cell.runtime_ms = start.elapsed().as_millis() as u64;
    cell
}

/// Runs every `(n, replication)` cell on a pool of `workers` threads. Cells
/// are independent and come back in `(n, replication)` order, so the report
/// does not depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let oracle = limit_oracle(cfg)?;
    let jobs: Vec<(usize, usize, u64)> = cfg
        .sample_sizes
        .iter()
        .enumerate()
        .flat_map(|(ni, &n)| {
            (0..cfg.replications).map(move |r| (n, r, child_seed(cfg.rng_seed, ni, r, cfg.replications)))
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let cells = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, r, seed)| run_cell(cfg, &oracle, n, r, seed))
            .collect()
    });
    Ok(ExperimentReport { cells })
}
