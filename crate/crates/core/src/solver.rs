//! Generalized maximum likelihood fits of the mixing distribution.
//!
//! Observations that a point mass at `(Y_i, 0)` can explain are explained
//! that way: the likelihood is written against Lebesgue measure plus the
//! counting measure on those observations (and on their mirror images in
//! the symmetric family), so each such observation receives an atom of
//! weight `1/n` (split `1/2n` between `±Y_i` when symmetric). The remaining
//! observations are fit by EM over a finite set of moving normal components.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{self, DominatingMeasure};
use crate::model::{pairwise_sum, Atom, Location, MixingDistribution, Sample, SupportSpec};
use crate::normal;

/// Observations per parallel E-step block. The reduction tree is fixed by
/// this constant, not by the number of workers.
const CHUNK: usize = 64;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub loc_grid_size: usize,
    pub scale_grid_size: usize,
    pub max_em_iters: usize,
    pub loglik_rel_tol: f64,
    pub atom_weight_floor: f64,
    pub scale_floor: f64,
    pub rng_seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            loc_grid_size: 20,
            scale_grid_size: 20,
            max_em_iters: 5000,
            loglik_rel_tol: 1e-9,
            atom_weight_floor: 1e-10,
            scale_floor: 1e-6,
            rng_seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.loc_grid_size < 2 || self.scale_grid_size < 2 {
            return Err(Error::InvalidConfig("grid sizes must be at least 2".into()));
        }
        for (name, v) in [
            ("loglik_rel_tol", self.loglik_rel_tol),
            ("atom_weight_floor", self.atom_weight_floor),
            ("scale_floor", self.scale_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub pi_hat: MixingDistribution,
    pub final_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest directional derivative of the mean log-likelihood toward a
    /// candidate component; at most a small tolerance for a GMLE.
    pub gradient_sup: f64,
}

/// Candidate continuous components `(x, s)` for [`certify_gmle`].
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    pub locations: Vec<f64>,
    pub scales: Vec<f64>,
}

impl CandidateGrid {
    pub fn new(locations: Vec<f64>, scales: Vec<f64>) -> Self {
        CandidateGrid { locations, scales }
    }

    /// 201 locations over the usable location range and 81 scales over the
    /// usable scale range (or the positive scale points of a discrete set).
    pub fn default_for(sample: &Sample, spec: &SupportSpec, cfg: &FitConfig) -> Self {
        let (lo, hi) = location_range(sample, spec);
        let locations = linspace(lo, hi, 201);
        let scales = match spec.scales.positive_points() {
            Some(p) => p,
            None => {
                let (slo, shi) = scale_bounds(spec, cfg);
                geomspace(slo, shi, 81)
            }
        };
        CandidateGrid { locations, scales }
    }
}

/// Fits the GMLE of `Π` under `spec`.
///
/// `ℝ` with `0 ∈ S` yields the empirical measure, `(−∞, 0] × {0, 1}` the
/// closed form of [`closed_form_halfline`], and everything else the EM of
/// [`fit_em`].
pub fn fit_gmle(sample: &Sample, spec: &SupportSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::NoObservations);
    }
    if spec.is_real_line() && spec.scales.contains_zero() {
        return empirical_fit(sample, spec, cfg);
    }
    if spec.is_halfline_binary() {
        return Ok(closed_form_halfline_with(sample, cfg));
    }
    fit_em(sample, spec, cfg)
}

fn empirical_fit(sample: &Sample, spec: &SupportSpec, cfg: &FitConfig) -> Result<FitResult> {
    let pi_hat = MixingDistribution::empirical(sample.values())?;
    let dom = DominatingMeasure::on_observations(sample);
    let final_loglik = likelihood::loglik(&pi_hat, sample, &dom);
    let mut fit = FitResult {
        pi_hat,
        final_loglik,
        iterations: 0,
        converged: true,
        gradient_sup: f64::NAN,
    };
    fit.gradient_sup = certify_gmle(&fit, sample, spec, &CandidateGrid::default_for(sample, spec, cfg));
    Ok(fit)
}

/// `Π̂ = Σ_{Y_i ≤ 0} (1/n) δ_(Y_i, 0) + (#{Y_i > 0}/n) δ_(0, 1)`.
pub fn closed_form_halfline(sample: &Sample) -> FitResult {
    closed_form_halfline_with(sample, &FitConfig::default())
}

fn closed_form_halfline_with(sample: &Sample, cfg: &FitConfig) -> FitResult {
    let n = sample.len() as f64;
    let mut atoms: Vec<Atom> = sample
        .values()
        .iter()
        .filter(|&&y| y <= 0.0)
        .map(|&y| Atom::point(y, 0.0, 1.0 / n))
        .collect();
    let positives = sample.values().iter().filter(|&&y| y > 0.0).count();
    if positives > 0 {
        atoms.push(Atom::point(0.0, 1.0, positives as f64 / n));
    }
    let pi_hat = MixingDistribution::new(atoms, false).expect("closed form is a valid mixing distribution");
    let dom = DominatingMeasure::on_selected(sample, |y| y <= 0.0, false);
    let final_loglik = likelihood::loglik(&pi_hat, sample, &dom);
    let spec = SupportSpec::halfline_binary();
    let mut fit = FitResult {
        pi_hat,
        final_loglik,
        iterations: 0,
        converged: true,
        gradient_sup: f64::NAN,
    };
    fit.gradient_sup = certify_gmle(&fit, sample, &spec, &CandidateGrid::default_for(sample, &spec, cfg));
    fit
}

/// A continuous component. With mirroring it stands for the pair
/// `(±x, s)`, each atom carrying `mass / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Component {
    pub x: f64,
    pub s: f64,
    pub mass: f64,
}

/// The continuous sub-problem: observations that no point mass can explain.
pub(crate) struct ContinuousProblem<'a> {
    /// Observations, or per-unit means when each unit has `replicates` draws.
    pub ys: &'a [f64],
    /// Per-unit within sums of squares `Σ_k (y_k − ȳ)²`; empty for single draws.
    pub within: &'a [f64],
    pub replicates: f64,
    pub mirrored: bool,
    pub loc_clamp: (f64, f64),
    pub scale_clamp: (f64, f64),
    pub scales_fixed: bool,
    pub total_mass: f64,
}

#[derive(Debug, Clone)]
struct Stats {
    loglik: f64,
    a: Vec<f64>,
    am: Vec<f64>,
    ae: Vec<f64>,
    ame: Vec<f64>,
    ae2: Vec<f64>,
    ame2: Vec<f64>,
    aw: Vec<f64>,
    amw: Vec<f64>,
}

impl Stats {
    fn zeros(k: usize) -> Self {
        Stats {
            loglik: 0.0,
            a: vec![0.0; k],
            am: vec![0.0; k],
            ae: vec![0.0; k],
            ame: vec![0.0; k],
            ae2: vec![0.0; k],
            ame2: vec![0.0; k],
            aw: vec![0.0; k],
            amw: vec![0.0; k],
        }
    }

    fn add(mut self, other: &Stats) -> Stats {
        self.loglik += other.loglik;
        for (dst, src) in [
            (&mut self.a, &other.a),
            (&mut self.am, &other.am),
            (&mut self.ae, &other.ae),
            (&mut self.ame, &other.ame),
            (&mut self.ae2, &other.ae2),
            (&mut self.ame2, &other.ame2),
            (&mut self.aw, &other.aw),
            (&mut self.amw, &other.amw),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        self
    }
}

fn reduce_tree(mut parts: Vec<Stats>) -> Stats {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(left) = it.next() {
            match it.next() {
                Some(right) => next.push(left.add(&right)),
                None => next.push(left),
            }
        }
        parts = next;
    }
    parts.pop().expect("at least one block")
}

#[inline]
fn ln_kernel(d: f64, s: f64) -> f64 {
    let z = d / s;
    -0.5 * z * z - s.ln() - LN_SQRT_2PI
}

/// Log density of `m` iid `N(x, s²)` draws with mean offset `d = ȳ − x` and
/// within sum of squares `w`.
#[inline]
fn ln_kernel_rep(d: f64, w: f64, s: f64, m: f64) -> f64 {
    -(m * d * d + w) / (2.0 * s * s) - m * (s.ln() + LN_SQRT_2PI)
}

impl ContinuousProblem<'_> {
    /// E-step sufficient statistics, centred at the current locations. `α` is
    /// the responsibility of `(x_j, s_j)`, `α̃` that of its mirror `(−x_j, s_j)`.
    fn e_step(&self, comps: &[Component]) -> Stats {
        let k = comps.len();
        let ln_w: Vec<f64> = comps
            .iter()
            .map(|c| {
                if self.mirrored {
                    (0.5 * c.mass).ln()
                } else {
                    c.mass.ln()
                }
            })
            .collect();
        let replicated = !self.within.is_empty();
        let m = self.replicates;
        let parts: Vec<Stats> = self
            .ys
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(b, block)| {
                let mut st = Stats::zeros(k);
                let mut la = vec![0.0; k];
                let mut lm = vec![f64::NEG_INFINITY; k];
                for (i, &y) in block.iter().enumerate() {
                    let w = if replicated { self.within[b * CHUNK + i] } else { 0.0 };
                    let mut peak = f64::NEG_INFINITY;
                    for (j, c) in comps.iter().enumerate() {
                        la[j] = ln_w[j]
                            + if replicated {
                                ln_kernel_rep(y - c.x, w, c.s, m)
                            } else {
                                ln_kernel(y - c.x, c.s)
                            };
                        peak = peak.max(la[j]);
                        if self.mirrored {
                            lm[j] = ln_w[j]
                                + if replicated {
                                    ln_kernel_rep(y + c.x, w, c.s, m)
                                } else {
                                    ln_kernel(y + c.x, c.s)
                                };
                            peak = peak.max(lm[j]);
                        }
                    }
                    if peak == f64::NEG_INFINITY {
                        st.loglik = f64::NEG_INFINITY;
                        continue;
                    }
                    let mut total = 0.0;
                    for j in 0..k {
                        la[j] = (la[j] - peak).exp();
                        total += la[j];
                        if self.mirrored {
                            lm[j] = (lm[j] - peak).exp();
                            total += lm[j];
                        }
                    }
                    st.loglik += peak + total.ln();
                    let inv = 1.0 / total;
                    for (j, c) in comps.iter().enumerate() {
                        let r = la[j] * inv;
                        let e = y - c.x;
                        st.a[j] += r;
                        st.ae[j] += r * e;
                        st.ae2[j] += r * e * e;
                        st.aw[j] += r * w;
                        if self.mirrored {
                            let rm = lm[j] * inv;
                            let em = y + c.x;
                            st.am[j] += rm;
                            st.ame[j] += rm * em;
                            st.ame2[j] += rm * em * em;
                            st.amw[j] += rm * w;
                        }
                    }
                }
                st
            })
            .collect();
        reduce_tree(parts)
    }

    /// M-step from statistics computed at `comps`.
    fn m_step(&self, comps: &[Component], st: &Stats) -> Vec<Component> {
        let n = self.ys.len() as f64;
        comps
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let resp = st.a[j] + st.am[j];
                if !(resp > 0.0) {
                    return Component { mass: 0.0, ..*c };
                }
                let mass = self.total_mass * resp / n;
                // Σα·Y and Σα̃·Y recovered from the centred sums.
                let sum_y = st.ae[j] + c.x * st.a[j];
                let sum_my = st.ame[j] - c.x * st.am[j];
                let x = ((sum_y - sum_my) / resp).clamp(self.loc_clamp.0, self.loc_clamp.1);
                let s = if self.scales_fixed {
                    c.s
                } else {
                    let dx = x - c.x;
                    let ss = st.ae2[j] - 2.0 * dx * st.ae[j] + dx * dx * st.a[j] + st.ame2[j]
                        + 2.0 * dx * st.ame[j]
                        + dx * dx * st.am[j];
                    let ss = self.replicates * ss + st.aw[j] + st.amw[j];
                    (ss.max(0.0) / (self.replicates * resp))
                        .sqrt()
                        .clamp(self.scale_clamp.0, self.scale_clamp.1)
                };
                Component { x, s, mass }
            })
            .collect()
    }

    /// Drops components whose atom weights fall below `floor` and rescales the
    /// rest to `total_mass`.
    fn prune(&self, comps: Vec<Component>, floor: f64) -> Vec<Component> {
        let per_atom = |c: &Component| if self.mirrored && c.x != 0.0 { 0.5 * c.mass } else { c.mass };
        let mut kept: Vec<Component> = comps.into_iter().filter(|c| per_atom(c) >= floor).collect();
        let total = pairwise_sum(&kept.iter().map(|c| c.mass).collect::<Vec<_>>());
        if total > 0.0 {
            let scale = self.total_mass / total;
            for c in kept.iter_mut() {
                c.mass *= scale;
            }
        }
        kept
    }

    fn step(&self, comps: &[Component], floor: f64) -> (Vec<Component>, f64) {
        let st = self.e_step(comps);
        (self.prune(self.m_step(comps, &st), floor), st.loglik)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![hi];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == n - 1 {
                hi
            } else {
                (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Finite location window for grids: the spec interval, with infinite ends
/// replaced by the sample range. For a symmetric family this is `[0, c]`.
pub(crate) fn location_range(sample: &Sample, spec: &SupportSpec) -> (f64, f64) {
    if spec.symmetric {
        return (0.0, spec.loc_hi);
    }
    let v = sample.values();
    let (ymin, ymax) = (v[0], v[v.len() - 1]);
    let lo = if spec.loc_lo.is_finite() {
        spec.loc_lo
    } else {
        ymin.min(spec.loc_hi)
    };
    let hi = if spec.loc_hi.is_finite() {
        spec.loc_hi
    } else {
        ymax.max(lo)
    };
    (lo, hi)
}

pub(crate) fn scale_bounds(spec: &SupportSpec, cfg: &FitConfig) -> (f64, f64) {
    let lo = spec.scales.min().max(cfg.scale_floor);
    let hi = spec.scales.max().max(lo);
    (lo, hi)
}

/// The continuous sub-problem for `sample` under `spec`: which observations
/// it must explain and the bounds its components live in.
fn continuous_split(sample: &Sample, spec: &SupportSpec) -> (Vec<f64>, Vec<f64>) {
    sample
        .values()
        .iter()
        .partition(|&&y| spec.admits_point_mass_at(y))
}

fn fixed_atoms(inside: &[f64], n: usize, mirrored: bool) -> Vec<Atom> {
    let w = 1.0 / n as f64;
    let mut atoms = Vec::with_capacity(inside.len() * 2);
    for &y in inside {
        if mirrored {
            atoms.push(Atom::point(y, 0.0, 0.5 * w));
            atoms.push(Atom::point(-y, 0.0, 0.5 * w));
        } else {
            atoms.push(Atom::point(y, 0.0, w));
        }
    }
    atoms
}

pub(crate) fn component_atoms(comps: &[Component], mirrored: bool) -> Vec<Atom> {
    let mut atoms = Vec::with_capacity(comps.len() * 2);
    for c in comps {
        if mirrored {
            atoms.push(Atom::point(c.x, c.s, 0.5 * c.mass));
            atoms.push(Atom::point(-c.x, c.s, 0.5 * c.mass));
        } else {
            atoms.push(Atom::point(c.x, c.s, c.mass));
        }
    }
    atoms
}

fn dominating_for(sample: &Sample, spec: &SupportSpec) -> DominatingMeasure {
    DominatingMeasure::on_selected(sample, |y| spec.admits_point_mass_at(y), spec.symmetric)
}

fn build_problem<'a>(
    outside: &'a [f64],
    sample: &Sample,
    spec: &SupportSpec,
    cfg: &FitConfig,
) -> Result<ContinuousProblem<'a>> {
    let positive = spec.scales.positive_points();
    if let Some(p) = &positive {
        if p.is_empty() {
            return Err(Error::InvalidSupport(
                "observations outside the location support need a positive scale".into(),
            ));
        }
    } else if spec.scales.max() <= 0.0 {
        return Err(Error::InvalidSupport(
            "observations outside the location support need a positive scale".into(),
        ));
    }
    let loc_clamp = if spec.symmetric {
        (0.0, spec.loc_hi)
    } else {
        (spec.loc_lo, spec.loc_hi)
    };
    Ok(ContinuousProblem {
        ys: outside,
        within: &[],
        replicates: 1.0,
        mirrored: spec.symmetric,
        loc_clamp,
        scale_clamp: scale_bounds(spec, cfg),
        scales_fixed: positive.is_some(),
        total_mass: outside.len() as f64 / sample.len() as f64,
    })
}

pub(crate) fn initial_components(
    sample: &Sample,
    spec: &SupportSpec,
    cfg: &FitConfig,
    total_mass: f64,
) -> Vec<Component> {
    let (lo, hi) = location_range(sample, spec);
    let locs = linspace(lo, hi, cfg.loc_grid_size);
    let scales = match spec.scales.positive_points() {
        Some(p) => p,
        None => {
            let (slo, shi) = scale_bounds(spec, cfg);
            geomspace(slo, shi, cfg.scale_grid_size)
        }
    };
    let mass = total_mass / (locs.len() * scales.len()) as f64;
    let mut comps = Vec::with_capacity(locs.len() * scales.len());
    for &x in &locs {
        for &s in &scales {
            comps.push(Component { x, s, mass });
        }
    }
    comps
}

/// The EM path of [`fit_gmle`]: pinned point masses at the observations a
/// scale-zero atom can reach, EM over a location × scale grid of moving
/// components for the rest.
pub fn fit_em(sample: &Sample, spec: &SupportSpec, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if spec.is_real_line() && spec.scales.contains_zero() {
        return Err(Error::UnboundedProblem(
            "point masses are admissible everywhere on the real line; the empirical measure is the GMLE"
                .into(),
        ));
    }
    let n = sample.len();
    let (inside, outside) = continuous_split(sample, spec);
    let mut atoms = fixed_atoms(&inside, n, spec.symmetric);
    let (comps, iterations, converged) = if outside.is_empty() {
        (Vec::new(), 0, true)
    } else {
        let problem = build_problem(&outside, sample, spec, cfg)?;
        let init = initial_components(sample, spec, cfg, problem.total_mass);
        run_em(&problem, init, cfg)
    };
    atoms.extend(component_atoms(&comps, spec.symmetric));
    let pi_hat = MixingDistribution::new(atoms, spec.symmetric)?;
    let final_loglik = likelihood::loglik(&pi_hat, sample, &dominating_for(sample, spec));
    let mut fit = FitResult {
        pi_hat,
        final_loglik,
        iterations,
        converged,
        gradient_sup: f64::NAN,
    };
    fit.gradient_sup = certify_gmle(&fit, sample, spec, &CandidateGrid::default_for(sample, spec, cfg));
    Ok(fit)
}

pub(crate) fn run_em(
    problem: &ContinuousProblem<'_>,
    mut comps: Vec<Component>,
    cfg: &FitConfig,
) -> (Vec<Component>, usize, bool) {
    let mut prev = f64::NEG_INFINITY;
    for it in 0..cfg.max_em_iters {
        let (next, ll) = problem.step(&comps, cfg.atom_weight_floor);
        if it > 0 && (ll - prev) <= cfg.loglik_rel_tol * ll.abs().max(1.0) {
            return (consolidate(comps), it, true);
        }
        prev = ll;
        comps = next;
    }
    (consolidate(comps), cfg.max_em_iters, false)
}

/// Relative scale tolerance under which components at one location merge.
const MERGE_SCALE_RTOL: f64 = 1e-6;

/// Merges components that share a location and whose scales agree to
/// `MERGE_SCALE_RTOL`; the merged scale is the weight-averaged one.
fn consolidate(mut comps: Vec<Component>) -> Vec<Component> {
    comps.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.s.total_cmp(&b.s)));
    let mut out: Vec<Component> = Vec::with_capacity(comps.len());
    for c in comps {
        match out.last_mut() {
            Some(last) if last.x == c.x && (c.s - last.s) <= MERGE_SCALE_RTOL * c.s => {
                let mass = last.mass + c.mass;
                last.s = (last.s * last.mass + c.s * c.mass) / mass;
                last.mass = mass;
            }
            _ => out.push(c),
        }
    }
    out
}

/// One EM iteration on `pi` under a bounded `spec`. Point masses at the
/// observations inside the location support get their closed-form weights;
/// continuous components are updated from the observations outside it.
pub fn em_step(
    pi: &MixingDistribution,
    sample: &Sample,
    spec: &SupportSpec,
    cfg: &FitConfig,
) -> Result<MixingDistribution> {
    if spec.symmetric && !pi.is_symmetric() {
        return Err(Error::InvalidMixing(
            "a symmetric family needs a symmetric mixing distribution".into(),
        ));
    }
    let n = sample.len();
    let (inside, outside) = continuous_split(sample, spec);
    if outside.is_empty() {
        return Err(Error::EmptyResponsibility);
    }
    let problem = build_problem(&outside, sample, spec, cfg)?;
    let comps = components_of(pi, spec.symmetric)?;
    if comps.is_empty() {
        return Err(Error::InvalidMixing("no continuous components to update".into()));
    }
    let st = problem.e_step(&comps);
    let next = problem.prune(problem.m_step(&comps, &st), cfg.atom_weight_floor);
    let mut atoms = fixed_atoms(&inside, n, spec.symmetric);
    atoms.extend(component_atoms(&next, spec.symmetric));
    MixingDistribution::new(atoms, spec.symmetric)
}

/// Continuous point-location atoms of `pi` as components (one per mirror pair).
fn components_of(pi: &MixingDistribution, mirrored: bool) -> Result<Vec<Component>> {
    let mut comps = Vec::new();
    for a in pi.atoms().iter().filter(|a| !a.is_atomic()) {
        let x = match a.location {
            Location::Point { x } => x,
            Location::Blob { .. } => {
                return Err(Error::InvalidMixing(
                    "EM components must have point locations".into(),
                ))
            }
        };
        if mirrored {
            if x > 0.0 {
                comps.push(Component { x, s: a.scale, mass: 2.0 * a.weight });
            } else if x == 0.0 {
                comps.push(Component { x, s: a.scale, mass: a.weight });
            }
        } else {
            comps.push(Component { x, s: a.scale, mass: a.weight });
        }
    }
    Ok(comps)
}

/// `max_θ n⁻¹ Σ_i k_θ(Y_i)/f̂(Y_i) − 1` over the grid, where `f̂(Y_i)` is the
/// fitted atomic mass at `Y_i` if positive (a continuous candidate then adds
/// nothing) and the fitted density otherwise. For symmetric families the
/// candidate is the pair `½(δ_(x,s) + δ_(−x,s))`.
pub fn certify_gmle(fit: &FitResult, sample: &Sample, spec: &SupportSpec, grid: &CandidateGrid) -> f64 {
    let n = sample.len() as f64;
    let dens: Vec<f64> = sample
        .values()
        .iter()
        .filter(|&&y| fit.pi_hat.atomic_mass(y) == 0.0)
        .copied()
        .collect();
    if dens.is_empty() {
        return -1.0;
    }
    let fhat: Vec<f64> = dens.iter().map(|&y| fit.pi_hat.density(y)).collect();
    let candidates: Vec<(f64, f64)> = grid
        .locations
        .iter()
        .flat_map(|&x| grid.scales.iter().filter(|&&s| s > 0.0).map(move |&s| (x, s)))
        .collect();
    candidates
        .par_iter()
        .map(|&(x, s)| {
            let terms: Vec<f64> = dens
                .iter()
                .zip(&fhat)
                .map(|(&y, &f)| {
                    let k = if spec.symmetric {
                        0.5 * (normal::density(y, x, s) + normal::density(y, -x, s))
                    } else {
                        normal::density(y, x, s)
                    };
                    if k == 0.0 {
                        0.0
                    } else {
                        k / f
                    }
                })
                .collect();
            pairwise_sum(&terms) / n - 1.0
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn real_line_gives_empirical() {
        let s = sample(&[0.3, -1.2, 2.2, 0.9]);
        let spec = SupportSpec::real_line(0.0, 2.0).unwrap();
        let fit = fit_gmle(&s, &spec, &FitConfig::default()).unwrap();
        assert_eq!(fit.pi_hat.len(), 4);
        for a in fit.pi_hat.atoms() {
            assert!(a.is_atomic());
            assert_eq!(a.weight, 0.25);
        }
        assert_eq!(fit.final_loglik, -4.0 * 4f64.ln());
        assert!(fit.converged);
        assert_eq!(fit.gradient_sup, -1.0);
    }

    #[test]
    fn em_path_rejects_real_line() {
        let s = sample(&[0.0]);
        let spec = SupportSpec::real_line(0.0, 1.0).unwrap();
        assert!(matches!(
            fit_em(&s, &spec, &FitConfig::default()),
            Err(Error::UnboundedProblem(_))
        ));
    }

    #[test]
    fn halfline_closed_form_examples() {
        let fit = closed_form_halfline(&sample(&[-2.0, -1.0]));
        assert_eq!(
            fit.pi_hat.atoms(),
            &[Atom::point(-2.0, 0.0, 0.5), Atom::point(-1.0, 0.0, 0.5)]
        );

        let fit = closed_form_halfline(&sample(&[1.0, 2.0]));
        assert_eq!(fit.pi_hat.atoms(), &[Atom::point(0.0, 1.0, 1.0)]);

        let fit = closed_form_halfline(&sample(&[-1.0, 0.5, 3.0]));
        assert_eq!(
            fit.pi_hat.atoms(),
            &[Atom::point(-1.0, 0.0, 1.0 / 3.0), Atom::point(0.0, 1.0, 2.0 / 3.0)]
        );
        let oracle = (1.0f64 / 3.0).ln()
            + (2.0 / 3.0 * normal::pdf(0.5)).ln()
            + (2.0 / 3.0 * normal::pdf(3.0)).ln();
        assert!((fit.final_loglik - oracle).abs() < 1e-14);
    }

    #[test]
    fn dispatch_uses_halfline_closed_form() {
        let s = sample(&[-1.0, 0.5, 3.0]);
        let a = fit_gmle(&s, &SupportSpec::halfline_binary(), &FitConfig::default()).unwrap();
        assert_eq!(a, closed_form_halfline(&s));
    }

    #[test]
    fn symmetric_all_inside_is_pure_atoms() {
        let s = sample(&[-0.5, 0.1, 0.7]);
        let spec = SupportSpec::symmetric_bounded(1.0, 0.0, 1.0).unwrap();
        let fit = fit_gmle(&s, &spec, &FitConfig::default()).unwrap();
        assert_eq!(fit.pi_hat.len(), 6);
        for a in fit.pi_hat.atoms() {
            assert!(a.is_atomic());
            assert_eq!(a.weight, 1.0 / 6.0);
        }
        assert!(fit.pi_hat.is_symmetric());
        assert_eq!(fit.iterations, 0);
    }

    #[test]
    fn boundary_observation_counts_as_inside() {
        let s = sample(&[1.0, 2.0]);
        let spec = SupportSpec::symmetric_bounded(1.0, 0.0, 1.0).unwrap();
        let fit = fit_gmle(&s, &spec, &FitConfig::default()).unwrap();
        assert_eq!(fit.pi_hat.atomic_mass(1.0), 0.25);
        assert_eq!(fit.pi_hat.atomic_mass(-1.0), 0.25);
    }

    #[test]
    fn location_update_formula() {
        // Hand-set responsibilities through the centred statistics.
        let ys = [2.0, -3.0];
        let (r1, rm1, r2, rm2) = (0.6, 0.1, 0.2, 0.5);
        let x0 = 0.4;
        let st = Stats {
            loglik: 0.0,
            a: vec![r1 + r2],
            am: vec![rm1 + rm2],
            ae: vec![r1 * (ys[0] - x0) + r2 * (ys[1] - x0)],
            ame: vec![rm1 * (ys[0] + x0) + rm2 * (ys[1] + x0)],
            ae2: vec![0.0],
            ame2: vec![0.0],
            aw: vec![0.0],
            amw: vec![0.0],
        };
        let problem = ContinuousProblem {
            ys: &ys,
            within: &[],
            replicates: 1.0,
            mirrored: true,
            loc_clamp: (f64::NEG_INFINITY, f64::INFINITY),
            scale_clamp: (1e-6, 10.0),
            scales_fixed: true,
            total_mass: 1.0,
        };
        let out = problem.m_step(&[Component { x: x0, s: 1.0, mass: 1.0 }], &st);
        let oracle = ((r1 - rm1) * ys[0] + (r2 - rm2) * ys[1]) / (r1 + rm1 + r2 + rm2);
        assert!((out[0].x - oracle).abs() < 1e-15);
    }

    #[test]
    fn centred_component_is_a_fixed_point() {
        let s = sample(&[-2.5, 0.0, 2.5]);
        let spec = SupportSpec::symmetric_bounded(1.0, 0.0, 2.0).unwrap();
        let pi = MixingDistribution::new(
            vec![
                Atom::point(0.0, 0.0, 1.0 / 3.0),
                Atom::point(0.0, 1.0, 2.0 / 3.0),
            ],
            true,
        )
        .unwrap();
        let next = em_step(&pi, &s, &spec, &FitConfig::default()).unwrap();
        let cont: Vec<&Atom> = next.atoms().iter().filter(|a| !a.is_atomic()).collect();
        assert_eq!(cont.len(), 1);
        assert_eq!(cont[0].location, Location::Point { x: 0.0 });
    }

    #[test]
    fn em_step_needs_outside_observations() {
        let s = sample(&[0.2]);
        let spec = SupportSpec::symmetric_bounded(1.0, 0.0, 1.0).unwrap();
        let pi = MixingDistribution::new(
            vec![Atom::point(0.2, 0.0, 0.5), Atom::point(-0.2, 0.0, 0.5)],
            true,
        )
        .unwrap();
        assert_eq!(
            em_step(&pi, &s, &spec, &FitConfig::default()),
            Err(Error::EmptyResponsibility)
        );
    }

    #[test]
    fn grids() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        let g = geomspace(0.01, 1.0, 3);
        assert_eq!(g[0], 0.01);
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert_eq!(g[2], 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = FitConfig {
            loc_grid_size: 1,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = FitConfig {
            scale_floor: 0.0,
            ..FitConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
