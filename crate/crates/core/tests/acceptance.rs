//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 7 and 8 are known to fail at their stated thresholds; the
//! faithfully computed estimators do not reach them (see `KNOWN_RED`). They
//! are still computed and reported, and the run exits nonzero if any other
//! criterion fails.

mod common;

use std::time::{Duration, Instant};

use gmle_core::limits::{
    limit_cdf_independent_gaussian, limit_mixing_symmetric, standard_normal_truth,
    truncnorm_conv_density,
};
use gmle_core::simulation::{band_mass, ks_distance, ks_grid, Comparison, Estimator};
use gmle_core::variants::{bivariate_bound, bivariate_density, fit_independent, fit_replicated, PairedSample};
use gmle_core::{
    fit_gmle, gmle_dominance, mixture_cdf, mixture_density, run_experiment, solve_eta, Atom, ExperimentConfig,
    FitConfig, Location, MixingDistribution, SupportSpec,
};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use common::{adaptive_simpson, big_phi, phi};

/// Criteria whose thresholds the estimator does not reach. The numbers
/// below are what the implementation actually produces.
///
/// 7: the fitted product measure converges to a law whose cdf at 0 is
///    0.8125, not the displayed limit's 0.6875, so KS stays near 0.125.
/// 8: the location-marginal truth is a point mass at 0, so KS ≤ 0.05 needs
///    0.9 of the fitted location mass exactly at 0. The fit clusters its
///    mass at the grand mean of the pairs, which is N(0, 1/(2n)) and never
///    exactly 0, giving KS near the mass on one side of 0.
const KNOWN_RED: &[usize] = &[7, 8];

const C: f64 = 1.959964;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn criterion_1() -> Verdict {
    let _ = solve_eta(C, 1.0);
    let t = Instant::now();
    let sol = solve_eta(C, 1.0).unwrap();
    let el = t.elapsed();
    let pass = (0.045..=0.047).contains(&sol.eta) && el < Duration::from_millis(1);
    verdict(pass, format!("eta = {:.12}, runtime {:.3} ms", sol.eta, ms(el)))
}

fn criterion_2() -> Verdict {
    use gmle_core::cli::random_pi_bar;
    use gmle_core::identifiability::{densities_equal, joint_range, moved_weight, scale_marginal_distance, wrap_mixing};
    let t = Instant::now();
    let (mut worst_gap, mut all_distinct) = (0.0f64, true);
    for seed in 0..10 {
        let pi_bar = random_pi_bar(seed, 1.0, 3.0).unwrap();
        let pi = wrap_mixing(&pi_bar, 1.0, 3.0).unwrap();
        let moved = moved_weight(&pi_bar, 1.0, 3.0);
        all_distinct &= pi != pi_bar && moved > 0.0 && scale_marginal_distance(&pi_bar, &pi) >= moved - 1e-15;
        let (lo, hi) = joint_range(&pi_bar, &pi);
        worst_gap = worst_gap.max(densities_equal(&pi_bar, &pi, lo, hi, 1000).max_density_gap);
    }
    let el = t.elapsed();
    let pass = all_distinct && worst_gap <= 1e-12 && el < Duration::from_secs(1);
    verdict(
        pass,
        format!("10 wraps distinct = {all_distinct}, max density gap {worst_gap:.3e}, runtime {:.1} ms", ms(el)),
    )
}

fn criterion_3() -> Verdict {
    let spec = SupportSpec::real_line(0.0, 2.0).unwrap();
    let cfg = FitConfig::default();
    let challengers = [
        MixingDistribution::degenerate(Location::Point { x: 0.0 }, 1.0).unwrap(),
        MixingDistribution::degenerate(Location::Point { x: 0.5 }, 0.2).unwrap(),
        MixingDistribution::degenerate(Location::Blob { mu: 0.0, tau2: 4.0 }, 1.0).unwrap(),
        MixingDistribution::new(vec![Atom::point(-1.0, 0.5, 0.5), Atom::point(1.0, 0.5, 0.5)], false).unwrap(),
        MixingDistribution::new(vec![Atom::point(0.0, 2.0, 0.3), Atom::blob(1.0, 1.0, 0.1, 0.7)], false).unwrap(),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (i, &n) in [1usize, 10, 1000].iter().enumerate() {
        let sample = common::normal_sample(n, 1.0, 31 + i as u64);
        let fit = fit_gmle(&sample, &spec, &cfg).unwrap();
        let exact = fit.pi_hat == MixingDistribution::empirical(sample.values()).unwrap();
        let nf = n as f64;
        let ll_ok = (fit.final_loglik + nf * nf.ln()).abs() <= 1e-9 * (nf * nf.ln()).max(1.0);
        let dominated = challengers
            .iter()
            .all(|ch| gmle_dominance(&fit.pi_hat, ch, &sample).map(|d| d > 0.0).unwrap_or(false));
        pass &= exact && ll_ok && dominated;
        notes.push(format!("n={n}: empirical={exact} loglik={:.6} dominates={dominated}", fit.final_loglik));
    }
    verdict(pass, notes.join("; "))
}

fn criterion_4() -> Verdict {
    let cfg = ExperimentConfig {
        truth: standard_normal_truth(),
        spec: SupportSpec::halfline_binary(),
        sample_sizes: vec![10_000],
        replications: 20,
        rng_seed: 4,
        comparison: Comparison::Both,
        estimator: Estimator::Gmle,
        fit: FitConfig::default(),
    };
    let t = Instant::now();
    let report = run_experiment(&cfg, 4).unwrap();
    let el = t.elapsed();
    let row = &report.summary()[0];
    let ks = row.ks_to_limit.as_ref().unwrap().median;
    let gaps: Vec<f64> = report.cells.iter().map(|c| c.cdf_gap_at_zero.unwrap()).collect();
    let gaps_ok = gaps.iter().all(|g| (g - 0.25).abs() <= 0.02);
    let (gmin, gmax) = gaps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)));
    let pass = ks <= 0.02 && gaps_ok && el < Duration::from_secs(10);
    verdict(
        pass,
        format!(
            "median KS to limit {ks:.4}, gap at 0 in [{gmin:.4}, {gmax:.4}] over 20 reps, runtime {:.2} s",
            el.as_secs_f64()
        ),
    )
}

fn criterion_5() -> Verdict {
    let b = 1.0;
    let spec = SupportSpec::symmetric_bounded(C, 0.0, b).unwrap();
    let truth = standard_normal_truth();
    let sample = gmle_core::sample_mixture(&truth, 10_000, 5).unwrap();
    let t = Instant::now();
    let fit = fit_gmle(&sample, &spec, &FitConfig::default()).unwrap();
    let el = t.elapsed();
    let eta = solve_eta(C, b).unwrap().eta;
    let cont: Vec<&Atom> = fit.pi_hat.atoms().iter().filter(|a| !a.is_atomic()).collect();
    let above_bound = cont.iter().all(|a| a.location.center().abs() > C - b);
    let out_weight: f64 = cont.iter().map(|a| a.weight).sum();
    let near: f64 =
        cont.iter().filter(|a| a.location.center().abs() >= C - eta - 0.01).map(|a| a.weight).sum();
    let fraction = near / out_weight;
    let fitted_band = band_mass(&fit.pi_hat, C, eta);
    let limit = limit_mixing_symmetric(|y| truth.cdf(y), C, b, 2).unwrap().band_mass_per_side;
    let pass = above_bound
        && fraction >= 0.95
        && (fitted_band - limit).abs() <= 0.02
        && el < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "{} components all beyond c-b = {above_bound}, fraction near c {fraction:.4}, band mass {fitted_band:.4} vs limit {limit:.4}, converged {}, runtime {:.2} s",
            cont.len(),
            fit.converged,
            el.as_secs_f64()
        ),
    )
}

fn criterion_6() -> Verdict {
    let mut worst = 0.0f64;
    for y in [-3.0, -1.0, 0.0, 1.0, 3.0] {
        let oracle = adaptive_simpson(&|x: f64| phi(y - x) * phi(x), -40.0, 0.0, 1e-13);
        worst = worst.max((truncnorm_conv_density(y) - oracle).abs());
    }
    // F(0)F(0) + (1 − F(0))∫_{−∞}^0 Φ(−x)φ(x)dx + (1 − F(0))Φ(0), F = Φ.
    let f0 = big_phi(0.0);
    let inner = adaptive_simpson(&|x: f64| big_phi(-x) * phi(x), -40.0, 0.0, 1e-13);
    let oracle = f0 * f0 + (1.0 - f0) * inner + (1.0 - f0) * f0;
    let got = limit_cdf_independent_gaussian(0.0);
    let pass = worst <= 1e-8 && (got - 0.6875).abs() <= 1e-9 && (got - oracle).abs() <= 1e-9;
    verdict(
        pass,
        format!("max density error {worst:.3e}; limit at 0 = {got:.12} (oracle {oracle:.12})"),
    )
}

fn criterion_7() -> Verdict {
    let truth = standard_normal_truth();
    let sample = gmle_core::sample_mixture(&truth, 10_000, 7).unwrap();
    let spec = SupportSpec::halfline(0.0, 2.0).unwrap();
    let t = Instant::now();
    let fit = fit_independent(&sample, &spec, &FitConfig::default()).unwrap();
    let pi = &fit.pi_hat;
    let mut jumps = pi.jump_points();
    jumps.push(0.0);
    let grid = ks_grid(-8.0, 8.0, 2001, &jumps);
    let ks = grid
        .par_iter()
        .map(|&y| (pi.cdf(y) - limit_cdf_independent_gaussian(y)).abs())
        .reduce(|| 0.0, f64::max);
    let el = t.elapsed();
    let f0 = pi.cdf(0.0);
    let pass = ks <= 0.03 && (f0 - 0.5).abs() >= 0.15 && el < Duration::from_secs(30);
    verdict(
        pass,
        format!(
            "KS to displayed limit {ks:.4} (threshold 0.03), fitted cdf(0) {f0:.4}, |cdf(0) - 0.5| = {:.4}, runtime {:.2} s",
            (f0 - 0.5).abs(),
            el.as_secs_f64()
        ),
    )
}

fn sample_pairs(truth: &MixingDistribution, n: usize, seed: u64) -> PairedSample {
    let mut r = common::rng(seed);
    let atoms = truth.atoms();
    let pairs = (0..n)
        .map(|_| {
            let u: f64 = r.random();
            let mut acc = 0.0;
            let a = atoms
                .iter()
                .find(|a| {
                    acc += a.weight;
                    u < acc
                })
                .unwrap_or(&atoms[atoms.len() - 1]);
            let z: f64 = r.sample(StandardNormal);
            let x = a.location.center() + a.location.tau2().sqrt() * z;
            let e1: f64 = r.sample(StandardNormal);
            let e2: f64 = r.sample(StandardNormal);
            (x + a.scale * e1, x + a.scale * e2)
        })
        .collect();
    PairedSample::new(pairs).unwrap()
}

fn criterion_8() -> Verdict {
    let truth = standard_normal_truth();
    let pairs = sample_pairs(&truth, 2000, 8);
    let fit = fit_replicated(&pairs, &SupportSpec::real_line(0.0, 3.0).unwrap(), &FitConfig::default()).unwrap();
    let mut jumps: Vec<f64> = fit.pi_hat.atoms().iter().map(|a| a.location.center()).collect();
    jumps.push(0.0);
    let grid = ks_grid(-8.0, 8.0, 2001, &jumps);
    let ks = ks_distance(|x| fit.pi_hat.location_cdf(x), |x| truth.location_cdf(x), &grid);
    let violations = (0..1000u64)
        .filter(|&seed| {
            let (pi, y1, y2) = common::random_pair_problem(seed);
            bivariate_density(y1, y2, &pi) > bivariate_bound(y1, y2)
        })
        .count();
    let main = fit.pi_hat.atoms().iter().max_by(|a, b| a.weight.total_cmp(&b.weight)).unwrap();
    let pass = ks <= 0.05 && violations == 0;
    verdict(
        pass,
        format!(
            "location KS to truth {ks:.4} (threshold 0.05; heaviest atom at x = {:.4}, weight {:.4}); bound violations {violations}/1000",
            main.location.center(),
            main.weight
        ),
    )
}

fn criterion_9() -> Verdict {
    let symmetric = SupportSpec::symmetric_bounded(1.0, 0.0, 1.0).unwrap();
    let halfline = SupportSpec::halfline(0.0, 2.0).unwrap();
    let (v1, t1) = common::count_violations(&symmetric, 1.5, 5, 100);
    let (v2, t2) = common::count_violations(&halfline, 1.0, 5, 100);
    let em_violations = v1 + v2;

    let mut cdf_bad = 0;
    for seed in 0..100 {
        let pi = common::any_mixture(seed);
        let (lo, hi) = pi.effective_range();
        let grid = gmle_core::solver::linspace(lo - 1.0, hi + 1.0, 1000);
        let vals: Vec<f64> = grid.iter().map(|&y| mixture_cdf(y, &pi)).collect();
        let monotone = vals.windows(2).all(|w| w[1] >= w[0]);
        if !(monotone && vals[0] < 1e-12 && vals[999] > 1.0 - 1e-12) {
            cdf_bad += 1;
        }
    }

    let mut fd_worst = 0.0f64;
    for seed in 0..100 {
        let pi = common::continuous_mixture(seed, 0.2, 3.0);
        let (lo, hi) = pi.effective_range();
        for y in gmle_core::solver::linspace(lo, hi, 50) {
            let h = 1e-5;
            let fd = (mixture_cdf(y + h, &pi) - mixture_cdf(y - h, &pi)) / (2.0 * h);
            fd_worst = fd_worst.max((fd - mixture_density(y, &pi)).abs());
        }
    }

    let cfg = ExperimentConfig {
        truth: standard_normal_truth(),
        spec: symmetric,
        sample_sizes: vec![200, 500],
        replications: 4,
        rng_seed: 9,
        comparison: Comparison::Both,
        estimator: Estimator::Gmle,
        fit: FitConfig::default(),
    };
    let base = run_experiment(&cfg, 1).unwrap();
    let deterministic = [4, 8].iter().all(|&w| base.same_results(&run_experiment(&cfg, w).unwrap()));

    let pass = em_violations == 0 && t1 + t2 == 1000 && cdf_bad == 0 && fd_worst <= 1e-6 && deterministic;
    verdict(
        pass,
        format!(
            "EM violations {em_violations}/{}; bad cdfs {cdf_bad}/100; max fd error {fd_worst:.3e}; reports identical for 1/4/8 workers = {deterministic}",
            t1 + t2
        ),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Verdict); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut unexpected = Vec::new();
    for (k, run) in criteria {
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        let known = if KNOWN_RED.contains(&k) { " [known red]" } else { "" };
        println!("criterion {k}: {tag}{known}: {}", v.detail);
        if !v.pass && !KNOWN_RED.contains(&k) {
            unexpected.push(k);
        }
        if v.pass && KNOWN_RED.contains(&k) {
            println!("criterion {k}: passed although listed as known red");
        }
    }
    if !unexpected.is_empty() {
        println!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
    println!("acceptance: no failures outside {KNOWN_RED:?}");
}
