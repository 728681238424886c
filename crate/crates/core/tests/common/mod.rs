#![allow(dead_code)]

use gmle_core::{
    em_step, loglik, sample_mixture, Atom, DominatingMeasure, FitConfig, Location, MixingDistribution, Sample, SupportSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weights summing to one, last weight absorbing the rounding.
pub fn weights(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let head: f64 = w[..k - 1].iter().sum();
    w[k - 1] = 1.0 - head;
    w
}

/// Random mixture with positive scales in `[s_lo, s_hi]`, some blobs.
pub fn continuous_mixture(seed: u64, s_lo: f64, s_hi: f64) -> MixingDistribution {
    let mut r = rng(seed);
    let k = r.random_range(1..=6);
    let w = weights(&mut r, k);
    let atoms = w
        .iter()
        .map(|&p| {
            let x = r.random_range(-4.0..4.0);
            let s = r.random_range(s_lo..s_hi);
            if r.random_bool(0.3) {
                Atom::blob(x, r.random_range(0.0..2.0), s, p)
            } else {
                Atom::point(x, s, p)
            }
        })
        .collect();
    MixingDistribution::new(atoms, false).unwrap()
}

/// Random mixture that may also carry zero-scale point masses.
pub fn any_mixture(seed: u64) -> MixingDistribution {
    let mut r = rng(seed ^ 0x9e37_79b9);
    let k = r.random_range(1..=6);
    let w = weights(&mut r, k);
    let atoms = w
        .iter()
        .map(|&p| {
            let x = r.random_range(-4.0..4.0);
            let s = if r.random_bool(0.25) { 0.0 } else { r.random_range(0.1..3.0) };
            Atom::point(x, s, p)
        })
        .collect();
    MixingDistribution::new(atoms, false).unwrap()
}

/// Random symmetric mixture built from mirror pairs.
pub fn symmetric_mixture(seed: u64) -> MixingDistribution {
    let mut r = rng(seed ^ 0x51ed_2701);
    let k = r.random_range(1..=4);
    let w = weights(&mut r, k);
    let mut atoms = Vec::new();
    for &p in &w {
        let x = r.random_range(0.1..4.0);
        let s = r.random_range(0.2..3.0);
        atoms.push(Atom::point(x, s, 0.5 * p));
        atoms.push(Atom::point(-x, s, 0.5 * p));
    }
    MixingDistribution::new(atoms, true).unwrap()
}

/// Recursive adaptive Simpson to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, lo, hi, fa, fm, fb, whole, tol, 40)
}

pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal cdf through the Simpson rule, independent of the crate.
pub fn big_phi(z: f64) -> f64 {
    if z < 0.0 {
        return 1.0 - big_phi(-z);
    }
    0.5 + adaptive_simpson(&phi, 0.0, z, 1e-14)
}

pub fn normal_sample(n: usize, sd: f64, seed: u64) -> Sample {
    let truth = MixingDistribution::degenerate(Location::Point { x: 0.0 }, sd).unwrap();
    sample_mixture(&truth, n, seed).unwrap()
}

/// A valid EM state: pinned atoms at the in-support observations with their
/// closed-form weights and random continuous components carrying the rest.
pub fn random_state(sample: &Sample, spec: &SupportSpec, seed: u64) -> MixingDistribution {
    let mut r = rng(seed);
    let n = sample.len() as f64;
    let inside: Vec<f64> = sample.values().iter().copied().filter(|&y| spec.admits_point_mass_at(y)).collect();
    let rest = 1.0 - inside.len() as f64 / n;
    let k = r.random_range(1..=5);
    let w = weights(&mut r, k);
    let (s_lo, s_hi) = (spec.scales.min().max(0.05), spec.scales.max());
    let mut atoms = Vec::new();
    for &y in &inside {
        if spec.symmetric {
            atoms.push(Atom::point(y, 0.0, 0.5 / n));
            atoms.push(Atom::point(-y, 0.0, 0.5 / n));
        } else {
            atoms.push(Atom::point(y, 0.0, 1.0 / n));
        }
    }
    for &p in &w {
        let s = r.random_range(s_lo..=s_hi);
        if spec.symmetric {
            let x = r.random_range(0.0..=spec.loc_hi);
            atoms.push(Atom::point(x, s, 0.5 * p * rest));
            atoms.push(Atom::point(-x, s, 0.5 * p * rest));
        } else {
            let x = r.random_range(-4.0..=spec.loc_hi);
            atoms.push(Atom::point(x, s, p * rest));
        }
    }
    MixingDistribution::new(atoms, spec.symmetric).unwrap()
}

/// EM steps from `states` random starts on n = 50 samples, and how many of
/// them lowered the log-likelihood by more than 1e-10 relative.
pub fn count_violations(spec: &SupportSpec, sd: f64, states: u64, steps: usize) -> (usize, usize) {
    let cfg = FitConfig::default();
    let dom = DominatingMeasure::lebesgue();
    let (mut violations, mut total) = (0, 0);
    for seed in 0..states {
        let sample = normal_sample(50, sd, 1000 + seed);
        let dom = if spec.scales.contains_zero() { DominatingMeasure::on_observations(&sample) } else { dom.clone() };
        let mut pi = random_state(&sample, spec, seed);
        let mut ll = loglik(&pi, &sample, &dom);
        for _ in 0..steps {
            pi = em_step(&pi, &sample, spec, &cfg).unwrap();
            let next = loglik(&pi, &sample, &dom);
            total += 1;
            if next < ll - 1e-10 * ll.abs().max(1.0) {
                violations += 1;
            }
            ll = next;
        }
    }
    (violations, total)
}

/// A random mixture (some blobs, scales spanning three decades) and a pair
/// of distinct observations.
pub fn random_pair_problem(seed: u64) -> (MixingDistribution, f64, f64) {
    let mut r = rng(seed);
    let k = r.random_range(1..=5);
    let w = weights(&mut r, k);
    let atoms = w
        .iter()
        .map(|&p| {
            let x = r.random_range(-3.0..3.0);
            let s = 10f64.powf(r.random_range(-2.0..1.0));
            if r.random_bool(0.3) {
                Atom::blob(x, r.random_range(0.0..3.0), s, p)
            } else {
                Atom::point(x, s, p)
            }
        })
        .collect();
    let pi = MixingDistribution::new(atoms, false).unwrap();
    let y1 = r.random_range(-4.0..4.0);
    let mut y2 = r.random_range(-4.0..4.0);
    if y2 == y1 {
        y2 += 0.5;
    }
    (pi, y1, y2)
}
