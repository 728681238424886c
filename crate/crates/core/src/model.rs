//! Mixing distributions over (location, scale) and the normal mixtures they
//! induce.
//!
//! A [`MixingDistribution`] is a finite list of [`Atom`]s. Each atom puts
//! weight `p` on a scale `s ≥ 0` and a location that is either a point `x` or
//! a normal blob `N(mu, tau2)`. The observable law is `Y = X + S·ε`. Atoms
//! with `s = 0` and a point location are the atomic part of that law; every
//! other atom contributes a normal density with variance `tau2 + s²`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Tolerance on the total weight of a mixing distribution.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Location {
    #[serde(rename = "point")]
    Point { x: f64 },
    #[serde(rename = "blob")]
    Blob { mu: f64, tau2: f64 },
}

impl Location {
    pub fn center(&self) -> f64 {
        match *self {
            Location::Point { x } => x,
            Location::Blob { mu, .. } => mu,
        }
    }

    pub fn tau2(&self) -> f64 {
        match *self {
            Location::Point { .. } => 0.0,
            Location::Blob { tau2, .. } => tau2,
        }
    }

    pub fn mirrored(&self) -> Location {
        match *self {
            Location::Point { x } => Location::Point { x: zero_sign(-x) },
            Location::Blob { mu, tau2 } => Location::Blob {
                mu: zero_sign(-mu),
                tau2,
            },
        }
    }

    fn canonical(self) -> Location {
        match self {
            Location::Point { x } => Location::Point { x: zero_sign(x) },
            Location::Blob { mu, tau2 } if tau2 == 0.0 => Location::Point { x: zero_sign(mu) },
            Location::Blob { mu, tau2 } => Location::Blob {
                mu: zero_sign(mu),
                tau2,
            },
        }
    }
}

/// Maps -0.0 to 0.0 so bitwise keys agree with numeric equality.
#[inline]
fn zero_sign(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub location: Location,
    pub scale: f64,
    pub weight: f64,
}

impl Atom {
    pub fn point(x: f64, scale: f64, weight: f64) -> Self {
        Atom {
            location: Location::Point { x },
            scale,
            weight,
        }
    }

    pub fn blob(mu: f64, tau2: f64, scale: f64, weight: f64) -> Self {
        Atom {
            location: Location::Blob { mu, tau2 },
            scale,
            weight,
        }
    }

    /// True for a point location at scale zero: a jump of the observable cdf.
    pub fn is_atomic(&self) -> bool {
        self.scale == 0.0 && matches!(self.location, Location::Point { .. })
    }

    /// Standard deviation of the normal this atom induces on `Y`.
    pub fn total_sd(&self) -> f64 {
        (self.location.tau2() + self.scale * self.scale).sqrt()
    }

    /// Unweighted Lebesgue density of `Y` under this atom alone; zero for atomic atoms.
    #[inline]
    pub fn kernel_density(&self, y: f64) -> f64 {
        match self.location {
            Location::Point { x } => {
                if self.scale > 0.0 {
                    normal::density(y, x, self.scale)
                } else {
                    0.0
                }
            }
            Location::Blob { mu, .. } => normal::density(y, mu, self.total_sd()),
        }
    }

    /// Unweighted cdf of `Y` under this atom, with right-continuous steps.
    #[inline]
    pub fn kernel_cdf(&self, y: f64) -> f64 {
        if self.is_atomic() {
            if self.location.center() <= y {
                1.0
            } else {
                0.0
            }
        } else {
            normal::cdf((y - self.location.center()) / self.total_sd())
        }
    }

    /// Unweighted survival function `P(Y > y)` under this atom.
    #[inline]
    pub fn kernel_sf(&self, y: f64) -> f64 {
        if self.is_atomic() {
            if self.location.center() > y {
                1.0
            } else {
                0.0
            }
        } else {
            normal::sf((y - self.location.center()) / self.total_sd())
        }
    }

    /// `E[X | Y = y]` under this atom alone (normal-normal conjugacy for blobs).
    #[inline]
    pub fn conditional_mean(&self, y: f64) -> f64 {
        match self.location {
            Location::Point { x } => x,
            Location::Blob { mu, tau2 } => {
                let shrink = tau2 / (tau2 + self.scale * self.scale);
                mu + shrink * (y - mu)
            }
        }
    }

    fn mirrored(&self) -> Atom {
        Atom {
            location: self.location.mirrored(),
            ..*self
        }
    }

    fn key(&self) -> AtomKey {
        match self.location {
            Location::Point { x } => AtomKey(0, x.to_bits(), 0, self.scale.to_bits()),
            Location::Blob { mu, tau2 } => {
                AtomKey(1, mu.to_bits(), tau2.to_bits(), self.scale.to_bits())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct AtomKey(u8, u64, u64, u64);

/// One term of the pairwise-summed evaluation: an atom alone, or an atom and
/// its mirror image carrying the same weight.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Orbit {
    Single(usize),
    Pair(usize, usize),
}

/// A finite discrete joint law of (location, scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixing", into = "RawMixing")]
pub struct MixingDistribution {
    atoms: Vec<Atom>,
    symmetric: bool,
    orbits: Vec<Orbit>,
}

impl MixingDistribution {
    /// Validates and canonicalizes: blobs with `tau2 = 0` become points,
    /// duplicate atoms are merged, and for symmetric input every atom is
    /// paired with its mirror (their weights are made exactly equal).
    pub fn new(atoms: Vec<Atom>, symmetric: bool) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidMixing("no atoms".into()));
        }
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        let mut index: HashMap<AtomKey, usize> = HashMap::new();
        for a in atoms {
            if !(a.weight.is_finite() && a.weight > 0.0) {
                return Err(Error::InvalidMixing(format!(
                    "weight must be positive, got {}",
                    a.weight
                )));
            }
            if !(a.scale.is_finite() && a.scale >= 0.0) {
                return Err(Error::InvalidMixing(format!(
                    "scale must be nonnegative, got {}",
                    a.scale
                )));
            }
            match a.location {
                Location::Point { x } if !x.is_finite() => {
                    return Err(Error::InvalidMixing("non-finite location".into()))
                }
                Location::Blob { mu, tau2 } if !(mu.is_finite() && tau2.is_finite() && tau2 >= 0.0) => {
                    return Err(Error::InvalidMixing(format!(
                        "blob needs finite mu and tau2 >= 0, got ({mu}, {tau2})"
                    )))
                }
                _ => {}
            }
            let atom = Atom {
                location: a.location.canonical(),
                scale: zero_sign(a.scale),
                weight: a.weight,
            };
            match index.get(&atom.key()) {
                Some(&i) => merged[i].weight += atom.weight,
                None => {
                    index.insert(atom.key(), merged.len());
                    merged.push(atom);
                }
            }
        }
        let total = pairwise_sum(&merged.iter().map(|a| a.weight).collect::<Vec<_>>());
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixing(format!(
                "weights sum to {total:.17}, expected 1"
            )));
        }
        let orbits = if symmetric {
            pair_mirrors(&mut merged, &index)?
        } else {
            (0..merged.len()).map(Orbit::Single).collect()
        };
        Ok(MixingDistribution {
            atoms: merged,
            symmetric,
            orbits,
        })
    }

    /// A single atom with weight one.
    pub fn degenerate(location: Location, scale: f64) -> Result<Self> {
        Self::new(
            vec![Atom {
                location,
                scale,
                weight: 1.0,
            }],
            false,
        )
    }

    /// Equal-weight point masses at scale 0 on every value (ties merge).
    pub fn empirical(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoObservations);
        }
        let w = 1.0 / values.len() as f64;
        Self::new(values.iter().map(|&y| Atom::point(y, 0.0, w)).collect(), false)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Sums `f(atom)` orbit by orbit; mirror pairs are added together first.
    #[inline]
    fn orbit_sum<F: Fn(&Atom) -> f64>(&self, f: F) -> f64 {
        let mut acc = 0.0;
        for orbit in &self.orbits {
            acc += match *orbit {
                Orbit::Single(i) => f(&self.atoms[i]),
                Orbit::Pair(i, j) => f(&self.atoms[i]) + f(&self.atoms[j]),
            };
        }
        acc
    }

    /// Lebesgue density of the continuous part of `F(·; Π)`.
    pub fn density(&self, y: f64) -> f64 {
        normal::flush(self.orbit_sum(|a| a.weight * a.kernel_density(y)))
    }

    /// Total weight of scale-zero point atoms located exactly at `y`.
    pub fn atomic_mass(&self, y: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.is_atomic() && a.location.center() == y)
            .fold(0.0, |acc, a| acc + a.weight)
    }

    /// `F(y; Π) = Σ p_j Φ((y − x_j)/s_j)`, with steps `1(x_j ≤ y)` for atoms.
    pub fn cdf(&self, y: f64) -> f64 {
        self.orbit_sum(|a| a.weight * a.kernel_cdf(y)).clamp(0.0, 1.0)
    }

    /// `P(Y > y)` summed from atom survival functions.
    pub fn sf(&self, y: f64) -> f64 {
        self.orbit_sum(|a| a.weight * a.kernel_sf(y)).clamp(0.0, 1.0)
    }

    /// Empirical Bayes rule `E[X | Y = y]`.
    pub fn posterior_mean(&self, y: f64) -> Result<f64> {
        if self.atomic_mass(y) > 0.0 {
            // Every contributing atom sits at y.
            return Ok(y);
        }
        let denom = self.orbit_sum(|a| a.weight * a.kernel_density(y));
        if denom < normal::DENSITY_FLUSH {
            return Err(Error::UndefinedPosterior(y));
        }
        let num = self.orbit_sum(|a| a.weight * a.kernel_density(y) * a.conditional_mean(y));
        Ok(num / denom)
    }

    /// Cdf of the scale marginal at `s`.
    pub fn scale_cdf(&self, s: f64) -> f64 {
        self.atoms
            .iter()
            .filter(|a| a.scale <= s)
            .map(|a| a.weight)
            .sum()
    }

    /// Cdf of the location marginal at `x`. Blob locations contribute their
    /// normal cdf.
    pub fn location_cdf(&self, x: f64) -> f64 {
        self.orbit_sum(|a| {
            a.weight
                * match a.location {
                    Location::Point { x: xj } => {
                        if xj <= x {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    Location::Blob { mu, tau2 } => normal::cdf((x - mu) / tau2.sqrt()),
                }
        })
        .clamp(0.0, 1.0)
    }

    /// Sorted distinct jump locations of the observable cdf.
    pub fn jump_points(&self) -> Vec<f64> {
        let mut pts: Vec<f64> = self
            .atoms
            .iter()
            .filter(|a| a.is_atomic())
            .map(|a| a.location.center())
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// Smallest and largest `center ∓ 8·sd` over atoms; a window holding
    /// essentially all of the observable mass.
    pub fn effective_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in &self.atoms {
            let c = a.location.center();
            let sd = a.total_sd();
            lo = lo.min(c - 8.0 * sd);
            hi = hi.max(c + 8.0 * sd);
        }
        (lo, hi)
    }
}

fn pair_mirrors(atoms: &mut [Atom], index: &HashMap<AtomKey, usize>) -> Result<Vec<Orbit>> {
    let mut seen = vec![false; atoms.len()];
    let mut orbits = Vec::new();
    for i in 0..atoms.len() {
        if seen[i] {
            continue;
        }
        let mirror = atoms[i].mirrored();
        let j = *index.get(&mirror.key()).ok_or_else(|| {
            Error::InvalidMixing(format!(
                "symmetric distribution lacks the mirror of {:?} at scale {}",
                atoms[i].location, atoms[i].scale
            ))
        })?;
        seen[i] = true;
        seen[j] = true;
        if i == j {
            orbits.push(Orbit::Single(i));
            continue;
        }
        let (wi, wj) = (atoms[i].weight, atoms[j].weight);
        if (wi - wj).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixing(format!(
                "mirror atoms carry different weights {wi} and {wj}"
            )));
        }
        let w = 0.5 * (wi + wj);
        atoms[i].weight = w;
        atoms[j].weight = w;
        orbits.push(Orbit::Pair(i, j));
    }
    Ok(orbits)
}

/// Pairwise (tree) summation; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Serialize, Deserialize)]
struct RawAtom {
    loc: Location,
    s: f64,
    p: f64,
}

#[derive(Serialize, Deserialize)]
struct RawMixing {
    atoms: Vec<RawAtom>,
    #[serde(default)]
    symmetric: bool,
}

impl TryFrom<RawMixing> for MixingDistribution {
    type Error = Error;
    fn try_from(raw: RawMixing) -> Result<Self> {
        MixingDistribution::new(
            raw.atoms
                .into_iter()
                .map(|a| Atom {
                    location: a.loc,
                    scale: a.s,
                    weight: a.p,
                })
                .collect(),
            raw.symmetric,
        )
    }
}

impl From<MixingDistribution> for RawMixing {
    fn from(m: MixingDistribution) -> Self {
        RawMixing {
            atoms: m
                .atoms
                .into_iter()
                .map(|a| RawAtom {
                    loc: a.location,
                    s: a.scale,
                    p: a.weight,
                })
                .collect(),
            symmetric: m.symmetric,
        }
    }
}

/// Sorted real observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NoObservations);
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation(format!("non-finite value {bad}")));
        }
        for v in values.iter_mut() {
            *v = zero_sign(*v);
        }
        values.sort_by(f64::total_cmp);
        Ok(Sample { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Right-continuous empirical cdf.
    pub fn ecdf(&self, y: f64) -> f64 {
        self.values.partition_point(|&v| v <= y) as f64 / self.values.len() as f64
    }
}

/// The scale set `S` of a support specification.
#[derive(Debug, Clone, PartialEq)]
pub enum ScaleSupport {
    Interval { lo: f64, hi: f64 },
    Points(Vec<f64>),
}

impl ScaleSupport {
    pub fn contains_zero(&self) -> bool {
        match self {
            ScaleSupport::Interval { lo, .. } => *lo == 0.0,
            ScaleSupport::Points(p) => p.contains(&0.0),
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            ScaleSupport::Interval { lo, .. } => *lo,
            ScaleSupport::Points(p) => p[0],
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            ScaleSupport::Interval { hi, .. } => *hi,
            ScaleSupport::Points(p) => *p.last().expect("nonempty"),
        }
    }

    /// Strictly positive scales usable by continuous components; `None` for an
    /// interval (scales then move freely within bounds).
    pub fn positive_points(&self) -> Option<Vec<f64>> {
        match self {
            ScaleSupport::Interval { .. } => None,
            ScaleSupport::Points(p) => Some(p.iter().copied().filter(|&s| s > 0.0).collect()),
        }
    }
}

/// The family restriction `𝒫(I, S)`, or its symmetric variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSupport", into = "RawSupport")]
pub struct SupportSpec {
    pub loc_lo: f64,
    pub loc_hi: f64,
    pub scales: ScaleSupport,
    pub symmetric: bool,
}

impl SupportSpec {
    pub fn new(loc_lo: f64, loc_hi: f64, scales: ScaleSupport, symmetric: bool) -> Result<Self> {
        let spec = SupportSpec {
            loc_lo,
            loc_hi,
            scales,
            symmetric,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `ℝ × [lo, hi]`.
    pub fn real_line(scale_lo: f64, scale_hi: f64) -> Result<Self> {
        Self::new(
            f64::NEG_INFINITY,
            f64::INFINITY,
            ScaleSupport::Interval {
                lo: scale_lo,
                hi: scale_hi,
            },
            false,
        )
    }

    /// `(−∞, 0] × {0, 1}`.
    pub fn halfline_binary() -> Self {
        Self::new(
            f64::NEG_INFINITY,
            0.0,
            ScaleSupport::Points(vec![0.0, 1.0]),
            false,
        )
        .expect("valid")
    }

    /// `(−∞, 0] × [lo, hi]`.
    pub fn halfline(scale_lo: f64, scale_hi: f64) -> Result<Self> {
        Self::new(
            f64::NEG_INFINITY,
            0.0,
            ScaleSupport::Interval {
                lo: scale_lo,
                hi: scale_hi,
            },
            false,
        )
    }

    /// Symmetric `[−c, c] × [lo, hi]`.
    pub fn symmetric_bounded(c: f64, scale_lo: f64, scale_hi: f64) -> Result<Self> {
        Self::new(
            -c,
            c,
            ScaleSupport::Interval {
                lo: scale_lo,
                hi: scale_hi,
            },
            true,
        )
    }

    fn validate(&self) -> Result<()> {
        if self.loc_lo.is_nan() || self.loc_hi.is_nan() || !(self.loc_lo < self.loc_hi) {
            return Err(Error::InvalidSupport(format!(
                "location interval [{}, {}] is empty",
                self.loc_lo, self.loc_hi
            )));
        }
        match &self.scales {
            ScaleSupport::Interval { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && *lo >= 0.0 && lo <= hi) {
                    return Err(Error::InvalidSupport(format!(
                        "scale interval [{lo}, {hi}] must satisfy 0 <= a <= b < inf"
                    )));
                }
            }
            ScaleSupport::Points(p) => {
                if p.is_empty()
                    || p.iter().any(|s| !(s.is_finite() && *s >= 0.0))
                    || p.windows(2).any(|w| w[0] >= w[1])
                {
                    return Err(Error::InvalidSupport(
                        "scale points must be nonempty, finite, nonnegative and strictly increasing"
                            .into(),
                    ));
                }
            }
        }
        if self.symmetric && self.loc_lo != -self.loc_hi {
            return Err(Error::InvalidSupport(
                "a symmetric family needs a location interval [-c, c]".into(),
            ));
        }
        Ok(())
    }

    pub fn is_real_line(&self) -> bool {
        self.loc_lo == f64::NEG_INFINITY && self.loc_hi == f64::INFINITY
    }

    pub fn is_halfline_binary(&self) -> bool {
        self.loc_lo == f64::NEG_INFINITY
            && self.loc_hi == 0.0
            && self.scales == ScaleSupport::Points(vec![0.0, 1.0])
    }

    /// Whether an observation can be explained by a point mass at `(y, 0)`.
    /// Observations exactly on the boundary count as inside.
    pub fn admits_point_mass_at(&self, y: f64) -> bool {
        self.scales.contains_zero() && y >= self.loc_lo && y <= self.loc_hi
    }
}

/// JSON encoding of an extended real: a number, or the strings "inf" / "-inf".
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExtReal {
    Finite(f64),
    Named(String),
}

impl ExtReal {
    fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtReal::Named("inf".into())
        } else if v == f64::NEG_INFINITY {
            ExtReal::Named("-inf".into())
        } else {
            ExtReal::Finite(v)
        }
    }

    fn to_f64(&self) -> Result<f64> {
        match self {
            ExtReal::Finite(v) => Ok(*v),
            ExtReal::Named(s) => match s.as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => Err(Error::InvalidSupport(format!("cannot parse bound {other:?}"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct RawSupport {
    loc_lo: ExtReal,
    loc_hi: ExtReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_points: Option<Vec<f64>>,
    #[serde(default)]
    symmetric: bool,
}

impl TryFrom<RawSupport> for SupportSpec {
    type Error = Error;
    fn try_from(raw: RawSupport) -> Result<Self> {
        let scales = match (raw.scale_points, raw.scale_lo, raw.scale_hi) {
            (Some(p), None, None) => ScaleSupport::Points(p),
            (None, Some(lo), Some(hi)) => ScaleSupport::Interval { lo, hi },
            _ => {
                return Err(Error::InvalidSupport(
                    "give either scale_lo and scale_hi, or scale_points".into(),
                ))
            }
        };
        SupportSpec::new(raw.loc_lo.to_f64()?, raw.loc_hi.to_f64()?, scales, raw.symmetric)
    }
}

impl From<SupportSpec> for RawSupport {
    fn from(s: SupportSpec) -> Self {
        let (scale_lo, scale_hi, scale_points) = match s.scales {
            ScaleSupport::Interval { lo, hi } => (Some(lo), Some(hi), None),
            ScaleSupport::Points(p) => (None, None, Some(p)),
        };
        RawSupport {
            loc_lo: ExtReal::from_f64(s.loc_lo),
            loc_hi: ExtReal::from_f64(s.loc_hi),
            scale_lo,
            scale_hi,
            scale_points,
            symmetric: s.symmetric,
        }
    }
}
