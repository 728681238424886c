//! Command-line front end. Exit codes: 0 success, 1 input error, 2 a fit
//! that hit `max_em_iters` without converging (its result is still written).

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::identifiability;
use crate::json;
use crate::limits;
use crate::model::{Atom, MixingDistribution, Sample, SupportSpec};
use crate::simulation::{self, ExperimentConfig};
use crate::solver::{self, linspace, FitConfig, FitResult};
use crate::variants::{self, PairedSample};

#[derive(Debug, Parser)]
#[command(name = "gmle", version, about = "GMLE fits and limit oracles for normal location-scale mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the mixing distribution to data.
    Fit(FitArgs),
    /// Tabulate a predicted limit, or print eta.
    Limits(LimitsArgs),
    /// Wrap a mixing distribution and report that the mixture is unchanged.
    WrapDemo(WrapArgs),
    /// Draw a sample from a mixing distribution.
    Simulate(SimulateArgs),
    /// Run a seeded Monte Carlo sweep.
    Experiment(ExperimentArgs),
    /// Evaluate the posterior mean E[X | Y = y] on a grid.
    Eb(EbArgs),
}

/// Fit flags override fields of the `--config` file.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// CSV with one column `y`, or `y1,y2` with --replicated.
    #[arg(long)]
    pub data: PathBuf,
    /// Support spec: a JSON file, inline JSON, or a preset
    /// (`real:LO:HI`, `halfline-binary`, `halfline:LO:HI`, `symmetric:C:B`).
    #[arg(long)]
    pub spec: String,
    /// FitConfig JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Paired observations sharing one latent draw.
    #[arg(long, conflicts_with = "independent")]
    pub replicated: bool,
    /// Product-form fit with independent location and scale.
    #[arg(long)]
    pub independent: bool,
    #[arg(long)]
    pub max_em_iters: Option<usize>,
    #[arg(long)]
    pub loc_grid_size: Option<usize>,
    #[arg(long)]
    pub scale_grid_size: Option<usize>,
    #[arg(long)]
    pub loglik_rel_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LimitCase {
    Eta,
    Halfline,
    Symmetric,
    Independent,
}

#[derive(Debug, Args)]
pub struct LimitsArgs {
    #[arg(long, value_enum)]
    pub case: LimitCase,
    /// JSON: `{"c", "b"}` for eta and symmetric, `{"truth"}` otherwise. The
    /// truth is `"gauss"`, a mixing distribution, or a path to one.
    #[arg(long, default_value = "{}")]
    pub params: String,
    /// `lo:hi:n`.
    #[arg(long, default_value = "-4:4:81", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WrapArgs {
    /// Mixing distribution JSON; a seeded random one is drawn when absent.
    #[arg(long)]
    pub pi_bar: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub a_bar: f64,
    #[arg(long, default_value_t = 3.0)]
    pub b_bar: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub grid_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Mixing distribution JSON, or a fit result.
    #[arg(long)]
    pub mixing: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// ExperimentConfig JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Per-cell CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-n quartile summary JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EbArgs {
    /// Mixing distribution JSON, or a fit result.
    #[arg(long)]
    pub mixing: PathBuf,
    /// `lo:hi:n`.
    #[arg(long, default_value = "-4:4:81", allow_hyphen_values = true)]
    pub grid: String,
    /// Also evaluate at the values of this one-column CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs the command, returning the
/// process exit code. Diagnostics go to the error stream.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Limits(a) => cmd_limits(a),
        Command::WrapDemo(a) => cmd_wrap_demo(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Eb(a) => cmd_eb(a),
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_err(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn io_err(p: &Path, e: io::Error) -> Error {
    Error::Io(format!("{}: {e}", p.display()))
}

fn read_text(p: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(p)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| io_err(p, e))?;
    Ok(s)
}

/// One-column CSV of observations; a non-numeric first row is a header and
/// must read `y`.
pub fn read_sample_csv<R: Read>(reader: R) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != 1 {
            return Err(Error::InvalidObservation(format!(
                "expected one column, found {} on row {}",
                rec.len(),
                i + 1
            )));
        }
        let field = &rec[0];
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 && field == "y" => {}
            Err(_) => {
                return Err(Error::InvalidObservation(format!(
                    "not a number on row {}: {field:?}",
                    i + 1
                )))
            }
        }
    }
    Sample::new(values)
}

/// A mixing distribution from JSON: either the distribution itself or any
/// object holding one under `pi_hat` (a fit result) or `pi_wrapped`.
pub fn mixing_from_json(v: Value) -> Result<MixingDistribution> {
    let inner = match &v {
        Value::Object(m) if !m.contains_key("atoms") => m
            .get("pi_hat")
            .or_else(|| m.get("pi_wrapped"))
            .cloned()
            .ok_or_else(|| Error::InvalidMixing("no atoms, pi_hat or pi_wrapped field".into()))?,
        _ => v,
    };
    Ok(serde_json::from_value(inner)?)
}

pub fn load_mixing(p: &Path) -> Result<MixingDistribution> {
    mixing_from_json(serde_json::from_str(&read_text(p)?)?)
}

fn parse_floats(parts: &[&str], what: &str) -> Result<Vec<f64>> {
    parts
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidSupport(format!("bad number {s:?} in {what}")))
        })
        .collect()
}

/// Preset name, inline JSON, or a JSON file.
pub fn parse_spec(arg: &str) -> Result<SupportSpec> {
    let trimmed = arg.trim();
    if trimmed.starts_with('{') {
        return Ok(serde_json::from_str(trimmed)?);
    }
    let parts: Vec<&str> = trimmed.split(':').collect();
    match parts.as_slice() {
        ["halfline-binary"] => return Ok(SupportSpec::halfline_binary()),
        ["real", rest @ ..] if rest.len() == 2 => {
            let v = parse_floats(rest, trimmed)?;
            return SupportSpec::real_line(v[0], v[1]);
        }
        ["halfline", rest @ ..] if rest.len() == 2 => {
            let v = parse_floats(rest, trimmed)?;
            return SupportSpec::halfline(v[0], v[1]);
        }
        ["symmetric", rest @ ..] if rest.len() == 2 => {
            let v = parse_floats(rest, trimmed)?;
            return SupportSpec::symmetric_bounded(v[0], 0.0, v[1]);
        }
        _ => {}
    }
    let path = Path::new(trimmed);
    if path.exists() {
        return Ok(serde_json::from_str(&read_text(path)?)?);
    }
    Err(Error::InvalidSupport(format!(
        "{trimmed:?} is neither a preset nor a spec file"
    )))
}

/// `lo:hi:n`.
pub fn parse_grid(arg: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = arg.split(':').collect();
    let bad = || Error::InvalidConfig(format!("grid must be lo:hi:n, got {arg:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi && n >= 1) {
        return Err(bad());
    }
    Ok(linspace(lo, hi, n))
}

fn write_fit(out: &Option<PathBuf>, fit: &FitResult) -> Result<i32> {
    let mut w = output(out)?;
    json::to_writer(&mut w, fit)?;
    writeln!(w)?;
    w.flush()?;
    Ok(if fit.converged { 0 } else { 2 })
}

fn cmd_fit(a: FitArgs) -> Result<i32> {
    let mut cfg: FitConfig = match &a.config {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => FitConfig::default(),
    };
    if let Some(v) = a.max_em_iters {
        cfg.max_em_iters = v;
    }
    if let Some(v) = a.loc_grid_size {
        cfg.loc_grid_size = v;
    }
    if let Some(v) = a.scale_grid_size {
        cfg.scale_grid_size = v;
    }
    if let Some(v) = a.loglik_rel_tol {
        cfg.loglik_rel_tol = v;
    }
    let spec = parse_spec(&a.spec)?;
    let file = File::open(&a.data).map_err(|e| io_err(&a.data, e))?;
    let fit = if a.replicated {
        variants::fit_replicated(&PairedSample::from_csv(file)?, &spec, &cfg)?
    } else {
        let sample = read_sample_csv(file)?;
        if a.independent {
            variants::fit_independent(&sample, &spec, &cfg)?
        } else {
            solver::fit_gmle(&sample, &spec, &cfg)?
        }
    };
    write_fit(&a.out, &fit)
}

#[derive(Debug, Default, Deserialize)]
struct LimitParams {
    c: Option<f64>,
    b: Option<f64>,
    truth: Option<Value>,
}

enum Truth {
    Gauss,
    Mixing(MixingDistribution),
}

impl Truth {
    fn from_param(v: Option<Value>) -> Result<Truth> {
        match v {
            None => Ok(Truth::Gauss),
            Some(Value::String(s)) if s == "gauss" => Ok(Truth::Gauss),
            Some(Value::String(s)) => Ok(Truth::Mixing(load_mixing(Path::new(&s))?)),
            Some(v) => Ok(Truth::Mixing(mixing_from_json(v)?)),
        }
    }

    fn mixing(&self) -> MixingDistribution {
        match self {
            Truth::Gauss => limits::standard_normal_truth(),
            Truth::Mixing(m) => m.clone(),
        }
    }
}

fn limit_table<W: Write>(w: W, rows: impl Iterator<Item = Result<(f64, f64, f64)>>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["y", "limit_cdf", "truth_cdf", "gap"])?;
    for row in rows {
        let (y, lim, truth) = row?;
        out.write_record([
            json::fmt17(y),
            json::fmt17(lim),
            json::fmt17(truth),
            json::fmt17(lim - truth),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_limits(a: LimitsArgs) -> Result<i32> {
    let params: LimitParams = serde_json::from_str(&a.params)?;
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::InvalidConfig(format!("params need {name:?}")))
    };
    match a.case {
        LimitCase::Eta => {
            let sol = limits::solve_eta(need(params.c, "c")?, need(params.b, "b")?)?;
            println!("{:.12}", sol.eta);
            if a.out.is_some() {
                let mut w = output(&a.out)?;
                json::to_writer(&mut w, &sol)?;
                writeln!(w)?;
                w.flush()?;
            }
        }
        LimitCase::Halfline => {
            let truth = Truth::from_param(params.truth)?.mixing();
            let grid = parse_grid(&a.grid)?;
            let rows = grid.iter().map(|&y| {
                Ok((y, limits::limit_cdf_halfline(y, |t| truth.cdf(t)), truth.cdf(y)))
            });
            limit_table(output(&a.out)?, rows)?;
        }
        LimitCase::Independent => {
            let truth = Truth::from_param(params.truth)?;
            let m = truth.mixing();
            let grid = parse_grid(&a.grid)?;
            let rows = grid.iter().map(|&y| {
                let lim = match &truth {
                    Truth::Gauss => limits::limit_cdf_independent_gaussian(y),
                    Truth::Mixing(t) => limits::limit_cdf_independent_general(y, t)?,
                };
                Ok((y, lim, m.cdf(y)))
            });
            limit_table(output(&a.out)?, rows)?;
        }
        LimitCase::Symmetric => {
            let truth = Truth::from_param(params.truth)?.mixing();
            let (c, b) = (need(params.c, "c")?, need(params.b, "b")?);
            let grid = parse_grid(&a.grid)?;
            let lim = limits::limit_mixing_symmetric(|t| truth.cdf(t), c, b, 2)?;
            eprintln!(
                "eta = {}, band_mass_per_side = {}, interior_mass = {}",
                json::fmt17(lim.eta),
                json::fmt17(lim.band_mass_per_side),
                json::fmt17(lim.interior_mass)
            );
            let inner = c - lim.eta;
            let f_min = truth.cdf(-inner);
            let f_in = truth.cdf(inner);
            let rows = grid.iter().filter(|&&x| x.abs() < inner).map(|&x| {
                let v = lim.band_mass_per_side + 0.5 * (truth.cdf(x) - f_min) + 0.5 * (f_in - truth.cdf(-x));
                Ok((x, v, truth.location_cdf(x)))
            });
            limit_table(output(&a.out)?, rows)?;
        }
    }
    Ok(0)
}

/// A seeded random mixing distribution with point locations in [−3, 3] and
/// scales in `[a_bar, b_bar]`, at least one of which lies above the midpoint.
pub fn random_pi_bar(seed: u64, a_bar: f64, b_bar: f64) -> Result<MixingDistribution> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = rng.random_range(2..=6);
    let m = 0.5 * (a_bar + b_bar);
    let raw: Vec<(f64, f64, f64)> = (0..k)
        .map(|i| {
            let x = rng.random_range(-3.0..3.0);
            let s = if i == 0 {
                m + (b_bar - m) * rng.random_range(0.05..1.0)
            } else {
                rng.random_range(a_bar..=b_bar)
            };
            (x, s, rng.random_range(0.1..1.0))
        })
        .collect();
    let total: f64 = raw.iter().map(|r| r.2).sum();
    let mut atoms: Vec<Atom> = raw.iter().map(|&(x, s, w)| Atom::point(x, s, w / total)).collect();
    let rest: f64 = atoms[1..].iter().map(|a| a.weight).sum();
    atoms[0].weight = 1.0 - rest;
    MixingDistribution::new(atoms, false)
}

#[derive(serde::Serialize)]
struct WrapReport<'a> {
    pi_bar: &'a MixingDistribution,
    pi_wrapped: &'a MixingDistribution,
    max_density_gap: f64,
    max_cdf_gap: f64,
    scale_marginal_distance: f64,
    moved_weight: f64,
}

fn cmd_wrap_demo(a: WrapArgs) -> Result<i32> {
    let pi_bar = match &a.pi_bar {
        Some(p) => load_mixing(p)?,
        None => random_pi_bar(a.seed, a.a_bar, a.b_bar)?,
    };
    let wrapped = identifiability::wrap_mixing(&pi_bar, a.a_bar, a.b_bar)?;
    let (lo, hi) = identifiability::joint_range(&pi_bar, &wrapped);
    let gap = identifiability::densities_equal(&pi_bar, &wrapped, lo, hi, a.grid_points.max(2));
    let report = WrapReport {
        pi_bar: &pi_bar,
        pi_wrapped: &wrapped,
        max_density_gap: gap.max_density_gap,
        max_cdf_gap: gap.max_cdf_gap,
        scale_marginal_distance: identifiability::scale_marginal_distance(&pi_bar, &wrapped),
        moved_weight: identifiability::moved_weight(&pi_bar, a.a_bar, a.b_bar),
    };
    let mut w = output(&a.out)?;
    json::to_writer(&mut w, &report)?;
    writeln!(w)?;
    w.flush()?;
    Ok(0)
}

fn cmd_simulate(a: SimulateArgs) -> Result<i32> {
    let pi = load_mixing(&a.mixing)?;
    let sample = simulation::sample_mixture(&pi, a.n, a.seed)?;
    let mut out = csv::Writer::from_writer(output(&a.out)?);
    out.write_record(["y"])?;
    for &y in sample.values() {
        out.write_record([json::fmt17(y)])?;
    }
    out.flush()?;
    Ok(0)
}

fn cmd_experiment(a: ExperimentArgs) -> Result<i32> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&read_text(&a.config)?)?;
    if let Some(s) = a.seed {
        cfg.rng_seed = s;
    }
    if let Some(r) = a.replications {
        cfg.replications = r;
    }
    let report = simulation::run_experiment(&cfg, a.workers)?;
    report.write_csv(output(&a.out)?)?;
    if let Some(p) = &a.summary {
        let mut w = output(&Some(p.clone()))?;
        json::to_writer(&mut w, &report.summary())?;
        writeln!(w)?;
        w.flush()?;
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!(
            "cell n={} replication={}: {}",
            c.n,
            c.replication,
            c.error.as_deref().unwrap_or_default()
        );
    }
    let stalled = report.cells.iter().any(|c| c.converged == Some(false));
    Ok(if stalled { 2 } else { 0 })
}

fn cmd_eb(a: EbArgs) -> Result<i32> {
    let pi = load_mixing(&a.mixing)?;
    let mut ys = parse_grid(&a.grid)?;
    if let Some(p) = &a.data {
        ys.extend_from_slice(read_sample_csv(File::open(p).map_err(|e| io_err(p, e))?)?.values());
    }
    let mut out = csv::Writer::from_writer(output(&a.out)?);
    out.write_record(["y", "posterior_mean", "density", "atomic_mass"])?;
    for y in ys {
        let d = pi.posterior_mean(y)?;
        out.write_record([
            json::fmt17(y),
            json::fmt17(d),
            json::fmt17(pi.density(y)),
            json::fmt17(pi.atomic_mass(y)),
        ])?;
    }
    out.flush()?;
    Ok(0)
}
