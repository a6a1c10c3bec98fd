//! Command-line front end. `run_with` is the in-process entry point used by
//! the `disclab` binary and by tests.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::coulomb::{conditioned_esd, estimate_g20, ChainConfig};
use crate::error::{Error, Result};
use crate::matrix::read_fixture;
use crate::moments::{
    default_polynomials, draw_instance, estimate_gd, estimate_prob_opnorm, exact_instance, first_moment_check,
    laplace_sum, overlap_reconstruction, phase_empirics, second_moment_ratio_bruteforce, variance_bound_check,
};
use crate::phase::{classify, crossing_tau1_tauf, phase_table, tau1, tau2, tau_f, Margin};
use crate::rng::RngStream;
use crate::spectra::{rho_kappa, Density, SpectralDensity};

pub const SCHEMA_VERSION: u32 = 1;

pub mod exit {
    pub const OK: i32 = 0;
    /// An enforced check failed, or an unexpected internal error.
    pub const ASSERTION: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const BUDGET: i32 = 3;
    pub const ZERO_HIT: i32 = 4;
    pub const CHAIN: i32 = 5;
}

#[derive(Debug, Parser)]
#[command(name = "disclab", version, about = "Average-case matrix discrepancy laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Write the artifact here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "DISCLAB_WORKERS")]
    pub workers: Option<usize>,
    /// Manifest path (defaults to <out>.manifest.json when --out is given).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Turn reported comparisons into assertions that set the exit code.
    #[arg(long, global = true)]
    pub check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Threshold curves over a κ grid.
    Phase(PhaseArgs),
    /// Constrained spectral density ρ_κ and its CDF.
    Rho(RhoArgs),
    /// Eigenvalue histogram of norm-constrained GOE by MCMC.
    Esd(EsdArgs),
    /// Exact Z_κ and discrepancy by enumeration.
    Disc(DiscArgs),
    /// First-moment check and second-moment ratio by two routes.
    Moments(MomentsArgs),
    /// Binomial Laplace sum with F(q) = c q²/2.
    Laplace(LaplaceArgs),
    /// G''_d(0) from conditioned chains against its large-d value.
    G2(G2Args),
    /// P[‖W‖_op ≤ κ] for GOE(d).
    Prob(ProbArgs),
    /// Overlap function G_d(q) from correlated pairs.
    Gd(GdArgs),
    /// Region of (κ, τ) in the phase diagram.
    Classify(ClassifyArgs),
    /// Variance of Tr P(W, Y) against the log-Sobolev bound.
    Varbound(VarboundArgs),
    /// Empirical SAT frequency at n = round(τd²).
    Empirics(EmpiricsArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseArgs {
    /// κ grid as a:b:step.
    #[arg(long, default_value = "0.05:1.99:0.01")]
    pub grid: String,
}

#[derive(Debug, Args, Serialize)]
pub struct RhoArgs {
    #[arg(long)]
    pub kappa: f64,
    /// Number of cell-centred points across (−κ, κ).
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ChainArgs {
    #[arg(long)]
    pub seed: u64,
    /// Production sweeps per chain.
    #[arg(long, default_value_t = 20_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 2_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 10)]
    pub thin: usize,
    #[arg(long, default_value_t = 0.05)]
    pub proposal_sd: f64,
}

impl ChainArgs {
    fn config(&self) -> ChainConfig {
        ChainConfig {
            proposal_sd: self.proposal_sd,
            burn_in: self.burn_in,
            sweeps: self.samples,
            thin: self.thin,
            chains: self.chains,
            ..ChainConfig::new(self.seed)
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EsdArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub d: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DiscArgs {
    #[arg(long, required_unless_present = "fixture")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "fixture")]
    pub d: Option<usize>,
    /// κ grid as a:b:step.
    #[arg(long, default_value = "0.1:3:0.1")]
    pub grid: String,
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, required_unless_present = "fixture")]
    pub seed: Option<u64>,
    /// Matrix fixture holding a single instance.
    #[arg(long, conflicts_with_all = ["n", "d", "seed"])]
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MomentsArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    /// Monte Carlo draws for the first moment and per overlap.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct LaplaceArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub c: f64,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct G2Args {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct GdArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub q: f64,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub tau: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VarboundArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub d: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EmpiricsArgs {
    #[arg(long)]
    pub kappa: f64,
    #[arg(long)]
    pub tau: f64,
    /// Comma-separated dimensions.
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub instances: usize,
    #[arg(long)]
    pub seed: u64,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Phase(_) => "phase",
            Command::Rho(_) => "rho",
            Command::Esd(_) => "esd",
            Command::Disc(_) => "disc",
            Command::Moments(_) => "moments",
            Command::Laplace(_) => "laplace",
            Command::G2(_) => "g2",
            Command::Prob(_) => "prob",
            Command::Gd(_) => "gd",
            Command::Classify(_) => "classify",
            Command::Varbound(_) => "varbound",
            Command::Empirics(_) => "empirics",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Command::Esd(a) => Some(a.chain.seed),
            Command::G2(a) => Some(a.chain.seed),
            Command::Varbound(a) => Some(a.chain.seed),
            Command::Disc(a) => a.seed,
            Command::Moments(a) => Some(a.seed),
            Command::Prob(a) => Some(a.seed),
            Command::Gd(a) => Some(a.seed),
            Command::Empirics(a) => Some(a.seed),
            _ => None,
        }
    }
}

/// A single table cell.
#[derive(Debug, Clone)]
enum Cell {
    F(f64),
    I(u64),
    S(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::F(x) if x.is_nan() => "nan".into(),
            Cell::F(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::F(x) => format!("{x}"),
            Cell::I(x) => x.to_string(),
            Cell::S(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::F(x) => json!(x),
            Cell::I(x) => json!(x),
            Cell::S(s) => json!(s),
        }
    }
}

enum Body {
    Table { header: Vec<&'static str>, rows: Vec<Vec<Cell>> },
    Report(Value),
}

/// A pass/fail check carried in the metadata; enforced checks set the exit code.
#[derive(Debug, Clone, Serialize)]
struct Check {
    name: String,
    pass: bool,
    enforced: bool,
}

impl Check {
    fn invariant(name: &str, pass: bool) -> Self {
        Self { name: name.into(), pass, enforced: true }
    }

    fn comparison(name: &str, pass: bool, enforce: bool) -> Self {
        Self { name: name.into(), pass, enforced: enforce }
    }
}

struct Outcome {
    meta: Value,
    body: Body,
    checks: Vec<Check>,
    /// Exit code to report after the artifact is written, if not OK.
    soft_exit: Option<i32>,
}

impl Outcome {
    fn table(header: Vec<&'static str>, rows: Vec<Vec<Cell>>) -> Self {
        Self { meta: json!({}), body: Body::Table { header, rows }, checks: Vec::new(), soft_exit: None }
    }

    fn report(v: Value) -> Self {
        Self { meta: json!({}), body: Body::Report(v), checks: Vec::new(), soft_exit: None }
    }

    fn with_meta(mut self, meta: Value) -> Self {
        self.meta = meta;
        self
    }

    fn with_checks(mut self, checks: Vec<Check>) -> Self {
        self.checks = checks;
        self
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), "nan".into())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

fn render(format: Format, header_meta: &Value, body: &Body) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => {
            writeln!(buf, "# {}", serde_json::to_string(header_meta).map_err(internal)?)?;
            match body {
                Body::Table { header, rows } => {
                    writeln!(buf, "{}", header.join(","))?;
                    for r in rows {
                        writeln!(buf, "{}", r.iter().map(Cell::csv).collect::<Vec<_>>().join(","))?;
                    }
                }
                Body::Report(v) => {
                    let mut kv = Vec::new();
                    flatten("", v, &mut kv);
                    writeln!(buf, "key,value")?;
                    for (k, v) in kv {
                        writeln!(buf, "{k},{v}")?;
                    }
                }
            }
        }
        Format::Json => {
            let data = match body {
                Body::Table { header, rows } => Value::Array(
                    rows.iter()
                        .map(|r| {
                            Value::Object(
                                header.iter().zip(r).map(|(h, c)| (h.to_string(), c.json())).collect::<Map<_, _>>(),
                            )
                        })
                        .collect(),
                ),
                Body::Report(v) => v.clone(),
            };
            let doc = json!({ "metadata": header_meta, "data": data });
            buf.extend(serde_json::to_vec_pretty(&doc).map_err(internal)?);
            buf.push(b'\n');
        }
    }
    Ok(buf)
}

fn internal(e: impl std::fmt::Display) -> Error {
    Error::Internal(e.to_string())
}

fn to_value<T: Serialize>(x: &T) -> Result<Value> {
    serde_json::to_value(x).map_err(internal)
}

/// Parses `a:b:step` (or a single number) into an ascending grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::Domain(format!("bad grid value '{s}'")));
    match parts.as_slice() {
        [x] => Ok(vec![num(x)?]),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Domain(format!("grid '{spec}' needs a <= b and step > 0")));
            }
            let count = ((b - a) / step + 1e-9).floor() as usize + 1;
            if count > 1_000_000 {
                return Err(Error::Domain(format!("grid '{spec}' has too many points")));
            }
            Ok((0..count).map(|i| a + i as f64 * step).collect())
        }
        _ => Err(Error::Domain(format!("grid '{spec}' must be a:b:step"))),
    }
}

fn cmd_phase(a: &PhaseArgs) -> Result<Outcome> {
    let grid = parse_grid(&a.grid)?;
    let rows = phase_table(&grid)?;
    let (lo, hi) = crossing_tau1_tauf()?;
    let nearest =
        |c: f64| grid.iter().enumerate().min_by(|x, y| (x.1 - c).abs().total_cmp(&(y.1 - c).abs())).map(|(i, _)| i);
    let (mlo, mhi) = (nearest(lo), nearest(hi));
    let table = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let marker = if Some(i) == mlo || Some(i) == mhi { "tau1_tauf_crossing" } else { "" };
            vec![
                Cell::F(r.kappa),
                Cell::F(r.tau1),
                Cell::F(r.bartau),
                Cell::F(r.tau2),
                Cell::F(r.tau_f),
                Cell::F(r.eta_star),
                Cell::F(r.delta_star),
                Cell::S(marker.into()),
            ]
        })
        .collect();
    let header = vec!["kappa", "tau1", "bartau", "tau2", "tau_f", "eta_star", "delta_star", "marker"];
    Ok(Outcome::table(header, table).with_meta(json!({ "crossings_tau1_tauf": [lo, hi] })))
}

fn cmd_rho(a: &RhoArgs) -> Result<Outcome> {
    let density = SpectralDensity::new(a.kappa)?;
    if a.points == 0 {
        return Err(Error::Domain("points must be positive".into()));
    }
    let n = a.points;
    let rows = (0..n)
        .map(|i| {
            let x = a.kappa * ((2 * i + 1) as f64 / n as f64 - 1.0);
            Ok(vec![Cell::F(x), Cell::F(rho_kappa(a.kappa, x)?), Cell::F(density.cdf(x))])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome::table(vec!["x", "rho", "cdf"], rows))
}

fn cmd_esd(a: &EsdArgs, check: bool) -> Result<Outcome> {
    let config = a.chain.config();
    let (hist, diag) = conditioned_esd(a.kappa, a.d, &config)?;
    let rho = SpectralDensity::new(a.kappa)?;
    let l1 = hist.l1_to(&rho);
    let (chi2, dof) = hist.symmetry_chi2();
    let edges = hist.edges();
    let rows = hist
        .densities()
        .iter()
        .enumerate()
        .map(|(i, p)| vec![Cell::F(edges[i]), Cell::F(edges[i + 1]), Cell::F(*p)])
        .collect();
    let meta = json!({
        "l1_to_rho": l1,
        "l1_midpoint_to_rho": hist.l1_midpoint_to(&rho),
        "symmetry_chi2": chi2,
        "symmetry_dof": dof,
        "outside": hist.outside,
        "total": hist.total,
        "diagnostics": to_value(&diag)?,
    });
    Ok(Outcome::table(vec!["bin_left", "bin_right", "density"], rows).with_meta(meta).with_checks(vec![
        Check::invariant("counts_sum_to_total", hist.counts.iter().sum::<u64>() + hist.outside == hist.total),
        Check::comparison("l1_to_rho_le_0.05", l1 <= 0.05, check),
    ]))
}

fn cmd_disc(a: &DiscArgs) -> Result<Outcome> {
    let grid = parse_grid(&a.grid)?;
    let instances: Vec<Vec<crate::matrix::SymMatrix>> = match &a.fixture {
        Some(path) => vec![read_fixture(std::fs::File::open(path)?)?],
        None => {
            let (n, d, seed) = (a.n.unwrap_or(0), a.d.unwrap_or(0), a.seed.unwrap_or(0));
            if n == 0 || d == 0 {
                return Err(Error::Domain("n and d must be positive".into()));
            }
            if n > crate::moments::ENUMERATION_LIMIT {
                return Err(Error::Budget { n, limit: crate::moments::ENUMERATION_LIMIT });
            }
            (0..a.instances).map(|k| draw_instance(n, d, RngStream::new(seed, 0).child(k as u64))).collect()
        }
    };
    let mut rows = Vec::new();
    let (mut even, mut monotone) = (true, true);
    for (k, ws) in instances.iter().enumerate() {
        let r = exact_instance(ws, &grid)?;
        even &= r.z_counts.iter().all(|z| z % 2 == 0);
        monotone &= r.z_counts.windows(2).all(|w| w[0] <= w[1]);
        for (kappa, z) in grid.iter().zip(&r.z_counts) {
            rows.push(vec![
                Cell::I(k as u64),
                Cell::I(r.n as u64),
                Cell::I(r.d as u64),
                Cell::F(*kappa),
                Cell::I(*z),
                Cell::F(r.disc),
                Cell::F(r.min_margin),
                Cell::S(r.argmin.to_string()),
            ]);
        }
    }
    Ok(Outcome::table(vec!["instance", "n", "d", "kappa", "Z", "disc", "min_margin", "argmin"], rows)
        .with_checks(vec![Check::invariant("z_even", even), Check::invariant("z_monotone", monotone)]))
}

fn cmd_moments(a: &MomentsArgs, check: bool) -> Result<Outcome> {
    let first = first_moment_check(a.kappa, a.n, a.d, a.instances, a.samples, RngStream::new(a.seed, 0))?;
    let brute = second_moment_ratio_bruteforce(a.kappa, a.n, a.d, a.instances, RngStream::new(a.seed, 1))?;
    let recon = overlap_reconstruction(a.kappa, a.n, a.d, a.samples, RngStream::new(a.seed, 2))?;
    let z2 = brute.z_score(&recon.ratio);
    let report = json!({
        "first_moment": to_value(&first)?,
        "second_moment_ratio": {
            "bruteforce": to_value(&brute)?,
            "overlap_reconstruction": to_value(&recon)?,
            "z_score": z2,
        },
    });
    Ok(Outcome::report(report).with_checks(vec![
        Check::invariant("ratio_at_least_one", brute.mean >= 1.0 - 3.0 * brute.stderr),
        Check::comparison("first_moment_abs_z_le_3", first.z_score.abs() <= 3.0, check),
        Check::comparison("second_moment_abs_z_le_3", z2.abs() <= 3.0, check),
    ]))
}

fn cmd_laplace(a: &LaplaceArgs) -> Result<Outcome> {
    let c = a.c;
    let v = laplace_sum(|q| 0.5 * c * q * q, a.n)?;
    Ok(Outcome::table(vec!["n", "c", "value"], vec![vec![Cell::I(a.n as u64), Cell::F(c), Cell::F(v)]])
        .with_checks(vec![Check::invariant("finite", v.is_finite())]))
}

fn cmd_g2(a: &G2Args, check: bool) -> Result<Outcome> {
    let est = estimate_g20(a.kappa, a.d, a.tau, &a.chain.config())?;
    let predicted = tau_f(Margin::new(a.kappa)?) / a.tau;
    let observed = est.estimate.mean;
    let rel = (observed - predicted).abs() / predicted.abs();
    let report = json!({
        "predicted": predicted,
        "observed": observed,
        "relative_error": rel,
        "estimate": to_value(&est.estimate)?,
        "estimate_direct": to_value(&est.estimate_direct)?,
        "var_methods_z": est.moments.var_methods_z(),
        "moments": to_value(&est.moments)?,
    });
    Ok(Outcome::report(report).with_checks(vec![Check::comparison("within_15_percent", rel <= 0.15, check)]))
}

fn cmd_prob(a: &ProbArgs, notes: &mut Vec<String>) -> Result<Outcome> {
    let p = estimate_prob_opnorm(a.kappa, a.d, a.samples, RngStream::new(a.seed, 0))?;
    if p.rare_event_warning {
        notes.push(format!("warning: event likely too rare for {} direct draws", a.samples));
    }
    let mut out = Outcome::report(to_value(&p)?);
    if p.is_zero_hit() {
        out.soft_exit = Some(exit::ZERO_HIT);
    }
    Ok(out)
}

fn cmd_gd(a: &GdArgs, notes: &mut Vec<String>) -> Result<Outcome> {
    let g = estimate_gd(a.q, a.kappa, a.n, a.d, a.samples, RngStream::new(a.seed, 0))?;
    if g.rare_event_warning {
        notes.push(format!("warning: event likely too rare for {} direct draws", a.samples));
    }
    Ok(Outcome::report(to_value(&g)?))
}

fn cmd_classify(a: &ClassifyArgs) -> Result<Outcome> {
    let m = Margin::new(a.kappa)?;
    let c = classify(m, a.tau)?;
    Ok(Outcome::report(json!({
        "kappa": a.kappa,
        "tau": a.tau,
        "tau1": tau1(m),
        "tau2": tau2(m)?,
        "tau_f": tau_f(m),
        "region": c.region.to_string(),
        "second_moment_fails": c.second_moment_fails,
    })))
}

fn cmd_varbound(a: &VarboundArgs) -> Result<Outcome> {
    let r = variance_bound_check(a.kappa, a.d, &a.chain.config(), &default_polynomials())?;
    let checks = r.rows.iter().map(|row| Check::invariant(&format!("bound_{}", row.polynomial), row.pass)).collect();
    Ok(Outcome::report(to_value(&r)?).with_checks(checks))
}

fn cmd_empirics(a: &EmpiricsArgs) -> Result<Outcome> {
    let r = phase_empirics(a.kappa, a.tau, &a.dims, a.instances, RngStream::new(a.seed, 0))?;
    Ok(Outcome::report(to_value(&r)?))
}

fn dispatch(cli: &Cli, notes: &mut Vec<String>) -> Result<Outcome> {
    match &cli.command {
        Command::Phase(a) => cmd_phase(a),
        Command::Rho(a) => cmd_rho(a),
        Command::Esd(a) => cmd_esd(a, cli.check),
        Command::Disc(a) => cmd_disc(a),
        Command::Moments(a) => cmd_moments(a, cli.check),
        Command::Laplace(a) => cmd_laplace(a),
        Command::G2(a) => cmd_g2(a, cli.check),
        Command::Prob(a) => cmd_prob(a, notes),
        Command::Gd(a) => cmd_gd(a, notes),
        Command::Classify(a) => cmd_classify(a),
        Command::Varbound(a) => cmd_varbound(a),
        Command::Empirics(a) => cmd_empirics(a),
    }
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Budget { .. } => exit::BUDGET,
        Error::ZeroHit(_) => exit::ZERO_HIT,
        Error::ChainNonConvergence(_) => exit::CHAIN,
        Error::Domain(_) | Error::Fixture(_) | Error::Io(_) | Error::DimensionMismatch { .. } => exit::USAGE,
        _ => exit::ASSERTION,
    }
}

#[derive(Debug, Serialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

/// Run record written next to the artifact. Wall time lives here, never in
/// the artifact itself, so artifacts stay byte-reproducible.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub artifacts: Vec<ArtifactRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn manifest_path(cli: &Cli) -> Option<PathBuf> {
    cli.manifest.clone().or_else(|| {
        cli.out.as_ref().map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

fn execute(cli: &Cli, pool: &rayon::ThreadPool, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let start = Instant::now();
    let _ = writeln!(err, "disclab: {} started", cli.command.name());
    let mut notes = Vec::new();
    let outcome = pool.install(|| dispatch(cli, &mut notes));
    for n in &notes {
        let _ = writeln!(err, "disclab: {n}");
    }
    let outcome = outcome?;
    let config = to_value(&cli.command)?;
    let header = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cli.command.name(),
        "config": config,
        "meta": outcome.meta,
        "checks": to_value(&outcome.checks)?,
    });
    let bytes = render(cli.format, &header, &outcome.body)?;
    match &cli.out {
        Some(path) => write_file(path, &bytes)?,
        None => out.write_all(&bytes)?,
    }
    if let Some(mpath) = manifest_path(cli) {
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            command: cli.command.name().into(),
            parameters: config,
            seed: cli.command.seed(),
            wall_time_s: start.elapsed().as_secs_f64(),
            artifacts: vec![ArtifactRecord {
                path: cli.out.as_ref().map_or("-".into(), |p| p.display().to_string()),
                sha256: sha256_hex(&bytes),
            }],
        };
        write_file(&mpath, &serde_json::to_vec_pretty(&manifest).map_err(internal)?)?;
    }
    for c in outcome.checks.iter().filter(|c| c.enforced && !c.pass) {
        let _ = writeln!(err, "disclab: check failed: {}", c.name);
    }
    if outcome.checks.iter().any(|c| c.enforced && !c.pass) {
        return Ok(exit::ASSERTION);
    }
    Ok(outcome.soft_exit.unwrap_or(exit::OK))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let pool = match cli.workers {
        Some(0) => {
            let _ = writeln!(err, "disclab: --workers must be positive");
            return exit::USAGE;
        }
        Some(w) => rayon::ThreadPoolBuilder::new().num_threads(w).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "disclab: {e}");
            return exit::ASSERTION;
        }
    };
    match execute(&cli, &pool, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "disclab: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut full = vec!["disclab"];
        full.extend_from_slice(args);
        let code = run_with(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.05:1.99:0.01").unwrap().len(), 195);
        assert_eq!(parse_grid("1.5").unwrap(), vec![1.5]);
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a:b").is_err());
        assert!(parse_grid("0:1:0").is_err());
    }

    #[test]
    fn laplace_zero() {
        let (code, out, _) = run(&["laplace", "--c", "0", "--n", "1000"]);
        assert_eq!(code, 0);
        let last = out.lines().last().unwrap();
        assert_eq!(last, "1000,0,1");
    }

    #[test]
    fn metadata_line_parses() {
        let (code, out, _) = run(&["classify", "--kappa", "1", "--tau", "0.1"]);
        assert_eq!(code, 0);
        let first = out.lines().next().unwrap();
        let meta: Value = serde_json::from_str(first.strip_prefix("# ").unwrap()).unwrap();
        assert_eq!(meta["schema_version"], SCHEMA_VERSION);
        assert_eq!(meta["config"]["classify"]["kappa"], 1.0);
        assert!(out.contains("region,UNSAT"));
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(&["prob", "--kappa", "1", "--d", "4"]).0, exit::USAGE);
        assert_eq!(run(&["bogus"]).0, exit::USAGE);
        assert_eq!(run(&["phase", "--grid", "1:0:1"]).0, exit::USAGE);
        assert_eq!(run(&["--help"]).0, exit::OK);
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::Budget { n: 30, limit: 26 }), 3);
        assert_eq!(exit_code(&Error::ZeroHit(String::new())), 4);
        assert_eq!(exit_code(&Error::ChainNonConvergence(String::new())), 5);
        assert_eq!(exit_code(&Error::Internal(String::new())), 1);
    }

    #[test]
    fn flatten_report() {
        let mut kv = Vec::new();
        flatten("", &json!({"a": {"b": 1, "c": [2, null]}, "s": "x"}), &mut kv);
        assert_eq!(
            kv,
            vec![
                ("a.b".to_string(), "1".to_string()),
                ("a.c.0".to_string(), "2".to_string()),
                ("a.c.1".to_string(), "nan".to_string()),
                ("s".to_string(), "x".to_string()),
            ]
        );
    }
}
