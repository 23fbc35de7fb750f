//! Batch front end: experiment configs, subcommands, CSV/JSON reports.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 failed bound
//! audit, 3 failed convergence criterion.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::bounds::{audit_suite, write_audits_csv};
use crate::dist::{make_family, DistributionSpec, FamilyTag, Params};
use crate::richter::{
    symmetric_grid, tsallis_report, RichterModel, XPolicy, DEFAULT_POINTS, ORACLE_ABS_TOL, TSALLIS_TAU_MAX,
};
use crate::saddle::{tau_range, tilt_point, Saddle, SOLVER_TOL};
use crate::series::{cramer_series, mu_series, saddle_series, DEFAULT_ORDER};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_AUDIT: i32 = 2;
pub const EXIT_CONVERGENCE: i32 = 3;

const DEFAULT_N_LIST: [u32; 3] = [64, 256, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "richter", version, about = "Refined Richter approximation experiments")]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Family constants: α, M, n₀, leading cumulant, admissible τ ranges.
    Families,
    /// Saddle point, λ and μ at the given τ values.
    Saddle,
    /// Coefficients of the Cramér series, μ series and saddle series.
    CramerSeries,
    /// Error table of the approximation against exact densities.
    Approx,
    /// Runs the bound audit suite; exit 2 on any failure.
    VerifyBounds,
    /// Fitted-constant error-law checks across n; exit 3 on failure.
    Convergence,
    /// Restricted one-sided supremum across n; exit 3 on failure.
    Tsallis,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Experiment config file (`[section]` headers, `key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// gaussian | uniform_sym | exp_centered | grid
    #[arg(long, global = true)]
    pub family: Option<FamilyTag>,
    /// Family parameter `key=value` (repeatable), e.g. `path=density.txt`.
    #[arg(long = "params", global = true, value_parser = parse_kv)]
    pub params: Vec<(String, String)>,
    #[arg(long, global = true)]
    pub n: Option<u32>,
    /// Comma-separated list of n.
    #[arg(long = "n-list", global = true, value_delimiter = ',')]
    pub n_list: Vec<u32>,
    /// Comma-separated x values.
    #[arg(long, global = true, value_delimiter = ',')]
    pub x: Vec<f64>,
    /// Comma-separated τ values (saddle), or the τ range (tsallis).
    #[arg(long, global = true, value_delimiter = ',')]
    pub tau: Vec<f64>,
    /// Series truncation order.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Absolute tolerance of the inversion oracle.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long = "out-dir", global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

fn parse_kv(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got '{s}'"))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(format!("empty key in '{s}'"));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: field '{field}': {reason}")]
    Field { line: usize, field: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub inversion_abs_tol: f64,
    pub solver_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outputs {
    pub dir: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub family: Option<FamilyTag>,
    pub params: Params,
    /// Sorted ascending, without duplicates.
    pub n_list: Vec<u32>,
    pub x_policy: XPolicy,
    pub tau: Vec<f64>,
    /// Smallest n the main approximation is trusted at; every n in
    /// `n_list` must reach it.
    pub n1: Option<u32>,
    pub order: usize,
    pub tolerances: Tolerances,
    pub outputs: Outputs,
    pub jobs: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            family: None,
            params: Params::new(),
            n_list: Vec::new(),
            x_policy: XPolicy::default(),
            tau: Vec::new(),
            n1: None,
            order: DEFAULT_ORDER,
            tolerances: Tolerances { inversion_abs_tol: ORACLE_ABS_TOL, solver_tol: SOLVER_TOL },
            outputs: Outputs { dir: None, format: Format::Csv },
            jobs: None,
        }
    }
}

struct Entry {
    value: String,
    line: usize,
}

fn field<T: FromStr>(key: &str, e: &Entry) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    e.value.parse().map_err(|err: T::Err| ConfigError::Field {
        line: e.line,
        field: key.to_string(),
        reason: err.to_string(),
    })
}

fn list<T: FromStr>(key: &str, e: &Entry) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|err: T::Err| ConfigError::Field {
                line: e.line,
                field: key.to_string(),
                reason: format!("'{s}': {err}"),
            })
        })
        .collect()
}

impl ExperimentConfig {
    /// Parses the config text over the defaults. Sections: `[family]`
    /// (`name` plus family parameters), `[run]` (`n`, `n_list`, `n1`, `x`,
    /// `tau`, `order`, `jobs`, `x_policy`, `points`, `tau_max`, `x_max`),
    /// `[tolerances]` (`abs_tol`, `solver_tol`), `[output]` (`dir`,
    /// `format`). `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.split('#').next().unwrap_or("").trim();
            if s.is_empty() {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, reason: format!("unterminated section header '{s}'") })?
                    .trim();
                if !["family", "run", "tolerances", "output"].contains(&name) {
                    return Err(ConfigError::Syntax { line, reason: format!("unknown section '{name}'") });
                }
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, reason: format!("expected key = value, got '{s}'") })?;
            let section = current
                .clone()
                .ok_or_else(|| ConfigError::Syntax { line, reason: "key outside of any section".into() })?;
            let key = k.trim().to_string();
            let entries = sections.entry(section.clone()).or_default();
            if entries.contains_key(&key) {
                return Err(ConfigError::Field { line, field: format!("{section}.{key}"), reason: "duplicate key".into() });
            }
            entries.insert(key, Entry { value: v.trim().to_string(), line });
        }

        let empty = BTreeMap::new();
        for (key, e) in sections.get("family").unwrap_or(&empty) {
            if key == "name" {
                cfg.family = Some(field("family.name", e)?);
            } else {
                cfg.params.insert(key.clone(), e.value.clone());
            }
        }

        let run = sections.get("run").unwrap_or(&empty);
        let mut policy_kind = None;
        let (mut points, mut tau_max, mut x_max) = (DEFAULT_POINTS, None, None);
        for (key, e) in run {
            let name = format!("run.{key}");
            match key.as_str() {
                "n" => cfg.n_list = vec![field(&name, e)?],
                "n_list" => cfg.n_list = list(&name, e)?,
                "x" => cfg.x_policy = XPolicy::List { xs: list(&name, e)? },
                "tau" => cfg.tau = list(&name, e)?,
                "order" => cfg.order = field(&name, e)?,
                "n1" => cfg.n1 = Some(field(&name, e)?),
                "jobs" => cfg.jobs = Some(field(&name, e)?),
                "x_policy" => policy_kind = Some((e.value.clone(), e.line)),
                "points" => points = field(&name, e)?,
                "tau_max" => tau_max = Some(field(&name, e)?),
                "x_max" => x_max = Some(field::<f64>(&name, e)?),
                _ => return Err(ConfigError::Field { line: e.line, field: name, reason: "unknown key".into() }),
            }
        }
        if let Some((kind, line)) = policy_kind {
            cfg.x_policy = match kind.as_str() {
                "tau_span" => XPolicy::TauSpan { points, tau_max },
                "fixed_x" => XPolicy::FixedX {
                    points,
                    x_max: x_max.ok_or_else(|| ConfigError::Field {
                        line,
                        field: "run.x_max".into(),
                        reason: "required by x_policy = fixed_x".into(),
                    })?,
                },
                "list" if matches!(cfg.x_policy, XPolicy::List { .. }) => cfg.x_policy.clone(),
                "list" => {
                    return Err(ConfigError::Field { line, field: "run.x".into(), reason: "required by x_policy = list".into() })
                }
                other => {
                    return Err(ConfigError::Field {
                        line,
                        field: "run.x_policy".into(),
                        reason: format!("unknown policy '{other}' (tau_span, fixed_x, list)"),
                    })
                }
            };
        } else if let XPolicy::TauSpan { .. } = cfg.x_policy {
            cfg.x_policy = XPolicy::TauSpan { points, tau_max };
        }

        for (key, e) in sections.get("tolerances").unwrap_or(&empty) {
            let name = format!("tolerances.{key}");
            let v: f64 = field(&name, e)?;
            if !(v > 0.0) {
                return Err(ConfigError::Field { line: e.line, field: name, reason: "must be positive".into() });
            }
            match key.as_str() {
                "abs_tol" => cfg.tolerances.inversion_abs_tol = v,
                "solver_tol" => cfg.tolerances.solver_tol = v,
                _ => return Err(ConfigError::Field { line: e.line, field: name, reason: "unknown key".into() }),
            }
        }

        for (key, e) in sections.get("output").unwrap_or(&empty) {
            let name = format!("output.{key}");
            match key.as_str() {
                "dir" => cfg.outputs.dir = Some(PathBuf::from(&e.value)),
                "format" => cfg.outputs.format = field(&name, e)?,
                _ => return Err(ConfigError::Field { line: e.line, field: name, reason: "unknown key".into() }),
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Command-line flags override config values.
    pub fn apply(&mut self, o: &Options) {
        if let Some(f) = o.family {
            self.family = Some(f);
        }
        for (k, v) in &o.params {
            self.params.insert(k.clone(), v.clone());
        }
        if let Some(n) = o.n {
            self.n_list = vec![n];
        }
        if !o.n_list.is_empty() {
            self.n_list = o.n_list.clone();
        }
        if !o.x.is_empty() {
            self.x_policy = XPolicy::List { xs: o.x.clone() };
        }
        if !o.tau.is_empty() {
            self.tau = o.tau.clone();
        }
        if let Some(k) = o.order {
            self.order = k;
        }
        if let Some(t) = o.tol {
            self.tolerances.inversion_abs_tol = t;
        }
        if o.jobs.is_some() {
            self.jobs = o.jobs;
        }
        if o.out_dir.is_some() {
            self.outputs.dir = o.out_dir.clone();
        }
        if let Some(f) = o.format {
            self.outputs.format = f;
        }
    }

    /// Normalizes `n_list` and checks tolerances against the family.
    pub fn validate(&mut self, d: Option<&DistributionSpec>) -> Result<(), ConfigError> {
        self.n_list.sort_unstable();
        self.n_list.dedup();
        let t = self.tolerances;
        if !(t.inversion_abs_tol > 0.0 && t.solver_tol > 0.0) {
            return Err(ConfigError::Invalid("tolerances must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        if let (Some(n1), Some(&n)) = (self.n1, self.n_list.first()) {
            if n < n1 {
                return Err(ConfigError::Invalid(format!("n = {n} is below the configured floor n1 = {n1}")));
            }
        }
        if let Some(d) = d {
            let floor = (2 * d.n0()).max(2);
            if let Some(&n) = self.n_list.iter().find(|&&n| n < floor) {
                return Err(ConfigError::Invalid(format!("n = {n} is below 2·n0 = {floor} for {}", d.name())));
            }
        }
        Ok(())
    }

    fn n_list_or_default(&self) -> Vec<u32> {
        if self.n_list.is_empty() {
            DEFAULT_N_LIST.to_vec()
        } else {
            self.n_list.clone()
        }
    }
}

/// A failed run with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(e: impl std::fmt::Display) -> Self {
        Self { code: EXIT_USAGE, message: e.to_string() }
    }
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

struct Report {
    stem: &'static str,
    csv: String,
    json: String,
}

impl Report {
    fn new<T: Serialize>(stem: &'static str, csv: String, value: &T) -> Result<Self, Failure> {
        let mut json = serde_json::to_string_pretty(value).map_err(Failure::usage)?;
        json.push('\n');
        Ok(Self { stem, csv, json })
    }
}

/// Writes `reports` as `<stem>.<format>` under the output directory, or the
/// first one to stdout when there is none.
fn emit(cfg: &ExperimentConfig, reports: &[Report]) -> Result<(), Failure> {
    let fmt = cfg.outputs.format;
    let body = |r: &Report| if fmt == Format::Csv { r.csv.clone() } else { r.json.clone() };
    match &cfg.outputs.dir {
        None => print!("{}", body(&reports[0])),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?;
            for r in reports {
                let ext = if fmt == Format::Csv { "csv" } else { "json" };
                let path = dir.join(format!("{}.{ext}", r.stem));
                std::fs::write(&path, body(r)).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<String, Failure> {
    let mut buf = Vec::new();
    write(&mut buf).map_err(Failure::usage)?;
    String::from_utf8(buf).map_err(Failure::usage)
}

fn family(cfg: &ExperimentConfig) -> Result<DistributionSpec, Failure> {
    let tag = cfg.family.ok_or_else(|| Failure::usage("--family is required"))?;
    make_family(tag, &cfg.params).map_err(Failure::usage)
}

#[derive(Debug, Serialize)]
struct FamilyRow {
    name: &'static str,
    alpha: f64,
    density_bound: f64,
    n0: u32,
    cgf_domain_radius: f64,
    gamma3: f64,
    gamma4: f64,
    m: Option<usize>,
    gamma_m: Option<f64>,
    tau0_theorem: f64,
    tau0_analytic: f64,
}

fn cmd_families(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let specs = match cfg.family {
        Some(_) => vec![family(cfg)?],
        None => FamilyTag::BUILT_IN.iter().map(|&t| DistributionSpec::builtin(t)).collect(),
    };
    let mut rows = Vec::new();
    for d in &specs {
        let c = d.cumulants(4).map_err(Failure::usage)?;
        let r = tau_range(d);
        rows.push(FamilyRow {
            name: d.name(),
            alpha: d.alpha(),
            density_bound: d.density_bound(),
            n0: d.n0(),
            cgf_domain_radius: d.cgf_domain_radius(),
            gamma3: c.gamma(3),
            gamma4: c.gamma(4),
            m: c.m(),
            gamma_m: c.gamma_m(),
            tau0_theorem: r.theorem,
            tau0_analytic: r.analytic,
        });
    }
    let mut csv = String::from("name,alpha,density_bound,n0,cgf_domain_radius,gamma3,gamma4,m,gamma_m,tau0_theorem,tau0_analytic\n");
    for r in &rows {
        let m = r.m.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.name,
            num(r.alpha),
            num(r.density_bound),
            r.n0,
            num(r.cgf_domain_radius),
            num(r.gamma3),
            num(r.gamma4),
            m,
            opt_num(r.gamma_m),
            num(r.tau0_theorem),
            num(r.tau0_analytic)
        );
    }
    emit(cfg, &[Report::new("families", csv, &rows)?])?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SaddleRow {
    tau: f64,
    z0: f64,
    lambda: f64,
    mu: f64,
    rho2: f64,
    residual: f64,
    /// Whether `|τ|` lies in the certified analytic range; outside it the
    /// values come from the closed-form definitions at the real saddle.
    in_range: bool,
}

fn cmd_saddle(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let d = family(cfg)?;
    let s = Saddle::with_order(&d, cfg.order).map_err(Failure::usage)?.with_tolerance(cfg.tolerances.solver_tol);
    let taus = if cfg.tau.is_empty() { symmetric_grid(21, tau_range(&d).analytic) } else { cfg.tau.clone() };
    let mut rows = Vec::with_capacity(taus.len());
    for tau in taus {
        let row = if tau.abs() <= s.limit() {
            let sol = s.solve(tau).map_err(Failure::usage)?;
            let (lambda, mu) = s.lambda_mu(tau).map_err(Failure::usage)?;
            SaddleRow { tau, z0: sol.z0, lambda, mu, rho2: sol.rho2(), residual: sol.residual, in_range: true }
        } else {
            let z0 = tilt_point(&d, tau).map_err(Failure::usage)?;
            let k = d.cgf_all(z0).map_err(Failure::usage)?;
            let psi = k[0] - tau * z0 + 0.5 * tau * tau;
            SaddleRow {
                tau,
                z0,
                lambda: psi / (tau * tau * tau),
                mu: 0.5 * k[2].ln(),
                rho2: k[2],
                residual: (k[1] - tau).abs(),
                in_range: false,
            }
        };
        rows.push(row);
    }
    let mut csv = String::from("tau,z0,lambda,mu,rho2,residual,in_range\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            num(r.tau),
            num(r.z0),
            num(r.lambda),
            num(r.mu),
            num(r.rho2),
            num(r.residual),
            r.in_range
        );
    }
    emit(cfg, &[Report::new("saddle", csv, &rows)?])?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
struct SeriesRow {
    k: usize,
    lambda: f64,
    mu: f64,
    z0: f64,
}

fn cmd_cramer_series(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let d = family(cfg)?;
    let order = cfg.order;
    let c = d.cumulants(order + 3).map_err(Failure::usage)?;
    let lambda = cramer_series(&c, order).map_err(Failure::usage)?;
    let mu = mu_series(&c, order).map_err(Failure::usage)?;
    let z0 = saddle_series(&c, order).map_err(Failure::usage)?;
    let rows: Vec<SeriesRow> =
        (0..=order).map(|k| SeriesRow { k, lambda: lambda.coeff(k), mu: mu.coeff(k), z0: z0.coeff(k) }).collect();
    let mut csv = String::from("k,lambda,mu,z0\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{}", r.k, num(r.lambda), num(r.mu), num(r.z0));
    }
    emit(cfg, &[Report::new("cramer_series", csv, &rows)?])?;
    Ok(EXIT_OK)
}

fn model<'a>(cfg: &ExperimentConfig, d: &'a DistributionSpec) -> Result<RichterModel<'a>, Failure> {
    let t = cfg.tolerances;
    Ok(RichterModel::new(d).map_err(Failure::usage)?.with_tolerances(t.inversion_abs_tol, t.solver_tol))
}

fn summary_csv(summary: &[crate::richter::NSummary]) -> String {
    let mut csv = String::from("n,points,max_abs_rel_err,max_scaled_err\n");
    for s in summary {
        let _ = writeln!(csv, "{},{},{},{}", s.n, s.points, num(s.max_abs_rel_err), num(s.max_scaled_err));
    }
    csv
}

fn cmd_approx(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let d = family(cfg)?;
    let m = model(cfg, &d)?;
    let table = m.error_table(&cfg.n_list_or_default(), &cfg.x_policy).map_err(Failure::usage)?;
    let rows = csv_bytes(|w| table.write_csv(w))?;
    emit(
        cfg,
        &[
            Report::new("approx", rows, &table)?,
            Report::new("approx_summary", summary_csv(&table.summary), &table.summary)?,
        ],
    )?;
    Ok(EXIT_OK)
}

fn cmd_verify_bounds(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let d = family(cfg)?;
    let audits = audit_suite(&d).map_err(Failure::usage)?;
    let csv = csv_bytes(|w| write_audits_csv(&audits, w))?;
    emit(cfg, &[Report::new("bounds", csv, &audits)?])?;
    let failed: Vec<&str> = audits.iter().filter(|a| !a.pass).map(|a| a.name.as_str()).collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(Failure { code: EXIT_AUDIT, message: format!("{} audit(s) failed: {}", failed.len(), failed.join(", ")) })
    }
}

fn cmd_convergence(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let d = family(cfg)?;
    let m = model(cfg, &d)?;
    let ns = cfg.n_list_or_default();
    if ns.len() < 2 {
        return Err(Failure::usage("convergence needs at least two values of n"));
    }
    let (table, report) = m.convergence(&ns, &cfg.x_policy).map_err(Failure::usage)?;
    let mut csv = summary_csv(&report.summary);
    let e = &report.error_law;
    let _ = writeln!(csv, "# error_law n_fit={} fitted={} factor={} pass={}", e.n_fit, num(e.fitted), e.factor, e.pass);
    if let Some(r) = &report.remainder {
        let _ = writeln!(csv, "# remainder ratio={} limit={} pass={}", num(r.ratio), r.limit, r.pass);
    }
    let rows = csv_bytes(|w| table.write_csv(w))?;
    emit(cfg, &[Report::new("convergence", csv, &report)?, Report::new("convergence_rows", rows, &table)?])?;
    if report.pass {
        Ok(EXIT_OK)
    } else {
        Err(Failure { code: EXIT_CONVERGENCE, message: format!("convergence criteria failed for {}", d.name()) })
    }
}

fn cmd_tsallis(cfg: &ExperimentConfig) -> Result<i32, Failure> {
    let d = family(cfg)?;
    let tau_max = match cfg.tau.as_slice() {
        [] => TSALLIS_TAU_MAX,
        [t] if *t > 0.0 => *t,
        _ => return Err(Failure::usage("tsallis takes one positive --tau (the |τ| range)")),
    };
    let points = match cfg.x_policy {
        XPolicy::TauSpan { points, .. } | XPolicy::FixedX { points, .. } => points,
        XPolicy::List { .. } => return Err(Failure::usage("tsallis uses its own x grid; --x is not accepted")),
    };
    let report = tsallis_report(&d, &cfg.n_list_or_default(), tau_max, points).map_err(Failure::usage)?;
    let mut csv = String::from("n,sup,argmax_x,scaled,bound\n");
    for (p, (_, scaled)) in report.points.iter().zip(&report.rate.values) {
        let bound = report.rate.fitted * crate::richter::log_cube_rate(p.n);
        let _ = writeln!(csv, "{},{},{},{},{}", p.n, num(p.sup), num(p.argmax_x), num(*scaled), num(bound));
    }
    let _ = writeln!(csv, "# decreasing={} rate_pass={}", report.decreasing, report.rate.pass);
    emit(cfg, &[Report::new("tsallis", csv, &report)?])?;
    if report.pass {
        Ok(EXIT_OK)
    } else {
        Err(Failure { code: EXIT_CONVERGENCE, message: "restricted supremum criteria failed".into() })
    }
}

fn execute(cli: Cli) -> Result<i32, Failure> {
    let mut cfg = match &cli.opts.config {
        Some(p) => ExperimentConfig::from_file(p).map_err(Failure::usage)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&cli.opts);
    let d = match cfg.family {
        Some(_) => Some(family(&cfg)?),
        None => None,
    };
    cfg.validate(d.as_ref()).map_err(Failure::usage)?;
    if let Some(j) = cfg.jobs {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match cli.command {
        Command::Families => cmd_families(&cfg),
        Command::Saddle => cmd_saddle(&cfg),
        Command::CramerSeries => cmd_cramer_series(&cfg),
        Command::Approx => cmd_approx(&cfg),
        Command::VerifyBounds => cmd_verify_bounds(&cfg),
        Command::Convergence => cmd_convergence(&cfg),
        Command::Tsallis => cmd_tsallis(&cfg),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
