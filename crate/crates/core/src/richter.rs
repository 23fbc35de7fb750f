//! The refined approximation `p_n(x)/φ(x) ≈ exp{nτ³λ(τ) - μ(τ)}`, its
//! variant without `μ`, the leading Edgeworth term, and error tables
//! against exact densities.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::density::{density_cf_inversion, log_density_exact, DensityError};
use crate::dist::{DistributionSpec, Family};
use crate::saddle::{tau_range, Saddle, SaddleError};
use crate::series::CumulantVector;
use crate::special::{factorial, hermite_he, LN_SQRT_2PI};

/// Agreement required between `exp(nψ - μ)` and `exp(nψ)/√ρ₂`.
pub const PATH_TOL: f64 = 1e-10;
/// Absolute tolerance of the inversion oracle used for the grid family.
pub const ORACLE_ABS_TOL: f64 = 1e-10;
/// Default number of points in an x grid.
pub const DEFAULT_POINTS: usize = 41;
/// Values this small are rounding noise in fitted-constant checks.
pub const FIT_FLOOR: f64 = 1e-12;
/// `|τ|` range of the restricted one-sided supremum.
pub const TSALLIS_TAU_MAX: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RichterError {
    #[error("tau = {tau} (n = {n}, x = {x}) outside the analytic range |tau| <= {limit}")]
    OutOfRange {
        n: u32,
        x: f64,
        tau: f64,
        limit: f64,
    },
    #[error("n = {0} is too small (need n >= 2)")]
    SmallN(u32),
    #[error("the {0} family has no non-zero cumulant beyond the variance")]
    NoCumulant(&'static str),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("main-term evaluation paths disagree at tau = {tau}: {a} vs {b}")]
    PathMismatch { tau: f64, a: f64, b: f64 },
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error(transparent)]
    Density(#[from] DensityError),
}

/// One `(n, x)` cell of an error table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RichterEvaluation {
    pub n: u32,
    pub x: f64,
    pub tau: f64,
    pub p_exact: f64,
    pub ratio_exact: f64,
    pub ratio_richter: f64,
    pub ratio_richter13: f64,
    /// `NaN` for the Gaussian family.
    pub ratio_edgeworth: f64,
    pub rel_err: f64,
    pub scaled_err: f64,
}

/// A distribution with everything the approximations need precomputed.
#[derive(Debug, Clone)]
pub struct RichterModel<'a> {
    d: &'a DistributionSpec,
    saddle: Saddle<'a>,
    cumulants: CumulantVector,
    oracle_tol: f64,
}

fn log_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

impl<'a> RichterModel<'a> {
    pub fn new(d: &'a DistributionSpec) -> Result<Self, RichterError> {
        let saddle = Saddle::new(d)?;
        let cumulants = d.cumulants(8).map_err(SaddleError::from)?;
        Ok(Self {
            d,
            saddle,
            cumulants,
            oracle_tol: ORACLE_ABS_TOL,
        })
    }

    /// Sets the inversion oracle's absolute tolerance and the saddle
    /// solver's residual tolerance.
    pub fn with_tolerances(mut self, oracle_abs_tol: f64, solver_tol: f64) -> Self {
        self.oracle_tol = oracle_abs_tol;
        self.saddle = self.saddle.with_tolerance(solver_tol);
        self
    }

    pub fn distribution(&self) -> &DistributionSpec {
        self.d
    }

    pub fn saddle(&self) -> &Saddle<'a> {
        &self.saddle
    }

    pub fn cumulants(&self) -> &CumulantVector {
        &self.cumulants
    }

    fn tau(&self, n: u32, x: f64) -> Result<f64, RichterError> {
        if n == 0 {
            return Err(RichterError::SmallN(n));
        }
        let tau = x / (n as f64).sqrt();
        let limit = self.saddle.limit();
        if tau.abs() > limit * (1.0 + 1e-12) {
            return Err(RichterError::OutOfRange { n, x, tau, limit });
        }
        Ok(tau)
    }

    /// `(nψ(τ), μ(τ))`.
    fn exponent_parts(&self, n: u32, tau: f64) -> Result<(f64, f64), RichterError> {
        let psi = self.saddle.psi(tau)?;
        let (_, mu) = self.saddle.lambda_mu(tau)?;
        Ok((n as f64 * psi, mu))
    }

    /// `exp{nτ³λ(τ) - μ(τ)}`, cross-checked against `exp{nψ(τ)}/√K''(z₀)`.
    pub fn richter_ratio(&self, n: u32, x: f64) -> Result<f64, RichterError> {
        let tau = self.tau(n, x)?;
        let (n_psi, mu) = self.exponent_parts(n, tau)?;
        let a = (n_psi - mu).exp();
        let rho2 = self.saddle.solve(tau)?.rho2();
        let b = n_psi.exp() / rho2.sqrt();
        if ((a - b) / b).abs() > PATH_TOL {
            return Err(RichterError::PathMismatch { tau, a, b });
        }
        Ok(a)
    }

    /// `exp{(x³/√n) λ(x/√n)}`, the main factor without `μ`.
    pub fn richter13_ratio(&self, n: u32, x: f64) -> Result<f64, RichterError> {
        let tau = self.tau(n, x)?;
        Ok(self.exponent_parts(n, tau)?.0.exp())
    }

    /// `1 + (γ_m/m!) He_m(x) n^{-(m-2)/2}`.
    pub fn edgeworth_ratio(&self, n: u32, x: f64) -> Result<f64, RichterError> {
        let (m, gm) = match (self.cumulants.m(), self.cumulants.gamma_m()) {
            (Some(m), Some(g)) => (m, g),
            _ => return Err(RichterError::NoCumulant(self.d.name())),
        };
        Ok(1.0 + gm / factorial(m) * hermite_he(m, x) * (n as f64).powf(-(m as f64 - 2.0) / 2.0))
    }

    /// `ln(p_n(x)/φ(x))` from the exact oracle.
    pub fn log_ratio_exact(&self, n: u32, x: f64) -> Result<f64, RichterError> {
        log_ratio_with_tol(self.d, n, x, self.oracle_tol)
    }

    pub fn evaluate(&self, n: u32, x: f64) -> Result<RichterEvaluation, RichterError> {
        if n < 2 {
            return Err(RichterError::SmallN(n));
        }
        let tau = self.tau(n, x)?;
        let lr = self.log_ratio_exact(n, x)?;
        let ratio_exact = lr.exp();
        let ratio_richter = self.richter_ratio(n, x)?;
        let ratio_richter13 = self.richter13_ratio(n, x)?;
        let ratio_edgeworth = match self.edgeworth_ratio(n, x) {
            Ok(v) => v,
            Err(RichterError::NoCumulant(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        // ratio_exact / ratio_richter - 1, formed in log space
        let rel_err = (lr - ratio_richter.ln()).exp_m1();
        let nf = n as f64;
        Ok(RichterEvaluation {
            n,
            x,
            tau,
            p_exact: (lr + log_phi(x)).exp(),
            ratio_exact,
            ratio_richter,
            ratio_richter13,
            ratio_edgeworth,
            rel_err,
            scaled_err: rel_err.abs() * nf / nf.ln().powi(3),
        })
    }
}

/// `ln(p_n(x)/φ(x))`: closed forms for built-ins, inversion at
/// [`ORACLE_ABS_TOL`] for the grid family.
pub fn log_ratio_exact(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, RichterError> {
    log_ratio_with_tol(d, n, x, ORACLE_ABS_TOL)
}

fn log_ratio_with_tol(
    d: &DistributionSpec,
    n: u32,
    x: f64,
    abs_tol: f64,
) -> Result<f64, RichterError> {
    let lp = match d.family() {
        Family::Grid(_) => density_cf_inversion(d, n, x, abs_tol)?.ln(),
        _ => log_density_exact(d, n, x)?,
    };
    Ok(lp - log_phi(x))
}

pub fn richter_ratio(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, RichterError> {
    RichterModel::new(d)?.richter_ratio(n, x)
}

pub fn richter13_ratio(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, RichterError> {
    RichterModel::new(d)?.richter13_ratio(n, x)
}

pub fn edgeworth_ratio(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, RichterError> {
    RichterModel::new(d)?.edgeworth_ratio(n, x)
}

/// How x values are chosen for each n.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XPolicy {
    /// Symmetric τ grid on `[-τ_max, τ_max]` (default: `α³/32`), mapped
    /// to `x = τ√n`; always contains `x = 0`.
    TauSpan { points: usize, tau_max: Option<f64> },
    /// The same symmetric x grid on `[-x_max, x_max]` for every n.
    FixedX { points: usize, x_max: f64 },
    /// An explicit list.
    List { xs: Vec<f64> },
}

impl Default for XPolicy {
    fn default() -> Self {
        XPolicy::TauSpan {
            points: DEFAULT_POINTS,
            tau_max: None,
        }
    }
}

/// `points` values (rounded down to odd) equispaced on `[-radius, radius]`,
/// with an exact zero in the middle.
pub fn symmetric_grid(points: usize, radius: f64) -> Vec<f64> {
    let half = (points.max(1) / 2) as i64;
    if half == 0 {
        return vec![0.0];
    }
    (-half..=half)
        .map(|k| radius * k as f64 / half as f64)
        .collect()
}

impl XPolicy {
    pub fn xs(&self, d: &DistributionSpec, n: u32) -> Vec<f64> {
        match self {
            XPolicy::TauSpan { points, tau_max } => {
                let t = tau_max.unwrap_or_else(|| tau_range(d).analytic);
                let r = (n as f64).sqrt();
                symmetric_grid(*points, t)
                    .into_iter()
                    .map(|tau| tau * r)
                    .collect()
            }
            XPolicy::FixedX { points, x_max } => symmetric_grid(*points, *x_max),
            XPolicy::List { xs } => xs.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NSummary {
    pub n: u32,
    pub points: usize,
    pub max_abs_rel_err: f64,
    pub max_scaled_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTable {
    pub family: String,
    pub rows: Vec<RichterEvaluation>,
    pub summary: Vec<NSummary>,
}

impl ErrorTable {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "n,x,tau,p_exact,ratio_exact,ratio_richter,ratio_richter13,ratio_edgeworth,rel_err,scaled_err"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.n,
                r.x,
                r.tau,
                r.p_exact,
                r.ratio_exact,
                r.ratio_richter,
                r.ratio_richter13,
                r.ratio_edgeworth,
                r.rel_err,
                r.scaled_err
            )?;
        }
        Ok(())
    }
}

/// One row per `(n, x)`, ordered by `n` then `x`, with per-n maxima.
pub fn error_table(
    d: &DistributionSpec,
    n_list: &[u32],
    policy: &XPolicy,
) -> Result<ErrorTable, RichterError> {
    RichterModel::new(d)?.error_table(n_list, policy)
}

impl RichterModel<'_> {
    pub fn error_table(
        &self,
        n_list: &[u32],
        policy: &XPolicy,
    ) -> Result<ErrorTable, RichterError> {
        let (model, d) = (self, self.d);
        let cells: Vec<(u32, f64)> = n_list
            .iter()
            .flat_map(|&n| policy.xs(d, n).into_iter().map(move |x| (n, x)))
            .collect();
        let rows = cells
            .par_iter()
            .map(|&(n, x)| model.evaluate(n, x))
            .collect::<Result<Vec<_>, _>>()?;
        let summary = n_list
            .iter()
            .map(|&n| {
                let sel: Vec<&RichterEvaluation> = rows.iter().filter(|r| r.n == n).collect();
                NSummary {
                    n,
                    points: sel.len(),
                    max_abs_rel_err: sel.iter().map(|r| r.rel_err.abs()).fold(0.0, f64::max),
                    max_scaled_err: sel.iter().map(|r| r.scaled_err).fold(0.0, f64::max),
                }
            })
            .collect();
        Ok(ErrorTable {
            family: d.name().to_string(),
            rows,
            summary,
        })
    }
}

/// A constant fitted at the smallest n and checked at the others.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedCheck {
    pub n_fit: u32,
    pub fitted: f64,
    pub factor: f64,
    /// `(n, value)` for every n including the fitting one.
    pub values: Vec<(u32, f64)>,
    pub pass: bool,
}

/// Fits `C = value(n_min)` and passes when every value is at most
/// `factor · C` (values below [`FIT_FLOOR`] count as exact).
pub fn fit_and_check(values: &[(u32, f64)], factor: f64) -> Option<FittedCheck> {
    let &(n_fit, fitted) = values.iter().min_by_key(|(n, _)| *n)?;
    let pass = values
        .iter()
        .all(|&(_, v)| v <= factor * fitted || v <= FIT_FLOOR);
    Some(FittedCheck {
        n_fit,
        fitted,
        factor,
        values: values.to_vec(),
        pass,
    })
}

/// `max |ratio_exact/richter13 - 1| · √n/(1 + |x|)` over the given x values.
pub fn first_order_remainder(d: &DistributionSpec, n: u32, xs: &[f64]) -> Result<f64, RichterError> {
    let model = RichterModel::new(d)?;
    let vals = xs
        .par_iter()
        .map(|&x| {
            let lr = model.log_ratio_exact(n, x)?;
            let r13 = model.richter13_ratio(n, x)?;
            Ok((lr - r13.ln()).exp_m1().abs() * (n as f64).sqrt() / (1.0 + x.abs()))
        })
        .collect::<Result<Vec<f64>, RichterError>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `max |ratio_exact - ratio_edgeworth| · n^{(m-2)/2}` over `|x| <= x_max`.
pub fn edgeworth_residual(
    d: &DistributionSpec,
    n: u32,
    x_max: f64,
    points: usize,
) -> Result<f64, RichterError> {
    let model = RichterModel::new(d)?;
    let m = model
        .cumulants
        .m()
        .ok_or(RichterError::NoCumulant(d.name()))?;
    let scale = (n as f64).powf((m as f64 - 2.0) / 2.0);
    let vals = symmetric_grid(points, x_max)
        .par_iter()
        .map(|&x| {
            Ok((model.log_ratio_exact(n, x)?.exp() - model.edgeworth_ratio(n, x)?).abs() * scale)
        })
        .collect::<Result<Vec<f64>, RichterError>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsallisPoint {
    pub n: u32,
    pub sup: f64,
    pub argmax_x: f64,
}

/// `sup_x (p_n(x) - φ(x))/φ(x)` over `points` values with
/// `|x/√n| <= tau_max`. Requires an even first non-zero cumulant index `m`
/// with `γ_m < 0`.
pub fn tsallis_restricted(
    d: &DistributionSpec,
    n: u32,
    tau_max: f64,
    points: usize,
) -> Result<TsallisPoint, RichterError> {
    let c = d.cumulants(8).map_err(SaddleError::from)?;
    match (c.m(), c.gamma_m()) {
        (Some(m), Some(g)) if m % 2 == 0 && g < 0.0 => {}
        (m, g) => {
            return Err(RichterError::Precondition(format!(
                "needs even m with gamma_m < 0, got m = {m:?}, gamma_m = {g:?}"
            )))
        }
    }
    if n < 2 {
        return Err(RichterError::SmallN(n));
    }
    let xs = symmetric_grid(points, tau_max * (n as f64).sqrt());
    let vals = xs
        .par_iter()
        .map(|&x| Ok((x, log_ratio_exact(d, n, x)?.exp_m1())))
        .collect::<Result<Vec<(f64, f64)>, RichterError>>()?;
    let (argmax_x, sup) =
        vals.into_iter().fold(
            (0.0, f64::NEG_INFINITY),
            |a, b| if b.1 > a.1 { b } else { a },
        );
    Ok(TsallisPoint { n, sup, argmax_x })
}

/// `(log n)³/n`.
pub fn log_cube_rate(n: u32) -> f64 {
    let nf = n as f64;
    nf.ln().powi(3) / nf
}

/// Spread of a quantity expected to stay bounded across n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationCheck {
    pub values: Vec<(u32, f64)>,
    /// `max / min` over the values.
    pub ratio: f64,
    pub limit: f64,
    pub pass: bool,
}

impl VariationCheck {
    pub fn new(values: Vec<(u32, f64)>, limit: f64) -> Self {
        let max = values.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let ratio = max / min;
        Self { values, ratio, limit, pass: ratio < limit }
    }
}

/// Growth allowed for the fitted error-law constant.
pub const ERROR_LAW_FACTOR: f64 = 1.5;
/// Allowed spread of the first-order remainder across n.
pub const REMAINDER_SPREAD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub family: String,
    pub summary: Vec<NSummary>,
    /// `max scaled_err`, fitted at the smallest n.
    pub error_law: FittedCheck,
    /// First-order remainder on a common x grid; only for odd `m`.
    pub remainder: Option<VariationCheck>,
    pub pass: bool,
}

impl RichterModel<'_> {
    /// Error table plus the boundedness checks over `n_list`. The
    /// remainder check uses one x grid reachable at the smallest n.
    pub fn convergence(&self, n_list: &[u32], policy: &XPolicy) -> Result<(ErrorTable, ConvergenceReport), RichterError> {
        let n_min = *n_list.iter().min().ok_or_else(|| RichterError::Precondition("empty n list".into()))?;
        let table = self.error_table(n_list, policy)?;
        let scaled: Vec<(u32, f64)> = table.summary.iter().map(|s| (s.n, s.max_scaled_err)).collect();
        let error_law = fit_and_check(&scaled, ERROR_LAW_FACTOR).expect("non-empty");
        let remainder = match self.cumulants.m() {
            Some(m) if m % 2 == 1 => {
                let xs = symmetric_grid(DEFAULT_POINTS, self.saddle.limit() * (n_min as f64).sqrt());
                let values = n_list
                    .iter()
                    .map(|&n| Ok((n, first_order_remainder(self.d, n, &xs)?)))
                    .collect::<Result<Vec<_>, RichterError>>()?;
                Some(VariationCheck::new(values, REMAINDER_SPREAD))
            }
            _ => None,
        };
        let pass = error_law.pass && remainder.as_ref().is_none_or(|r| r.pass);
        let report = ConvergenceReport {
            family: self.d.name().to_string(),
            summary: table.summary.clone(),
            error_law,
            remainder,
            pass,
        };
        Ok((table, report))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsallisReport {
    pub family: String,
    pub tau_max: f64,
    pub points: Vec<TsallisPoint>,
    /// `sup · n/(log n)³`, fitted at the smallest n.
    pub rate: FittedCheck,
    pub decreasing: bool,
    pub pass: bool,
}

/// [`tsallis_restricted`] over `n_list` with the `(log n)³/n` law and
/// monotonicity checked.
pub fn tsallis_report(d: &DistributionSpec, n_list: &[u32], tau_max: f64, points: usize) -> Result<TsallisReport, RichterError> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    let pts = ns.iter().map(|&n| tsallis_restricted(d, n, tau_max, points)).collect::<Result<Vec<_>, _>>()?;
    let scaled: Vec<(u32, f64)> = pts.iter().map(|p| (p.n, p.sup / log_cube_rate(p.n))).collect();
    let rate = fit_and_check(&scaled, 1.0).ok_or_else(|| RichterError::Precondition("empty n list".into()))?;
    let decreasing = pts.windows(2).all(|w| w[1].sup < w[0].sup);
    let pass = rate.pass && decreasing;
    Ok(TsallisReport { family: d.name().to_string(), tau_max, points: pts, rate, decreasing, pass })
}
