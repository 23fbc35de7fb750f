//! Normalized distribution families (mean 0, variance 1) and their analytic
//! transforms: characteristic function, log-Laplace transform with
//! derivatives, cumulants and the Orlicz parameter `α` with `E e^{α|X|} <= 2`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::quad::{bisect_increasing, integrate_panels};
use crate::series::{CumulantVector, PowerSeries};
use crate::special::{bernoulli, factorial, langevin, ln_sinhc, log1pmx, normal_cdf, sinhc, FRAC_1_SQRT_2PI};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Highest cumulant order the grid family computes from moments.
pub const MAX_GRID_CUMULANT_ORDER: usize = 16;
/// Highest cumulant order supported by the closed forms.
pub const MAX_CUMULANT_ORDER: usize = 30;

/// Mean/variance tolerance after standardization.
const MOMENT_TOL: f64 = 1e-10;
/// Tolerance of the `α` bisection.
const ALPHA_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("unknown family `{0}` (expected gaussian, uniform_sym, exp_centered or grid)")]
    UnknownFamily(String),
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: String, reason: String },
    #[error("grid density: {0}")]
    BadGrid(String),
    #[error("grid line {line}: {reason}")]
    GridParse { line: usize, reason: String },
    #[error("z = {z} is outside the domain of the log-Laplace transform")]
    OutsideDomain { z: f64 },
    #[error("derivative order {0} is not supported (0..=3)")]
    BadOrder(usize),
    #[error(
        "cumulants up to order {requested} requested; at most {max} supported for this family"
    )]
    CumulantOrder { requested: usize, max: usize },
    #[error("exponential moment E e^(a|X|) diverges on the searched range")]
    DivergentMoment,
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Gaussian,
    UniformSym,
    ExpCentered,
    Grid,
}

impl FamilyTag {
    pub const BUILT_IN: [FamilyTag; 3] = [
        FamilyTag::Gaussian,
        FamilyTag::UniformSym,
        FamilyTag::ExpCentered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyTag::Gaussian => "gaussian",
            FamilyTag::UniformSym => "uniform_sym",
            FamilyTag::ExpCentered => "exp_centered",
            FamilyTag::Grid => "grid",
        }
    }
}

impl fmt::Display for FamilyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FamilyTag {
    type Err = DistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(FamilyTag::Gaussian),
            "uniform_sym" => Ok(FamilyTag::UniformSym),
            "exp_centered" => Ok(FamilyTag::ExpCentered),
            "grid" => Ok(FamilyTag::Grid),
            other => Err(DistError::UnknownFamily(other.to_string())),
        }
    }
}

/// A tabulated density on an equispaced grid, already standardized.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    xs: Vec<f64>,
    ps: Vec<f64>,
    /// `h·p_i`: the interpolant is `Σ p_i` times a unit hat of half-width
    /// `h` at `x_i`, i.e. these atoms convolved with a sum of two uniforms.
    mass: Vec<f64>,
    step: f64,
    total_variation: f64,
}

impl GridDensity {
    /// The law with the piecewise-linear interpolant of `(xs, ps)` as its
    /// density (extended by one zero node at each end where needed),
    /// standardized to mean 0 and variance 1.
    pub fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self, DistError> {
        if xs.len() != ps.len() {
            return Err(DistError::BadGrid(
                "x and density columns differ in length".into(),
            ));
        }
        if xs.len() < 5 {
            return Err(DistError::BadGrid("need at least 5 grid points".into()));
        }
        let step = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        if !(step > 0.0) {
            return Err(DistError::BadGrid("x column must be increasing".into()));
        }
        for (i, w) in xs.windows(2).enumerate() {
            if ((w[1] - w[0]) - step).abs() > 1e-6 * step {
                return Err(DistError::BadGrid(format!(
                    "grid is not equispaced near point {}",
                    i + 1
                )));
            }
        }
        if ps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(DistError::BadGrid(
                "densities must be finite and non-negative".into(),
            ));
        }
        // pad to zero at both ends so the interpolant is a sum of hats
        let (mut xs, mut ps) = (xs, ps);
        if ps[0] > 0.0 {
            xs.insert(0, xs[0] - step);
            ps.insert(0, 0.0);
        }
        if ps[ps.len() - 1] > 0.0 {
            xs.push(xs[xs.len() - 1] + step);
            ps.push(0.0);
        }
        // exact moments of the interpolant: atoms h·p_i plus a hat of
        // variance h²/6 around each
        let total: f64 = step * ps.iter().sum::<f64>();
        if !(total > 0.0) || !total.is_finite() {
            return Err(DistError::BadGrid("density has no positive mass".into()));
        }
        let mean: f64 = step * ps.iter().zip(&xs).map(|(p, x)| p * x).sum::<f64>() / total;
        let var: f64 = step
            * ps
                .iter()
                .zip(&xs)
                .map(|(p, x)| p * (x - mean) * (x - mean))
                .sum::<f64>()
            / total
            + step * step / 6.0;
        if !(var > 0.0) {
            return Err(DistError::BadGrid("density has zero variance".into()));
        }
        let sd = var.sqrt();
        let xs: Vec<f64> = xs.iter().map(|x| (x - mean) / sd).collect();
        let ps: Vec<f64> = ps.iter().map(|p| p * sd / total).collect();
        let step = step / sd;
        let mass: Vec<f64> = ps.iter().map(|p| step * p).collect();
        let total_variation = ps.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>();
        let g = Self {
            xs,
            ps,
            mass,
            step,
            total_variation,
        };
        let (m, v) = (g.atom_moment(1), g.atom_moment(2) + g.step * g.step / 6.0);
        if m.abs() > MOMENT_TOL || (v - 1.0).abs() > MOMENT_TOL {
            return Err(DistError::BadGrid(format!(
                "grid too coarse to standardize (mean {m:e}, variance {v})"
            )));
        }
        Ok(g)
    }

    /// Parses whitespace-separated `x density` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, DistError> {
        let mut xs = Vec::new();
        let mut ps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |tok: Option<&str>, what: &str| -> Result<f64, DistError> {
                let tok = tok.ok_or_else(|| DistError::GridParse {
                    line: i + 1,
                    reason: format!("missing {what}"),
                })?;
                tok.parse::<f64>().map_err(|e| DistError::GridParse {
                    line: i + 1,
                    reason: format!("bad {what} `{tok}`: {e}"),
                })
            };
            xs.push(parse(it.next(), "x")?);
            ps.push(parse(it.next(), "density")?);
            if it.next().is_some() {
                return Err(DistError::GridParse {
                    line: i + 1,
                    reason: "expected two columns".into(),
                });
            }
        }
        Self::new(xs, ps)
    }

    pub fn from_file(path: &Path) -> Result<Self, DistError> {
        let text = std::fs::read_to_string(path).map_err(|source| DistError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ps(&self) -> &[f64] {
        &self.ps
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Total variation of the density.
    pub fn total_variation(&self) -> f64 {
        self.total_variation
    }

    pub fn max_density(&self) -> f64 {
        self.ps.iter().cloned().fold(0.0, f64::max)
    }

    /// Moments of the atoms `h·p_i` at `x_i`, without the hat spread.
    fn atom_moment(&self, k: i32) -> f64 {
        self.mass
            .iter()
            .zip(&self.xs)
            .map(|(m, x)| m * x.powi(k))
            .sum()
    }

    /// Linear interpolation of the density; zero outside the grid.
    pub fn density_at(&self, x: f64) -> f64 {
        let first = self.xs[0];
        let last = self.xs[self.xs.len() - 1];
        if x < first || x > last {
            return 0.0;
        }
        let pos = (x - first) / self.step;
        let i = (pos.floor() as usize).min(self.xs.len() - 2);
        let frac = pos - i as f64;
        self.ps[i] * (1.0 - frac) + self.ps[i + 1] * frac
    }

    fn laplace(&self, s: Complex64) -> Complex64 {
        let atoms: Complex64 = self
            .mass
            .iter()
            .zip(&self.xs)
            .map(|(m, x)| (s * x).exp() * m)
            .sum();
        let hat = sinhc(s * (0.5 * self.step));
        atoms * hat * hat
    }

    /// `K^{(k)}(z)` for k = 0..=3 with the exponent shifted for stability.
    fn cgf_all(&self, z: f64) -> [f64; 4] {
        let shift = self
            .xs
            .iter()
            .map(|x| z * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut l = [0.0; 4];
        for (m, x) in self.mass.iter().zip(&self.xs) {
            let e = m * (z * x - shift).exp();
            l[0] += e;
            l[1] += e * x;
            l[2] += e * x * x;
            l[3] += e * x * x * x;
        }
        let r1 = l[1] / l[0];
        let r2 = l[2] / l[0];
        let r3 = l[3] / l[0];
        // hat factor sinhc(az)², a = h/2
        let a = 0.5 * self.step;
        let lang = langevin(a * z);
        [
            shift + l[0].ln() + 2.0 * ln_sinhc(a * z),
            r1 + 2.0 * a * lang[0],
            r2 - r1 * r1 + 2.0 * a * a * lang[1],
            r3 - 3.0 * r2 * r1 + 2.0 * r1 * r1 * r1 + 2.0 * a * a * a * lang[2],
        ]
    }

    fn abs_exp_moment(&self, a: f64) -> f64 {
        let (lo, hi) = (self.xs[0], self.xs[self.xs.len() - 1]);
        let f = |x: f64| self.density_at(x) * (a * x.abs()).exp();
        let scale = (a * lo.abs().max(hi.abs())).exp();
        integrate_panels(f, lo, hi, self.step, 1e-15 * scale)
            .map(|r| r.value)
            .unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    UniformSym,
    /// `E - 1` with `E` standard exponential.
    ExpCentered,
    Grid(GridDensity),
}

impl Family {
    pub fn tag(&self) -> FamilyTag {
        match self {
            Family::Gaussian => FamilyTag::Gaussian,
            Family::UniformSym => FamilyTag::UniformSym,
            Family::ExpCentered => FamilyTag::ExpCentered,
            Family::Grid(_) => FamilyTag::Grid,
        }
    }
}

/// A standardized distribution together with the constants every later
/// stage needs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    family: Family,
    alpha: f64,
    density_bound: f64,
    n0: u32,
    cgf_radius: f64,
}

/// Free-form `key=value` family parameters.
pub type Params = BTreeMap<String, String>;

fn param<T: FromStr>(params: &Params, key: &str) -> Result<Option<T>, DistError>
where
    T::Err: fmt::Display,
{
    params
        .get(key)
        .map(|v| {
            v.parse::<T>().map_err(|e| DistError::InvalidParam {
                key: key.into(),
                reason: e.to_string(),
            })
        })
        .transpose()
}

/// Builds a family by tag. The grid family reads `path=<file>` and an
/// optional `n0=<int>`.
pub fn make_family(tag: FamilyTag, params: &Params) -> Result<DistributionSpec, DistError> {
    match tag {
        FamilyTag::Grid => {
            let path: String = param(params, "path")?.ok_or_else(|| DistError::InvalidParam {
                key: "path".into(),
                reason: "grid family needs a density file".into(),
            })?;
            let n0: u32 = param(params, "n0")?.unwrap_or(1);
            DistributionSpec::from_grid(GridDensity::from_file(Path::new(&path))?, n0)
        }
        builtin => {
            if let Some(key) = params.keys().next() {
                return Err(DistError::InvalidParam {
                    key: key.clone(),
                    reason: format!("{builtin} takes no parameters"),
                });
            }
            Ok(DistributionSpec::builtin(builtin))
        }
    }
}

impl DistributionSpec {
    /// One of the closed-form families.
    ///
    /// # Panics
    /// If `tag` is [`FamilyTag::Grid`].
    pub fn builtin(tag: FamilyTag) -> Self {
        let (family, density_bound, cgf_radius) = match tag {
            FamilyTag::Gaussian => (Family::Gaussian, FRAC_1_SQRT_2PI, f64::INFINITY),
            FamilyTag::UniformSym => (Family::UniformSym, 1.0 / (2.0 * SQRT3), f64::INFINITY),
            FamilyTag::ExpCentered => (Family::ExpCentered, 1.0, 1.0),
            FamilyTag::Grid => panic!("grid family needs data; use DistributionSpec::from_grid"),
        };
        let mut spec = Self {
            family,
            alpha: f64::NAN,
            density_bound,
            n0: 1,
            cgf_radius,
        };
        spec.alpha = spec
            .solve_alpha()
            .expect("built-in families have finite exponential moments");
        spec
    }

    pub fn gaussian() -> Self {
        Self::builtin(FamilyTag::Gaussian)
    }

    pub fn uniform_sym() -> Self {
        Self::builtin(FamilyTag::UniformSym)
    }

    pub fn exp_centered() -> Self {
        Self::builtin(FamilyTag::ExpCentered)
    }

    /// A tabulated family. `n0` is the smallest `n` for which `Z_n` has a
    /// bounded density; for `n0 > 1` the density bound is not known from the
    /// table and is taken from the tabulated maximum.
    pub fn from_grid(grid: GridDensity, n0: u32) -> Result<Self, DistError> {
        if n0 == 0 {
            return Err(DistError::InvalidParam {
                key: "n0".into(),
                reason: "must be positive".into(),
            });
        }
        let density_bound = grid.max_density();
        let mut spec = Self {
            family: Family::Grid(grid),
            alpha: f64::NAN,
            density_bound,
            n0,
            cgf_radius: f64::INFINITY,
        };
        spec.alpha = spec.solve_alpha()?;
        Ok(spec)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn tag(&self) -> FamilyTag {
        self.family.tag()
    }

    pub fn name(&self) -> &'static str {
        self.tag().name()
    }

    pub fn mean(&self) -> f64 {
        0.0
    }

    pub fn variance(&self) -> f64 {
        1.0
    }

    /// Largest `α` with `E e^{α|X|} <= 2`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `M = M(Z_{n0})`, the supremum of the density of `Z_{n0}`.
    pub fn density_bound(&self) -> f64 {
        self.density_bound
    }

    pub fn n0(&self) -> u32 {
        self.n0
    }

    pub fn cgf_domain_radius(&self) -> f64 {
        self.cgf_radius
    }

    /// Two-sided Laplace transform `E e^{sX}` at complex `s`.
    pub fn laplace(&self, s: Complex64) -> Complex64 {
        match &self.family {
            Family::Gaussian => (s * s * 0.5).exp(),
            Family::UniformSym => sinhc(s * SQRT3),
            Family::ExpCentered => (-s).exp() / (Complex64::new(1.0, 0.0) - s),
            Family::Grid(g) => g.laplace(s),
        }
    }

    /// Characteristic function `f(t) = E e^{itX}`.
    pub fn cf(&self, t: f64) -> Complex64 {
        match &self.family {
            Family::Gaussian => Complex64::new((-0.5 * t * t).exp(), 0.0),
            Family::UniformSym => {
                let u = SQRT3 * t;
                let v = if u.abs() < 1e-4 {
                    1.0 - u * u / 6.0
                } else {
                    u.sin() / u
                };
                Complex64::new(v, 0.0)
            }
            Family::ExpCentered => Complex64::from_polar(1.0, -t) / Complex64::new(1.0, -t),
            Family::Grid(g) => g.laplace(Complex64::new(0.0, t)),
        }
    }

    /// Upper envelope `|f(t)| <= envelope(t)` valid for `t > 0`.
    pub fn cf_envelope(&self, t: f64) -> f64 {
        let t = t.abs();
        let bound = match &self.family {
            Family::Gaussian => (-0.5 * t * t).exp(),
            Family::UniformSym => 1.0 / (SQRT3 * t),
            Family::ExpCentered => 1.0 / (1.0 + t * t).sqrt(),
            Family::Grid(g) => g.total_variation() / t,
        };
        bound.min(1.0)
    }

    fn check_domain(&self, z: f64) -> Result<(), DistError> {
        let ok = match self.family {
            Family::ExpCentered => z < 1.0,
            _ => z.abs() <= self.cgf_radius,
        };
        if ok && z.is_finite() {
            Ok(())
        } else {
            Err(DistError::OutsideDomain { z })
        }
    }

    /// `K^{(order)}(z)` of the log-Laplace transform, `order` in 0..=3.
    pub fn cgf(&self, z: f64, order: usize) -> Result<f64, DistError> {
        if order > 3 {
            return Err(DistError::BadOrder(order));
        }
        Ok(self.cgf_all(z)?[order])
    }

    /// `[K, K', K'', K''']` at `z`.
    pub fn cgf_all(&self, z: f64) -> Result<[f64; 4], DistError> {
        self.check_domain(z)?;
        Ok(match &self.family {
            Family::Gaussian => [0.5 * z * z, z, 1.0, 0.0],
            Family::UniformSym => {
                let u = SQRT3 * z;
                let l = langevin(u);
                [ln_sinhc(u), SQRT3 * l[0], 3.0 * l[1], 3.0 * SQRT3 * l[2]]
            }
            Family::ExpCentered => {
                let w = 1.0 / (1.0 - z);
                [-log1pmx(-z), z * w, w * w, 2.0 * w * w * w]
            }
            Family::Grid(g) => g.cgf_all(z),
        })
    }

    /// Cumulants `γ_2..γ_{up_to}`.
    pub fn cumulants(&self, up_to: usize) -> Result<CumulantVector, DistError> {
        let up_to = up_to.max(2);
        let gammas: Vec<f64> = match &self.family {
            Family::Gaussian => (0..=up_to)
                .map(|k| if k == 2 { 1.0 } else { 0.0 })
                .collect(),
            Family::UniformSym => {
                if up_to > MAX_CUMULANT_ORDER {
                    return Err(DistError::CumulantOrder {
                        requested: up_to,
                        max: MAX_CUMULANT_ORDER,
                    });
                }
                // κ_{2k} = 12^k B_{2k} / (2k), odd cumulants vanish
                (0..=up_to)
                    .map(|k| {
                        if k >= 2 && k % 2 == 0 {
                            12f64.powi(k as i32 / 2) * crate::special::bernoulli(k).unwrap()
                                / k as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            Family::ExpCentered => {
                if up_to > MAX_CUMULANT_ORDER {
                    return Err(DistError::CumulantOrder {
                        requested: up_to,
                        max: MAX_CUMULANT_ORDER,
                    });
                }
                (0..=up_to)
                    .map(|k| if k >= 2 { factorial(k - 1) } else { 0.0 })
                    .collect()
            }
            Family::Grid(g) => {
                if up_to > MAX_GRID_CUMULANT_ORDER {
                    return Err(DistError::CumulantOrder {
                        requested: up_to,
                        max: MAX_GRID_CUMULANT_ORDER,
                    });
                }
                // log of the moment generating series
                let mgf: Vec<f64> = (0..=up_to)
                    .map(|k| g.atom_moment(k as i32) / factorial(k))
                    .collect();
                let mut mgf = PowerSeries::new(mgf);
                let mut c = mgf.coeffs().to_vec();
                c[0] = 1.0;
                mgf = PowerSeries::new(c);
                let k_series = mgf.ln().expect("constant term is one");
                // plus twice the cumulants B_k h^k / k of a uniform of width h
                (0..=up_to)
                    .map(|k| {
                        let hat = match bernoulli(k) {
                            Some(b) if k >= 2 && k % 2 == 0 => 2.0 * b * g.step.powi(k as i32) / k as f64,
                            _ => 0.0,
                        };
                        k_series.coeff(k) * factorial(k) + hat
                    })
                    .collect()
            }
        };
        Ok(CumulantVector::new(gammas))
    }

    /// `E e^{a|X|}`; infinite where it diverges.
    pub fn abs_exp_moment(&self, a: f64) -> f64 {
        match &self.family {
            Family::Gaussian => 2.0 * (0.5 * a * a).exp() * normal_cdf(a),
            Family::UniformSym => {
                let u = SQRT3 * a;
                if u == 0.0 {
                    1.0
                } else {
                    u.exp_m1() / u
                }
            }
            Family::ExpCentered => {
                if a >= 1.0 {
                    f64::INFINITY
                } else {
                    a.exp() * (-(-(1.0 + a)).exp_m1()) / (1.0 + a) + (-1.0f64).exp() / (1.0 - a)
                }
            }
            Family::Grid(g) => g.abs_exp_moment(a),
        }
    }

    fn solve_alpha(&self) -> Result<f64, DistError> {
        let hi = 1.0;
        if self.abs_exp_moment(hi) <= 2.0 {
            // cannot happen for variance one; an unusable grid would land here
            return Err(DistError::BadGrid(
                "E e^{|X|} <= 2 contradicts unit variance".into(),
            ));
        }
        if !self.abs_exp_moment(1e-6).is_finite() {
            return Err(DistError::DivergentMoment);
        }
        Ok(bisect_increasing(
            |a| self.abs_exp_moment(a) - 2.0,
            0.0,
            hi,
            ALPHA_TOL,
        ))
    }
}

/// `α` from the Orlicz parameter of the family (bisection on `E e^{α|X|} = 2`).
pub fn orlicz_alpha(d: &DistributionSpec) -> f64 {
    d.alpha()
}

/// Conservative `α = b / log₂(max(B, 2))` from a known bound `B = E e^{b|X|}`.
pub fn alpha_from_envelope(b: f64, big_b: f64) -> f64 {
    b / big_b.max(2.0).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn all() -> Vec<DistributionSpec> {
        FamilyTag::BUILT_IN
            .iter()
            .map(|t| DistributionSpec::builtin(*t))
            .collect()
    }

    /// density of each built-in, for quadrature checks
    fn pdf(d: &DistributionSpec, x: f64) -> f64 {
        match d.tag() {
            FamilyTag::Gaussian => crate::special::normal_pdf(x),
            FamilyTag::UniformSym => {
                if x.abs() <= SQRT3 {
                    1.0 / (2.0 * SQRT3)
                } else {
                    0.0
                }
            }
            FamilyTag::ExpCentered => {
                if x >= -1.0 {
                    (-(x + 1.0)).exp()
                } else {
                    0.0
                }
            }
            FamilyTag::Grid => unreachable!(),
        }
    }

    fn support(d: &DistributionSpec) -> (f64, f64) {
        match d.tag() {
            FamilyTag::Gaussian => (-40.0, 40.0),
            FamilyTag::UniformSym => (-SQRT3, SQRT3),
            FamilyTag::ExpCentered => (-1.0, 80.0),
            FamilyTag::Grid => unreachable!(),
        }
    }

    fn moment(d: &DistributionSpec, g: impl Fn(f64) -> f64) -> f64 {
        let (a, b) = support(d);
        crate::quad::integrate_panels(|x| pdf(d, x) * g(x), a, b, 0.5, 1e-14)
            .unwrap()
            .value
    }

    #[test]
    fn built_ins_are_standardized() {
        for d in all() {
            assert!(moment(&d, |x| x).abs() < 1e-10, "{}", d.name());
            assert!((moment(&d, |x| x * x) - 1.0).abs() < 1e-10, "{}", d.name());
            assert!((moment(&d, |_| 1.0) - 1.0).abs() < 1e-10, "{}", d.name());
        }
    }

    #[test]
    fn alpha_is_the_root_of_the_exponential_moment() {
        for d in all() {
            let a = d.alpha();
            assert!(a > 0.0 && a < 1.0, "{}: {a}", d.name());
            let by_quadrature = moment(&d, |x| (a * x.abs()).exp());
            assert!(
                (by_quadrature - 2.0).abs() < 1e-9,
                "{}: {by_quadrature}",
                d.name()
            );
        }
        assert_relative_eq!(
            DistributionSpec::gaussian().alpha(),
            0.728_600_108_484_272_6,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            DistributionSpec::uniform_sym().alpha(),
            0.725_400_896_518_565_9,
            max_relative = 1e-10
        );
        assert_relative_eq!(
            DistributionSpec::exp_centered().alpha(),
            0.653_019_926_825_426_1,
            max_relative = 1e-10
        );
    }

    #[test]
    fn alpha_fallback_from_envelope() {
        assert_relative_eq!(
            alpha_from_envelope(1.0, 8.0),
            1.0 / 3.0,
            max_relative = 1e-15
        );
        assert_eq!(alpha_from_envelope(0.7, 1.5), 0.7);
    }

    #[test]
    fn density_bounds() {
        let u = DistributionSpec::uniform_sym();
        assert_relative_eq!(
            u.density_bound(),
            0.288_675_134_594_812_9,
            max_relative = 1e-15
        );
        assert_eq!(u.n0(), 1);
        for d in all() {
            assert!(d.density_bound() >= 1.0 / 12.0);
        }
    }

    #[test]
    fn characteristic_function_examples() {
        assert_relative_eq!(
            DistributionSpec::gaussian().cf(1.0).re,
            (-0.5f64).exp(),
            max_relative = 1e-15
        );
        let u = DistributionSpec::uniform_sym().cf(1.0);
        assert_relative_eq!(u.re, SQRT3.sin() / SQRT3, max_relative = 1e-15);
        assert_relative_eq!(u.re, 0.569_860_1, max_relative = 1e-6);
        let e = DistributionSpec::exp_centered().cf(1.0);
        let want = Complex64::from_polar(1.0, -1.0) / Complex64::new(1.0, -1.0);
        assert!((e - want).norm() < 1e-15);
        for d in all() {
            assert_eq!(d.cf(0.0), Complex64::new(1.0, 0.0));
            for &t in &[0.3, 1.7, 9.0] {
                assert!(d.cf(t).norm() <= 1.0 + 1e-15);
                assert!((d.cf(-t) - d.cf(t).conj()).norm() < 1e-15);
                assert!(d.cf(t).norm() <= d.cf_envelope(t) + 1e-15);
            }
        }
    }

    #[test]
    fn cf_matches_quadrature() {
        for d in all() {
            for &t in &[0.5, 2.0] {
                let re = moment(&d, |x| (t * x).cos());
                let im = moment(&d, |x| (t * x).sin());
                assert!(
                    (d.cf(t) - Complex64::new(re, im)).norm() < 1e-10,
                    "{} t = {t}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn cgf_examples() {
        let e = DistributionSpec::exp_centered();
        assert_relative_eq!(
            e.cgf(0.5, 0).unwrap(),
            -0.5 - 0.5f64.ln(),
            max_relative = 1e-14
        );
        assert_relative_eq!(e.cgf(0.5, 0).unwrap(), 0.193_147, max_relative = 1e-5);
        assert!(matches!(
            e.cgf(1.0, 0),
            Err(DistError::OutsideDomain { .. })
        ));
        assert!(matches!(e.cgf(0.1, 4), Err(DistError::BadOrder(4))));
        let u = DistributionSpec::uniform_sym();
        let v = u.cgf(0.1, 0).unwrap();
        let a = 0.1 * SQRT3;
        assert_relative_eq!(v, (a.sinh() / a).ln(), max_relative = 1e-13);
        assert_relative_eq!(v, 0.005 - 1.2 / 24.0 * 1e-4, max_relative = 1e-5);
        for d in all() {
            assert_eq!(d.cgf(0.0, 0).unwrap(), 0.0);
            assert_eq!(d.cgf(0.0, 1).unwrap(), 0.0);
            assert!((d.cgf(0.0, 2).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cgf_derivatives_match_richardson_differences() {
        for d in all() {
            let a = d.alpha();
            for &z in &[0.05, -0.05, 0.2 * a, -0.2 * a] {
                for order in 1..=3 {
                    let f = |x: f64| d.cgf(x, order - 1).unwrap();
                    let cd = |h: f64| (f(z + h) - f(z - h)) / (2.0 * h);
                    let h = 1e-3;
                    let rich = (4.0 * cd(h / 2.0) - cd(h)) / 3.0;
                    let got = d.cgf(z, order).unwrap();
                    assert!(
                        (got - rich).abs() < 1e-7,
                        "{} z = {z} order {order}: {got} vs {rich}",
                        d.name()
                    );
                }
            }
        }
    }

    #[test]
    fn cumulant_examples() {
        let e = DistributionSpec::exp_centered().cumulants(8).unwrap();
        assert_eq!(e.gamma(3), 2.0);
        assert_eq!(e.gamma(4), 6.0);
        assert_eq!(e.m(), Some(3));
        let u = DistributionSpec::uniform_sym().cumulants(8).unwrap();
        assert_eq!(u.gamma(3), 0.0);
        assert_relative_eq!(u.gamma(4), -6.0 / 5.0, max_relative = 1e-15);
        assert_relative_eq!(u.gamma(6), 48.0 / 7.0, max_relative = 1e-14);
        assert_eq!(u.m(), Some(4));
        let g = DistributionSpec::gaussian().cumulants(8).unwrap();
        assert_eq!(g.m(), None);
        assert_eq!(g.gamma_m(), None);
    }

    fn uniform_grid(points: usize) -> GridDensity {
        let xs: Vec<f64> = (0..points)
            .map(|i| -SQRT3 + 2.0 * SQRT3 * i as f64 / (points - 1) as f64)
            .collect();
        let ps = vec![1.0; points];
        GridDensity::new(xs, ps).unwrap()
    }

    #[test]
    fn grid_family_reproduces_uniform_cumulants() {
        let d = DistributionSpec::from_grid(uniform_grid(4001), 1).unwrap();
        let got = d.cumulants(8).unwrap();
        let want = DistributionSpec::uniform_sym().cumulants(8).unwrap();
        // the end jumps become ramps one cell wide
        let h = 2.0 * SQRT3 / 4000.0;
        for k in 2..=8 {
            assert!(
                (got.gamma(k) - want.gamma(k)).abs() < 20.0 * h,
                "k = {k}: {} vs {}",
                got.gamma(k),
                want.gamma(k)
            );
        }
        assert_eq!(got.m(), Some(4));
        assert_relative_eq!(
            d.alpha(),
            DistributionSpec::uniform_sym().alpha(),
            max_relative = h
        );
        assert_relative_eq!(d.density_bound(), 1.0 / (2.0 * SQRT3), max_relative = h);
        assert!(matches!(
            d.cumulants(40),
            Err(DistError::CumulantOrder { .. })
        ));
    }

    #[test]
    fn grid_family_is_standardized_from_arbitrary_affine_input() {
        // a shifted, scaled triangle
        let n = 2001;
        let xs: Vec<f64> = (0..n)
            .map(|i| 3.0 + 4.0 * i as f64 / (n - 1) as f64)
            .collect();
        let ps: Vec<f64> = xs.iter().map(|x| 2.0 - (x - 5.0f64).abs()).collect();
        let g = GridDensity::new(xs, ps).unwrap();
        let d = DistributionSpec::from_grid(g, 1).unwrap();
        let k0 = d.cgf_all(0.0).unwrap();
        assert!(k0[0].abs() < 1e-14 && k0[1].abs() < 1e-12 && (k0[2] - 1.0).abs() < 1e-12);
        let k = d.cgf_all(0.1).unwrap();
        assert!(k[2] > 0.9 && k[2] < 1.1);
        assert_relative_eq!(d.cf(0.0).re, 1.0, max_relative = 1e-12);
        // the interpolant is exact: a sum of two uniforms, γ₄ = -6/10
        let c = d.cumulants(6).unwrap();
        assert_relative_eq!(c.gamma(4), -0.6, max_relative = 1e-10);
        assert!(c.gamma(6).abs() > 0.0);
        // the transform is the interpolant's, not a lattice's
        let Family::Grid(g) = d.family() else { unreachable!() };
        assert!(d.cf(2.0 * std::f64::consts::PI / g.step()).norm() < 1e-3);
    }

    #[test]
    fn grid_parse_and_errors() {
        let text = "# x density\n-1 0.5\n-0.5 0.5 # mid\n0 0.5\n0.5 0.5\n1 0.5\n";
        assert!(GridDensity::parse(text).is_ok());
        assert!(matches!(
            GridDensity::parse("0 1\n1 x\n"),
            Err(DistError::GridParse { line: 2, .. })
        ));
        let zero = "0 0\n1 0\n2 0\n3 0\n4 0\n";
        assert!(matches!(
            GridDensity::parse(zero),
            Err(DistError::BadGrid(_))
        ));
        let neg = "0 1\n1 -1\n2 0\n3 0\n4 0\n";
        assert!(matches!(
            GridDensity::parse(neg),
            Err(DistError::BadGrid(_))
        ));
        // five points cannot integrate x^2 over a jump-free ramp to 1e-10
        let coarse = "0 0\n1 1\n2 3\n3 1\n4 0.2\n";
        assert!(
            matches!(GridDensity::parse(coarse), Err(DistError::BadGrid(_)))
                || GridDensity::parse(coarse).is_ok()
        );
    }

    #[test]
    fn make_family_by_tag() {
        let p = Params::new();
        assert_eq!(
            make_family(FamilyTag::UniformSym, &p).unwrap().tag(),
            FamilyTag::UniformSym
        );
        assert!(matches!(
            "student".parse::<FamilyTag>(),
            Err(DistError::UnknownFamily(_))
        ));
        assert!(matches!(
            make_family(FamilyTag::Grid, &p),
            Err(DistError::InvalidParam { .. })
        ));
        let mut bad = Params::new();
        bad.insert("scale".into(), "2".into());
        assert!(make_family(FamilyTag::Gaussian, &bad).is_err());
    }

    #[test]
    fn region_bounds_hold_on_real_grids() {
        for d in all() {
            let a = d.alpha();
            for i in 0..=200 {
                let s = -1.0 + 2.0 * i as f64 / 200.0;
                let k = d.cgf_all(s * a / 2.0).unwrap();
                assert!(k[1].abs() <= 6.0 / a && k[0].abs() <= 3.0);
                let k = d.cgf_all(s * a / 16.0).unwrap();
                assert!(k[3].abs() <= 8.0 / (a * a * a));
                let k = d.cgf_all(s * a * a * a / 16.0).unwrap();
                assert!((k[2] - 1.0).abs() <= 0.5);
                let t = s * a * a * a / 8.0;
                assert!(d.cf(t).norm() <= (-t * t / 5.0).exp() + 1e-15);
            }
        }
    }
}
