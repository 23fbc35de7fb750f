//! Densities `p_n` of `Z_n = (X_1 + ... + X_n)/√n`: closed-form oracles,
//! characteristic-function inversion, contour-tilted inversion and direct
//! grid convolution.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::dist::{DistError, DistributionSpec, Family, FamilyTag};
use crate::quad::{integrate, integrate_panels, trapezoid, QuadError};
use crate::saddle::{tilt_point, SaddleError};
use crate::special::{
    expint_scaled, ln_binomial, ln_factorial, log1pmx, stirling_remainder, LN_SQRT_2PI,
};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Largest `n` evaluated with the alternating Irwin-Hall sum.
pub const IRWIN_HALL_MAX_N: u32 = 20;
/// Inversion bodies stop here when an analytic tail is available.
const BODY_T: f64 = 40.0;
/// Mass defect tolerated by grid convolution before renormalizing.
const MASS_DEFECT_TOL: f64 = 1e-3;
/// Relative accuracy of the tilted inversion integral.
const TILTED_REL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("no closed-form density for the {0} family")]
    Unsupported(FamilyTag),
    #[error("n = {n}: {reason}")]
    BadN { n: u32, reason: String },
    #[error("tail bound cannot reach {requested:e} with T <= {t_max}; achievable tolerance {achievable:e}")]
    TailUnreachable {
        requested: f64,
        achievable: f64,
        t_max: f64,
    },
    #[error("grid step too coarse: mass defect {defect:e}")]
    TooCoarse { defect: f64 },
    #[error("inversion integral is not positive ({0:e})")]
    NonPositive(f64),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Saddle(#[from] SaddleError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    CfInversion,
    GridConvolution,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed_form",
            Method::CfInversion => "cf_inversion",
            Method::GridConvolution => "grid_convolution",
        })
    }
}

/// Density values on an equispaced grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub n: u32,
    pub method: Method,
}

impl DensityGrid {
    pub fn step(&self) -> f64 {
        if self.xs.len() < 2 {
            0.0
        } else {
            (self.xs[self.xs.len() - 1] - self.xs[0]) / (self.xs.len() - 1) as f64
        }
    }

    pub fn mass(&self) -> f64 {
        trapezoid(&self.ps, self.step())
    }

    fn moment(&self, k: i32) -> f64 {
        let v: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.ps)
            .map(|(x, p)| x.powi(k) * p)
            .collect();
        trapezoid(&v, self.step())
    }

    pub fn mean(&self) -> f64 {
        self.moment(1) / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(2) / self.mass() - m * m
    }

    pub fn max_density(&self) -> f64 {
        self.ps.iter().cloned().fold(0.0, f64::max)
    }

    /// Writes `x,p` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,p")?;
        for (x, p) in self.xs.iter().zip(&self.ps) {
            writeln!(w, "{x:.16e},{p:.16e}")?;
        }
        Ok(())
    }

    /// Rescales the grid of an unnormalized sum `S_n` to `Z_n = S_n/√n`.
    fn normalized(mut self) -> Self {
        let r = (self.n as f64).sqrt();
        self.xs.iter_mut().for_each(|x| *x /= r);
        self.ps.iter_mut().for_each(|p| *p *= r);
        self
    }
}

/// Density of the sum of `n` independent uniforms on `[0, 1]` at `s`, by the
/// alternating binomial sum with compensated summation.
pub fn irwin_hall_pdf(n: u32, s: f64) -> f64 {
    assert!(n >= 1);
    let nf = n as f64;
    if !(s > 0.0 && s < nf) {
        return 0.0;
    }
    let s = s.min(nf - s);
    let lnorm = ln_factorial(n as u64 - 1);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for k in 0..=(s.floor() as u32) {
        let r = s - k as f64;
        if r <= 0.0 {
            continue;
        }
        let mag = (ln_binomial(n as u64, k as u64) + (nf - 1.0) * r.ln() - lnorm).exp();
        let term = if k % 2 == 0 { mag } else { -mag };
        // Kahan-Babuska
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    (sum + comp).max(0.0)
}

/// `M(T_m)` for `T_m = (η_1 + ... + η_m)/√m` with `η_k` uniform on
/// `[-1/2, 1/2]`: the peak `√m · IH_m(m/2)`.
pub fn irwin_hall_slice_max(m: u32) -> Result<f64, DensityError> {
    if m == 0 || m > IRWIN_HALL_MAX_N {
        return Err(DensityError::BadN {
            n: m,
            reason: format!("slice maximum needs 1 <= m <= {IRWIN_HALL_MAX_N}"),
        });
    }
    if m == 1 {
        return Ok(1.0);
    }
    Ok((m as f64).sqrt() * irwin_hall_pdf(m, 0.5 * m as f64))
}

/// `ln p_n(x)`; `-∞` outside the support.
pub fn log_density_exact(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, DensityError> {
    if n == 0 {
        return Err(DensityError::BadN {
            n,
            reason: "n must be positive".into(),
        });
    }
    let nf = n as f64;
    match d.family() {
        Family::Gaussian => Ok(-0.5 * x * x - LN_SQRT_2PI),
        Family::ExpCentered => {
            // √n · Gamma(n, 1) density at n + x√n, with Stirling's form of Γ(n)
            let u = x / nf.sqrt();
            if u <= -1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            Ok(nf * log1pmx(u) - u.ln_1p() - LN_SQRT_2PI - stirling_remainder(n as u64))
        }
        Family::UniformSym => {
            if x.abs() >= (3.0 * nf).sqrt() {
                return Ok(f64::NEG_INFINITY);
            }
            if n <= IRWIN_HALL_MAX_N {
                let scale = (nf / 12.0).sqrt();
                Ok((scale * irwin_hall_pdf(n, 0.5 * nf + x * scale)).ln())
            } else {
                log_density_tilted(d, n, x)
            }
        }
        Family::Grid(_) => Err(DensityError::Unsupported(FamilyTag::Grid)),
    }
}

/// Closed-form `p_n(x)`: Irwin-Hall for `uniform_sym` (tilted inversion
/// beyond `n = 20`), the Gamma density for `exp_centered`, `φ` for
/// `gaussian`.
pub fn density_exact(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, DensityError> {
    Ok(log_density_exact(d, n, x)?.exp())
}

pub fn density_exact_grid(
    d: &DistributionSpec,
    n: u32,
    xs: &[f64],
) -> Result<DensityGrid, DensityError> {
    let ps = xs
        .iter()
        .map(|&x| density_exact(d, n, x))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DensityGrid {
        xs: xs.to_vec(),
        ps,
        n,
        method: Method::ClosedForm,
    })
}

/// `T_max = 200 α⁻³`, the largest truncation point used by inversion.
pub fn t_max(d: &DistributionSpec) -> f64 {
    200.0 / d.alpha().powi(3)
}

/// `∫_T^∞ env(t)^q dt` for the family envelope `|f(t)| <= env(t)`.
pub fn envelope_tail(d: &DistributionSpec, q: u32, t: f64) -> f64 {
    let qf = q as f64;
    match d.family() {
        Family::Gaussian => (PI / (2.0 * qf)).sqrt() * erfc(t * (qf / 2.0).sqrt()),
        _ if q < 2 => f64::INFINITY,
        Family::UniformSym => (SQRT3 * t).powf(-qf) * t / (qf - 1.0),
        Family::ExpCentered => t.powf(1.0 - qf) / (qf - 1.0),
        Family::Grid(g) => g.total_variation().powf(qf) * t.powf(1.0 - qf) / (qf - 1.0),
    }
}

/// Smallest `T` (to 1%) with `envelope_tail(T) <= tol`.
fn envelope_cutoff(d: &DistributionSpec, q: u32, tol: f64) -> f64 {
    let mut hi = 1.0;
    while envelope_tail(d, q, hi) > tol {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if envelope_tail(d, q, mid) > tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// `∫_T^∞ e^{-iωt} (sin(√3 t)/(√3 t))^n dt`, summed term by term from the
/// exponential expansion of `sin^n` and generalized exponential integrals.
pub fn uniform_cf_tail(n: u32, omega: f64, t: f64) -> Complex64 {
    assert!(n >= 2);
    let nf = n as f64;
    let i = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..=n {
        let beta = (nf - 2.0 * k as f64) * SQRT3 - omega;
        let z = Complex64::new(0.0, -beta * t);
        let term = Complex64::from_polar(1.0, beta * t) * expint_scaled(n, z);
        let c = ln_binomial(n as u64, k as u64).exp();
        acc += if k % 2 == 0 { term * c } else { -term * c };
    }
    // (2i)^{-n} (√3)^{-n} T^{1-n}
    acc * (2.0 * i).powi(-(n as i32)) * (SQRT3.powf(-nf) * t.powf(1.0 - nf))
}

/// `∫_T^∞ e^{-iωt} (e^{-it}/(1 - it))^n dt` in closed form.
pub fn exp_cf_tail(n: u32, omega: f64, t: f64) -> Complex64 {
    assert!(n >= 2);
    let gamma = -(omega + n as f64);
    let w = Complex64::new(1.0, -t);
    let i = Complex64::new(0.0, 1.0);
    i * Complex64::from_polar(1.0, gamma * t) * w.powi(1 - n as i32) * expint_scaled(n, w * gamma)
}

fn analytic_cf_tail(d: &DistributionSpec, n: u32, omega: f64, t: f64) -> Option<Complex64> {
    match d.family() {
        Family::UniformSym => Some(uniform_cf_tail(n, omega, t)),
        Family::ExpCentered => Some(exp_cf_tail(n, omega, t)),
        _ => None,
    }
}

/// Typical oscillation frequency of `e^{-iωt} f(t)^n`.
fn frequency(d: &DistributionSpec, n: u32, omega: f64) -> f64 {
    let nf = n as f64;
    match d.family() {
        Family::Gaussian => omega.abs(),
        Family::UniformSym => omega.abs() + nf * SQRT3,
        Family::ExpCentered => (omega + nf).abs() + 1.0,
        Family::Grid(g) => {
            let span = g.xs()[g.xs().len() - 1].abs().max(g.xs()[0].abs());
            omega.abs() + nf * span
        }
    }
}

/// `p_n(x) = (√n/π) ∫_0^∞ Re[e^{-itx√n} f(t)^n] dt`, truncated where the
/// envelope tail drops below half the budget. When that point lies beyond
/// `T_max`, families with a closed-form tail integrate to a short body and
/// add the exact tail instead.
pub fn density_cf_inversion(
    d: &DistributionSpec,
    n: u32,
    x: f64,
    abs_tol: f64,
) -> Result<f64, DensityError> {
    if n < 2 * d.n0() || n < 2 {
        return Err(DensityError::BadN {
            n,
            reason: format!("inversion needs n >= {}", 2 * d.n0().max(1)),
        });
    }
    if !(abs_tol > 0.0) {
        return Err(DensityError::BadN {
            n,
            reason: "abs_tol must be positive".into(),
        });
    }
    let nf = n as f64;
    let pref = nf.sqrt() / PI;
    let budget = 0.5 * abs_tol / pref;
    let omega = x * nf.sqrt();
    let cap = t_max(d);
    let cutoff = envelope_cutoff(d, n, budget).max(1.0);
    let (t_end, tail) = if cutoff <= cap {
        (cutoff, 0.0)
    } else if let Some(tail) = analytic_cf_tail(d, n, omega, BODY_T) {
        (BODY_T, tail.re)
    } else {
        return Err(DensityError::TailUnreachable {
            requested: abs_tol,
            achievable: 2.0 * pref * envelope_tail(d, n, cap),
            t_max: cap,
        });
    };
    let panel = (2.0 / (frequency(d, n, omega) + 1.0)).min(1.0);
    let f = |t: f64| (Complex64::from_polar(1.0, -omega * t) * d.cf(t).powi(n as i32)).re;
    let body = integrate_panels(f, 0.0, t_end, panel, budget)?;
    Ok(pref * (body.value + tail))
}

/// `ln p_n(x)` by inversion along the line `Re s = h` with `K'(h) = x/√n`,
/// which keeps relative accuracy far into the tails.
pub fn log_density_tilted(d: &DistributionSpec, n: u32, x: f64) -> Result<f64, DensityError> {
    let nf = n as f64;
    let tau = x / nf.sqrt();
    let h = tilt_point(d, tau)?;
    let k = d.cgf_all(h)?;
    let base = nf * (k[0] - h * tau);
    if let Family::Gaussian = d.family() {
        return Ok(-0.5 * x * x - LN_SQRT_2PI);
    }
    // |L(h+it)/L(h)| <= c/t
    let c = match d.family() {
        Family::UniformSym => {
            let u = SQRT3 * h;
            u.cosh() / (SQRT3 * k[0].exp())
        }
        Family::ExpCentered => 1.0 - h,
        _ => return Err(DensityError::Unsupported(d.tag())),
    };
    let width = 1.0 / (nf * k[2]).sqrt();
    let scale = (2.0 * PI).sqrt() * width / 2.0;
    let tol = TILTED_REL_TOL * scale;
    let mut t_end = c.max(width);
    while c.powf(nf) * t_end.powf(1.0 - nf) / (nf - 1.0) > tol {
        t_end *= 1.25;
    }
    let l0 = Complex64::new(k[0], 0.0);
    let f = |t: f64| {
        let s = Complex64::new(h, t);
        let log_ratio = d.laplace(s).ln() - l0;
        (log_ratio * nf - Complex64::new(0.0, nf * tau * t))
            .exp()
            .re
    };
    let body = integrate_panels(f, 0.0, t_end, 0.5 * width, tol)?;
    if !(body.value > 0.0) {
        return Err(DensityError::NonPositive(body.value));
    }
    Ok((nf.sqrt() / PI).ln() + base + body.value.ln())
}

/// `∫_from^∞ |f(t)|^q dt`. Built-ins are exact up to quadrature error;
/// the grid family adds its envelope bound for the part beyond `T_max`.
pub fn abs_cf_power_integral(d: &DistributionSpec, q: u32, from: f64) -> Result<f64, DensityError> {
    if q == 0 {
        return Err(DensityError::BadN {
            n: q,
            reason: "power must be positive".into(),
        });
    }
    let qf = q as f64;
    let from = from.max(0.0);
    match d.family() {
        Family::Gaussian => Ok((PI / (2.0 * qf)).sqrt() * erfc(from * (qf / 2.0).sqrt())),
        _ if q < 2 => Err(DensityError::BadN {
            n: q,
            reason: "|f|^q is not integrable for q < 2".into(),
        }),
        Family::ExpCentered => {
            // t = tan θ turns (1 + t²)^{-q/2} dt into cos^{q-2} θ dθ
            let r = integrate(
                |th: f64| th.cos().powi(q as i32 - 2),
                from.atan(),
                0.5 * PI,
                1e-15,
            )?;
            Ok(r.value)
        }
        Family::UniformSym => {
            let end = from.max(BODY_T);
            let body =
                integrate_panels(|t| d.cf(t).re.abs().powi(q as i32), from, end, 0.5, 1e-15)?;
            let tail = if q.is_multiple_of(2) {
                uniform_cf_tail(q, 0.0, end).re
            } else {
                envelope_tail(d, q, end)
            };
            Ok(body.value + tail)
        }
        Family::Grid(_) => {
            let end = from.max(t_max(d));
            let body = integrate_panels(|t| d.cf(t).norm().powi(q as i32), from, end, 0.5, 1e-12)?;
            Ok(body.value + envelope_tail(d, q, end))
        }
    }
}

/// Support used to sample the base density for convolution.
fn base_support(d: &DistributionSpec) -> (f64, f64) {
    match d.family() {
        Family::Gaussian => (-12.0, 12.0),
        Family::UniformSym => (-SQRT3, SQRT3),
        Family::ExpCentered => (-1.0, 40.0),
        Family::Grid(g) => (g.xs()[0], g.xs()[g.xs().len() - 1]),
    }
}

fn base_density(d: &DistributionSpec, x: f64) -> f64 {
    match d.family() {
        Family::Gaussian => crate::special::normal_pdf(x),
        Family::UniformSym => 1.0 / (2.0 * SQRT3),
        Family::ExpCentered => (-(x + 1.0)).exp(),
        Family::Grid(g) => g.density_at(x),
    }
}

/// Unnormalized sum on a grid: `lo + i·step`.
#[derive(Debug, Clone)]
struct SumGrid {
    lo: f64,
    step: f64,
    ps: Vec<f64>,
}

impl SumGrid {
    /// Convolution of the piecewise-linear interpolants, sampled at nodes.
    fn convolve(&self, other: &Self) -> Self {
        let (a, b) = (&self.ps, &other.ps);
        let len = a.len() + b.len() - 1;
        let h = self.step;
        let ps: Vec<f64> = (0..len)
            .into_par_iter()
            .map(|k| {
                // cell [i, i+1] of `a` meets cell [k-i-1, k-i] of `b`
                let first = (k + 1).saturating_sub(b.len());
                let end = k.min(a.len() - 1);
                let mut s = 0.0;
                for i in first..end.max(first) {
                    let (p0, p1) = (a[i], a[i + 1]);
                    let (q0, q1) = (b[k - i], b[k - i - 1]);
                    s += (p0 * q0 + p1 * q1) / 3.0 + (p0 * q1 + p1 * q0) / 6.0;
                }
                s * h
            })
            .collect();
        Self {
            lo: self.lo + other.lo,
            step: h,
            ps,
        }
        .trimmed()
    }

    fn trimmed(mut self) -> Self {
        let peak = self.ps.iter().cloned().fold(0.0, f64::max);
        let cut = 1e-18 * peak;
        let first = self
            .ps
            .iter()
            .position(|&p| p > cut)
            .unwrap_or(0)
            .saturating_sub(1);
        let last = (self.ps.iter().rposition(|&p| p > cut).unwrap_or(0) + 1).min(self.ps.len() - 1);
        self.lo += first as f64 * self.step;
        self.ps = self.ps[first..=last].to_vec();
        self
    }
}

/// Density of the unnormalized sum `S_n = X_1 + ... + X_n` by repeated
/// convolution (binary powering) on a grid of the given step.
pub fn grid_convolve_sum(
    d: &DistributionSpec,
    n: u32,
    grid_step: f64,
) -> Result<DensityGrid, DensityError> {
    if n == 0 {
        return Err(DensityError::BadN {
            n,
            reason: "n must be positive".into(),
        });
    }
    if !(grid_step > 0.0) {
        return Err(DensityError::BadN {
            n,
            reason: "grid step must be positive".into(),
        });
    }
    let (lo, hi) = base_support(d);
    let cells = ((hi - lo) / grid_step).round().max(4.0) as usize;
    let step = (hi - lo) / cells as f64;
    let ps: Vec<f64> = (0..=cells)
        .map(|i| base_density(d, lo + i as f64 * step))
        .collect();
    let base = SumGrid { lo, step, ps };
    let mut result: Option<SumGrid> = None;
    let mut power = base;
    let mut k = n;
    loop {
        if k & 1 == 1 {
            result = Some(match result {
                None => power.clone(),
                Some(r) => r.convolve(&power),
            });
        }
        k >>= 1;
        if k == 0 {
            break;
        }
        power = power.convolve(&power);
    }
    let r = result.expect("n >= 1");
    let mass = trapezoid(&r.ps, r.step);
    if (mass - 1.0).abs() > MASS_DEFECT_TOL {
        return Err(DensityError::TooCoarse {
            defect: (mass - 1.0).abs(),
        });
    }
    let xs = (0..r.ps.len()).map(|i| r.lo + i as f64 * r.step).collect();
    let ps = r.ps.iter().map(|p| p / mass).collect();
    Ok(DensityGrid {
        xs,
        ps,
        n,
        method: Method::GridConvolution,
    })
}

/// Density grid of `Z_n` by convolution, rescaled from `S_n`.
pub fn grid_convolve(
    d: &DistributionSpec,
    n: u32,
    grid_step: f64,
) -> Result<DensityGrid, DensityError> {
    Ok(grid_convolve_sum(d, n, grid_step)?.normalized())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_pdf;
    use approx::assert_relative_eq;

    fn uniform() -> DistributionSpec {
        DistributionSpec::uniform_sym()
    }

    fn expc() -> DistributionSpec {
        DistributionSpec::exp_centered()
    }

    #[test]
    fn exact_examples() {
        assert_relative_eq!(
            density_exact(&uniform(), 2, 0.0).unwrap(),
            1.0 / 6f64.sqrt(),
            max_relative = 1e-14
        );
        let g = DistributionSpec::gaussian();
        for n in [1, 7, 100] {
            assert_relative_eq!(
                density_exact(&g, n, 0.0).unwrap(),
                0.398_942_280_401_432_7,
                max_relative = 1e-15
            );
        }
        assert_relative_eq!(
            density_exact(&expc(), 1, 0.0).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-14
        );
        assert_eq!(density_exact(&expc(), 4, -2.5).unwrap(), 0.0);
        assert_eq!(density_exact(&uniform(), 3, 3.1).unwrap(), 0.0);
        assert!(matches!(
            density_exact(&uniform(), 0, 0.0),
            Err(DensityError::BadN { .. })
        ));
    }

    #[test]
    fn gamma_oracle_matches_direct_formula() {
        for n in [1u32, 3, 19, 20, 21, 60] {
            for &x in &[-0.9, 0.0, 0.7, 3.0] {
                let nf = n as f64;
                let y = nf + x * nf.sqrt();
                if y <= 0.0 {
                    continue;
                }
                let direct =
                    nf.sqrt() * ((nf - 1.0) * y.ln() - y - ln_factorial(n as u64 - 1)).exp();
                assert_relative_eq!(
                    density_exact(&expc(), n, x).unwrap(),
                    direct,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn irwin_hall_small_cases() {
        assert_eq!(irwin_hall_pdf(1, 0.3), 1.0);
        assert_relative_eq!(irwin_hall_pdf(2, 0.5), 0.5, max_relative = 1e-15);
        // n = 3: s²/2 on [0, 1], (-2s² + 6s - 3)/2 on [1, 2]
        assert_relative_eq!(irwin_hall_pdf(3, 0.5), 0.125, max_relative = 1e-14);
        assert_relative_eq!(irwin_hall_pdf(3, 1.5), 0.75, max_relative = 1e-14);
        assert_eq!(irwin_hall_pdf(3, -0.1), 0.0);
    }

    #[test]
    fn slice_maxima_lie_between_one_and_root_two() {
        assert_eq!(irwin_hall_slice_max(1).unwrap(), 1.0);
        assert_relative_eq!(
            irwin_hall_slice_max(2).unwrap(),
            2f64.sqrt(),
            max_relative = 1e-15
        );
        // from m = 4 on the peaks climb towards √(6/π)
        let mut prev = 1.0;
        for m in [4u32, 8, 16] {
            let v = irwin_hall_slice_max(m).unwrap();
            assert!((1.0..=2f64.sqrt()).contains(&v));
            assert!(v > prev);
            prev = v;
        }
        assert!((prev - (6.0 / PI).sqrt()).abs() < 0.02);
    }

    #[test]
    fn uniform_closed_form_is_a_normalized_density() {
        for n in [4u32, 9, 16] {
            let xs: Vec<f64> = (0..=4000)
                .map(|i| -7.0 + 14.0 * i as f64 / 4000.0)
                .collect();
            let g = density_exact_grid(&uniform(), n, &xs).unwrap();
            assert!((g.mass() - 1.0).abs() < 1e-6);
            assert!(g.mean().abs() < 1e-6);
            assert!((g.variance() - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn tilted_inversion_matches_closed_forms() {
        for (d, n) in [
            (uniform(), 12u32),
            (uniform(), 40),
            (expc(), 50),
            (expc(), 400),
        ] {
            for &x in &[-2.0, -0.3, 0.0, 1.1, 3.5] {
                let exact = log_density_exact(&d, n, x).unwrap();
                let tilted = log_density_tilted(&d, n, x).unwrap();
                assert!(
                    (exact - tilted).abs() < 1e-10,
                    "{} n = {n} x = {x}: {exact} vs {tilted}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn tilted_inversion_far_in_the_tail() {
        let e = expc();
        let (n, x) = (1024u32, 16.0);
        let exact = log_density_exact(&e, n, x).unwrap();
        assert!((exact - log_density_tilted(&e, n, x).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn closed_form_tails_match_quadrature() {
        // the difference of two tails is a finite integral
        let (t, end) = (3.0, 200.0);
        for (n, omega) in [(4u32, 0.0), (4, 2.5), (5, -1.0), (8, 7.0)] {
            let want = integrate_panels(
                |s| (Complex64::from_polar(1.0, -omega * s) * uniform().cf(s).powi(n as i32)).re,
                t,
                end,
                0.1,
                1e-13,
            )
            .unwrap()
            .value;
            let got = uniform_cf_tail(n, omega, t).re - uniform_cf_tail(n, omega, end).re;
            assert!(
                (got - want).abs() < 1e-11,
                "uniform n = {n} ω = {omega}: {got} vs {want}"
            );
            let want = integrate_panels(
                |s| (Complex64::from_polar(1.0, -omega * s) * expc().cf(s).powi(n as i32)).re,
                t,
                end,
                0.1,
                1e-13,
            )
            .unwrap()
            .value;
            let got = exp_cf_tail(n, omega, t).re - exp_cf_tail(n, omega, end).re;
            assert!(
                (got - want).abs() < 1e-10,
                "exp n = {n} ω = {omega}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn inversion_examples() {
        let u = uniform();
        let v = density_cf_inversion(&u, 8, 0.5, 1e-10).unwrap();
        assert!((v - density_exact(&u, 8, 0.5).unwrap()).abs() < 1e-8);
        let g = DistributionSpec::gaussian();
        assert!((density_cf_inversion(&g, 4, 1.0, 1e-12).unwrap() - normal_pdf(1.0)).abs() < 1e-10);
        let e = expc();
        let v = density_cf_inversion(&e, 16, -1.0, 1e-10).unwrap();
        assert!((v - density_exact(&e, 16, -1.0).unwrap()).abs() < 1e-8);
        assert!(matches!(
            density_cf_inversion(&u, 1, 0.0, 1e-8),
            Err(DensityError::BadN { .. })
        ));
    }

    #[test]
    fn inversion_with_analytic_tail_at_n_two() {
        for d in [uniform(), expc()] {
            for &x in &[-0.9, 0.0, 0.4, 2.2] {
                let got = density_cf_inversion(&d, 2, x, 1e-10).unwrap();
                let want = density_exact(&d, 2, x).unwrap();
                assert!(
                    (got - want).abs() < 1e-9,
                    "{} x = {x}: {got} vs {want}",
                    d.name()
                );
            }
        }
    }

    #[test]
    fn grid_family_reports_unreachable_tail() {
        let xs: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
        let ps = vec![1.0; xs.len()];
        let d =
            DistributionSpec::from_grid(crate::dist::GridDensity::new(xs, ps).unwrap(), 1).unwrap();
        match density_cf_inversion(&d, 2, 0.0, 1e-12) {
            Err(DensityError::TailUnreachable { achievable, .. }) => assert!(achievable > 1e-12),
            other => panic!("expected TailUnreachable, got {other:?}"),
        }
        let v = density_cf_inversion(&d, 8, 0.0, 1e-6).unwrap();
        assert!((v - density_exact(&uniform(), 8, 0.0).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn convolution_examples() {
        let u = uniform();
        let one = grid_convolve(&u, 1, 0.01).unwrap();
        assert!(one
            .ps
            .iter()
            .all(|p| (p - 1.0 / (2.0 * SQRT3)).abs() < 1e-12));
        let h = 0.01;
        let two = grid_convolve(&u, 2, h).unwrap();
        for (x, p) in two.xs.iter().zip(&two.ps) {
            assert!((p - density_exact(&u, 2, *x).unwrap()).abs() < 10.0 * h * h);
        }
        let sixteen = grid_convolve(&u, 16, 0.01).unwrap();
        let (i, peak) =
            sixteen.ps.iter().enumerate().fold(
                (0, 0.0),
                |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc },
            );
        let exact = density_exact(&u, 16, sixteen.xs[i]).unwrap();
        assert!((peak - exact).abs() < 1e-3);
        let edgeworth = normal_pdf(0.0) * (1.0 - 0.05 * 3.0 / 16.0);
        assert!((peak - edgeworth).abs() < 1e-3);
    }

    #[test]
    fn oracle_triangle() {
        for d in [uniform(), expc()] {
            for n in [2u32, 4, 8, 16] {
                let conv = grid_convolve(&d, n, 0.01).unwrap();
                for &x in &[-2.5, -1.0, 0.0, 0.5, 3.0] {
                    let exact = density_exact(&d, n, x).unwrap();
                    let inv = density_cf_inversion(&d, n, x, 1e-10).unwrap();
                    assert!((exact - inv).abs() < 1e-8, "{} n = {n} x = {x}", d.name());
                    // nearest convolution node, with linear interpolation
                    let pos = (x - conv.xs[0]) / conv.step();
                    let c = if pos < 0.0 || pos >= (conv.xs.len() - 1) as f64 {
                        0.0
                    } else {
                        let i = pos.floor() as usize;
                        let f = pos - i as f64;
                        conv.ps[i] * (1.0 - f) + conv.ps[i + 1] * f
                    };
                    assert!(
                        (c - exact).abs() < 2e-3,
                        "{} n = {n} x = {x}: {c} vs {exact}",
                        d.name()
                    );
                }
            }
        }
    }

    #[test]
    fn convolution_maxima_respect_geometric_mean_bound() {
        for d in [uniform(), expc(), DistributionSpec::gaussian()] {
            let mut m_prev = grid_convolve_sum(&d, 1, 0.01).unwrap().max_density();
            for n in [2u32, 4, 8] {
                let m = grid_convolve_sum(&d, n, 0.01).unwrap().max_density();
                // S_n = S_{n/2} + S'_{n/2}
                assert!(m <= m_prev * (1.0 + 1e-9));
                m_prev = m;
            }
        }
    }

    #[test]
    fn convolution_rejects_coarse_steps() {
        assert!(matches!(
            grid_convolve(&expc(), 2, 2.0),
            Err(DensityError::TooCoarse { .. })
        ));
    }

    #[test]
    fn cf_power_integrals() {
        let u = uniform();
        // Plancherel: (1/π)∫_0^∞ f² = ∫ p² = 1/(2√3)
        assert_relative_eq!(
            abs_cf_power_integral(&u, 2, 0.0).unwrap() / PI,
            1.0 / (2.0 * SQRT3),
            max_relative = 1e-11
        );
        let g = DistributionSpec::gaussian();
        assert_relative_eq!(
            abs_cf_power_integral(&g, 2, 0.0).unwrap() / PI,
            0.5 / PI.sqrt(),
            max_relative = 1e-14
        );
        let e = expc();
        // ∫_0^∞ (1 + t²)^{-1} = π/2
        assert_relative_eq!(
            abs_cf_power_integral(&e, 2, 0.0).unwrap(),
            0.5 * PI,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            abs_cf_power_integral(&e, 4, 1.0).unwrap(),
            PI / 8.0 - 0.25,
            max_relative = 1e-12
        );
        assert!(abs_cf_power_integral(&u, 1, 0.0).is_err());
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        let g = DensityGrid {
            xs: vec![0.1],
            ps: vec![1.0 / 3.0],
            n: 1,
            method: Method::ClosedForm,
        };
        let mut out = Vec::new();
        g.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "x,p\n1.0000000000000001e-1,3.3333333333333331e-1\n"
        );
    }
}
