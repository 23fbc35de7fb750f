//! Audits of the quantitative inequalities behind the approximation: density
//! maxima under convolution, characteristic-function norms and decay, the
//! log-Laplace transform near the origin, and the saddle-point region.
//!
//! Every audit is `lhs <= rhs` (up to a small numerical tolerance), so a
//! failing audit means an implementation error, not a statistical fluke.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::density::{
    abs_cf_power_integral, grid_convolve_sum, irwin_hall_slice_max, DensityError, DensityGrid,
};
use crate::dist::{DistributionSpec, FamilyTag};
use crate::quad::golden_max;
use crate::saddle::{lambda_bound_radius, tau_range, Saddle, SaddleError};
use crate::special::factorial;

/// The absolute constant of the integral decay bound.
pub const DECAY_C: f64 = 5200.0;
/// Relative tolerance on audits that hold with equality for some family.
const EQUALITY_TOL: f64 = 1e-9;
/// Points per side on the real grids of the region audits.
const REGION_POINTS: usize = 200;
/// Spacing of the `δ_f(ε)` scan before golden-section refinement.
const DELTA_SCAN_STEP: f64 = 0.01;
/// End of the `δ_f(ε)` scan; the family envelope covers the rest.
const DELTA_SCAN_END: f64 = 60.0;
/// Step of the convolution grids behind the density-maximum audits.
const CONVOLUTION_STEP: f64 = 0.01;

pub const SUITE_EPS: [f64; 3] = [0.25, 0.5, 1.0];
pub const SUITE_M: [u32; 3] = [1, 2, 4];
pub const SUITE_N_FACTORS: [u32; 3] = [4, 16, 64];
pub const SLICE_M: [u32; 5] = [1, 2, 4, 8, 16];

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("mismatched grids: {0}")]
    Mismatch(String),
    #[error("invalid audit parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Saddle(#[from] SaddleError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundAudit {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Numerical slack allowed on top of `rhs`.
    pub tol: f64,
    pub params: BTreeMap<String, f64>,
    pub pass: bool,
}

impl BoundAudit {
    pub fn new(name: &str, lhs: f64, rhs: f64, tol: f64, params: &[(&str, f64)]) -> Self {
        let params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let pass = lhs <= rhs + tol;
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            tol,
            params,
            pass,
        }
    }

    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Writes `name,lhs,rhs,margin,pass` followed by one column per parameter
/// key seen in any audit.
pub fn write_audits_csv<W: Write>(audits: &[BoundAudit], mut w: W) -> io::Result<()> {
    let keys: BTreeSet<&str> = audits
        .iter()
        .flat_map(|a| a.params.keys().map(String::as_str))
        .collect();
    write!(w, "name,lhs,rhs,margin,pass")?;
    for k in &keys {
        write!(w, ",{k}")?;
    }
    writeln!(w)?;
    for a in audits {
        write!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{}",
            a.name,
            a.lhs,
            a.rhs,
            a.margin(),
            a.pass
        )?;
        for k in &keys {
            match a.params.get(*k) {
                Some(v) => write!(w, ",{v:.16e}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Maximum-density audits for independent summands and their sum.
///
/// `grids` holds the factor densities followed by the density of the sum,
/// all on the unnormalized scale; `m_list` holds the factor maxima.
pub fn audit_density_bounds(
    grids: &[DensityGrid],
    m_list: &[f64],
) -> Result<Vec<BoundAudit>, BoundsError> {
    if m_list.is_empty() || grids.len() != m_list.len() + 1 {
        return Err(BoundsError::Mismatch(format!(
            "{} grids for {} factor maxima (expected one more grid than maxima)",
            grids.len(),
            m_list.len()
        )));
    }
    let (sum, factors) = grids.split_last().expect("non-empty");
    let total: u32 = factors.iter().map(|g| g.n).sum();
    if total != sum.n {
        return Err(BoundsError::Mismatch(format!(
            "factor sizes add to {total}, sum grid has n = {}",
            sum.n
        )));
    }
    if m_list.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(BoundsError::BadParam(
            "factor maxima must be positive and finite".into(),
        ));
    }
    let m = m_list.len() as f64;
    let ms = sum.max_density();
    let sigma = sum.variance().sqrt();
    let harmonic = 2f64.sqrt() / m_list.iter().map(|mk| 1.0 / (mk * mk)).sum::<f64>().sqrt();
    let geometric = (m_list.iter().map(|mk| mk.ln()).sum::<f64>() / m).exp();
    let mut out = vec![
        BoundAudit::new(
            "max_density.harmonic",
            ms,
            harmonic,
            EQUALITY_TOL * harmonic,
            &[("m", m), ("n", sum.n as f64)],
        ),
        BoundAudit::new(
            "max_density.geometric",
            ms,
            geometric,
            EQUALITY_TOL * geometric,
            &[("m", m), ("n", sum.n as f64)],
        ),
        BoundAudit::new(
            "max_density.lower",
            1.0 / (12.0 * sigma),
            ms,
            0.0,
            &[("n", sum.n as f64), ("sigma", sigma)],
        ),
    ];
    for (g, mk) in factors.iter().zip(m_list) {
        let s = g.variance().sqrt();
        out.push(BoundAudit::new(
            "max_density.lower",
            1.0 / (12.0 * s),
            *mk,
            0.0,
            &[("n", g.n as f64), ("sigma", s)],
        ));
    }
    Ok(out)
}

/// `(1/2π) ∫ |f|^{2m} <= M / √m`.
pub fn audit_cf_norms(d: &DistributionSpec, m: u32) -> Result<BoundAudit, BoundsError> {
    if m == 0 {
        return Err(BoundsError::BadParam("m must be at least 1".into()));
    }
    let lhs = abs_cf_power_integral(d, 2 * m, 0.0)? / PI;
    let rhs = d.density_bound() / (m as f64).sqrt();
    Ok(BoundAudit::new(
        "cf_norm",
        lhs,
        rhs,
        EQUALITY_TOL * rhs,
        &[("m", m as f64), ("M", d.density_bound())],
    ))
}

/// `δ_f(ε) = sup_{|t| >= ε} |f(t)|`: a scan refined by golden section
/// around its best point, combined with the envelope beyond the scan.
pub fn cf_sup_beyond(d: &DistributionSpec, eps: f64) -> f64 {
    let eps = eps.max(0.0);
    let end = DELTA_SCAN_END.max(eps + 1.0);
    let steps = ((end - eps) / DELTA_SCAN_STEP).ceil() as usize;
    let h = (end - eps) / steps as f64;
    let abs_f = |t: f64| d.cf(t).norm();
    let (best_i, best) = (0..=steps).map(|i| (i, abs_f(eps + i as f64 * h))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
    );
    let lo = eps + best_i.saturating_sub(1) as f64 * h;
    let hi = (eps + (best_i + 1) as f64 * h).min(end);
    let (_, refined) = golden_max(abs_f, lo, hi, 1e-12);
    best.max(refined).max(d.cf_envelope(end))
}

/// The pointwise decay bound for `δ(ε)` and the integral bound for
/// `∫_{|t| >= ε} |f|^n`, both applied to `S_{n₀}` whose characteristic
/// function is `f^{n₀}`, whose density is bounded by `M/√n₀` and whose
/// standard deviation is `√n₀`.
pub fn audit_cf_decay(
    d: &DistributionSpec,
    eps: f64,
    n: u32,
) -> Result<Vec<BoundAudit>, BoundsError> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(BoundsError::BadParam(format!(
            "eps = {eps} must lie in [0, 1]"
        )));
    }
    let n0 = d.n0();
    if n < 4 * n0 {
        return Err(BoundsError::BadParam(format!(
            "n = {n} must be at least 4·n0 = {}",
            4 * n0
        )));
    }
    let m = d.density_bound();
    let n0f = n0 as f64;
    let m_xi = m / n0f.sqrt();
    let sigma = n0f.sqrt();
    let delta = cf_sup_beyond(d, eps).powi(n0 as i32);
    let rhs1 = (-eps * eps / (96.0 * m_xi * m_xi * (2.0 * sigma * eps + PI).powi(2))).exp();
    let nf = n as f64;
    let lhs2 = 2.0 * abs_cf_power_integral(d, n, eps)?;
    let rhs2 = decay_integral_bound(m, nf, eps, n0f);
    let params = [("eps", eps), ("n", nf), ("M", m), ("n0", n0f)];
    Ok(vec![
        BoundAudit::new("cf_decay.sup", delta, rhs1, 1e-15, &params),
        BoundAudit::new("cf_decay.integral", lhs2, rhs2, 1e-15, &params),
    ])
}

/// `(4πM/√(2n)) exp{-nε²/(C n₀ M²)}`.
pub fn decay_integral_bound(m: f64, n: f64, eps: f64, n0: f64) -> f64 {
    4.0 * PI * m / (2.0 * n).sqrt() * (-n * eps * eps / (DECAY_C * n0 * m * m)).exp()
}

fn symmetric_grid(radius: f64) -> impl Iterator<Item = f64> {
    (0..=2 * REGION_POINTS).map(move |i| radius * (i as f64 / REGION_POINTS as f64 - 1.0))
}

fn max_over(radius: f64, f: impl Fn(f64) -> f64) -> f64 {
    symmetric_grid(radius).map(f).fold(0.0, f64::max)
}

/// Bounds on `K` and its derivatives near the origin, and the Gaussian
/// envelope of `|f|` on a short interval.
pub fn audit_cgf_region(d: &DistributionSpec) -> Result<Vec<BoundAudit>, BoundsError> {
    let a = d.alpha();
    let k = |z: f64| d.cgf_all(z).map_err(|e| BoundsError::Density(e.into()));
    let mut cache: Vec<(f64, [f64; 4])> = Vec::new();
    for r in [a / 2.0, a / 4.0, a / 16.0, a.powi(3) / 16.0] {
        for z in symmetric_grid(r) {
            cache.push((z, k(z)?));
        }
    }
    let over = |r: f64, f: &dyn Fn(&[f64; 4]) -> f64| {
        cache
            .iter()
            .filter(|(z, _)| z.abs() <= r * (1.0 + 1e-12))
            .map(|(_, k)| f(k))
            .fold(0.0, f64::max)
    };
    let pa = [("alpha", a)];
    let mut out = vec![
        BoundAudit::new(
            "cgf.first_derivative",
            over(a / 2.0, &|k| k[1].abs()),
            6.0 / a,
            0.0,
            &pa,
        ),
        BoundAudit::new("cgf.value", over(a / 2.0, &|k| k[0].abs()), 3.0, 0.0, &pa),
    ];
    for order in 0..=3usize {
        let rhs = 3.0 * factorial(order) * (4.0 / a).powi(order as i32);
        let lhs = over(a / 4.0, &|k| k[order].abs());
        out.push(BoundAudit::new(
            "cgf.derivative",
            lhs,
            rhs,
            0.0,
            &[("alpha", a), ("k", order as f64)],
        ));
    }
    out.push(BoundAudit::new(
        "cgf.third",
        over(a / 16.0, &|k| k[3].abs()),
        8.0 / a.powi(3),
        0.0,
        &pa,
    ));
    out.push(BoundAudit::new(
        "cgf.second",
        over(a.powi(3) / 16.0, &|k| (k[2] - 1.0).abs()),
        0.5,
        0.0,
        &pa,
    ));
    let lhs = max_over(a.powi(3) / 8.0, |t| d.cf(t).norm() * (t * t / 5.0).exp());
    out.push(BoundAudit::new(
        "cf.gaussian_envelope",
        lhs,
        1.0,
        1e-15,
        &pa,
    ));
    Ok(out)
}

/// `E e^{α|X|} <= 2`, `α < 1` and `M >= 1/(12σ)` for the distribution.
pub fn audit_distribution(d: &DistributionSpec) -> Vec<BoundAudit> {
    let a = d.alpha();
    vec![
        BoundAudit::new(
            "orlicz.moment",
            d.abs_exp_moment(a),
            2.0,
            EQUALITY_TOL,
            &[("alpha", a)],
        ),
        BoundAudit::new("orlicz.alpha_below_one", a, 1.0, 0.0, &[("alpha", a)]),
        BoundAudit::new(
            "max_density.lower",
            1.0 / 12.0,
            d.density_bound(),
            0.0,
            &[("n", 1.0), ("sigma", 1.0)],
        ),
    ]
}

/// `|z₀| <= 2|τ|` and `|K''(z₀) - 1| <= 1/2` on the analytic range, and
/// `|λ| <= 700 α⁻³` on the certified radius.
pub fn audit_saddle_region(d: &DistributionSpec) -> Result<Vec<BoundAudit>, BoundsError> {
    let s = Saddle::new(d)?;
    let a = d.alpha();
    let r = tau_range(d).analytic;
    let (mut ratio, mut rho_dev) = (0.0f64, 0.0f64);
    for tau in symmetric_grid(r) {
        let sol = s.solve(tau)?;
        if tau != 0.0 {
            ratio = ratio.max(sol.z0.abs() / tau.abs());
        }
        rho_dev = rho_dev.max((sol.rho2() - 1.0).abs());
    }
    let mut lam = 0.0f64;
    for tau in symmetric_grid(lambda_bound_radius(d)) {
        lam = lam.max(s.lambda_mu(tau)?.0.abs());
    }
    let pa = [("alpha", a)];
    Ok(vec![
        BoundAudit::new("saddle.bracket", ratio, 2.0, 0.0, &pa),
        BoundAudit::new("saddle.curvature", rho_dev, 0.5, 0.0, &pa),
        BoundAudit::new("cramer.sup", lam, 700.0 / a.powi(3), 0.0, &pa),
    ])
}

/// `1 <= M(T_m) <= √2` for normalized sums of uniforms on `[-1/2, 1/2]`.
pub fn audit_slice_maxima(ms: &[u32]) -> Result<Vec<BoundAudit>, BoundsError> {
    let mut out = Vec::with_capacity(2 * ms.len());
    for &m in ms {
        let v = irwin_hall_slice_max(m)?;
        let p = [("m", m as f64)];
        out.push(BoundAudit::new("slice_max.lower", 1.0, v, 1e-15, &p));
        out.push(BoundAudit::new(
            "slice_max.upper",
            v,
            2f64.sqrt(),
            1e-15,
            &p,
        ));
    }
    Ok(out)
}

/// The full audit list for one distribution.
pub fn audit_suite(d: &DistributionSpec) -> Result<Vec<BoundAudit>, BoundsError> {
    let mut out = audit_distribution(d);

    let one = grid_convolve_sum(d, 1, CONVOLUTION_STEP)?;
    for m in [2u32, 4] {
        let mut grids = vec![one.clone(); m as usize];
        grids.push(grid_convolve_sum(d, m, CONVOLUTION_STEP)?);
        out.extend(audit_density_bounds(
            &grids,
            &vec![d.density_bound(); m as usize],
        )?);
    }

    for m in SUITE_M {
        out.push(audit_cf_norms(d, m)?);
    }

    let ns: Vec<u32> = SUITE_N_FACTORS.iter().map(|k| k * d.n0()).collect();
    for eps in SUITE_EPS {
        for &n in &ns {
            out.extend(audit_cf_decay(d, eps, n)?);
        }
        for w in ns.windows(2) {
            let m = d.density_bound();
            let n0 = d.n0() as f64;
            let (a, b) = (
                decay_integral_bound(m, w[0] as f64, eps, n0),
                decay_integral_bound(m, w[1] as f64, eps, n0),
            );
            out.push(BoundAudit::new(
                "cf_decay.integral_monotone",
                b,
                a,
                0.0,
                &[("eps", eps), ("n", w[1] as f64), ("n_prev", w[0] as f64)],
            ));
        }
    }

    out.extend(audit_cgf_region(d)?);
    out.extend(audit_saddle_region(d)?);
    if d.tag() == FamilyTag::UniformSym {
        out.extend(audit_slice_maxima(&SLICE_M)?);
    }
    Ok(out)
}
