//! Truncated formal power series and the cumulant algebra built on them:
//! reversion of `K'`, the Cramér series `λ` and the correction `μ`.

use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

use crate::special::factorial;

/// Default truncation order for series built from cumulants.
pub const DEFAULT_ORDER: usize = 12;

/// A cumulant is declared non-zero above this magnitude.
pub const CUMULANT_ZERO_TOL: f64 = 1e-9;

/// Orders 0..2 of the Cramér numerator must cancel to within this bound.
const CANCELLATION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeriesError {
    #[error("composition needs a zero constant term in the inner series (found {0})")]
    NonZeroInnerConstant(f64),
    #[error("log needs constant term 1 (found {0})")]
    LogConstant(f64),
    #[error("exp needs constant term 0 (found {0})")]
    ExpConstant(f64),
    #[error("reversion needs a zero constant term (found {0})")]
    RevertConstant(f64),
    #[error("reversion needs a non-zero linear term")]
    ZeroLinearTerm,
    #[error("division needs a non-zero constant term in the divisor")]
    ZeroDivisorConstant,
    #[error("need cumulants through order {needed}, have {have}")]
    InsufficientCumulants { needed: usize, have: usize },
    #[error("coefficient of order {order} should cancel but is {value:e}")]
    NoCancellation { order: usize, value: f64 },
    #[error("series of order {order} cannot be shifted down by {by}")]
    ShiftTooFar { order: usize, by: usize },
}

/// A power series `Σ_{k=0}^{order} c_k τ^k + O(τ^{order+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
}

impl PowerSeries {
    /// Builds a series whose truncation order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<f64>) -> Self {
        assert!(
            !coeffs.is_empty(),
            "a power series needs at least one coefficient"
        );
        Self { coeffs }
    }

    pub fn zero(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn constant(c: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = c;
        s
    }

    /// The series `τ`.
    pub fn identity(order: usize) -> Self {
        Self::monomial(1.0, 1, order)
    }

    pub fn monomial(c: f64, power: usize, order: usize) -> Self {
        let mut s = Self::zero(order);
        if power <= order {
            s.coeffs[power] = c;
        }
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `τ^k`; zero above the truncation order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(order + 1, 0.0);
        Self { coeffs }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|a| a * c).collect(),
        }
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn derivative(&self) -> Self {
        if self.order() == 0 {
            return Self::zero(0);
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        Self { coeffs }
    }

    /// Divides by `τ^by`, requiring the dropped coefficients to vanish.
    pub fn shift_down(&self, by: usize, tol: f64) -> Result<Self, SeriesError> {
        if by > self.order() {
            return Err(SeriesError::ShiftTooFar {
                order: self.order(),
                by,
            });
        }
        for (k, c) in self.coeffs.iter().take(by).enumerate() {
            if c.abs() > tol {
                return Err(SeriesError::NoCancellation {
                    order: k,
                    value: *c,
                });
            }
        }
        Ok(Self {
            coeffs: self.coeffs[by..].to_vec(),
        })
    }

    pub fn mul_series(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let mut coeffs = vec![0.0; order + 1];
        for (i, a) in self.coeffs.iter().take(order + 1).enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (j, b) in other.coeffs.iter().take(order + 1 - i).enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Self { coeffs }
    }

    pub fn recip(&self) -> Result<Self, SeriesError> {
        let c0 = self.coeffs[0];
        if c0 == 0.0 {
            return Err(SeriesError::ZeroDivisorConstant);
        }
        let n = self.order();
        let mut r = vec![0.0; n + 1];
        r[0] = 1.0 / c0;
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| self.coeffs[j] * r[k - j]).sum();
            r[k] = -s / c0;
        }
        Ok(Self { coeffs: r })
    }

    pub fn div_series(&self, other: &Self) -> Result<Self, SeriesError> {
        Ok(self.mul_series(&other.recip()?))
    }

    /// `self(inner(τ))`, truncated at the smaller of the two orders.
    pub fn compose(&self, inner: &Self) -> Result<Self, SeriesError> {
        if inner.coeffs[0] != 0.0 {
            return Err(SeriesError::NonZeroInnerConstant(inner.coeffs[0]));
        }
        let order = self.order().min(inner.order());
        let inner = inner.truncate(order);
        let mut acc = Self::constant(self.coeff(order), order);
        for k in (0..order).rev() {
            acc = acc.mul_series(&inner);
            acc.coeffs[0] += self.coeffs[k];
        }
        Ok(acc)
    }

    pub fn exp(&self) -> Result<Self, SeriesError> {
        if self.coeffs[0] != 0.0 {
            return Err(SeriesError::ExpConstant(self.coeffs[0]));
        }
        let n = self.order();
        let mut e = vec![0.0; n + 1];
        e[0] = 1.0;
        for k in 1..=n {
            let s: f64 = (1..=k).map(|j| j as f64 * self.coeffs[j] * e[k - j]).sum();
            e[k] = s / k as f64;
        }
        Ok(Self { coeffs: e })
    }

    pub fn ln(&self) -> Result<Self, SeriesError> {
        if (self.coeffs[0] - 1.0).abs() > 1e-12 {
            return Err(SeriesError::LogConstant(self.coeffs[0]));
        }
        let n = self.order();
        let mut l = vec![0.0; n + 1];
        for k in 1..=n {
            let s: f64 = (1..k).map(|j| j as f64 * l[j] * self.coeffs[k - j]).sum();
            l[k] = self.coeffs[k] - s / k as f64;
        }
        Ok(Self { coeffs: l })
    }

    /// Compositional inverse: `self(revert(τ)) = τ` through the truncation
    /// order, by Newton iteration on series.
    pub fn revert(&self) -> Result<Self, SeriesError> {
        if self.coeffs[0] != 0.0 {
            return Err(SeriesError::RevertConstant(self.coeffs[0]));
        }
        let a1 = self.coeff(1);
        if a1 == 0.0 {
            return Err(SeriesError::ZeroLinearTerm);
        }
        let n = self.order();
        let id = Self::identity(n);
        let deriv = self.derivative();
        let mut b = id.scale(1.0 / a1);
        // each step doubles the number of correct coefficients; two extra
        // passes polish rounding
        let steps = usize::BITS - n.leading_zeros() + 2;
        for _ in 0..steps {
            let residual = &self.compose(&b)? - &id;
            // derivative has order n - 1; pad so the update keeps order n
            let slope = deriv.truncate(n).compose(&b)?;
            b = &b - &residual.div_series(&slope)?;
            b.coeffs[0] = 0.0;
        }
        Ok(b)
    }
}

impl Add for &PowerSeries {
    type Output = PowerSeries;
    fn add(self, rhs: Self) -> PowerSeries {
        let order = self.order().min(rhs.order());
        PowerSeries {
            coeffs: (0..=order)
                .map(|k| self.coeffs[k] + rhs.coeffs[k])
                .collect(),
        }
    }
}

impl Sub for &PowerSeries {
    type Output = PowerSeries;
    fn sub(self, rhs: Self) -> PowerSeries {
        let order = self.order().min(rhs.order());
        PowerSeries {
            coeffs: (0..=order)
                .map(|k| self.coeffs[k] - rhs.coeffs[k])
                .collect(),
        }
    }
}

impl Mul for &PowerSeries {
    type Output = PowerSeries;
    fn mul(self, rhs: Self) -> PowerSeries {
        self.mul_series(rhs)
    }
}

impl Neg for &PowerSeries {
    type Output = PowerSeries;
    fn neg(self) -> PowerSeries {
        self.scale(-1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesOp {
    Add,
    Mul,
    Compose,
}

pub fn ps_arith(
    a: &PowerSeries,
    b: &PowerSeries,
    op: SeriesOp,
) -> Result<PowerSeries, SeriesError> {
    match op {
        SeriesOp::Add => Ok(a + b),
        SeriesOp::Mul => Ok(a * b),
        SeriesOp::Compose => a.compose(b),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementaryFn {
    Log,
    Exp,
}

pub fn ps_funcs(a: &PowerSeries, f: ElementaryFn) -> Result<PowerSeries, SeriesError> {
    match f {
        ElementaryFn::Log => a.ln(),
        ElementaryFn::Exp => a.exp(),
    }
}

pub fn revert(a: &PowerSeries) -> Result<PowerSeries, SeriesError> {
    a.revert()
}

/// Cumulants `γ_k` indexed by `k`, with `γ_0 = γ_1 = 0` and `γ_2 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulantVector {
    gammas: Vec<f64>,
    m: Option<usize>,
    gamma_m: Option<f64>,
}

impl CumulantVector {
    /// `gammas[k] = γ_k`; entries 0..2 are overwritten with `0, 0, 1`.
    pub fn new(mut gammas: Vec<f64>) -> Self {
        assert!(gammas.len() >= 3, "cumulants must include γ_2");
        gammas[0] = 0.0;
        gammas[1] = 0.0;
        gammas[2] = 1.0;
        let m = (3..gammas.len()).find(|&k| gammas[k].abs() > CUMULANT_ZERO_TOL);
        // below the threshold the entries are quadrature noise
        if let Some(m) = m {
            for g in gammas.iter_mut().take(m).skip(3) {
                *g = 0.0;
            }
        } else {
            for g in gammas.iter_mut().skip(3) {
                *g = 0.0;
            }
        }
        let gamma_m = m.map(|k| gammas[k]);
        Self { gammas, m, gamma_m }
    }

    pub fn gamma(&self, k: usize) -> f64 {
        self.gammas.get(k).copied().unwrap_or(0.0)
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Highest cumulant order available.
    pub fn max_order(&self) -> usize {
        self.gammas.len() - 1
    }

    /// Index of the first non-zero cumulant beyond the variance.
    pub fn m(&self) -> Option<usize> {
        self.m
    }

    pub fn gamma_m(&self) -> Option<f64> {
        self.gamma_m
    }

    fn require(&self, needed: usize) -> Result<(), SeriesError> {
        if self.max_order() < needed {
            Err(SeriesError::InsufficientCumulants {
                needed,
                have: self.max_order(),
            })
        } else {
            Ok(())
        }
    }
}

/// `K(z) = z²/2 + Σ γ_k z^k / k!` through `order`.
pub fn cgf_series(c: &CumulantVector, order: usize) -> Result<PowerSeries, SeriesError> {
    c.require(order)?;
    let coeffs = (0..=order).map(|k| c.gamma(k) / factorial(k)).collect();
    Ok(PowerSeries::new(coeffs))
}

/// The saddle point `z₀(τ)` solving `K'(z₀) = τ`, through `order`.
pub fn saddle_series(c: &CumulantVector, order: usize) -> Result<PowerSeries, SeriesError> {
    let k1 = cgf_series(c, order + 1)?.derivative();
    k1.revert()
}

/// Cramér series `λ(τ) = (K(z₀) - τ z₀ + τ²/2) / τ³` through `order`.
pub fn cramer_series(c: &CumulantVector, order: usize) -> Result<PowerSeries, SeriesError> {
    let top = order + 3;
    c.require(top)?;
    let k = cgf_series(c, top)?;
    // z₀ through τ^{top-1}; its τ^{top} coefficient never reaches the
    // numerator at order `top`, so a zero there is exact
    let z0 = k.derivative().revert()?.truncate(top);
    let tau = PowerSeries::identity(top);
    let half_tau2 = PowerSeries::monomial(0.5, 2, top);
    let numerator = &(&k.compose(&z0)? - &(&tau * &z0)) + &half_tau2;
    numerator.shift_down(3, CANCELLATION_TOL)
}

/// `μ(τ) = ½ log K''(z₀(τ))` through `order`.
pub fn mu_series(c: &CumulantVector, order: usize) -> Result<PowerSeries, SeriesError> {
    c.require(order + 2)?;
    let k = cgf_series(c, order + 2)?;
    let k2 = k.derivative().derivative();
    let z0 = saddle_series(c, order)?;
    Ok(k2.compose(&z0)?.ln()?.scale(0.5))
}
