//! Special functions shared by the distribution, density and audit modules.
//!
//! Everything here is evaluated so that the quantities the rest of the crate
//! subtracts from each other (log-Laplace transforms near zero, Stirling
//! remainders, Langevin-type ratios) keep full relative precision.

use num_complex::Complex64;
use statrs::function::erf::erfc;

pub const SQRT_2PI: f64 = 2.506_628_274_631_000_7;
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `log(1 + x) - x` without cancellation for small `x`.
pub fn log1pmx(x: f64) -> f64 {
    if x.abs() < 0.5 {
        // log(1+x) = 2 atanh(r), r = x / (2 + x); 2r - x = -x^2 / (2 + x)
        let r = x / (2.0 + x);
        let r2 = r * r;
        let mut term = r * r2;
        let mut acc = 0.0;
        let mut k = 3.0;
        while term.abs() > 1e-18 * r2.max(1e-300) {
            acc += term / k;
            term *= r2;
            k += 2.0;
            if k > 200.0 {
                break;
            }
        }
        -x * x / (2.0 + x) + 2.0 * acc
    } else {
        x.ln_1p() - x
    }
}

/// Even Bernoulli numbers `B_2, B_4, ..., B_30` as exact ratios.
const BERNOULLI_EVEN: [(f64, f64); 15] = [
    (1.0, 6.0),
    (-1.0, 30.0),
    (1.0, 42.0),
    (-1.0, 30.0),
    (5.0, 66.0),
    (-691.0, 2730.0),
    (7.0, 6.0),
    (-3617.0, 510.0),
    (43867.0, 798.0),
    (-174611.0, 330.0),
    (854513.0, 138.0),
    (-236364091.0, 2730.0),
    (8553103.0, 6.0),
    (-23749461029.0, 870.0),
    (8615841276005.0, 14322.0),
];

/// Largest even index with a tabulated Bernoulli number.
pub const MAX_BERNOULLI_INDEX: usize = 30;

/// Bernoulli number `B_k` (convention `B_1 = -1/2`) for `k <= 30`.
pub fn bernoulli(k: usize) -> Option<f64> {
    match k {
        0 => Some(1.0),
        1 => Some(-0.5),
        k if k % 2 == 1 => Some(0.0),
        k if k <= MAX_BERNOULLI_INDEX => {
            let (num, den) = BERNOULLI_EVEN[k / 2 - 1];
            Some(num / den)
        }
        _ => None,
    }
}

/// `ln k!` by direct summation (exact to rounding for the small `k` used here).
pub fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}

pub fn factorial(k: usize) -> f64 {
    (2..=k).fold(1.0, |acc, j| acc * j as f64)
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Stirling remainder `r(n) = ln Γ(n) - (n - 1/2) ln n + n - ln √(2π)` for
/// integer `n >= 1`.
pub fn stirling_remainder(n: u64) -> f64 {
    assert!(n >= 1);
    if n < 20 {
        let x = n as f64;
        ln_factorial(n - 1) - (x - 0.5) * x.ln() + x - LN_SQRT_2PI
    } else {
        let x = n as f64;
        let x2 = x * x;
        // 1/(12x) - 1/(360x^3) + 1/(1260x^5) - 1/(1680x^7) + 1/(1188x^9)
        let inv = 1.0 / x;
        let inv2 = 1.0 / x2;
        inv * (1.0 / 12.0
            - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))))
    }
}

/// Probabilists' Hermite polynomial `He_k(x)`.
pub fn hermite_he(k: usize, x: f64) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        _ => {
            let (mut prev, mut cur) = (1.0, x);
            for j in 1..k {
                let next = x * cur - j as f64 * prev;
                prev = cur;
                cur = next;
            }
            cur
        }
    }
}

/// Coefficients `c_k` of `coth u - 1/u = Σ c_k u^{2k-1}`.
fn langevin_coeffs() -> [f64; 15] {
    let mut c = [0.0; 15];
    for (i, slot) in c.iter_mut().enumerate() {
        let k = i + 1;
        let b = bernoulli(2 * k).unwrap();
        *slot = 4f64.powi(k as i32) * b / factorial(2 * k);
    }
    c
}

/// Langevin function `L(u) = coth u - 1/u` and its first two derivatives.
pub fn langevin(u: f64) -> [f64; 3] {
    if u.abs() < 1.0 {
        let c = langevin_coeffs();
        let u2 = u * u;
        let (mut l0, mut l1, mut l2) = (0.0, 0.0, 0.0);
        let mut p = 1.0; // u^{2k-2}
        let mut p_prev = 0.0; // u^{2k-4}
        for (i, ck) in c.iter().enumerate() {
            let k = (i + 1) as f64;
            l0 += ck * p * u;
            l1 += ck * (2.0 * k - 1.0) * p;
            l2 += ck * (2.0 * k - 1.0) * (2.0 * k - 2.0) * p_prev * u;
            p_prev = p;
            p *= u2;
        }
        [l0, l1, l2]
    } else {
        let s = u.signum();
        let a = u.abs();
        let q = (-2.0 * a).exp();
        let coth = (1.0 + q) / (1.0 - q);
        let inv_sinh2 = 4.0 * q / ((1.0 - q) * (1.0 - q));
        let cosh_over_sinh3 = 4.0 * q * (1.0 + q) / ((1.0 - q) * (1.0 - q) * (1.0 - q));
        [
            s * (coth - 1.0 / a),
            1.0 / (a * a) - inv_sinh2,
            s * (2.0 * cosh_over_sinh3 - 2.0 / (a * a * a)),
        ]
    }
}

/// `ln(sinh(u) / u)`, accurate near the origin.
pub fn ln_sinhc(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        // sinh(u)/u - 1 = Σ_{k>=1} u^{2k} / (2k+1)!
        let u2 = a * a;
        let mut term = 1.0;
        let mut acc = 0.0;
        let mut k = 1.0;
        loop {
            term *= u2 / ((2.0 * k) * (2.0 * k + 1.0));
            acc += term;
            if term <= 1e-18 * acc {
                break;
            }
            k += 1.0;
        }
        acc.ln_1p()
    } else {
        a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
    }
}

/// Complex `sinh(s)/s`, with the removable singularity handled.
pub fn sinhc(s: Complex64) -> Complex64 {
    if s.norm() < 1e-4 {
        let s2 = s * s;
        Complex64::new(1.0, 0.0) + s2 / 6.0 + s2 * s2 / 120.0
    } else {
        s.sinh() / s
    }
}

/// `e^z E_n(z)` for integer `n >= 1` and complex `z` off the negative real
/// axis, where `E_n(z) = ∫_1^∞ e^{-zs} s^{-n} ds`.
pub fn expint_scaled(n: u32, z: Complex64) -> Complex64 {
    assert!(n >= 1);
    let one = Complex64::new(1.0, 0.0);
    if z.norm() == 0.0 {
        assert!(n >= 2, "E_1 is singular at the origin");
        return one / (n as f64 - 1.0);
    }
    if z.norm() > 1.0 {
        // modified Lentz on the continued fraction
        let nf = n as f64;
        let tiny = 1e-300;
        let mut b = z + nf;
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = one / b;
        let mut h = d;
        for i in 1..20_000 {
            let a = -(i as f64) * (nf - 1.0 + i as f64);
            b += 2.0;
            d = one / (d * a + b);
            c = b + Complex64::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del - one).norm() < 1e-16 {
                break;
            }
        }
        h
    } else {
        let nm1 = (n - 1) as usize;
        let mut psi = -EULER_GAMMA;
        for k in 1..=nm1 {
            psi += 1.0 / k as f64;
        }
        let mut sum = Complex64::new(0.0, 0.0);
        let mut fact_pow = one; // (-z)^k / k!
        let mut log_term = Complex64::new(0.0, 0.0);
        for k in 0..200usize {
            if k > 0 {
                fact_pow *= -z / k as f64;
            }
            if k == nm1 {
                log_term = fact_pow * (-z.ln() + psi);
            } else {
                let t = fact_pow / (k as f64 - nm1 as f64);
                sum -= t;
                if k > nm1 && t.norm() < 1e-18 * sum.norm().max(1e-300) {
                    break;
                }
            }
        }
        (log_term + sum) * z.exp()
    }
}
