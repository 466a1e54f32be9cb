//! Special functions and distribution primitives.
//!
//! Incomplete gamma and beta functions use the classical power series /
//! continued fraction switchover (modified Lentz evaluation), all densities
//! and mass functions are assembled in log space and exponentiated once.
//! Quantiles are found by a safeguarded Newton/bisection hybrid on the CDF.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::domain(format!("probability {value} outside [0, 1]")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

// ---------------------------------------------------------------------------
// Gamma family
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Natural logarithm of the beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Returns `(P(a, x), Q(a, x))`, the regularized lower and upper incomplete
/// gamma functions, each computed directly on its accurate side.
fn gamma_inc_pair(a: f64, x: f64) -> (f64, f64) {
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut denom = a;
        for _ in 0..MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

fn check_shape(shape: f64) -> Result<()> {
    if shape > 0.0 && shape.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("shape must be positive, got {shape}")))
    }
}

/// Regularized lower incomplete gamma function `P(shape, x)`.
pub fn regularized_lower_gamma(shape: f64, x: f64) -> Result<f64> {
    check_shape(shape)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("x must be nonnegative, got {x}")));
    }
    Ok(gamma_inc_pair(shape, x).0)
}

/// CDF of the gamma distribution with the given shape and rate.
pub fn gamma_cdf(shape: f64, rate: f64, x: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::domain(format!("rate must be positive, got {rate}")));
    }
    regularized_lower_gamma(shape, rate * x)
}

// ---------------------------------------------------------------------------
// Beta family
// ---------------------------------------------------------------------------

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Returns `(I_x(a, b), 1 - I_x(a, b))` where `y = 1 - x` is supplied by the
/// caller so that neither argument loses precision near the endpoints.
pub(crate) fn beta_inc_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let log_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        let lo = (log_front + beta_cf(a, b, x).ln() - a.ln()).exp().min(1.0);
        (lo, 1.0 - lo)
    } else {
        let hi = (log_front + beta_cf(b, a, y).ln() - b.ln()).exp().min(1.0);
        (1.0 - hi, hi)
    }
}

fn check_ab(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "beta parameters must be positive, got ({a}, {b})"
        )))
    }
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_ab(a, b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("x must lie in [0, 1], got {x}")));
    }
    Ok(beta_inc_pair(a, b, x, 1.0 - x).0)
}

/// `(F, 1 - F)` of the beta prime distribution at `x >= 0`; no validation.
#[inline]
pub(crate) fn beta_prime_pair(a: f64, b: f64, x: f64) -> (f64, f64) {
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let denom = 1.0 + x;
    beta_inc_pair(a, b, x / denom, 1.0 / denom)
}

/// CDF of the beta prime distribution `β′(a, b)`.
pub fn beta_prime_cdf(a: f64, b: f64, x: f64) -> Result<f64> {
    check_ab(a, b)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("x must be nonnegative, got {x}")));
    }
    Ok(beta_prime_pair(a, b, x).0)
}

/// Survival function `1 - F` of `β′(a, b)`, accurate in the upper tail.
pub fn beta_prime_sf(a: f64, b: f64, x: f64) -> Result<f64> {
    check_ab(a, b)?;
    if !(x >= 0.0) {
        return Err(Error::domain(format!("x must be nonnegative, got {x}")));
    }
    Ok(beta_prime_pair(a, b, x).1)
}

/// Quantile of `β′(a, b)`.
///
/// Works on `t = ln x`, where the CDF is smooth and strictly increasing on
/// the whole real line; Newton steps are accepted only while they stay inside
/// the current bracket, otherwise the bracket is bisected.
pub fn beta_prime_quantile(a: f64, b: f64, q: f64) -> Result<f64> {
    check_ab(a, b)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    let cdf = |t: f64| beta_prime_pair(a, b, t.exp()).0;
    let lnb = ln_beta(a, b);
    // dF/dt = y^a (1-y)^b / B(a, b) with y = x / (1 + x)
    let slope = |t: f64| {
        let ln_y = -(-t).exp().ln_1p();
        let ln_1my = -t.exp().ln_1p();
        (a * ln_y + b * ln_1my - lnb).exp()
    };

    let (mut lo, mut hi) = (-1.0, 1.0);
    while cdf(lo) > q {
        lo *= 2.0;
        if lo < -1e4 {
            return Err(Error::Convergence("beta prime quantile bracket".into()));
        }
    }
    while cdf(hi) < q {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Convergence("beta prime quantile bracket".into()));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..400 {
        let f = cdf(t) - q;
        if f.abs() <= 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let d = slope(t);
        let newton = t - f / d;
        t = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * (1.0 + t.abs()) {
            break;
        }
    }
    Ok(t.exp())
}

// ---------------------------------------------------------------------------
// Normal distribution
// ---------------------------------------------------------------------------

/// Complementary error function via `erfc(y) = Q(1/2, y²)` for `y ≥ 0`.
pub fn erfc(y: f64) -> f64 {
    if y.is_nan() {
        return f64::NAN;
    }
    let (p, q) = gamma_inc_pair(0.5, y * y);
    if y >= 0.0 {
        q
    } else {
        1.0 + p
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of the standard normal CDF.
///
/// Rational initial approximation (Acklam) followed by Halley refinement on
/// whichever tail keeps the residual well conditioned.
pub fn normal_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("normal quantile level must lie in (0, 1), got {q}")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let p_low = 0.02425;
    let mut x = if q < p_low {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    } else if q <= 1.0 - p_low {
        let s = q - 0.5;
        let r = s * s;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * s
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let r = (-2.0 * (1.0 - q).ln()).sqrt();
        -(((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    for _ in 0..3 {
        let e = if q < 0.5 {
            normal_cdf(x) - q
        } else {
            (1.0 - q) - normal_sf(x)
        };
        let u = e / normal_pdf(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Binomial
// ---------------------------------------------------------------------------

/// `ln m!`, exact up to rounding of the final logarithm for `m <= 18`.
fn ln_factorial(m: u64) -> f64 {
    if m <= 18 {
        ((1..=m).product::<u64>() as f64).ln()
    } else {
        ln_gamma(m as f64 + 1.0)
    }
}

/// Log of the binomial coefficient `C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_pmf_unchecked(ln_c: f64, n: u64, p: f64, k: u64) -> f64 {
    let nk = n - k;
    let a = if k == 0 { 0.0 } else { k as f64 * p.ln() };
    let b = if nk == 0 { 0.0 } else { nk as f64 * (-p).ln_1p() };
    ln_c + a + b
}

/// Binomial probability mass `C(n,k) p^k (1-p)^(n-k)`.
pub fn binomial_pmf(n: u64, p: f64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p = {p} outside [0, 1]")));
    }
    Ok(ln_pmf_unchecked(ln_choose(n, k), n, p, k).exp())
}

/// Log binomial coefficients `ln C(n, k)` for `k = 0..=n`.
pub fn ln_choose_row(n: u64) -> Vec<f64> {
    let lf: Vec<f64> = (0..=n).map(ln_factorial).collect();
    let n = n as usize;
    (0..=n)
        .map(|k| if k == 0 || k == n { 0.0 } else { lf[n] - lf[k] - lf[n - k] })
        .collect()
}

/// Full binomial pmf vector for `k = 0..=n` given precomputed `ln C(n, ·)`.
pub fn binomial_pmf_row(ln_c: &[f64], p: f64) -> Vec<f64> {
    let n = (ln_c.len() - 1) as u64;
    (0..=n)
        .map(|k| ln_pmf_unchecked(ln_c[k as usize], n, p, k).exp())
        .collect()
}

// ---------------------------------------------------------------------------
// Summation and root finding
// ---------------------------------------------------------------------------

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Bisection for a root of a decreasing function `f` on `[lo, hi]` with
/// `f(lo) >= 0 >= f(hi)`. Returns the final bracket `(lo, hi)`.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    width: f64,
) -> (f64, f64) {
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}
