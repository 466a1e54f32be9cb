//! Approximate and exact sample-size calculation.
//!
//! The approximate design treats the three local statistics as independent
//! normals, so the probability of accepting the global null is the product of
//! the three local acceptance probabilities. The exact design walks `n_C`
//! from the approximate solution using exact power from [`crate::oc`].

use crate::error::{Error, Result};
use crate::inference::{LocalLevels, Method};
use crate::model::TwoGroupModel;
use crate::numerics::normal_cdf;
use crate::oc::{rejection_probability, OcRequest};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    /// Alternative under which power is computed.
    pub model: TwoGroupModel,
    /// Allocation ratio `n_E / n_C`.
    pub ratio: f64,
    pub levels: LocalLevels,
    /// Target Type II error.
    pub beta: f64,
}

impl DesignSpec {
    pub fn new(model: TwoGroupModel, ratio: f64, alpha: f64, beta: f64) -> Result<Self> {
        Self::with_levels(model, ratio, LocalLevels::equal(alpha)?, beta)
    }

    pub fn with_levels(model: TwoGroupModel, ratio: f64, levels: LocalLevels, beta: f64) -> Result<Self> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(Error::domain(format!("allocation ratio must be positive, got {ratio}")));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::domain(format!("beta must lie in (0, 1), got {beta}")));
        }
        Ok(Self {
            model,
            ratio,
            levels,
            beta,
        })
    }

    pub fn target_power(&self) -> f64 {
        1.0 - self.beta
    }

    /// Experimental group size paired with control size `n_c`.
    pub fn n_e_for(&self, n_c: u64) -> u64 {
        // the small offset keeps exact products such as 3 * (1/3) from rounding up
        ((self.ratio * n_c as f64) - 1e-9).ceil().max(1.0) as u64
    }

    /// Same design with the group labels exchanged and `r → 1/r`.
    pub fn swapped(&self) -> Self {
        Self {
            model: self.model.swapped(),
            ratio: 1.0 / self.ratio,
            ..*self
        }
    }

    fn has_effect(&self) -> bool {
        let e = &self.model.experimental;
        let c = &self.model.control;
        let differs = |a: f64, b: f64| (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0);
        differs(e.p(), c.p()) || differs(e.theta1(), c.theta1()) || differs(e.theta0(), c.theta0())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMethod {
    Approximate,
    ExactIterative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub n_c: u64,
    pub n_e: u64,
    /// Exact power of the exact test at `(n_E, n_C)`.
    pub achieved_power: f64,
    /// Exact power of the approximate test at `(n_E, n_C)`.
    pub approx_test_power: f64,
    /// Approximate acceptance probability `β_p β_θ₁ β_θ₀` at `n_C`.
    pub approx_acceptance: f64,
    pub method: DesignMethod,
    /// Exact power evaluations performed by the iterative search.
    pub iterations: u64,
}

// ---------------------------------------------------------------------------
// Approximate acceptance probabilities
// ---------------------------------------------------------------------------

struct Sizes {
    n_e: f64,
    n_c: f64,
}

impl Sizes {
    fn new(spec: &DesignSpec, n_c: f64) -> Result<Self> {
        if !(n_c > 0.0) {
            return Err(Error::domain(format!("n_C must be positive, got {n_c}")));
        }
        Ok(Self {
            n_e: spec.ratio * n_c,
            n_c,
        })
    }

    fn inv(&self) -> f64 {
        1.0 / self.n_e + 1.0 / self.n_c
    }
}

fn pooled_alternative(spec: &DesignSpec, s: &Sizes) -> Result<f64> {
    let pe = spec.model.experimental.p();
    let pc = spec.model.control.p();
    let pooled = (s.n_e * pe + s.n_c * pc) / (s.n_e + s.n_c);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(Error::domain(
            "pooled response probability is 0 or 1; the strata are degenerate",
        ));
    }
    Ok(pooled)
}

/// `Φ((null_sd · z − |effect|) / alt_sd)`, taking the limit when the
/// alternative variance vanishes.
fn acceptance(z: f64, null_sd: f64, effect: f64, alt_sd: f64) -> f64 {
    let num = z * null_sd - effect.abs();
    if alt_sd > 0.0 {
        normal_cdf(num / alt_sd)
    } else if num > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Approximate probability of accepting the response null.
pub fn accept_prob_p(spec: &DesignSpec, n_c: f64) -> Result<f64> {
    let s = Sizes::new(spec, n_c)?;
    let pooled = pooled_alternative(spec, &s)?;
    let pe = spec.model.experimental.p();
    let pc = spec.model.control.p();
    let z = spec.levels.z()?[0];
    let alt_sd = (pe * (1.0 - pe) / s.n_e + pc * (1.0 - pc) / s.n_c).sqrt();
    Ok(acceptance(z, (pooled * (1.0 - pooled) * s.inv()).sqrt(), pe - pc, alt_sd))
}

/// Approximate probability of accepting the responder-hazard null.
pub fn accept_prob_theta1(spec: &DesignSpec, n_c: f64) -> Result<f64> {
    let s = Sizes::new(spec, n_c)?;
    let pooled = pooled_alternative(spec, &s)?;
    let e = &spec.model.experimental;
    let c = &spec.model.control;
    if e.p() == 0.0 || c.p() == 0.0 {
        // the stratum is empty in one group and the statistic is forced to 0
        return Ok(1.0);
    }
    let z = spec.levels.z()?[1];
    let alt_sd = (1.0 / (s.n_e * e.p()) + 1.0 / (s.n_c * c.p())).sqrt();
    Ok(acceptance(z, (s.inv() / pooled).sqrt(), c.theta1() - e.theta1(), alt_sd))
}

/// Approximate probability of accepting the non-responder-hazard null.
pub fn accept_prob_theta0(spec: &DesignSpec, n_c: f64) -> Result<f64> {
    let s = Sizes::new(spec, n_c)?;
    let pooled = pooled_alternative(spec, &s)?;
    let e = &spec.model.experimental;
    let c = &spec.model.control;
    if e.p() == 1.0 || c.p() == 1.0 {
        return Ok(1.0);
    }
    let z = spec.levels.z()?[2];
    let alt_sd = (1.0 / (s.n_e * (1.0 - e.p())) + 1.0 / (s.n_c * (1.0 - c.p()))).sqrt();
    Ok(acceptance(z, (s.inv() / (1.0 - pooled)).sqrt(), c.theta0() - e.theta0(), alt_sd))
}

/// Product `β_p β_θ₁ β_θ₀`: approximate probability of accepting the global null.
pub fn accept_prob(spec: &DesignSpec, n_c: f64) -> Result<f64> {
    Ok(accept_prob_p(spec, n_c)? * accept_prob_theta1(spec, n_c)? * accept_prob_theta0(spec, n_c)?)
}

// ---------------------------------------------------------------------------
// Sample sizes
// ---------------------------------------------------------------------------

const MAX_DOUBLINGS: u32 = 40;

fn finish(spec: &DesignSpec, n_c: u64, method: DesignMethod, iterations: u64, exact_power: Option<f64>) -> Result<DesignResult> {
    let n_e = spec.n_e_for(n_c);
    let power = |test| -> Result<f64> {
        let req = OcRequest::from_levels(spec.model, n_e, n_c, spec.levels, test)?;
        Ok(rejection_probability(&req)?.rejection_probability)
    };
    let achieved_power = match exact_power {
        Some(p) => p,
        None => power(Method::Exact)?,
    };
    Ok(DesignResult {
        n_c,
        n_e,
        achieved_power,
        approx_test_power: power(Method::Approximate)?,
        approx_acceptance: accept_prob(spec, n_c as f64)?,
        method,
        iterations,
    })
}

/// Smallest integer `n_C` whose approximate acceptance probability is at
/// most `beta`.
pub fn approx_control_size(spec: &DesignSpec) -> Result<u64> {
    if !spec.has_effect() {
        return Err(Error::UndefinedDesign(
            "the alternative equals the null in every parameter".into(),
        ));
    }
    let f = |n: f64| accept_prob(spec, n);
    let beta = spec.beta;
    let mut hi = 2.0;
    if f(hi)? <= beta {
        return Ok(if f(1.0)? <= beta { 1 } else { 2 });
    }
    let mut lo = hi;
    let mut doublings = 0;
    while f(hi)? > beta {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::UndefinedDesign(
                "acceptance probability never reaches the target; the effect lies only in an empty stratum".into(),
            ));
        }
    }
    while hi - lo >= 0.25 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut n = hi.ceil() as u64;
    while n > 1 && f((n - 1) as f64)? <= beta {
        n -= 1;
    }
    Ok(n)
}

/// Approximate sample size with exact power of both tests at the result.
pub fn approx_sample_size(spec: &DesignSpec) -> Result<DesignResult> {
    let n_c = approx_control_size(spec)?;
    finish(spec, n_c, DesignMethod::Approximate, 0, None)
}

/// Exact power of the exact test at control size `n_c`.
pub fn exact_power_at(spec: &DesignSpec, n_c: u64) -> Result<f64> {
    let req = OcRequest::from_levels(spec.model, spec.n_e_for(n_c), n_c, spec.levels, Method::Exact)?;
    Ok(rejection_probability(&req)?.rejection_probability)
}

/// Iterative exact sample size for the exact test, starting from the
/// approximate solution. `cap` bounds `n_C` (default ten times the
/// approximate size).
pub fn exact_sample_size(spec: &DesignSpec, cap: Option<u64>) -> Result<DesignResult> {
    let start = approx_control_size(spec)?;
    let cap = cap.unwrap_or(10 * start.max(2));
    let target = spec.target_power();
    let mut iterations = 0u64;
    let mut power = |n: u64| {
        iterations += 1;
        exact_power_at(spec, n)
    };
    let mut n = start;
    let mut current = power(n)?;
    if current < target {
        while current < target {
            n += 1;
            if n > cap {
                return Err(Error::Convergence(format!(
                    "exact power stayed below {target} up to n_C = {cap}"
                )));
            }
            current = power(n)?;
        }
    } else {
        while n > 1 {
            let below = power(n - 1)?;
            if below < target {
                break;
            }
            n -= 1;
            current = below;
        }
    }
    finish(spec, n, DesignMethod::ExactIterative, iterations, Some(current))
}
