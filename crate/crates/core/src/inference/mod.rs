//! Tests of the global null hypothesis of equal parameter triples.
//!
//! The global null is the intersection of three local nulls (equal response
//! probabilities, equal responder log-hazards, equal non-responder
//! log-hazards). Each local test runs at its own local level and the global
//! null is rejected as soon as one local test rejects.

mod critical;
mod zpooled;

pub use critical::{
    conditional_acceptance, conditional_critical_value, conditional_p_value, conditional_tail,
    critical_table, CriticalTable,
};
pub use zpooled::{
    clear_region_cache, pooled_z, response_region, zpooled_exact_response_test, ResponseRegion,
    ResponseTable, ZPooledOrdering, NUISANCE_GRID, REFINE_WIDTH, TIE_TOLERANCE,
};

use crate::error::{Error, Result};
use crate::estimation::GroupSummary;
use crate::model::Dataset;
use crate::numerics::{normal_quantile, normal_sf};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Equal split `1 - (1 - alpha)^(1/3)` of a global level over three tests.
pub fn local_level(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(-((-alpha).ln_1p() / 3.0).exp_m1())
}

/// Local levels of the response, responder-hazard and non-responder-hazard
/// tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalLevels {
    pub response: f64,
    pub theta1: f64,
    pub theta0: f64,
}

impl LocalLevels {
    /// Equal split of `alpha`.
    pub fn equal(alpha: f64) -> Result<Self> {
        let a = local_level(alpha)?;
        Ok(Self {
            response: a,
            theta1: a,
            theta0: a,
        })
    }

    /// Arbitrary allocation; the implied global level is
    /// `1 - Π (1 - level)`.
    pub fn custom(response: f64, theta1: f64, theta0: f64) -> Result<Self> {
        for v in [response, theta1, theta0] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::domain(format!("local level must lie in (0, 1), got {v}")));
            }
        }
        Ok(Self {
            response,
            theta1,
            theta0,
        })
    }

    pub fn global(&self) -> f64 {
        1.0 - (1.0 - self.response) * (1.0 - self.theta1) * (1.0 - self.theta0)
    }

    /// Two-sided normal critical values `z_{1-α̃/2}` for the three tests.
    pub fn z(&self) -> Result<[f64; 3]> {
        Ok([
            normal_quantile(1.0 - 0.5 * self.response)?,
            normal_quantile(1.0 - 0.5 * self.theta1)?,
            normal_quantile(1.0 - 0.5 * self.theta0)?,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Approximate,
    Exact,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Approximate => "approximate",
            Method::Exact => "exact",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" | "approximate" => Ok(Method::Approximate),
            "exact" => Ok(Method::Exact),
            other => Err(Error::domain(format!("unknown method '{other}'"))),
        }
    }
}

/// One local test. For the approximate test `statistic` is the Wald
/// statistic; for the exact test it is `T_p` (response) or the log-hazard
/// difference `d` (strata).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalTest {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    /// The statistic was forced to zero by an empty or saturated stratum.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub levels: LocalLevels,
    pub response: LocalTest,
    pub theta1: LocalTest,
    pub theta0: LocalTest,
    pub reject_global: bool,
}

impl TestOutcome {
    fn assemble(method: Method, levels: LocalLevels, r: LocalTest, t1: LocalTest, t0: LocalTest) -> Self {
        Self {
            method,
            levels,
            response: r,
            theta1: t1,
            theta0: t0,
            reject_global: r.reject || t1.reject || t0.reject,
        }
    }
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

fn pooled_p(e: &GroupSummary, c: &GroupSummary) -> f64 {
    (e.k + c.k) as f64 / (e.n + c.n) as f64
}

fn inv_sizes(e: &GroupSummary, c: &GroupSummary) -> f64 {
    1.0 / e.n as f64 + 1.0 / c.n as f64
}

/// Log-hazard difference `θ̂_E − θ̂_C` of the responder stratum.
pub fn responder_difference(e: &GroupSummary, c: &GroupSummary) -> Option<f64> {
    let me = e.mle();
    let mc = c.mle();
    Some(me.theta1_hat? - mc.theta1_hat?)
}

/// Log-hazard difference `θ̂_E − θ̂_C` of the non-responder stratum.
pub fn nonresponder_difference(e: &GroupSummary, c: &GroupSummary) -> Option<f64> {
    let me = e.mle();
    let mc = c.mle();
    Some(me.theta0_hat? - mc.theta0_hat?)
}

/// Wald statistics `(T_p, T_θ₁, T_θ₀)` with the degenerate-case zeros.
pub fn wald_statistics(e: &GroupSummary, c: &GroupSummary) -> [(f64, bool); 3] {
    let tp = pooled_z(e.k, e.n, c.k, c.n);
    let p = pooled_p(e, c);
    let tp_deg = p <= 0.0 || p >= 1.0;
    let t1 = match responder_difference(e, c) {
        Some(d) => (d / (inv_sizes(e, c) / p).sqrt(), false),
        None => (0.0, true),
    };
    let t0 = match nonresponder_difference(e, c) {
        Some(d) => (d / (inv_sizes(e, c) / (1.0 - p)).sqrt(), false),
        None => (0.0, true),
    };
    [(tp, tp_deg), t1, t0]
}

/// Threshold on `|θ̂_E − θ̂_C|` equivalent to `|T_θ| > z` for a stratum,
/// given the pooled stratum fraction `pooled_fraction` and group sizes.
pub fn wald_difference_threshold(z: f64, pooled_fraction: f64, n_e: u64, n_c: u64) -> f64 {
    z * ((1.0 / n_e as f64 + 1.0 / n_c as f64) / pooled_fraction).sqrt()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

/// Approximate (Wald-type) test from sufficient statistics.
pub fn approx_test_summaries(e: &GroupSummary, c: &GroupSummary, levels: &LocalLevels) -> Result<TestOutcome> {
    let z = levels.z()?;
    let stats = wald_statistics(e, c);
    let local = |i: usize| {
        let (t, degenerate) = stats[i];
        LocalTest {
            statistic: t,
            p_value: (2.0 * normal_sf(t.abs())).min(1.0),
            reject: !degenerate && t.abs() > z[i],
            degenerate,
        }
    };
    Ok(TestOutcome::assemble(
        Method::Approximate,
        *levels,
        local(0),
        local(1),
        local(2),
    ))
}

/// Approximate test of the global null at global level `alpha`.
pub fn approx_test(data_e: &Dataset, data_c: &Dataset, alpha: f64) -> Result<TestOutcome> {
    let levels = LocalLevels::equal(alpha)?;
    approx_test_summaries(
        &GroupSummary::pooled(data_e)?,
        &GroupSummary::pooled(data_c)?,
        &levels,
    )
}

fn stratum_test(k_e: u64, k_c: u64, diff: Option<f64>, level: f64) -> LocalTest {
    match diff {
        Some(d) if k_e > 0 && k_c > 0 => {
            let p = conditional_p_value(k_e, k_c, d);
            LocalTest {
                statistic: d,
                p_value: p,
                reject: p <= level,
                degenerate: false,
            }
        }
        _ => LocalTest {
            statistic: 0.0,
            p_value: 1.0,
            reject: false,
            degenerate: true,
        },
    }
}

/// Exact test given a precomputed Z-pooled ordering for the group sizes.
pub fn exact_test_with(
    ordering: &ZPooledOrdering,
    e: &GroupSummary,
    c: &GroupSummary,
    levels: &LocalLevels,
) -> Result<TestOutcome> {
    if ordering.n_e() != e.n || ordering.n_c() != c.n {
        return Err(Error::domain("ordering does not match the group sizes"));
    }
    let tp = pooled_z(e.k, e.n, c.k, c.n);
    let pp = ordering.p_value(e.k, c.k);
    let pooled = pooled_p(e, c);
    let response = LocalTest {
        statistic: tp,
        p_value: pp,
        reject: pp <= levels.response,
        degenerate: pooled <= 0.0 || pooled >= 1.0,
    };
    let theta1 = stratum_test(e.k, c.k, responder_difference(e, c), levels.theta1);
    let theta0 = stratum_test(
        e.nonresponders(),
        c.nonresponders(),
        nonresponder_difference(e, c),
        levels.theta0,
    );
    Ok(TestOutcome::assemble(Method::Exact, *levels, response, theta1, theta0))
}

pub fn exact_test_summaries(e: &GroupSummary, c: &GroupSummary, levels: &LocalLevels) -> Result<TestOutcome> {
    let ordering = ZPooledOrdering::new(e.n, c.n)?;
    exact_test_with(&ordering, e, c, levels)
}

/// Exact test of the global null at global level `alpha`: Z-pooled exact
/// unconditional test for response and conditional beta-prime tests for the
/// stratum hazards.
pub fn exact_test(data_e: &Dataset, data_c: &Dataset, alpha: f64) -> Result<TestOutcome> {
    let levels = LocalLevels::equal(alpha)?;
    exact_test_summaries(
        &GroupSummary::pooled(data_e)?,
        &GroupSummary::pooled(data_c)?,
        &levels,
    )
}

/// Runs `method` at global level `alpha`.
pub fn run_test(method: Method, data_e: &Dataset, data_c: &Dataset, alpha: f64) -> Result<TestOutcome> {
    match method {
        Method::Approximate => approx_test(data_e, data_c, alpha),
        Method::Exact => exact_test(data_e, data_c, alpha),
    }
}
