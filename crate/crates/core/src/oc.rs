//! Exact operating characteristics of both RSES tests.
//!
//! The responder counts `(k_E, k_C)` are enumerated exhaustively. Given the
//! counts, the response decision is deterministic and the two stratum tests
//! are independent, so
//!
//! `P(reject) = Σ f(k_E, k_C) · [1{response rejects} + 1{not} · (1 − u₁ u₀)]`
//!
//! where `u₁`, `u₀` are the conditional acceptance probabilities of the
//! stratum tests, evaluated on beta-prime CDFs.

use crate::error::{Error, Result};
use crate::inference::{
    conditional_acceptance, critical_table, pooled_z, response_region, wald_difference_threshold,
    LocalLevels, Method,
};
use crate::model::{RsesParams, TwoGroupModel};
use crate::numerics::{binomial_pmf_row, ln_choose_row, CompensatedSum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Group size above which negligible cells are skipped.
pub const FULL_ENUMERATION_LIMIT: u64 = 500;
/// Cells with joint mass below this are skipped beyond the limit.
pub const TRUNCATION_MASS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcRequest {
    pub model: TwoGroupModel,
    pub n_e: u64,
    pub n_c: u64,
    pub levels: LocalLevels,
    pub test: Method,
}

impl OcRequest {
    pub fn new(model: TwoGroupModel, n_e: u64, n_c: u64, alpha: f64, test: Method) -> Result<Self> {
        Self::from_levels(model, n_e, n_c, LocalLevels::equal(alpha)?, test)
    }

    /// Request with an explicit allocation of the local levels.
    pub fn from_levels(model: TwoGroupModel, n_e: u64, n_c: u64, levels: LocalLevels, test: Method) -> Result<Self> {
        if n_e == 0 || n_c == 0 {
            return Err(Error::domain("group sizes must be at least 1"));
        }
        Ok(Self {
            model,
            n_e,
            n_c,
            levels,
            test,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcResult {
    pub rejection_probability: f64,
    /// Mass of outcomes where the response test rejects.
    pub response_contribution: f64,
    /// Probability of rejecting through a stratum test only.
    pub theta_contribution: f64,
    /// Number of `(k_E, k_C)` cells evaluated.
    pub enumeration_size: u64,
    /// Joint mass of skipped cells; bounds the truncation error.
    pub truncated_mass: f64,
}

/// Per-cell decision rule shared by both tests.
trait CellRule: Sync {
    fn response_rejects(&self, k_e: u64, k_c: u64) -> bool;
    /// Conditional probability that at least one stratum test rejects.
    fn stratum_rejection(&self, k_e: u64, k_c: u64) -> f64;
}

struct ExactRule {
    region: std::sync::Arc<crate::inference::ResponseRegion>,
    crit1: std::sync::Arc<crate::inference::CriticalTable>,
    crit0: std::sync::Arc<crate::inference::CriticalTable>,
    rho1: f64,
    rho0: f64,
    n_e: u64,
    n_c: u64,
}

impl CellRule for ExactRule {
    fn response_rejects(&self, k_e: u64, k_c: u64) -> bool {
        self.region.rejects(k_e, k_c)
    }

    fn stratum_rejection(&self, k_e: u64, k_c: u64) -> f64 {
        let (m_e, m_c) = (self.n_e - k_e, self.n_c - k_c);
        let a = if k_e > 0 && k_c > 0 {
            conditional_acceptance(k_e, k_c, self.rho1, self.crit1.get(k_e, k_c)).1
        } else {
            0.0
        };
        let b = if m_e > 0 && m_c > 0 {
            conditional_acceptance(m_e, m_c, self.rho0, self.crit0.get(m_e, m_c)).1
        } else {
            0.0
        };
        a + b - a * b
    }
}

struct ApproxRule {
    z: [f64; 3],
    rho1: f64,
    rho0: f64,
    n_e: u64,
    n_c: u64,
}

impl CellRule for ApproxRule {
    fn response_rejects(&self, k_e: u64, k_c: u64) -> bool {
        pooled_z(k_e, self.n_e, k_c, self.n_c).abs() > self.z[0]
    }

    fn stratum_rejection(&self, k_e: u64, k_c: u64) -> f64 {
        let (m_e, m_c) = (self.n_e - k_e, self.n_c - k_c);
        let pooled = (k_e + k_c) as f64 / (self.n_e + self.n_c) as f64;
        let a = if k_e > 0 && k_c > 0 {
            let c = wald_difference_threshold(self.z[1], pooled, self.n_e, self.n_c);
            conditional_acceptance(k_e, k_c, self.rho1, c).1
        } else {
            0.0
        };
        let b = if m_e > 0 && m_c > 0 {
            let c = wald_difference_threshold(self.z[2], 1.0 - pooled, self.n_e, self.n_c);
            conditional_acceptance(m_e, m_c, self.rho0, c).1
        } else {
            0.0
        };
        a + b - a * b
    }
}

fn enumerate<R: CellRule>(rule: &R, model: &TwoGroupModel, n_e: u64, n_c: u64) -> OcResult {
    let be = binomial_pmf_row(&ln_choose_row(n_e), model.experimental.p());
    let bc = binomial_pmf_row(&ln_choose_row(n_c), model.control.p());
    let truncate = n_e > FULL_ENUMERATION_LIMIT || n_c > FULL_ENUMERATION_LIMIT;

    // rows are independent; each is summed in kC order and rows are combined in kE order
    let rows: Vec<(CompensatedSum, CompensatedSum, u64, CompensatedSum)> = (0..=n_e)
        .into_par_iter()
        .map(|k_e| {
            let mut resp = CompensatedSum::new();
            let mut theta = CompensatedSum::new();
            let mut skipped = CompensatedSum::new();
            let mut cells = 0u64;
            let fe = be[k_e as usize];
            for k_c in 0..=n_c {
                let f = fe * bc[k_c as usize];
                if truncate && f < TRUNCATION_MASS {
                    skipped.add(f);
                    continue;
                }
                cells += 1;
                if f == 0.0 {
                    continue;
                }
                if rule.response_rejects(k_e, k_c) {
                    resp.add(f);
                } else {
                    theta.add(f * rule.stratum_rejection(k_e, k_c));
                }
            }
            (resp, theta, cells, skipped)
        })
        .collect();

    let mut resp = CompensatedSum::new();
    let mut theta = CompensatedSum::new();
    let mut skipped = CompensatedSum::new();
    let mut cells = 0;
    for (r, t, c, s) in rows {
        resp.add(r.value());
        theta.add(t.value());
        skipped.add(s.value());
        cells += c;
    }
    let (r, t) = (resp.value(), theta.value());
    OcResult {
        rejection_probability: (r + t).clamp(0.0, 1.0),
        response_contribution: r,
        theta_contribution: t,
        enumeration_size: cells,
        truncated_mass: skipped.value(),
    }
}

fn hazard_ratios(model: &TwoGroupModel) -> (f64, f64) {
    (
        model.control.lambda1() / model.experimental.lambda1(),
        model.control.lambda0() / model.experimental.lambda0(),
    )
}

/// Exact rejection probability of the exact RSES test.
pub fn exact_power_exact_test(request: &OcRequest) -> Result<OcResult> {
    if request.test != Method::Exact {
        return Err(Error::domain("request is not for the exact test"));
    }
    let (n_e, n_c) = (request.n_e, request.n_c);
    let levels = &request.levels;
    let max_k = n_e.max(n_c) as usize;
    let (rho1, rho0) = hazard_ratios(&request.model);
    let rule = ExactRule {
        region: response_region(n_e, n_c, levels.response)?,
        crit1: critical_table(levels.theta1, max_k)?,
        crit0: critical_table(levels.theta0, max_k)?,
        rho1,
        rho0,
        n_e,
        n_c,
    };
    Ok(enumerate(&rule, &request.model, n_e, n_c))
}

/// Exact rejection probability of the approximate RSES test.
pub fn exact_power_approx_test(request: &OcRequest) -> Result<OcResult> {
    if request.test != Method::Approximate {
        return Err(Error::domain("request is not for the approximate test"));
    }
    let (rho1, rho0) = hazard_ratios(&request.model);
    let rule = ApproxRule {
        z: request.levels.z()?,
        rho1,
        rho0,
        n_e: request.n_e,
        n_c: request.n_c,
    };
    Ok(enumerate(&rule, &request.model, request.n_e, request.n_c))
}

/// Exact rejection probability of whichever test the request names.
pub fn rejection_probability(request: &OcRequest) -> Result<OcResult> {
    match request.test {
        Method::Exact => exact_power_exact_test(request),
        Method::Approximate => exact_power_approx_test(request),
    }
}

/// Type I error: rejection probability when both groups share `params`.
pub fn type1_error(params: RsesParams, n_e: u64, n_c: u64, alpha: f64, test: Method) -> Result<OcResult> {
    rejection_probability(&OcRequest::new(TwoGroupModel::null(params), n_e, n_c, alpha, test)?)
}
