//! Maximum likelihood estimation, Wald-type confidence intervals and their
//! exact coverage probabilities.

use crate::error::{Error, Result};
use crate::model::{Dataset, Group};
use crate::numerics::{binomial_pmf_row, gamma_cdf, ln_choose_row, normal_quantile, CompensatedSum};
use serde::{Deserialize, Serialize};

/// Sufficient statistics of one group: size, responder count and the time
/// totals of both strata.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: u64,
    pub k: u64,
    pub responder_time: f64,
    pub nonresponder_time: f64,
}

impl GroupSummary {
    pub fn from_dataset(data: &Dataset, group: Group) -> Result<Self> {
        let mut s = GroupSummary::default();
        for r in data.group(group) {
            s.n += 1;
            if r.responder {
                s.k += 1;
                s.responder_time += r.time;
            } else {
                s.nonresponder_time += r.time;
            }
        }
        if s.n == 0 {
            return Err(Error::EmptyGroup(group.label().into()));
        }
        Ok(s)
    }

    /// Summary of every record in `data`, ignoring group labels.
    pub fn pooled(data: &Dataset) -> Result<Self> {
        let mut s = GroupSummary::default();
        for r in &data.records {
            s.n += 1;
            if r.responder {
                s.k += 1;
                s.responder_time += r.time;
            } else {
                s.nonresponder_time += r.time;
            }
        }
        if s.n == 0 {
            return Err(Error::domain("empty dataset"));
        }
        Ok(s)
    }

    pub fn nonresponders(&self) -> u64 {
        self.n - self.k
    }

    pub fn mle(&self) -> MleResult {
        let theta1_hat = (self.k > 0).then(|| -(self.responder_time / self.k as f64).ln());
        let nr = self.nonresponders();
        let theta0_hat = (nr > 0).then(|| -(self.nonresponder_time / nr as f64).ln());
        MleResult {
            n: self.n,
            k: self.k,
            p_hat: self.k as f64 / self.n as f64,
            theta1_hat,
            theta0_hat,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub n: u64,
    pub k: u64,
    pub p_hat: f64,
    /// Absent when the group has no responders.
    pub theta1_hat: Option<f64>,
    /// Absent when every subject responded.
    pub theta0_hat: Option<f64>,
}

impl MleResult {
    pub fn lambda1_hat(&self) -> Option<f64> {
        self.theta1_hat.map(|t| t.exp())
    }

    pub fn lambda0_hat(&self) -> Option<f64> {
        self.theta0_hat.map(|t| t.exp())
    }
}

/// Maximum likelihood estimates of `(p, θ₁, θ₀)` for one group.
pub fn fit_mle(data: &Dataset, group: Group) -> Result<MleResult> {
    Ok(GroupSummary::from_dataset(data, group)?.mle())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn unbounded(level: f64) -> Self {
        Self {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            level,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn two_sided_z(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    normal_quantile(0.5 + 0.5 * level)
}

fn symmetric(center: f64, half: f64, level: f64) -> ConfidenceInterval {
    ConfidenceInterval {
        lower: center - half,
        upper: center + half,
        level,
    }
}

pub fn ci_p(result: &MleResult, level: f64) -> Result<ConfidenceInterval> {
    let z = two_sided_z(level)?;
    let p = result.p_hat;
    Ok(symmetric(p, z * (p * (1.0 - p) / result.n as f64).sqrt(), level))
}

pub fn ci_theta1(result: &MleResult, level: f64) -> Result<ConfidenceInterval> {
    let z = two_sided_z(level)?;
    Ok(match result.theta1_hat {
        Some(t) => symmetric(t, z * (1.0 / result.k as f64).sqrt(), level),
        None => ConfidenceInterval::unbounded(level),
    })
}

pub fn ci_theta0(result: &MleResult, level: f64) -> Result<ConfidenceInterval> {
    let z = two_sided_z(level)?;
    Ok(match result.theta0_hat {
        Some(t) => symmetric(t, z * (1.0 / (result.n - result.k) as f64).sqrt(), level),
        None => ConfidenceInterval::unbounded(level),
    })
}

// ---------------------------------------------------------------------------
// Exact coverage
// ---------------------------------------------------------------------------

fn check_n_p(n: u64, p0: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::domain(format!("p0 = {p0} outside [0, 1]")));
    }
    Ok(())
}

/// Exact coverage of the normal-approximation interval for `p`.
pub fn coverage_p(n: u64, p0: f64, level: f64) -> Result<f64> {
    check_n_p(n, p0)?;
    let z = two_sided_z(level)?;
    let pmf = binomial_pmf_row(&ln_choose_row(n), p0);
    let nf = n as f64;
    let total: CompensatedSum = pmf
        .iter()
        .enumerate()
        .filter(|&(k, _)| {
            let ph = k as f64 / nf;
            (p0 - ph).abs() <= z * (ph * (1.0 - ph) / nf).sqrt()
        })
        .map(|(_, &f)| f)
        .collect();
    Ok(total.value().clamp(0.0, 1.0))
}

/// Conditional coverage of a log-hazard interval given `k ≥ 1` subjects in
/// the stratum: `λ·mean ~ Γ(k, k)`.
pub fn conditional_theta_coverage(k: u64, z: f64) -> f64 {
    let kf = k as f64;
    let half = z / kf.sqrt();
    let hi = gamma_cdf(kf, kf, half.exp()).unwrap_or(1.0);
    let lo = gamma_cdf(kf, kf, (-half).exp()).unwrap_or(0.0);
    hi - lo
}

fn coverage_theta(n: u64, p_stratum: f64, level: f64) -> Result<f64> {
    check_n_p(n, p_stratum)?;
    let z = two_sided_z(level)?;
    let pmf = binomial_pmf_row(&ln_choose_row(n), p_stratum);
    let mut total = CompensatedSum::new();
    total.add(pmf[0]);
    for (k, &f) in pmf.iter().enumerate().skip(1) {
        if f > 0.0 {
            total.add(f * conditional_theta_coverage(k as u64, z));
        }
    }
    Ok(total.value().clamp(0.0, 1.0))
}

/// Exact coverage of the responder log-hazard interval; an empty responder
/// stratum gives the unbounded interval and always covers.
pub fn coverage_theta1(n: u64, p0: f64, level: f64) -> Result<f64> {
    coverage_theta(n, p0, level)
}

/// Exact coverage of the non-responder log-hazard interval.
pub fn coverage_theta0(n: u64, p0: f64, level: f64) -> Result<f64> {
    check_n_p(n, p0)?;
    coverage_theta(n, 1.0 - p0, level)
}
