//! Logrank and stratified logrank tests and the Monte Carlo harness that
//! compares them with the RSES tests.

use crate::error::{Error, Result};
use crate::estimation::GroupSummary;
use crate::inference::{
    critical_table, response_region, responder_difference, nonresponder_difference,
    wald_statistics, LocalLevels,
};
use crate::model::{draw_subject, Group, SubjectRecord, TwoGroupModel, Dataset};
use crate::numerics::normal_quantile;
use crate::rng::stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// One distinct event time of the risk table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskTableRow {
    pub event_time: f64,
    pub at_risk: u64,
    pub at_risk_e: u64,
    pub events: u64,
    pub events_e: u64,
}

impl RiskTableRow {
    pub fn expected_e(&self) -> f64 {
        self.events as f64 * self.at_risk_e as f64 / self.at_risk as f64
    }

    /// Hypergeometric variance of the experimental-group event count.
    pub fn variance(&self) -> f64 {
        if self.at_risk < 2 {
            return 0.0;
        }
        let y = self.at_risk as f64;
        let ye = self.at_risk_e as f64;
        let d = self.events as f64;
        (y - ye) * ye * (y - d) * d / (y * y * (y - 1.0))
    }
}

/// Risk table of uncensored `(time, in_experimental_group)` observations.
/// Exactly tied times share one row.
pub fn risk_table(obs: &mut [(f64, bool)]) -> Vec<RiskTableRow> {
    obs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut at_risk = obs.len() as u64;
    let mut at_risk_e = obs.iter().filter(|o| o.1).count() as u64;
    let mut rows = Vec::new();
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut events = 0;
        let mut events_e = 0;
        while i < obs.len() && obs[i].0 == t {
            events += 1;
            events_e += obs[i].1 as u64;
            i += 1;
        }
        rows.push(RiskTableRow {
            event_time: t,
            at_risk,
            at_risk_e,
            events,
            events_e,
        });
        at_risk -= events;
        at_risk_e -= events_e;
    }
    rows
}

/// Observed minus expected events and variance for one risk table.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogrankParts {
    pub observed: f64,
    pub expected: f64,
    pub variance: f64,
}

impl LogrankParts {
    fn from_obs(obs: &mut [(f64, bool)]) -> Self {
        risk_table(obs).iter().fold(Self::default(), |acc, row| Self {
            observed: acc.observed + row.events_e as f64,
            expected: acc.expected + row.expected_e(),
            variance: acc.variance + row.variance(),
        })
    }

    fn add(self, other: Self) -> Self {
        Self {
            observed: self.observed + other.observed,
            expected: self.expected + other.expected,
            variance: self.variance + other.variance,
        }
    }

    fn statistic(&self) -> Result<f64> {
        if !(self.variance > 0.0) {
            return Err(Error::domain("logrank variance is zero; statistic is degenerate"));
        }
        Ok((self.observed - self.expected) / self.variance.sqrt())
    }
}

fn observations<'a>(records: impl Iterator<Item = &'a SubjectRecord>) -> Vec<(f64, bool)> {
    records
        .map(|r| (r.time, r.group == Group::Experimental))
        .collect()
}

/// Logrank statistic `(O − E)/√V` for the experimental group.
pub fn logrank_statistic(data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("logrank statistic needs at least one event"));
    }
    LogrankParts::from_obs(&mut observations(data.records.iter())).statistic()
}

/// Logrank statistic stratified by response status.
pub fn stratified_logrank_statistic(data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::domain("logrank statistic needs at least one event"));
    }
    let mut resp = observations(data.records.iter().filter(|r| r.responder));
    let mut non = observations(data.records.iter().filter(|r| !r.responder));
    LogrankParts::from_obs(&mut resp)
        .add(LogrankParts::from_obs(&mut non))
        .statistic()
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimTest {
    Logrank,
    StratifiedLogrank,
    ApproxRses,
    ExactRses,
}

impl SimTest {
    pub const ALL: [SimTest; 4] = [
        SimTest::Logrank,
        SimTest::StratifiedLogrank,
        SimTest::ApproxRses,
        SimTest::ExactRses,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimTest::Logrank => "logrank",
            SimTest::StratifiedLogrank => "stratified-logrank",
            SimTest::ApproxRses => "approx-rses",
            SimTest::ExactRses => "exact-rses",
        }
    }
}

impl fmt::Display for SimTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SimTest {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SimTest::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown test '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub test: SimTest,
    pub runs: u64,
    pub rejections: u64,
    pub rate: f64,
    pub standard_error: f64,
    pub seed: u64,
}

impl SimulationReport {
    fn new(test: SimTest, runs: u64, rejections: u64, seed: u64) -> Self {
        let rate = rejections as f64 / runs as f64;
        Self {
            test,
            runs,
            rejections,
            rate,
            standard_error: (rate * (1.0 - rate) / runs as f64).sqrt(),
            seed,
        }
    }
}

/// Simulation parameters shared by all tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationSetup {
    pub model: TwoGroupModel,
    pub n_e: u64,
    pub n_c: u64,
    pub alpha: f64,
    pub runs: u64,
    pub seed: u64,
}

/// Trial `index` of a simulation: `n_E` experimental subjects followed by
/// `n_C` control subjects, all drawn from stream `(seed, index)`.
pub fn simulate_trial(model: &TwoGroupModel, n_e: u64, n_c: u64, seed: u64, index: u64) -> Dataset {
    let mut rng = stream(seed, index);
    let mut records = Vec::with_capacity((n_e + n_c) as usize);
    for (group, n) in [(Group::Experimental, n_e), (Group::Control, n_c)] {
        let params = model.group(group);
        for _ in 0..n {
            let (responder, time) = draw_subject(params, &mut rng);
            records.push(SubjectRecord {
                group,
                responder,
                time,
            });
        }
    }
    Dataset::new(records)
}

/// Decision procedure prepared once per simulation.
enum Decider {
    Logrank { z: f64, stratified: bool },
    Approx { z: [f64; 3] },
    Exact {
        region: std::sync::Arc<crate::inference::ResponseRegion>,
        crit1: std::sync::Arc<crate::inference::CriticalTable>,
        crit0: std::sync::Arc<crate::inference::CriticalTable>,
    },
}

impl Decider {
    fn new(test: SimTest, setup: &SimulationSetup) -> Result<Self> {
        Ok(match test {
            SimTest::Logrank | SimTest::StratifiedLogrank => Decider::Logrank {
                z: normal_quantile(1.0 - 0.5 * setup.alpha)?,
                stratified: test == SimTest::StratifiedLogrank,
            },
            SimTest::ApproxRses => {
                Decider::Approx {
                    z: LocalLevels::equal(setup.alpha)?.z()?,
                }
            }
            SimTest::ExactRses => {
                let levels = LocalLevels::equal(setup.alpha)?;
                let max_k = setup.n_e.max(setup.n_c) as usize;
                Decider::Exact {
                    region: response_region(setup.n_e, setup.n_c, levels.response)?,
                    crit1: critical_table(levels.theta1, max_k)?,
                    crit0: critical_table(levels.theta0, max_k)?,
                }
            }
        })
    }

    fn rejects(&self, data: &Dataset) -> bool {
        match self {
            Decider::Logrank { z, stratified } => {
                let t = if *stratified {
                    stratified_logrank_statistic(data)
                } else {
                    logrank_statistic(data)
                };
                // degenerate statistics count as non-rejections
                t.map(|t| t.abs() > *z).unwrap_or(false)
            }
            Decider::Approx { z } => {
                let (e, c) = summaries(data);
                wald_statistics(&e, &c)
                    .iter()
                    .zip(z)
                    .any(|(&(t, degenerate), &z)| !degenerate && t.abs() > z)
            }
            Decider::Exact {
                region,
                crit1,
                crit0,
            } => {
                let (e, c) = summaries(data);
                if region.rejects(e.k, c.k) {
                    return true;
                }
                if let Some(d) = responder_difference(&e, &c) {
                    if d.abs() >= crit1.get(e.k, c.k) {
                        return true;
                    }
                }
                if let Some(d) = nonresponder_difference(&e, &c) {
                    if d.abs() >= crit0.get(e.nonresponders(), c.nonresponders()) {
                        return true;
                    }
                }
                false
            }
        }
    }
}

fn summaries(data: &Dataset) -> (GroupSummary, GroupSummary) {
    let e = GroupSummary::from_dataset(data, Group::Experimental).expect("simulated group is nonempty");
    let c = GroupSummary::from_dataset(data, Group::Control).expect("simulated group is nonempty");
    (e, c)
}

/// Monte Carlo rejection rate of `test` under `setup.model`.
///
/// Run `i` uses stream `(seed, i)`, so the tally is identical for any
/// thread count.
pub fn simulate_rejection_rate(setup: &SimulationSetup, test: SimTest) -> Result<SimulationReport> {
    Ok(simulate_many(setup, &[test])?.remove(0))
}

/// Several tests applied to the same simulated trials.
pub fn simulate_many(setup: &SimulationSetup, tests: &[SimTest]) -> Result<Vec<SimulationReport>> {
    if setup.runs == 0 {
        return Err(Error::domain("runs must be at least 1"));
    }
    if setup.n_e == 0 || setup.n_c == 0 {
        return Err(Error::domain("group sizes must be at least 1"));
    }
    if !(setup.alpha > 0.0 && setup.alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {}", setup.alpha)));
    }
    let deciders = tests
        .iter()
        .map(|&t| Decider::new(t, setup))
        .collect::<Result<Vec<_>>>()?;
    let counts = (0..setup.runs)
        .into_par_iter()
        .map(|i| {
            let data = simulate_trial(&setup.model, setup.n_e, setup.n_c, setup.seed, i);
            deciders
                .iter()
                .map(|d| d.rejects(&data) as u64)
                .collect::<Vec<u64>>()
        })
        .reduce(
            || vec![0; tests.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(tests
        .iter()
        .zip(counts)
        .map(|(&t, r)| SimulationReport::new(t, setup.runs, r, setup.seed))
        .collect())
}
