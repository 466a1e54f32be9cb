//! Responder-stratified exponential survival model.
//!
//! A subject responds with probability `p`; survival time is exponential with
//! hazard `lambda1` for responders and `lambda0` for non-responders.

use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Parameter triple of one treatment group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct RsesParams {
    p: f64,
    lambda1: f64,
    lambda0: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    p: f64,
    lambda1: f64,
    lambda0: f64,
}

impl TryFrom<RawParams> for RsesParams {
    type Error = Error;
    fn try_from(r: RawParams) -> Result<Self> {
        RsesParams::new(r.p, r.lambda1, r.lambda0)
    }
}

impl From<RsesParams> for RawParams {
    fn from(r: RsesParams) -> Self {
        RawParams {
            p: r.p,
            lambda1: r.lambda1,
            lambda0: r.lambda0,
        }
    }
}

impl RsesParams {
    pub fn new(p: f64, lambda1: f64, lambda0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("response probability {p} outside [0, 1]")));
        }
        for (name, v) in [("lambda1", lambda1), ("lambda0", lambda0)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { p, lambda1, lambda0 })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }

    /// Log hazard of the responder stratum.
    pub fn theta1(&self) -> f64 {
        self.lambda1.ln()
    }

    /// Log hazard of the non-responder stratum.
    pub fn theta0(&self) -> f64 {
        self.lambda0.ln()
    }

    /// Same response probability, both hazards multiplied by `factor`.
    pub fn scale_hazards(&self, factor: f64) -> Result<Self> {
        Self::new(self.p, self.lambda1 * factor, self.lambda0 * factor)
    }

    pub fn hazard(&self, responder: bool) -> f64 {
        if responder {
            self.lambda1
        } else {
            self.lambda0
        }
    }
}

/// Experimental and control parameter triples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoGroupModel {
    pub experimental: RsesParams,
    pub control: RsesParams,
}

impl TwoGroupModel {
    pub fn new(experimental: RsesParams, control: RsesParams) -> Self {
        Self {
            experimental,
            control,
        }
    }

    /// Both groups share the same triple.
    pub fn null(params: RsesParams) -> Self {
        Self::new(params, params)
    }

    pub fn swapped(&self) -> Self {
        Self::new(self.control, self.experimental)
    }

    pub fn group(&self, g: Group) -> &RsesParams {
        match g {
            Group::Experimental => &self.experimental,
            Group::Control => &self.control,
        }
    }

    pub fn scale_hazards(&self, factor: f64) -> Result<Self> {
        Ok(Self::new(
            self.experimental.scale_hazards(factor)?,
            self.control.scale_hazards(factor)?,
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "E")]
    Experimental,
    #[serde(rename = "C")]
    Control,
}

impl Group {
    pub fn label(self) -> &'static str {
        match self {
            Group::Experimental => "E",
            Group::Control => "C",
        }
    }

    pub fn other(self) -> Self {
        match self {
            Group::Experimental => Group::Control,
            Group::Control => Group::Experimental,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "E" | "e" => Ok(Group::Experimental),
            "C" | "c" => Ok(Group::Control),
            other => Err(Error::domain(format!("unknown group '{other}', expected E or C"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub group: Group,
    pub responder: bool,
    pub time: f64,
}

impl SubjectRecord {
    pub fn new(group: Group, responder: bool, time: f64) -> Result<Self> {
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::domain(format!("survival time must be positive, got {time}")));
        }
        Ok(Self {
            group,
            responder,
            time,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<SubjectRecord>,
}

impl Dataset {
    pub fn new(records: Vec<SubjectRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn group(&self, g: Group) -> impl Iterator<Item = &SubjectRecord> + '_ {
        self.records.iter().filter(move |r| r.group == g)
    }

    /// Concatenates two datasets, keeping record order.
    pub fn concat(mut self, other: Dataset) -> Dataset {
        self.records.extend(other.records);
        self
    }

    /// Every time multiplied by `factor`.
    pub fn scale_times(&self, factor: f64) -> Dataset {
        Dataset::new(
            self.records
                .iter()
                .map(|r| SubjectRecord {
                    time: r.time * factor,
                    ..*r
                })
                .collect(),
        )
    }

    /// Swaps the E and C labels of every record.
    pub fn relabel(&self) -> Dataset {
        Dataset::new(
            self.records
                .iter()
                .map(|r| SubjectRecord {
                    group: r.group.other(),
                    ..*r
                })
                .collect(),
        )
    }
}

// ---------------------------------------------------------------------------
// Survival and density
// ---------------------------------------------------------------------------

/// Marginal survival function `S(t) = p e^{-λ₁t} + (1-p) e^{-λ₀t}`.
pub fn survival(params: &RsesParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be nonnegative, got {t}")));
    }
    Ok(params.p * (-params.lambda1 * t).exp() + (1.0 - params.p) * (-params.lambda0 * t).exp())
}

/// Joint density of response status and survival time.
pub fn joint_density(params: &RsesParams, responder: bool, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("time must be positive, got {t}")));
    }
    Ok(if responder {
        params.p * params.lambda1 * (-params.lambda1 * t).exp()
    } else {
        (1.0 - params.p) * params.lambda0 * (-params.lambda0 * t).exp()
    })
}

// ---------------------------------------------------------------------------
// Relation of survival curves
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveRelation {
    CompletelyEqual,
    UniformlyDifferent,
    Crossing,
}

impl fmt::Display for CurveRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveRelation::CompletelyEqual => "CompletelyEqual",
            CurveRelation::UniformlyDifferent => "UniformlyDifferent",
            CurveRelation::Crossing => "Crossing",
        })
    }
}

/// Default relative tolerance for parameter comparisons.
pub const RELATION_TOLERANCE: f64 = 1e-9;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0e-300)
}

/// `S_E - S_C` written as a sum of exponentials `Σ c_i e^{-r_i t}` with
/// distinct rates (within tolerance) sorted ascending.
fn difference_terms(model: &TwoGroupModel, tol: f64) -> Vec<(f64, f64)> {
    let e = &model.experimental;
    let c = &model.control;
    let raw = [
        (e.lambda1, e.p),
        (e.lambda0, 1.0 - e.p),
        (c.lambda1, -c.p),
        (c.lambda0, -(1.0 - c.p)),
    ];
    let mut terms: Vec<(f64, f64)> = Vec::with_capacity(4);
    for (rate, coef) in raw {
        if coef == 0.0 {
            continue;
        }
        match terms.iter_mut().find(|(r, _)| close(*r, rate, tol)) {
            Some(t) => t.1 += coef,
            None => terms.push((rate, coef)),
        }
    }
    terms.retain(|&(_, coef)| coef.abs() > tol);
    terms.sort_by(|a, b| a.0.total_cmp(&b.0));
    terms
}

/// Moment `m_k = p λ₁^k + (1-p) λ₀^k`, so that `S^{(k)}(0) = (-1)^k m_k`.
fn moment(params: &RsesParams, k: i32) -> f64 {
    params.p * params.lambda1.powi(k) + (1.0 - params.p) * params.lambda0.powi(k)
}

/// Sign of the stratum of smallest hazard that is non-empty, compared across
/// groups: positive when group E has the better long-run survival.
fn tail_sign(model: &TwoGroupModel, tol: f64) -> f64 {
    // Equivalent to comparing λ_min and, on ties, the weight of the fitter stratum.
    difference_terms(model, tol)
        .first()
        .map(|&(_, c)| c.signum())
        .unwrap_or(0.0)
}

/// Sign of `S_E - S_C` just after 0, from the first unequal derivative.
fn start_sign(model: &TwoGroupModel, tol: f64) -> f64 {
    for k in 1..=3 {
        let me = moment(&model.experimental, k);
        let mc = moment(&model.control, k);
        if !close(me, mc, tol) {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            return (sign * (me - mc)).signum();
        }
    }
    0.0
}

/// Classifies the relation of the two marginal survival curves.
///
/// Equality is decided on the exponential-sum representation of `S_E - S_C`
/// (all coefficients cancel). Otherwise the curves cross unless the sign just
/// after 0 agrees with the sign in the tail. An exponential sum with three
/// coefficient sign changes can return to its starting sign after two
/// crossings, so in that case the interior is also searched.
pub fn classify_relation(model: &TwoGroupModel, tolerance: f64) -> CurveRelation {
    let terms = difference_terms(model, tolerance);
    if terms.is_empty() {
        return CurveRelation::CompletelyEqual;
    }
    let start = start_sign(model, tolerance);
    let tail = tail_sign(model, tolerance);
    if start == 0.0 {
        return CurveRelation::CompletelyEqual;
    }
    if start != tail {
        return CurveRelation::Crossing;
    }
    let sign_changes = terms
        .windows(2)
        .filter(|w| w[0].1.signum() != w[1].1.signum())
        .count();
    if sign_changes >= 3 && has_interior_sign_change(&terms, start) {
        return CurveRelation::Crossing;
    }
    CurveRelation::UniformlyDifferent
}

fn has_interior_sign_change(terms: &[(f64, f64)], start: f64) -> bool {
    let eval = |t: f64| terms.iter().map(|&(r, c)| c * (-r * t).exp()).sum::<f64>();
    let r_min = terms.iter().map(|t| t.0).fold(f64::INFINITY, f64::min);
    let r_max = terms.iter().map(|t| t.0).fold(0.0, f64::max);
    // log-spaced grid from well inside the initial regime to deep in the tail
    let t_lo = 1e-4 / r_max;
    let t_hi = 60.0 / r_min;
    let steps = 20_000;
    let ratio = (t_hi / t_lo).ln() / steps as f64;
    (0..=steps).any(|i| {
        let v = eval(t_lo * (ratio * i as f64).exp());
        v * start < 0.0
    })
}

// ---------------------------------------------------------------------------
// Data generation
// ---------------------------------------------------------------------------

/// Draws `n` subjects of one group.
///
/// Each subject consumes exactly two uniforms from `rng`: the first decides
/// the response flag (`u < p`), the second is inverted into an exponential
/// time with the stratum hazard.
pub fn sample<R: Rng + ?Sized>(
    params: &RsesParams,
    group: Group,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("sample size must be at least 1"));
    }
    let records = (0..n)
        .map(|_| {
            let (responder, time) = draw_subject(params, rng);
            SubjectRecord {
                group,
                responder,
                time,
            }
        })
        .collect();
    Ok(Dataset::new(records))
}

#[inline]
pub fn draw_subject<R: Rng + ?Sized>(params: &RsesParams, rng: &mut R) -> (bool, f64) {
    let u: f64 = rng.gen();
    let v: f64 = rng.gen();
    let responder = u < params.p;
    // 1 - v lies in (0, 1], so the time is finite and positive unless v == 0
    let time = -(1.0 - v).ln() / params.hazard(responder);
    (responder, time.max(f64::MIN_POSITIVE))
}
