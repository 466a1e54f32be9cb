//! Z-pooled exact unconditional test of equal response probabilities.
//!
//! Outcomes `(k_E, k_C)` are ordered by `|T_p|`, the pooled-variance z
//! statistic. The p-value of an outcome is the supremum over the common
//! nuisance probability of the mass of all outcomes at least as extreme.
//! The supremum is taken on a uniform grid of 1000 points in (0, 1) and then
//! refined by golden-section search around the grid maxima.

use crate::error::{Error, Result};
use crate::numerics::{binomial_pmf_row, ln_choose_row};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Number of interior grid points searched for the nuisance supremum.
pub const NUISANCE_GRID: usize = 1000;
/// Width to which local maxima of the tail probability are refined.
pub const REFINE_WIDTH: f64 = 1e-6;
/// Statistics closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Responder counts of both groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseTable {
    pub k_e: u64,
    pub n_e: u64,
    pub k_c: u64,
    pub n_c: u64,
}

impl ResponseTable {
    pub fn new(k_e: u64, n_e: u64, k_c: u64, n_c: u64) -> Result<Self> {
        if n_e == 0 || n_c == 0 {
            return Err(Error::domain("both groups need at least one subject"));
        }
        if k_e > n_e || k_c > n_c {
            return Err(Error::domain("responder count exceeds group size"));
        }
        Ok(Self { k_e, n_e, k_c, n_c })
    }

    pub fn swapped(&self) -> Self {
        Self {
            k_e: self.k_c,
            n_e: self.n_c,
            k_c: self.k_e,
            n_c: self.n_e,
        }
    }
}

/// Pooled two-sample binomial z statistic; 0 when nobody or everybody responded.
pub fn pooled_z(k_e: u64, n_e: u64, k_c: u64, n_c: u64) -> f64 {
    let (ne, nc) = (n_e as f64, n_c as f64);
    let pooled = (k_e + k_c) as f64 / (ne + nc);
    if pooled <= 0.0 || pooled >= 1.0 {
        return 0.0;
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / ne + 1.0 / nc)).sqrt();
    (k_e as f64 / ne - k_c as f64 / nc) / se
}

/// Outcome space of one `(n_E, n_C)` pair ordered by extremeness, with the
/// grid supremum of every tail.
#[derive(Debug)]
pub struct ZPooledOrdering {
    n_e: u64,
    n_c: u64,
    /// Cell indices `k_e * (n_c + 1) + k_c`, most extreme first.
    order: Vec<u32>,
    /// Exclusive end (in `order`) of each tie group.
    group_end: Vec<u32>,
    /// Tie group of each cell.
    cell_group: Vec<u32>,
    /// `|T_p|` of each tie group.
    group_stat: Vec<f64>,
    /// Maximum over the nuisance grid of the tail mass through each group.
    grid_sup: Vec<f64>,
    ln_c_e: Vec<f64>,
    ln_c_c: Vec<f64>,
}

fn grid_point(i: usize) -> f64 {
    i as f64 / (NUISANCE_GRID + 1) as f64
}

impl ZPooledOrdering {
    pub fn new(n_e: u64, n_c: u64) -> Result<Self> {
        if n_e == 0 || n_c == 0 {
            return Err(Error::domain("both groups need at least one subject"));
        }
        let width = n_c as usize + 1;
        let cells = (n_e as usize + 1) * width;
        let stat: Vec<f64> = (0..cells)
            .map(|idx| pooled_z((idx / width) as u64, n_e, (idx % width) as u64, n_c).abs())
            .collect();
        let mut order: Vec<u32> = (0..cells as u32).collect();
        order.sort_by(|&a, &b| {
            stat[b as usize]
                .total_cmp(&stat[a as usize])
                .then(a.cmp(&b))
        });

        let mut group_end = Vec::new();
        let mut group_stat = Vec::new();
        let mut cell_group = vec![0u32; cells];
        let mut anchor = f64::NAN;
        for (pos, &idx) in order.iter().enumerate() {
            let s = stat[idx as usize];
            let tied = (anchor - s).abs() <= TIE_TOLERANCE * anchor.max(1.0);
            if pos == 0 || !tied {
                if pos > 0 {
                    group_end.push(pos as u32);
                }
                group_stat.push(s);
                anchor = s;
            }
            cell_group[idx as usize] = (group_stat.len() - 1) as u32;
        }
        group_end.push(cells as u32);

        let ln_c_e = ln_choose_row(n_e);
        let ln_c_c = ln_choose_row(n_c);
        let mut ordering = Self {
            n_e,
            n_c,
            order,
            group_end,
            cell_group,
            group_stat,
            grid_sup: Vec::new(),
            ln_c_e,
            ln_c_c,
        };
        ordering.grid_sup = ordering.compute_grid_sup();
        Ok(ordering)
    }

    fn compute_grid_sup(&self) -> Vec<f64> {
        let groups = self.group_end.len();
        (1..=NUISANCE_GRID)
            .into_par_iter()
            .fold(
                || vec![0.0f64; groups],
                |mut acc, i| {
                    let tails = self.group_tails(grid_point(i), groups);
                    for (a, t) in acc.iter_mut().zip(tails) {
                        *a = a.max(t);
                    }
                    acc
                },
            )
            .reduce(
                || vec![0.0f64; groups],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x = x.max(y);
                    }
                    a
                },
            )
    }

    /// Tail masses through each of the first `groups` tie groups at nuisance `p`.
    fn group_tails(&self, p: f64, groups: usize) -> Vec<f64> {
        let be = binomial_pmf_row(&self.ln_c_e, p);
        let bc = binomial_pmf_row(&self.ln_c_c, p);
        let width = self.n_c as usize + 1;
        let mut out = Vec::with_capacity(groups);
        let mut cum = 0.0;
        let mut start = 0usize;
        for &end in &self.group_end[..groups] {
            for &idx in &self.order[start..end as usize] {
                let idx = idx as usize;
                cum += be[idx / width] * bc[idx % width];
            }
            out.push(cum);
            start = end as usize;
        }
        out
    }

    /// Tail mass through tie group `group` at nuisance `p`.
    pub fn tail_mass(&self, group: usize, p: f64) -> f64 {
        let be = binomial_pmf_row(&self.ln_c_e, p);
        let bc = binomial_pmf_row(&self.ln_c_c, p);
        let width = self.n_c as usize + 1;
        self.order[..self.group_end[group] as usize]
            .iter()
            .map(|&idx| be[idx as usize / width] * bc[idx as usize % width])
            .sum()
    }

    /// Refined supremum of the tail through `group` over `p ∈ (0, 1)`.
    pub fn tail_sup(&self, group: usize) -> f64 {
        if group + 1 == self.group_end.len() {
            return 1.0;
        }
        let values: Vec<f64> = (1..=NUISANCE_GRID)
            .map(|i| self.tail_mass(group, grid_point(i)))
            .collect();
        let best = values.iter().cloned().fold(0.0, f64::max);
        let mut sup = best;
        for i in 0..values.len() {
            let left = if i == 0 { f64::NEG_INFINITY } else { values[i - 1] };
            let right = values.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
            if values[i] >= left && values[i] >= right && values[i] >= 0.5 * best {
                let lo = if i == 0 { 1e-12 } else { grid_point(i) };
                let hi = if i + 1 == values.len() {
                    1.0 - 1e-12
                } else {
                    grid_point(i + 2)
                };
                sup = sup.max(golden_max(|p| self.tail_mass(group, p), lo, hi));
            }
        }
        sup.min(1.0)
    }

    pub fn n_e(&self) -> u64 {
        self.n_e
    }

    pub fn n_c(&self) -> u64 {
        self.n_c
    }

    pub fn groups(&self) -> usize {
        self.group_end.len()
    }

    pub fn group_of(&self, k_e: u64, k_c: u64) -> usize {
        self.cell_group[k_e as usize * (self.n_c as usize + 1) + k_c as usize] as usize
    }

    pub fn group_statistic(&self, group: usize) -> f64 {
        self.group_stat[group]
    }

    /// Exact p-value of an observed outcome.
    pub fn p_value(&self, k_e: u64, k_c: u64) -> f64 {
        self.tail_sup(self.group_of(k_e, k_c))
    }

    /// Rejection region at `alpha_local`: the largest prefix of tie groups
    /// whose refined tail supremum does not exceed the level.
    pub fn rejection_region(&self, alpha_local: f64) -> ResponseRegion {
        let width = self.n_c as usize + 1;
        let cells = self.order.len();
        let mut last = self.grid_sup.iter().rposition(|&s| s <= alpha_local);
        let mut size = 0.0;
        while let Some(g) = last {
            let refined = self.tail_sup(g);
            if refined <= alpha_local {
                size = refined;
                break;
            }
            last = g.checked_sub(1);
        }
        let mut reject = vec![false; cells];
        let mut threshold = f64::INFINITY;
        if let Some(g) = last {
            for &idx in &self.order[..self.group_end[g] as usize] {
                reject[idx as usize] = true;
            }
            threshold = self.group_stat[g];
        }
        ResponseRegion {
            n_e: self.n_e,
            n_c: self.n_c,
            width,
            alpha_local,
            reject,
            size,
            threshold,
        }
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut best = fc.max(fd);
    while b - a > REFINE_WIDTH {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
            best = best.max(fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
            best = best.max(fd);
        }
    }
    best
}

/// Deterministic rejection region of the Z-pooled test for one
/// `(n_E, n_C, α̃)`.
#[derive(Debug, Clone)]
pub struct ResponseRegion {
    n_e: u64,
    n_c: u64,
    width: usize,
    alpha_local: f64,
    reject: Vec<bool>,
    size: f64,
    threshold: f64,
}

impl ResponseRegion {
    #[inline]
    pub fn rejects(&self, k_e: u64, k_c: u64) -> bool {
        self.reject[k_e as usize * self.width + k_c as usize]
    }

    pub fn n_e(&self) -> u64 {
        self.n_e
    }

    pub fn n_c(&self) -> u64 {
        self.n_c
    }

    pub fn alpha_local(&self) -> f64 {
        self.alpha_local
    }

    /// Supremum over the nuisance probability of the region's mass.
    pub fn size(&self) -> f64 {
        self.size
    }

    /// Smallest `|T_p|` inside the region (infinite when the region is empty).
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn cells(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.reject
            .iter()
            .enumerate()
            .filter(|(_, &r)| r)
            .map(move |(i, _)| ((i / self.width) as u64, (i % self.width) as u64))
    }
}

type RegionCache = Mutex<HashMap<(u64, u64, u64), Arc<ResponseRegion>>>;

fn region_cache() -> &'static RegionCache {
    static CACHE: OnceLock<RegionCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Cached rejection region for `(n_E, n_C, α̃)`.
pub fn response_region(n_e: u64, n_c: u64, alpha_local: f64) -> Result<Arc<ResponseRegion>> {
    let key = (n_e, n_c, alpha_local.to_bits());
    if let Some(r) = region_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(r.clone());
    }
    let region = Arc::new(ZPooledOrdering::new(n_e, n_c)?.rejection_region(alpha_local));
    region_cache()
        .lock()
        .expect("cache poisoned")
        .insert(key, region.clone());
    Ok(region)
}

/// Drops every cached rejection region.
pub fn clear_region_cache() {
    region_cache().lock().expect("cache poisoned").clear();
}

/// Z-pooled exact unconditional test of `p_E = p_C`.
pub fn zpooled_exact_response_test(table: &ResponseTable, alpha_local: f64) -> Result<(f64, bool)> {
    if !(alpha_local > 0.0 && alpha_local < 1.0) {
        return Err(Error::domain(format!(
            "local level must lie in (0, 1), got {alpha_local}"
        )));
    }
    let ordering = ZPooledOrdering::new(table.n_e, table.n_c)?;
    let p = ordering.p_value(table.k_e, table.k_c);
    Ok((p, p <= alpha_local))
}
