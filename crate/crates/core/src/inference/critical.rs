//! Conditional beta-prime tests of equal stratum hazards.
//!
//! Given `k_E, k_C ≥ 1` subjects in a stratum, `d = θ̂_E − θ̂_C` satisfies
//! `(λ_C/λ_E)(k_C/k_E) e^d ~ β′(k_C, k_E)`, so under equal hazards the
//! distribution of `d` is free of the hazards.

use crate::error::{Error, Result};
use crate::numerics::{beta_prime_pair, bisect_decreasing, normal_quantile};
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Two-sided tail `P(|D| ≥ c)` of the null distribution of `d`.
pub fn conditional_tail(k_e: u64, k_c: u64, c: f64) -> f64 {
    let (a, b) = (k_c as f64, k_e as f64);
    let r = a / b;
    let upper = beta_prime_pair(a, b, r * c.exp()).1;
    let lower = beta_prime_pair(a, b, r * (-c).exp()).0;
    (upper + lower).min(1.0)
}

/// Exact conditional p-value for an observed log-hazard difference.
pub fn conditional_p_value(k_e: u64, k_c: u64, diff: f64) -> f64 {
    if k_e == 0 || k_c == 0 {
        return 1.0;
    }
    conditional_tail(k_e, k_c, diff.abs())
}

/// Probability that the conditional test does **not** reject when the true
/// hazard ratio is `rho = λ_C / λ_E` and the critical value is `c`.
///
/// Returns `(accept, reject)` with each side evaluated on its accurate tail.
pub fn conditional_acceptance(k_e: u64, k_c: u64, rho: f64, c: f64) -> (f64, f64) {
    if k_e == 0 || k_c == 0 {
        return (1.0, 0.0);
    }
    let (a, b) = (k_c as f64, k_e as f64);
    let r = rho * a / b;
    let (f_hi, sf_hi) = beta_prime_pair(a, b, r * c.exp());
    let f_lo = beta_prime_pair(a, b, r * (-c).exp()).0;
    let reject = (sf_hi + f_lo).min(1.0);
    ((f_hi - f_lo).max(0.0), reject)
}

/// Critical value `c > 0` with `P(|D| ≥ c) = alpha_local` under the null.
///
/// The bisection keeps `c` on the side where the tail does not exceed the
/// level, so tests built on it never exceed `alpha_local`.
pub fn conditional_critical_value(k_e: u64, k_c: u64, alpha_local: f64) -> Result<f64> {
    if k_e == 0 || k_c == 0 {
        return Err(Error::domain("critical value needs at least one subject per group"));
    }
    if !(alpha_local > 0.0 && alpha_local < 1.0) {
        return Err(Error::domain(format!(
            "local level must lie in (0, 1), got {alpha_local}"
        )));
    }
    let g = |c: f64| conditional_tail(k_e, k_c, c) - alpha_local;
    let z = normal_quantile(1.0 - 0.5 * alpha_local)?;
    let guess = z * (1.0 / k_e as f64 + 1.0 / k_c as f64).sqrt();
    let mut lo = 0.0;
    let mut hi = 1.5 * guess;
    let mut guard = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return Err(Error::Convergence("critical value bracket".into()));
        }
    }
    if g(0.5 * guess) >= 0.0 && 0.5 * guess > lo {
        lo = 0.5 * guess;
    }
    let (_, hi) = bisect_decreasing(g, lo, hi, 1e-13 * (1.0 + hi));
    Ok(hi)
}

/// Critical values `c(a, b)` for `1 ≤ a, b ≤ max_k` at one local level.
#[derive(Debug)]
pub struct CriticalTable {
    alpha_local: f64,
    max_k: usize,
    values: Vec<f64>,
}

impl CriticalTable {
    pub fn build(alpha_local: f64, max_k: usize) -> Result<Self> {
        Self::extend_from(alpha_local, max_k, None)
    }

    fn extend_from(alpha_local: f64, max_k: usize, old: Option<&CriticalTable>) -> Result<Self> {
        let width = max_k + 1;
        // c(a, b) = c(b, a): the two-sided tail is symmetric in the labels
        let rows: Vec<Vec<f64>> = (1..=max_k)
            .into_par_iter()
            .map(|a| {
                (a..=max_k)
                    .map(|b| match old {
                        Some(t) if b <= t.max_k => Ok(t.get(a as u64, b as u64)),
                        _ => conditional_critical_value(a as u64, b as u64, alpha_local),
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = vec![f64::NAN; width * width];
        for (i, row) in rows.iter().enumerate() {
            let a = i + 1;
            for (j, &c) in row.iter().enumerate() {
                let b = a + j;
                values[a * width + b] = c;
                values[b * width + a] = c;
            }
        }
        Ok(Self {
            alpha_local,
            max_k,
            values,
        })
    }

    pub fn alpha_local(&self) -> f64 {
        self.alpha_local
    }

    pub fn max_k(&self) -> usize {
        self.max_k
    }

    /// Critical value for `1 ≤ k_e, k_c ≤ max_k`.
    #[inline]
    pub fn get(&self, k_e: u64, k_c: u64) -> f64 {
        self.values[k_e as usize * (self.max_k + 1) + k_c as usize]
    }
}

type TableCache = Mutex<HashMap<u64, Arc<CriticalTable>>>;

fn table_cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Shared critical-value table covering at least `max_k`, computed once per
/// level and grown on demand.
pub fn critical_table(alpha_local: f64, max_k: usize) -> Result<Arc<CriticalTable>> {
    let key = alpha_local.to_bits();
    let existing = table_cache().lock().expect("cache poisoned").get(&key).cloned();
    if let Some(t) = &existing {
        if t.max_k >= max_k {
            return Ok(t.clone());
        }
    }
    let target = match &existing {
        Some(t) => max_k.max(t.max_k + t.max_k / 2),
        None => max_k,
    };
    let table = Arc::new(CriticalTable::extend_from(
        alpha_local,
        target.max(1),
        existing.as_deref(),
    )?);
    let mut cache = table_cache().lock().expect("cache poisoned");
    let entry = cache.entry(key).or_insert_with(|| table.clone());
    if entry.max_k < table.max_k {
        *entry = table.clone();
    }
    Ok(entry.clone())
}
