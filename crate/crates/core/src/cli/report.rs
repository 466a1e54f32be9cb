//! JSON result envelope and aligned text helpers.

use super::io::{fmt_num, round_sig};
use crate::error::Result;
use crate::inference::{NUISANCE_GRID, REFINE_WIDTH, TIE_TOLERANCE};
use crate::model::RELATION_TOLERANCE;
use crate::oc::{FULL_ENUMERATION_LIMIT, TRUNCATION_MASS};
use serde::Serialize;
use serde_json::Value;
use std::io::Write;

#[derive(Debug, Serialize)]
pub struct Tolerances {
    pub nuisance_grid: usize,
    pub refine_width: f64,
    pub tie_tolerance: f64,
    pub full_enumeration_limit: u64,
    pub truncation_mass: f64,
    pub relation_tolerance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            nuisance_grid: NUISANCE_GRID,
            refine_width: REFINE_WIDTH,
            tie_tolerance: TIE_TOLERANCE,
            full_enumeration_limit: FULL_ENUMERATION_LIMIT,
            truncation_mass: TRUNCATION_MASS,
            relation_tolerance: RELATION_TOLERANCE,
        }
    }
}

#[derive(Debug, Default, Serialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<u64>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Serialize)]
pub struct Envelope<'a, I: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub input: I,
    pub results: R,
    pub provenance: Provenance,
}

impl<'a, I: Serialize, R: Serialize> Envelope<'a, I, R> {
    pub fn new(command: &'a str, input: I, results: R, provenance: Provenance) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input,
            results,
            provenance,
        }
    }

    /// Pretty JSON with every float rounded to ten significant digits.
    /// Unbounded interval endpoints become `null`.
    pub fn write(&self, out: &mut dyn Write) -> Result<()> {
        let mut value = serde_json::to_value(self).map_err(std::io::Error::other)?;
        round_floats(&mut value);
        serde_json::to_writer_pretty(&mut *out, &value).map_err(std::io::Error::other)?;
        writeln!(out)?;
        Ok(())
    }
}

fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64().and_then(|x| serde_json::Number::from_f64(round_sig(x))) {
                *n = x;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

/// Fixed-width text table.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn write(&self, out: &mut dyn Write) -> Result<()> {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        writeln!(out, "{}", line(&self.header))?;
        for row in &self.rows {
            writeln!(out, "{}", line(row))?;
        }
        Ok(())
    }
}

pub fn num(x: f64) -> String {
    fmt_num(x)
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "absent".to_string(), fmt_num)
}

pub fn yes_no(b: bool) -> String {
    if b { "yes" } else { "no" }.to_string()
}
