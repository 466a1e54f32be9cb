//! Command-line surface: argument definitions and the command
//! implementations behind the `rses` binary.
//!
//! Every command writes its primary output (a report or a CSV grid) to the
//! writer passed to [`run`] or to `--output`; diagnostics go to stderr.

pub mod config;
pub mod io;
mod report;

use crate::design::{approx_sample_size, exact_sample_size, DesignResult, DesignSpec};
use crate::error::{Error, Result};
use crate::estimation::{
    ci_p, ci_theta0, ci_theta1, coverage_p, coverage_theta0, coverage_theta1, fit_mle,
    ConfidenceInterval, MleResult,
};
use crate::inference::{run_test, Method, TestOutcome};
use crate::logrank::{simulate_many, simulate_trial, SimulationReport, SimulationSetup};
use crate::model::{classify_relation, survival, CurveRelation, Dataset, Group, RELATION_TOLERANCE};
use crate::oc::{rejection_probability, OcRequest};
use clap::{Parser, Subcommand, ValueEnum};
use config::ScenarioConfig;
use io::{read_dataset, write_dataset, Cell, CsvOut};
use rayon::prelude::*;
use report::{num, opt_num, yes_no, Envelope, Provenance, Table};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Environment variable that sets the worker thread count.
pub const THREADS_ENV: &str = "RSES_THREADS";

#[derive(Debug, Parser)]
#[command(name = "rses", version, about = "Tests, operating characteristics and sample sizes for the responder-stratified exponential survival model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Aligned text reports; CSV for grid commands.
    #[default]
    Text,
    /// JSON envelope with input echo and provenance.
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Maximum likelihood estimates and confidence intervals per group.
    Fit {
        /// CSV with header group,response,time.
        input: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Test of the global null of equal parameter triples.
    Test {
        input: PathBuf,
        /// approx or exact.
        #[arg(long, default_value = "exact")]
        method: Method,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Exact rejection probabilities over a grid of control-group sizes.
    Oc {
        config: PathBuf,
        #[arg(long, default_value = "exact")]
        test: Method,
        /// Control-group sizes, comma separated; overrides the config.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Approximate or exact sample size for every scenario.
    Samplesize {
        config: PathBuf,
        #[arg(long, default_value = "approx")]
        method: Method,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Monte Carlo rejection rates of the RSES and logrank tests.
    Simulate {
        config: PathBuf,
        /// Also write the first simulated trial as a data CSV.
        #[arg(long)]
        emit_data: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Marginal survival curves on a time grid plus their relation.
    Curves {
        config: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        tmax: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Exact coverage probabilities of the asymptotic confidence intervals.
    Coverage {
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<u64>,
        #[arg(long, value_delimiter = ',', required = true)]
        p_grid: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

/// Applies the thread-count override, if set.
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{value}'")))?;
    // a second initialisation (e.g. in tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Fit { input, level, format } => cmd_fit(input, *level, *format, out),
        Command::Test {
            input,
            method,
            alpha,
            format,
        } => cmd_test(input, *method, *alpha, *format, out),
        Command::Oc {
            config,
            test,
            grid,
            output,
            format,
        } => cmd_oc(config, *test, grid, output.as_deref(), *format, out),
        Command::Samplesize {
            config,
            method,
            format,
        } => cmd_samplesize(config, *method, *format, out),
        Command::Simulate {
            config,
            emit_data,
            output,
            format,
        } => cmd_simulate(config, emit_data.as_deref(), output.as_deref(), *format, out),
        Command::Curves {
            config,
            tmax,
            points,
            output,
            format,
        } => cmd_curves(config, *tmax, *points, output.as_deref(), *format, out),
        Command::Coverage {
            n_grid,
            p_grid,
            level,
            output,
            format,
        } => cmd_coverage(n_grid, p_grid, *level, output.as_deref(), *format, out),
    }
}

/// Runs `write` against `--output` when given, else against `out`.
fn with_destination(
    output: Option<&Path>,
    out: &mut dyn Write,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match output {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            write(&mut file)?;
            file.flush()?;
            Ok(())
        }
        None => write(out),
    }
}

fn check_level(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn split_groups(data: &Dataset) -> (Dataset, Dataset) {
    let part = |g| Dataset::new(data.group(g).copied().collect());
    (part(Group::Experimental), part(Group::Control))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct GroupFit {
    group: &'static str,
    #[serde(flatten)]
    mle: MleResult,
    ci_p: ConfidenceInterval,
    ci_theta1: ConfidenceInterval,
    ci_theta0: ConfidenceInterval,
}

fn interval(ci: &ConfidenceInterval) -> String {
    format!("[{}, {}]", num(ci.lower), num(ci.upper))
}

fn cmd_fit(input: &Path, level: f64, format: Format, out: &mut dyn Write) -> Result<()> {
    check_level("level", level)?;
    let data = read_dataset(input)?;
    let fits = [Group::Experimental, Group::Control]
        .into_iter()
        .map(|g| {
            let mle = fit_mle(&data, g)?;
            Ok(GroupFit {
                group: g.label(),
                ci_p: ci_p(&mle, level)?,
                ci_theta1: ci_theta1(&mle, level)?,
                ci_theta0: ci_theta0(&mle, level)?,
                mle,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Input<'a> {
                input: &'a Path,
                level: f64,
            }
            Envelope::new("fit", Input { input, level }, &fits, Provenance::default()).write(out)
        }
        Format::Text => {
            let mut t = Table::new(&["group", "parameter", "estimate", "interval"]);
            for f in &fits {
                let g = f.group.to_string();
                t.push(vec![g.clone(), "n".into(), f.mle.n.to_string(), String::new()]);
                t.push(vec![g.clone(), "k".into(), f.mle.k.to_string(), String::new()]);
                t.push(vec![g.clone(), "p".into(), num(f.mle.p_hat), interval(&f.ci_p)]);
                t.push(vec![g.clone(), "theta1".into(), opt_num(f.mle.theta1_hat), interval(&f.ci_theta1)]);
                t.push(vec![g, "theta0".into(), opt_num(f.mle.theta0_hat), interval(&f.ci_theta0)]);
            }
            writeln!(out, "confidence level {}", num(level))?;
            t.write(out)
        }
    }
}

// ---------------------------------------------------------------------------
// test
// ---------------------------------------------------------------------------

fn cmd_test(input: &Path, method: Method, alpha: f64, format: Format, out: &mut dyn Write) -> Result<()> {
    check_level("alpha", alpha)?;
    let data = read_dataset(input)?;
    let (e, c) = split_groups(&data);
    if e.is_empty() {
        return Err(Error::EmptyGroup("E".into()));
    }
    if c.is_empty() {
        return Err(Error::EmptyGroup("C".into()));
    }
    let outcome = run_test(method, &e, &c, alpha)?;
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Input<'a> {
                input: &'a Path,
                method: Method,
                alpha: f64,
            }
            Envelope::new("test", Input { input, method, alpha }, &outcome, Provenance::default()).write(out)
        }
        Format::Text => write_outcome(&outcome, alpha, out),
    }
}

fn write_outcome(o: &TestOutcome, alpha: f64, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "method       {}", o.method)?;
    writeln!(out, "alpha        {}", num(alpha))?;
    let mut t = Table::new(&["hypothesis", "local level", "statistic", "p-value", "reject", "degenerate"]);
    for (name, level, test) in [
        ("response", o.levels.response, &o.response),
        ("theta1", o.levels.theta1, &o.theta1),
        ("theta0", o.levels.theta0, &o.theta0),
    ] {
        t.push(vec![
            name.into(),
            num(level),
            num(test.statistic),
            num(test.p_value),
            yes_no(test.reject),
            yes_no(test.degenerate),
        ]);
    }
    t.write(out)?;
    writeln!(out, "global null rejected: {}", yes_no(o.reject_global))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// oc
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct OcRow {
    scenario: String,
    n: u64,
    n_e: u64,
    n_c: u64,
    rate: f64,
    response_contribution: f64,
    theta_contribution: f64,
    truncated_mass: f64,
}

fn cmd_oc(
    config_path: &Path,
    test: Method,
    grid: &[u64],
    output: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
) -> Result<()> {
    let config = ScenarioConfig::load(config_path)?;
    if grid.contains(&0) {
        return Err(Error::Domain("grid sizes must be at least 1".into()));
    }
    let levels = config.levels()?;
    let mut requests = Vec::new();
    for s in &config.scenarios {
        let sizes = if grid.is_empty() { config.sizes_for(s) } else { grid };
        if sizes.is_empty() {
            return Err(Error::Config(format!("scenario '{}' has no sizes; pass --grid", s.name)));
        }
        for &n in sizes {
            let req = OcRequest::from_levels(s.model(), config.n_e_for(s, n), n, levels, test)?;
            requests.push((s.name.clone(), n, req));
        }
    }
    let rows = requests
        .into_iter()
        .map(|(scenario, n, req)| {
            let r = rejection_probability(&req)?;
            Ok(OcRow {
                scenario,
                n,
                n_e: req.n_e,
                n_c: req.n_c,
                rate: r.rejection_probability,
                response_contribution: r.response_contribution,
                theta_contribution: r.theta_contribution,
                truncated_mass: r.truncated_mass,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let multi = config.scenarios.len() > 1;
    with_destination(output, out, |w| match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Input<'a> {
                config: &'a ScenarioConfig,
                test: Method,
                grid: &'a [u64],
            }
            Envelope::new("oc", Input { config: &config, test, grid }, &rows, Provenance::default()).write(w)
        }
        Format::Text => {
            let header: &[&str] = if multi { &["scenario", "n", "rate"] } else { &["n", "rate"] };
            let mut csv = CsvOut::new(w, header)?;
            for r in &rows {
                if multi {
                    csv.row(&[Cell::Text(&r.scenario), Cell::Int(r.n), Cell::Num(r.rate)])?;
                } else {
                    csv.row(&[Cell::Int(r.n), Cell::Num(r.rate)])?;
                }
            }
            csv.finish()
        }
    })
}

// ---------------------------------------------------------------------------
// samplesize
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct DesignRow {
    scenario: String,
    #[serde(flatten)]
    result: DesignResult,
}

fn cmd_samplesize(config_path: &Path, method: Method, format: Format, out: &mut dyn Write) -> Result<()> {
    let config = ScenarioConfig::load(config_path)?;
    let levels = config.levels()?;
    let specs = config
        .scenarios
        .iter()
        .map(|s| Ok((s.name.clone(), DesignSpec::with_levels(s.model(), config.ratio_for(s), levels, config.beta)?)))
        .collect::<Result<Vec<_>>>()?;
    let rows = specs
        .into_iter()
        .map(|(scenario, spec)| {
            let result = match method {
                Method::Approximate => approx_sample_size(&spec)?,
                Method::Exact => exact_sample_size(&spec, config.max_n)?,
            };
            Ok(DesignRow { scenario, result })
        })
        .collect::<Result<Vec<_>>>()?;
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Input<'a> {
                config: &'a ScenarioConfig,
                method: Method,
            }
            Envelope::new("samplesize", Input { config: &config, method }, &rows, Provenance::default()).write(out)
        }
        Format::Text => {
            writeln!(out, "method {method}, target power {}", num(1.0 - config.beta))?;
            let mut t = Table::new(&[
                "scenario",
                "n_C",
                "n_E",
                "power exact test",
                "power approx test",
                "approx acceptance",
                "iterations",
            ]);
            for r in &rows {
                let d = &r.result;
                t.push(vec![
                    r.scenario.clone(),
                    d.n_c.to_string(),
                    d.n_e.to_string(),
                    num(d.achieved_power),
                    num(d.approx_test_power),
                    num(d.approx_acceptance),
                    d.iterations.to_string(),
                ]);
            }
            t.write(out)
        }
    }
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct SimRow {
    scenario: String,
    n_e: u64,
    n_c: u64,
    #[serde(flatten)]
    report: SimulationReport,
}

fn cmd_simulate(
    config_path: &Path,
    emit_data: Option<&Path>,
    output: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
) -> Result<()> {
    let config = ScenarioConfig::load(config_path)?;
    let tests = config.sim_tests();
    let mut setups = Vec::new();
    for s in &config.scenarios {
        let sizes = config.sizes_for(s);
        if sizes.is_empty() {
            return Err(Error::Config(format!("scenario '{}' has no sizes", s.name)));
        }
        for &n in sizes {
            setups.push((
                s.name.clone(),
                SimulationSetup {
                    model: s.model(),
                    n_e: config.n_e_for(s, n),
                    n_c: n,
                    alpha: config.alpha,
                    runs: config.runs,
                    seed: config.seed,
                },
            ));
        }
    }
    if let Some(path) = emit_data {
        let [(_, setup)] = setups.as_slice() else {
            return Err(Error::Config("--emit-data needs exactly one scenario with one size".into()));
        };
        let data = simulate_trial(&setup.model, setup.n_e, setup.n_c, setup.seed, 0);
        let mut file = BufWriter::new(File::create(path)?);
        write_dataset(&data, &mut file)?;
        file.flush()?;
    }
    let mut rows = Vec::new();
    for (scenario, setup) in &setups {
        for report in simulate_many(setup, &tests)? {
            rows.push(SimRow {
                scenario: scenario.clone(),
                n_e: setup.n_e,
                n_c: setup.n_c,
                report,
            });
        }
    }
    with_destination(output, out, |w| match format {
        Format::Json => {
            let provenance = Provenance {
                seed: Some(config.seed),
                runs: Some(config.runs),
                ..Provenance::default()
            };
            Envelope::new("simulate", &config, &rows, provenance).write(w)
        }
        Format::Text => {
            let mut csv = CsvOut::new(
                w,
                &["scenario", "n_e", "n_c", "test", "runs", "rejections", "rate", "standard_error", "seed"],
            )?;
            for r in &rows {
                csv.row(&[
                    Cell::Text(&r.scenario),
                    Cell::Int(r.n_e),
                    Cell::Int(r.n_c),
                    Cell::Text(r.report.test.name()),
                    Cell::Int(r.report.runs),
                    Cell::Int(r.report.rejections),
                    Cell::Num(r.report.rate),
                    Cell::Num(r.report.standard_error),
                    Cell::Int(r.report.seed),
                ])?;
            }
            csv.finish()
        }
    })
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CurveSet {
    scenario: String,
    relation: CurveRelation,
    t: Vec<f64>,
    s_e: Vec<f64>,
    s_c: Vec<f64>,
}

fn cmd_curves(
    config_path: &Path,
    tmax: f64,
    points: usize,
    output: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
) -> Result<()> {
    if !(tmax > 0.0 && tmax.is_finite()) {
        return Err(Error::Domain(format!("tmax must be positive, got {tmax}")));
    }
    if points < 2 {
        return Err(Error::Domain("points must be at least 2".into()));
    }
    let config = ScenarioConfig::load(config_path)?;
    let t: Vec<f64> = (0..points)
        .map(|i| tmax * i as f64 / (points - 1) as f64)
        .collect();
    let sets = config
        .scenarios
        .iter()
        .map(|s| {
            let curve = |p| t.iter().map(|&x| survival(p, x)).collect::<Result<Vec<_>>>();
            Ok(CurveSet {
                scenario: s.name.clone(),
                relation: classify_relation(&s.model(), RELATION_TOLERANCE),
                t: t.clone(),
                s_e: curve(&s.experimental)?,
                s_c: curve(&s.control)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let multi = sets.len() > 1;
    with_destination(output, out, |w| match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Input<'a> {
                config: &'a ScenarioConfig,
                tmax: f64,
                points: usize,
            }
            Envelope::new("curves", Input { config: &config, tmax, points }, &sets, Provenance::default()).write(w)
        }
        Format::Text => {
            let header: &[&str] = if multi { &["scenario", "t", "S_E", "S_C"] } else { &["t", "S_E", "S_C"] };
            let mut csv = CsvOut::new(w, header)?;
            for set in &sets {
                for i in 0..points {
                    let nums = [Cell::Num(set.t[i]), Cell::Num(set.s_e[i]), Cell::Num(set.s_c[i])];
                    if multi {
                        let [a, b, c] = nums;
                        csv.row(&[Cell::Text(&set.scenario), a, b, c])?;
                    } else {
                        csv.row(&nums)?;
                    }
                }
            }
            csv.finish()
        }
    })?;
    if format == Format::Text {
        // the relation tag accompanies the grid: on stdout when the grid went
        // to a file, on stderr when stdout carries the CSV
        for set in &sets {
            let line = format!("relation {}: {}", set.scenario, set.relation);
            if output.is_some() {
                writeln!(out, "{line}")?;
            } else {
                eprintln!("{line}");
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// coverage
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CoverageRow {
    n: u64,
    p: f64,
    level: f64,
    coverage_p: f64,
    coverage_theta1: f64,
    coverage_theta0: f64,
}

fn cmd_coverage(
    n_grid: &[u64],
    p_grid: &[f64],
    level: f64,
    output: Option<&Path>,
    format: Format,
    out: &mut dyn Write,
) -> Result<()> {
    check_level("level", level)?;
    if n_grid.contains(&0) {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    if let Some(p) = p_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("p must lie in [0, 1], got {p}")));
    }
    let cells: Vec<(u64, f64)> = n_grid
        .iter()
        .flat_map(|&n| p_grid.iter().map(move |&p| (n, p)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|&(n, p)| {
            Ok(CoverageRow {
                n,
                p,
                level,
                coverage_p: coverage_p(n, p, level)?,
                coverage_theta1: coverage_theta1(n, p, level)?,
                coverage_theta0: coverage_theta0(n, p, level)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    with_destination(output, out, |w| match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Input<'a> {
                n_grid: &'a [u64],
                p_grid: &'a [f64],
                level: f64,
            }
            Envelope::new("coverage", Input { n_grid, p_grid, level }, &rows, Provenance::default()).write(w)
        }
        Format::Text => {
            let mut csv = CsvOut::new(w, &["n", "p", "level", "coverage_p", "coverage_theta1", "coverage_theta0"])?;
            for r in &rows {
                csv.row(&[
                    Cell::Int(r.n),
                    Cell::Num(r.p),
                    Cell::Num(r.level),
                    Cell::Num(r.coverage_p),
                    Cell::Num(r.coverage_theta1),
                    Cell::Num(r.coverage_theta0),
                ])?;
            }
            csv.finish()
        }
    })
}
