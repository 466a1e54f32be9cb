//! End-to-end runs of the `rses` binary.

mod common;

use common::*;
use rses::inference::{exact_test, Method};
use rses::model::{Dataset, Group, SubjectRecord};
use rses::oc::{rejection_probability, OcRequest};
use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn rses(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rses")).args(args).output().unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses RFC-4180 text, checking the header and a constant field count.
fn csv_rows(text: &str, header: &[&str]) -> Vec<csv::StringRecord> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), header);
    reader.records().map(|r| r.unwrap()).collect()
}

fn model_json(m: &rses::model::TwoGroupModel) -> String {
    let g = |p: &rses::model::RsesParams| {
        format!(r#"{{"p": {}, "lambda1": {}, "lambda0": {}}}"#, p.p(), p.lambda1(), p.lambda0())
    };
    format!(r#""experimental": {}, "control": {}"#, g(&m.experimental), g(&m.control))
}

fn config(extra: &str, scenarios: &[(&str, rses::model::TwoGroupModel)]) -> String {
    let list: Vec<String> = scenarios
        .iter()
        .map(|(name, m)| format!(r#"{{"name": "{name}", {}}}"#, model_json(m)))
        .collect();
    format!(r#"{{"schema_version": 1, {extra} "scenarios": [{}]}}"#, list.join(", "))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(1e-300)
}

const SMALL: &str = "group,response,time\nE,1,0.5\nE,0,2\nC,1,1\nC,0,1.5\nC,0,0.7\n";

// ---------------------------------------------------------------------------
// fit and test
// ---------------------------------------------------------------------------

#[test]
fn fit_reports_closed_form_estimates() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", SMALL);
    let v: Value = serde_json::from_str(&stdout(&rses(&["fit", s(&data), "--format", "json"]))).unwrap();
    let e = &v["results"][0];
    assert_eq!(e["group"], "E");
    assert_eq!(e["n"], 2);
    assert_eq!(e["k"], 1);
    assert_eq!(e["p_hat"], 0.5);
    // θ̂ = −log(mean stratum time)
    assert!(close(e["theta1_hat"].as_f64().unwrap(), -(0.5f64.ln())));
    assert!(close(e["theta0_hat"].as_f64().unwrap(), -(2.0f64.ln())));
    let c = &v["results"][1];
    assert!(close(c["theta0_hat"].as_f64().unwrap(), -(1.1f64.ln())));
    let text = stdout(&rses(&["fit", s(&data)]));
    assert!(text.contains("theta1"));
}

#[test]
fn fit_marks_missing_stratum_absent() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "d.csv", "group,response,time\nE,1,0.5\nE,1,2\nC,1,1\nC,0,1.5\n");
    let v: Value = serde_json::from_str(&stdout(&rses(&["fit", s(&data), "--format", "json"]))).unwrap();
    assert!(v["results"][0]["theta0_hat"].is_null());
    let text = stdout(&rses(&["fit", s(&data)]));
    assert!(text.contains("absent"));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.csv", "group,response,time\nE,1,-0.5\n");
    let out = rses(&["fit", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let garbled = write(&dir, "g.csv", "group,response,time\nE,1,0.5\nX,1,1\n");
    let err = rses(&["fit", s(&garbled)]);
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).contains("line 3"));

    let one = write(&dir, "one.csv", "group,response,time\nE,1,0.5\n");
    let out = rses(&["fit", s(&one)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no data for group C"));

    let data = write(&dir, "d.csv", SMALL);
    for alpha in ["1.5", "0", "-0.1"] {
        assert_eq!(rses(&["test", s(&data), "--alpha", alpha]).status.code(), Some(2));
    }
    assert_eq!(rses(&["fit", s(&dir.path().join("missing.csv"))]).status.code(), Some(4));
}

#[test]
fn identical_groups_accept() {
    let dir = TempDir::new().unwrap();
    let body = "group,response,time\nE,1,0.5\nE,0,2\nE,0,1\nC,1,0.5\nC,0,2\nC,0,1\n";
    let data = write(&dir, "d.csv", body);
    for method in ["approx", "exact"] {
        let text = stdout(&rses(&["test", s(&data), "--method", method]));
        assert!(text.contains("global null rejected: no"), "{text}");
    }
}

#[test]
fn test_command_matches_library() {
    let dir = TempDir::new().unwrap();
    let model = plus_resp_plus_surv_large();
    let d = rses::logrank::simulate_trial(&model, 30, 30, 4, 0);
    let mut body = String::from("group,response,time\n");
    for r in &d.records {
        body += &format!("{},{},{:?}\n", r.group.label(), r.responder as u8, r.time);
    }
    let data = write(&dir, "d.csv", &body);
    let v: Value = serde_json::from_str(&stdout(&rses(&["test", s(&data), "--format", "json"]))).unwrap();
    let e = Dataset::new(d.group(Group::Experimental).cloned().collect());
    let c = Dataset::new(d.group(Group::Control).cloned().collect());
    let lib = exact_test(&e, &c, 0.05).unwrap();
    let r = &v["results"];
    assert_eq!(r["reject_global"], lib.reject_global);
    for (key, local) in [("response", &lib.response), ("theta1", &lib.theta1), ("theta0", &lib.theta0)] {
        assert!(close(r[key]["statistic"].as_f64().unwrap(), local.statistic), "{key}");
        assert!(close(r[key]["p_value"].as_f64().unwrap(), local.p_value), "{key}");
        assert_eq!(r[key]["reject"], local.reject);
        assert_eq!(r[key]["degenerate"], local.degenerate);
    }
    assert_eq!(v["provenance"]["tolerances"]["nuisance_grid"], 1000);
}

// ---------------------------------------------------------------------------
// oc, samplesize, simulate
// ---------------------------------------------------------------------------

#[test]
fn oc_single_cell_equals_library_call() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config("", &[("s2", null_rare_responders())]));
    for (flag, method) in [("exact", Method::Exact), ("approx", Method::Approximate)] {
        let text = stdout(&rses(&["oc", s(&cfg), "--test", flag, "--grid", "20"]));
        let rows = csv_rows(&text, &["n", "rate"]);
        assert_eq!(rows.len(), 1);
        let lib = rejection_probability(&OcRequest::new(null_rare_responders(), 20, 20, 0.05, method).unwrap())
            .unwrap()
            .rejection_probability;
        assert_eq!(&rows[0][0], "20");
        assert!(close(rows[0][1].parse().unwrap(), lib));
    }
}

#[test]
fn oc_grid_output_is_csv_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(r#""sizes": [5, 10, 20, 50],"#, &[("s2", null_rare_responders())]));
    let out = dir.path().join("oc.csv");
    stdout(&rses(&["oc", s(&cfg), "--output", s(&out)]));
    let first = std::fs::read(&out).unwrap();
    stdout(&rses(&["oc", s(&cfg), "--output", s(&out)]));
    assert_eq!(first, std::fs::read(&out).unwrap());
    let rows = csv_rows(std::str::from_utf8(&first).unwrap(), &["n", "rate"]);
    let ns: Vec<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(ns, ["5", "10", "20", "50"]);
    assert!(rows.iter().all(|r| r[1].parse::<f64>().unwrap() <= 0.05));

    let two = write(&dir, "two.json", &config(r#""sizes": [10],"#, &[("a", null_equal_hazards()), ("b", plus_surv())]));
    let rows = csv_rows(&stdout(&rses(&["oc", s(&two)])), &["scenario", "n", "rate"]);
    assert_eq!(rows.iter().map(|r| r[0].to_string()).collect::<Vec<_>>(), ["a", "b"]);
}

#[test]
fn samplesize_reports_and_rejects_no_effect() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", &config(r#""ratio": 2,"#, &[("c2", constellation(2, 0.52))]));
    let approx: Value =
        serde_json::from_str(&stdout(&rses(&["samplesize", s(&cfg), "--format", "json"]))).unwrap();
    let a = &approx["results"][0];
    assert_eq!(a["n_e"].as_u64().unwrap(), 2 * a["n_c"].as_u64().unwrap());
    let exact: Value = serde_json::from_str(&stdout(&rses(&[
        "samplesize",
        s(&cfg),
        "--method",
        "exact",
        "--format",
        "json",
    ])))
    .unwrap();
    let e = &exact["results"][0];
    assert!(e["n_c"].as_u64().unwrap() + 2 >= a["n_c"].as_u64().unwrap());
    assert!(e["achieved_power"].as_f64().unwrap() >= 0.8);

    let none = write(&dir, "n.json", &config("", &[("null", null_equal_hazards())]));
    let out = rses(&["samplesize", s(&none)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undefined design"));
}

#[test]
fn simulate_is_byte_identical_and_matches_oc() {
    let dir = TempDir::new().unwrap();
    let body = config(
        r#""sizes": [40], "runs": 20000, "seed": 9, "tests": ["exact-rses", "logrank"],"#,
        &[("rs", plus_resp_small())],
    );
    let cfg = write(&dir, "c.json", &body);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    stdout(&rses(&["simulate", s(&cfg), "--output", s(&a)]));
    stdout(&rses(&["simulate", s(&cfg), "--output", s(&b)]));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    let header = ["scenario", "n_e", "n_c", "test", "runs", "rejections", "rate", "standard_error", "seed"];
    let rows = csv_rows(&text, &header);
    assert_eq!(&rows[0][3], "exact-rses");
    assert_eq!(&rows[1][3], "logrank");
    let rate: f64 = rows[0][6].parse().unwrap();
    let exact = rejection_probability(&OcRequest::new(plus_resp_small(), 40, 40, 0.05, Method::Exact).unwrap())
        .unwrap()
        .rejection_probability;
    assert!((rate - exact).abs() <= 3.0 * (exact * (1.0 - exact) / 20000.0).sqrt(), "{rate} vs {exact}");

    let zero = write(&dir, "z.json", &config(r#""sizes": [40], "runs": 0,"#, &[("rs", plus_resp_small())]));
    assert_eq!(rses(&["simulate", s(&zero)]).status.code(), Some(2));
}

#[test]
fn emitted_data_round_trips_through_fit() {
    let dir = TempDir::new().unwrap();
    let model = plus_resp_plus_surv_large();
    let cfg = write(&dir, "c.json", &config(r#""sizes": [100000], "runs": 1, "tests": ["logrank"],"#, &[("big", model)]));
    let data = dir.path().join("trial.csv");
    stdout(&rses(&["simulate", s(&cfg), "--emit-data", s(&data)]));
    let fit: Value = serde_json::from_str(&stdout(&rses(&["fit", s(&data), "--format", "json"]))).unwrap();
    for (i, params) in [model.experimental, model.control].iter().enumerate() {
        let g = &fit["results"][i];
        assert_eq!(g["n"], 100_000);
        for (hat, ci, truth) in [
            ("p_hat", "ci_p", params.p()),
            ("theta1_hat", "ci_theta1", params.theta1()),
            ("theta0_hat", "ci_theta0", params.theta0()),
        ] {
            let se = (g[ci]["upper"].as_f64().unwrap() - g[ci]["lower"].as_f64().unwrap()) / (2.0 * 1.959963985);
            let est = g[hat].as_f64().unwrap();
            assert!((est - truth).abs() <= 3.0 * se, "group {i} {hat}: {est} vs {truth}");
        }
    }
    let multi = write(&dir, "m.json", &config(r#""sizes": [10, 20], "runs": 1,"#, &[("x", model)]));
    assert_eq!(rses(&["simulate", s(&multi), "--emit-data", s(&data)]).status.code(), Some(2));
}

// ---------------------------------------------------------------------------
// curves and coverage
// ---------------------------------------------------------------------------

#[test]
fn curves_start_at_one_and_tag_relation() {
    let dir = TempDir::new().unwrap();
    let equal = write(&dir, "e.json", &config("", &[("eq", null_rare_responders())]));
    let out = rses(&["curves", s(&equal), "--tmax", "5", "--points", "11"]);
    let rows = csv_rows(&stdout(&out), &["t", "S_E", "S_C"]);
    assert_eq!(rows.len(), 11);
    assert_eq!((&rows[0][0], &rows[0][1], &rows[0][2]), ("0", "1", "1"));
    assert!(rows.iter().all(|r| r[1] == r[2]));
    assert!(String::from_utf8_lossy(&out.stderr).contains("CompletelyEqual"));

    let crossing = rses::model::TwoGroupModel::new(params(0.5, 0.1, 0.3), params(0.5, 0.02, 0.8));
    let cfg = write(&dir, "x.json", &config("", &[("cross", crossing)]));
    let path = dir.path().join("curves.csv");
    let tag = stdout(&rses(&["curves", s(&cfg), "--tmax", "30", "--points", "301", "--output", s(&path)]));
    assert!(tag.contains("Crossing"), "{tag}");
    let rows = csv_rows(&std::fs::read_to_string(&path).unwrap(), &["t", "S_E", "S_C"]);
    let diffs: Vec<f64> = rows[1..]
        .iter()
        .map(|r| r[1].parse::<f64>().unwrap() - r[2].parse::<f64>().unwrap())
        .collect();
    assert!(diffs.iter().any(|&d| d > 0.0) && diffs.iter().any(|&d| d < 0.0));
}

#[test]
fn coverage_csv_matches_library() {
    let out = stdout(&rses(&["coverage", "--n-grid", "10,50", "--p-grid", "0.05,0.5"]));
    let rows = csv_rows(&out, &["n", "p", "level", "coverage_p", "coverage_theta1", "coverage_theta0"]);
    assert_eq!(rows.len(), 4);
    let cell = rows.iter().find(|r| &r[0] == "10" && &r[1] == "0.05").unwrap();
    let lib = rses::estimation::coverage_p(10, 0.05, 0.95).unwrap();
    assert!(close(cell[3].parse().unwrap(), lib));
    assert!(lib < 0.9);
    assert_eq!(rses(&["coverage", "--n-grid", "10", "--p-grid", "1.5"]).status.code(), Some(2));
}

#[test]
fn library_records_round_trip_through_csv() {
    let dir = TempDir::new().unwrap();
    let d = Dataset::new(vec![
        SubjectRecord::new(Group::Control, false, 1e-7).unwrap(),
        SubjectRecord::new(Group::Experimental, true, 123.456).unwrap(),
    ]);
    let path = dir.path().join("r.csv");
    rses::cli::io::write_dataset(&d, std::fs::File::create(&path).unwrap()).unwrap();
    assert_eq!(rses::cli::io::read_dataset(&path).unwrap(), d);
}
