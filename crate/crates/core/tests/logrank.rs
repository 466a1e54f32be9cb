//! Logrank statistics and the simulation engine.

mod common;

use common::*;
use rses::inference::Method;
use rses::logrank::*;
use rses::model::{Dataset, Group, SubjectRecord};
use rses::oc::{rejection_probability, OcRequest};

fn dataset(e: &[(bool, f64)], c: &[(bool, f64)]) -> Dataset {
    let recs = e
        .iter()
        .map(|&(r, t)| SubjectRecord::new(Group::Experimental, r, t).unwrap())
        .chain(c.iter().map(|&(r, t)| SubjectRecord::new(Group::Control, r, t).unwrap()))
        .collect();
    Dataset::new(recs)
}

#[test]
fn hand_computed_statistics() {
    // distinct times: O = 2, E = 4/3, V = 13/18
    let d = dataset(&[(false, 1.0), (false, 3.0)], &[(false, 2.0), (false, 4.0)]);
    let want = (2.0 / 3.0) / (13.0f64 / 18.0).sqrt();
    assert!((logrank_statistic(&d).unwrap() - want).abs() < 1e-14);

    // a tie at t = 1: O = 2, E = 3/2, V = 7/12
    let d = dataset(&[(false, 1.0), (false, 2.0)], &[(false, 1.0), (false, 3.0)]);
    let want = 0.5 / (7.0f64 / 12.0).sqrt();
    assert!((logrank_statistic(&d).unwrap() - want).abs() < 1e-14);
    let rows = risk_table(&mut [(1.0, true), (2.0, true), (1.0, false), (3.0, false)]);
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[0].at_risk, rows[0].at_risk_e, rows[0].events, rows[0].events_e), (4, 2, 2, 1));
    assert!((rows[0].variance() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(rows[2].variance(), 0.0);
}

#[test]
fn stratified_sums_strata() {
    // responders: E {1}, C {2}: O = 1, E = 1/2, V = 1/4
    // non-responders: E {3, 5}, C {4}: O = 2, E = 2/3 + 1/2 + 1, V = 2/9 + 1/4
    let d = dataset(&[(true, 1.0), (false, 3.0), (false, 5.0)], &[(true, 2.0), (false, 4.0)]);
    let (o, e, v) = (3.0, 0.5 + 2.0 / 3.0 + 0.5 + 1.0, 0.25 + 2.0 / 9.0 + 0.25);
    let want = (o - e) / f64::sqrt(v);
    let got = stratified_logrank_statistic(&d).unwrap();
    assert!((got - want).abs() < 1e-14, "{got} vs {want}");
}

#[test]
fn degenerate_inputs() {
    assert!(logrank_statistic(&Dataset::new(vec![])).is_err());
    let only_e = dataset(&[(true, 1.0), (false, 2.0)], &[]);
    assert!(logrank_statistic(&only_e).is_err());
}

#[test]
fn rank_based_statistics_ignore_monotone_time_transforms() {
    for seed in 0..10 {
        let d = simulate_trial(&plus_resp_plus_surv_large(), 15, 20, seed, 3);
        let squared = Dataset::new(
            d.records
                .iter()
                .map(|r| SubjectRecord::new(r.group, r.responder, r.time * r.time).unwrap())
                .collect(),
        );
        assert_eq!(logrank_statistic(&d).unwrap(), logrank_statistic(&squared).unwrap());
        assert_eq!(
            stratified_logrank_statistic(&d).unwrap(),
            stratified_logrank_statistic(&squared).unwrap()
        );
    }
}

#[test]
fn trials_are_reproducible_and_ordered() {
    let m = plus_resp_small();
    let a = simulate_trial(&m, 4, 6, 9, 17);
    assert_eq!(a, simulate_trial(&m, 4, 6, 9, 17));
    assert_ne!(a, simulate_trial(&m, 4, 6, 9, 18));
    let groups: Vec<Group> = a.records.iter().map(|r| r.group).collect();
    assert_eq!(groups[..4], [Group::Experimental; 4]);
    assert_eq!(groups[4..], [Group::Control; 6]);
}

#[test]
fn simulation_is_deterministic_across_threads() {
    let setup = SimulationSetup {
        model: plus_surv(),
        n_e: 20,
        n_c: 20,
        alpha: 0.05,
        runs: 3000,
        seed: 11,
    };
    let a = simulate_many(&setup, &SimTest::ALL).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = pool.install(|| simulate_many(&setup, &SimTest::ALL).unwrap());
    assert_eq!(a, b);
    for (r, t) in a.iter().zip(SimTest::ALL) {
        assert_eq!(r.test, t);
        assert_eq!(r.runs, 3000);
        assert_eq!(r.rate, r.rejections as f64 / 3000.0);
    }
    let bad = SimulationSetup { runs: 0, ..setup };
    assert!(simulate_many(&bad, &SimTest::ALL).is_err());
}

#[test]
fn test_names_round_trip() {
    for t in SimTest::ALL {
        assert_eq!(t.name().parse::<SimTest>().unwrap(), t);
        assert_eq!(t.to_string(), t.name());
    }
    assert!("wilcoxon".parse::<SimTest>().is_err());
}

#[test]
fn simulated_rses_rates_match_exact_enumeration() {
    let model = plus_resp_plus_surv_small();
    let (n_e, n_c) = (25, 25);
    for (sim_test, method) in [(SimTest::ApproxRses, Method::Approximate), (SimTest::ExactRses, Method::Exact)] {
        let exact = rejection_probability(&OcRequest::new(model, n_e, n_c, 0.05, method).unwrap())
            .unwrap()
            .rejection_probability;
        let hits = (0..40)
            .filter(|&seed| {
                let setup = SimulationSetup {
                    model,
                    n_e,
                    n_c,
                    alpha: 0.05,
                    runs: 2000,
                    seed,
                };
                let r = simulate_rejection_rate(&setup, sim_test).unwrap();
                let se = (exact * (1.0 - exact) / 2000.0).sqrt();
                (r.rate - exact).abs() <= 3.0 * se
            })
            .count();
        assert!(hits >= 38, "{sim_test}: {hits} of 40 seeds within 3 SE");
    }
}
