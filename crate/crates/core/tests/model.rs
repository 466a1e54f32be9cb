//! Survival functions, densities, data generation and curve classification.

mod common;

use common::*;
use rses::model::*;
use rses::rng::stream;

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn survival_examples() {
    let m = params(0.5, 0.1, 0.2);
    assert_eq!(survival(&m, 0.0).unwrap(), 1.0);
    let want = 0.5 * (-0.3f64).exp() + 0.5 * (-0.6f64).exp();
    assert!((survival(&m, 3.0).unwrap() - want).abs() < 1e-15);
    let pure = params(1.0, 0.7, 3.0);
    assert!((survival(&pure, 2.0).unwrap() - (-1.4f64).exp()).abs() < 1e-15);
    assert!(survival(&m, -1.0).is_err());
}

#[test]
fn joint_density_examples() {
    assert_eq!(joint_density(&params(0.0, 1.0, 2.0), true, 0.4).unwrap(), 0.0);
    let d = joint_density(&params(1.0, 0.3, 2.0), true, 2.0).unwrap();
    assert!((d - 0.3 * (-0.6f64).exp()).abs() < 1e-15);
    assert!(joint_density(&params(0.5, 1.0, 1.0), true, 0.0).is_err());
}

#[test]
fn density_integrates_to_survival_complement() {
    let mut rng = stream(11, 0);
    use rand::Rng;
    for _ in 0..20 {
        let p = params(rng.gen_range(0.0..1.0), rng.gen_range(0.05..3.0), rng.gen_range(0.05..3.0));
        let marginal = |t: f64| {
            joint_density(&p, true, t.max(1e-300)).unwrap() + joint_density(&p, false, t.max(1e-300)).unwrap()
        };
        for &t in &[0.3, 2.0, 9.0] {
            let cdf = simpson(marginal, 0.0, t, 4000);
            assert!((1.0 - cdf - survival(&p, t).unwrap()).abs() < 1e-8);
        }
        // total mass, with the tail beyond 60 / min hazard negligible
        let hi = 60.0 / p.lambda1().min(p.lambda0());
        let total = simpson(marginal, 0.0, hi, 200_000);
        assert!((total - 1.0).abs() < 1e-8, "total mass {total}");
    }
}

#[test]
fn sampling_moments() {
    let p = params(0.3, 0.5, 2.0);
    let mut rng = stream(2024, 0);
    let n = 1_000_000;
    let data = sample(&p, Group::Control, n, &mut rng).unwrap();
    let k = data.records.iter().filter(|r| r.responder).count() as f64;
    let rate = k / n as f64;
    assert!((rate - 0.3).abs() < 4.0 * (0.3 * 0.7 / n as f64).sqrt());
    let resp_mean: f64 = data.records.iter().filter(|r| r.responder).map(|r| r.time).sum::<f64>() / k;
    // exponential mean 1/λ with sd 1/λ
    assert!((resp_mean - 2.0).abs() < 4.0 * 2.0 / k.sqrt());
    assert!(data.records.iter().all(|r| r.time > 0.0 && r.group == Group::Control));

    let all = sample(&params(1.0, 1.0, 1.0), Group::Experimental, 100, &mut rng).unwrap();
    assert!(all.records.iter().all(|r| r.responder));
    assert!(sample(&p, Group::Control, 0, &mut rng).is_err());
}

#[test]
fn streams_are_reproducible() {
    let p = params(0.4, 1.0, 2.0);
    let a = sample(&p, Group::Control, 50, &mut stream(5, 3)).unwrap();
    let b = sample(&p, Group::Control, 50, &mut stream(5, 3)).unwrap();
    let c = sample(&p, Group::Control, 50, &mut stream(5, 4)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

/// Sign pattern of `S_E - S_C` on a dense grid over `(0, 50 / min hazard]`.
fn grid_signs(m: &TwoGroupModel) -> Vec<f64> {
    let min_rate = [
        m.experimental.lambda1(),
        m.experimental.lambda0(),
        m.control.lambda1(),
        m.control.lambda0(),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let hi = 50.0 / min_rate;
    let n = 200_000;
    (1..=n)
        .filter_map(|i| {
            let t = hi * i as f64 / n as f64;
            let se = survival(&m.experimental, t).unwrap();
            let sc = survival(&m.control, t).unwrap();
            let d = se - sc;
            (d.abs() > 1e-13 * (se + sc)).then(|| d.signum())
        })
        .collect()
}

fn grid_oracle(m: &TwoGroupModel) -> CurveRelation {
    let signs = grid_signs(m);
    if signs.is_empty() {
        return CurveRelation::CompletelyEqual;
    }
    if signs.windows(2).any(|w| w[0] != w[1]) {
        CurveRelation::Crossing
    } else {
        CurveRelation::UniformlyDifferent
    }
}

#[test]
fn relation_examples() {
    let same = params(0.3, 0.2, 0.9);
    assert_eq!(classify_relation(&TwoGroupModel::null(same), RELATION_TOLERANCE), CurveRelation::CompletelyEqual);
    let g = GAMMA;
    let m = TwoGroupModel::new(params(0.26, g, g), params(0.13, g, g));
    assert_eq!(classify_relation(&m, RELATION_TOLERANCE), CurveRelation::CompletelyEqual);
    let m = TwoGroupModel::new(params(0.13, g / 3.0, g / 2.0), params(0.13, g / 2.0, g));
    assert_eq!(classify_relation(&m, RELATION_TOLERANCE), grid_oracle(&m));
    assert_eq!(classify_relation(&m, RELATION_TOLERANCE), CurveRelation::UniformlyDifferent);
}

#[test]
fn constructed_crossing_example() {
    // responders of E are fitter but rarer, non-responders of E die fast:
    // E starts below C and overtakes it later
    let m = TwoGroupModel::new(params(0.5, 0.1, 0.3), params(0.5, 0.02, 0.8));
    assert_eq!(classify_relation(&m, RELATION_TOLERANCE), CurveRelation::Crossing);
    assert_eq!(grid_oracle(&m), CurveRelation::Crossing);
}

#[test]
fn classification_matches_grid_oracle_on_sample_grid() {
    for (_, _, m) in sample_size_grid() {
        assert_eq!(classify_relation(&m, RELATION_TOLERANCE), grid_oracle(&m), "{m:?}");
        assert_eq!(classify_relation(&m.swapped(), RELATION_TOLERANCE), classify_relation(&m, RELATION_TOLERANCE));
    }
}

#[test]
fn dataset_helpers() {
    let d = Dataset::new(vec![
        SubjectRecord::new(Group::Experimental, true, 1.0).unwrap(),
        SubjectRecord::new(Group::Control, false, 2.0).unwrap(),
    ]);
    assert_eq!(d.group(Group::Control).count(), 1);
    let r = d.relabel();
    assert_eq!(r.records[0].group, Group::Control);
    let s = d.scale_times(10.0);
    assert_eq!(s.records[1].time, 20.0);
    assert!(SubjectRecord::new(Group::Control, false, 0.0).is_err());
    assert_eq!("E".parse::<Group>().unwrap(), Group::Experimental);
}
