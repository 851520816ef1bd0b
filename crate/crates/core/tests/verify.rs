use std::f64::consts::PI;

use hazard_core::engine::TauCoupling;
use hazard_core::pricing::DeterministicCurve;
use hazard_core::verify::{
    cylinder_probability, standard_events, verify_conditional_survival, verify_martingale, verify_q_identity,
    verify_restriction, verify_strict_submartingale, CylinderEvent, MartingaleProcess, SimConfig, TestEvent,
};
use hazard_core::{ModelParams, TwoRegimeModel};

const INFINITY: f64 = f64::INFINITY;

fn cfg(n: usize) -> SimConfig {
    SimConfig::new(400, n, 17)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `Q(W(z1) ∈ [a1,b1], W(z2) ∈ [a2,b2])` by a dense midpoint rule in both
/// coordinates, using only the Gaussian density.
fn two_time_oracle(z1: f64, (a1, b1): (f64, f64), z2: f64, (a2, b2): (f64, f64)) -> f64 {
    let (s1, s2) = (z1.sqrt(), (z2 - z1).sqrt());
    let clamp = |a: f64, b: f64, lim: f64| (a.max(-lim), b.min(lim));
    let (lo1, hi1) = clamp(a1, b1, 10.0 * s1);
    let n = 1500;
    let h1 = (hi1 - lo1) / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let x = lo1 + (i as f64 + 0.5) * h1;
        let (lo2, hi2) = clamp(a2 - x, b2 - x, 10.0 * s2);
        if lo2 >= hi2 {
            continue;
        }
        let h2 = (hi2 - lo2) / n as f64;
        let inner: f64 = (0..n)
            .map(|j| normal_pdf((lo2 + (j as f64 + 0.5) * h2) / s2) / s2)
            .sum::<f64>()
            * h2;
        total += normal_pdf(x / s1) / s1 * inner * h1;
    }
    total
}

#[test]
fn cylinder_probabilities_match_oracles() {
    let orthant = CylinderEvent::new(vec![0.5, 1.5], vec![(0.0, INFINITY), (0.0, INFINITY)]).unwrap();
    let exact = 0.25 + (0.5f64 / 1.5).sqrt().asin() / (2.0 * PI);
    assert!((cylinder_probability(&orthant).unwrap() - exact).abs() < 1e-12);
    let boxes = [(-0.3, 0.8), (-1.0, 0.2)];
    let ev = CylinderEvent::new(vec![0.7, 1.2], boxes.to_vec()).unwrap();
    let oracle = two_time_oracle(0.7, boxes[0], 1.2, boxes[1]);
    assert!((cylinder_probability(&ev).unwrap() - oracle).abs() < 1e-6);
    assert_eq!(cylinder_probability(&CylinderEvent::full(1.0)).unwrap(), 1.0);
    let three = CylinderEvent::new(vec![0.5, 1.0, 1.5], vec![(0.0, 1.0); 3]).unwrap();
    assert!(cylinder_probability(&three).is_err());
}

#[test]
fn q_identities_hold() {
    let p = ModelParams::reference();
    let events = [
        CylinderEvent::full(1.0),
        CylinderEvent::single(1.0, 0.0, INFINITY).unwrap(),
        CylinderEvent::new(vec![0.5, 1.5], vec![(-INFINITY, 0.0), (-0.5, 1.0)]).unwrap(),
    ];
    for ev in &events {
        for (s, t) in [(0.0, 0.5), (0.5, 1.5), (1.0, 2.0)] {
            let r = verify_q_identity(&p, ev, s, t, &cfg(20_000)).unwrap();
            assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
        }
    }
}

#[test]
fn mis_wired_default_breaks_q_identity() {
    let p = ModelParams::reference();
    let ev = CylinderEvent::single(2.0, 0.0, INFINITY).unwrap();
    let bad = cfg(20_000).with_coupling(TauCoupling::MisWired);
    assert!(!verify_q_identity(&p, &ev, 0.0, 1.0, &bad).unwrap().passed());
}

#[test]
fn restriction_holds_for_short_and_long_cylinders() {
    let p = ModelParams::reference();
    let short = CylinderEvent::new(vec![0.5, 1.0], vec![(0.0, INFINITY), (-INFINITY, 0.3)]).unwrap();
    let long = CylinderEvent::new(vec![0.5, 1.0, 1.5], vec![(-1.0, 1.0), (-1.0, 1.5), (0.0, INFINITY)]).unwrap();
    for ev in [short, long] {
        assert!(verify_restriction(&p, &ev, &cfg(20_000)).unwrap().passed());
    }
}

#[test]
fn conditional_survival_detects_mis_wiring() {
    let p = ModelParams::reference();
    assert!(verify_conditional_survival(&p, 1.0, 10, &cfg(20_000)).unwrap().passed());
    let bad = cfg(20_000).with_coupling(TauCoupling::MisWired);
    let r = verify_conditional_survival(&p, 1.0, 10, &bad).unwrap();
    assert!(r.failures().count() >= 5);
    assert!(verify_conditional_survival(&p, 0.0, 10, &cfg(100)).is_err());
    assert!(verify_conditional_survival(&p, 1.0, 500, &cfg(100)).is_err());
}

#[test]
fn stock_martingale_and_drift_control() {
    let p = ModelParams::reference();
    let model = TwoRegimeModel::new(p);
    let events = standard_events(0.5, true).unwrap();
    assert!(events.len() >= 20);
    let c = cfg(20_000);
    let ok = verify_martingale(&p, MartingaleProcess::DiscountedStock, &model, 0.5, 1.5, &events, &c).unwrap();
    assert!(ok.passed(), "{:?}", ok.failures().collect::<Vec<_>>());
    let drift = verify_martingale(&p, MartingaleProcess::UndiscountedStock, &model, 0.5, 1.5, &events, &c).unwrap();
    assert!(!drift.passed());
}

#[test]
fn martingale_rejects_events_after_t1() {
    let p = ModelParams::reference();
    let model = TwoRegimeModel::new(p);
    let late = vec![TestEvent {
        cylinder: CylinderEvent::single(1.0, 0.0, 1.0).unwrap(),
        survived: None,
    }];
    let c = cfg(200);
    assert!(verify_martingale(&p, MartingaleProcess::DiscountedBond, &model, 0.5, 1.5, &late, &c).is_err());
    let with_default = vec![TestEvent {
        cylinder: CylinderEvent::full(0.5),
        survived: Some(0.5),
    }];
    assert!(verify_martingale(&p, MartingaleProcess::DiscountedCG, &model, 0.5, 1.5, &with_default, &c).is_err());
    assert!(verify_martingale(
        &p,
        MartingaleProcess::DiscountedBond,
        &model,
        1.5,
        0.5,
        &with_default,
        &c
    )
    .is_err());
}

#[test]
fn strict_submartingale_and_flat_control() {
    let p = ModelParams::reference();
    let model = TwoRegimeModel::new(p);
    let c = cfg(20_000);
    let r = verify_strict_submartingale(&p, &model, &[(0.0, 0.5), (0.5, 1.0)], 5, &c).unwrap();
    assert!(r.passed(), "{:?}", r.failures().collect::<Vec<_>>());
    assert_eq!(r.checks.len(), 2 + 2 * 5);
    // With r = 0 a flat candidate is a martingale, not a strict submartingale.
    let flat_market = ModelParams { r: 0.0, ..p };
    let flat = DeterministicCurve::new(vec![(0.0, 0.6), (2.0, 0.6)]).unwrap();
    let r = verify_strict_submartingale(&flat_market, &flat, &[(0.5, 1.0)], 5, &c).unwrap();
    assert!(r.failures().any(|f| f.name.starts_with("strict_submartingale")));
}
