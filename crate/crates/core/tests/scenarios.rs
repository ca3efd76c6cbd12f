use msm_core::attribution::DEFAULT_EPSILON;
use msm_core::dataset::{Column, Window};
use msm_core::mechanisms::{fit_mechanisms, shift_test, Divergence, FitConfig, ShiftConfig, DEFAULT_STATE_LIMIT};
use msm_core::simulator::{generate, Scenario, ScenarioConfig};
use msm_core::traversal::{detect_alerts, trace, Pattern, TraceConfig, Verdict};
use msm_core::{parse_map, QName, ViewKind, WindowedDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 5000;

fn per_seed<T: Send>(seeds: std::ops::Range<u64>, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .map(|seed| {
                let f = &f;
                s.spawn(move || f(seed))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

#[test]
fn no_fault_mechanisms_stay_below_threshold() {
    let quiet = per_seed(0..20, |seed| {
        let (map, ds) = generate(&ScenarioConfig::new(Scenario::S0, N, seed)).unwrap();
        let set = fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig::default()).unwrap();
        (0..set.len())
            .all(|j| set.node_shift(j, Divergence::JensenShannon, DEFAULT_STATE_LIMIT).unwrap() <= DEFAULT_EPSILON)
    });
    assert!(quiet.iter().filter(|&&q| q).count() >= 19, "{quiet:?}");
}

#[test]
fn policy_change_is_detected() {
    let node = QName::new("system", "outreach_decision");
    let p = per_seed(0..20, |seed| {
        let (map, ds) = generate(&ScenarioConfig::new(Scenario::S1, N, seed)).unwrap();
        shift_test(&ds, &map, &node, &ShiftConfig { seed, ..Default::default() }).unwrap().p_value
    });
    assert!(p.iter().filter(|&&p| p <= 0.01).count() >= 19, "{p:?}");
}

#[test]
fn no_fault_fixed_seed_has_no_alerts() {
    let (map, ds) = generate(&ScenarioConfig::new(Scenario::S0, N, 42)).unwrap();
    let alerts = detect_alerts(&map, &ds, 0.01, &ShiftConfig { seed: 42, ..Default::default() }).unwrap();
    assert!(alerts.is_empty(), "{alerts:?}");
}

#[test]
fn copied_window_has_no_alerts() {
    let (map, ds) = generate(&ScenarioConfig::new(Scenario::S3, 500, 1)).unwrap();
    let mut csv = Vec::new();
    ds.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    let mut copied = format!("{}\n", lines.next().unwrap());
    let ref_rows: Vec<&str> = lines.filter(|l| l.starts_with("ref,")).collect();
    for row in &ref_rows {
        copied.push_str(row);
        copied.push('\n');
    }
    for row in &ref_rows {
        copied.push_str(&row.replacen("ref,", "cur,", 1));
        copied.push('\n');
    }
    let ds = WindowedDataset::load_csv(&map, copied.as_bytes()).unwrap();
    assert!(detect_alerts(&map, &ds, 0.01, &ShiftConfig::default()).unwrap().is_empty());
    assert!(detect_alerts(&map, &ds, 1.0, &ShiftConfig::default()).unwrap().len() == 6);
}

#[test]
fn simulated_csv_round_trips() {
    let (map, ds) = generate(&ScenarioConfig::new(Scenario::S2, 300, 42)).unwrap();
    let mut a = Vec::new();
    ds.write_csv(&mut a).unwrap();
    let back = WindowedDataset::load_csv(&map, a.as_slice()).unwrap();
    let mut b = Vec::new();
    back.write_csv(&mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(back.len(), 600);
}

fn verdicts(scenario: Scenario, seed: u64) -> Vec<Verdict> {
    let (map, ds) = generate(&ScenarioConfig::new(scenario, N, seed)).unwrap();
    let report = trace(&map, &ds, scenario.alert(), &TraceConfig::default()).unwrap();
    report.verdicts().into_iter().map(|(_, v)| v.clone()).collect()
}

#[test]
fn parse_fault_traced_to_modulator() {
    assert_eq!(verdicts(Scenario::S2, 42), vec![Verdict::RootCause { node: QName::new("pipeline", "parse_quality") }]);
}

#[test]
fn service_outage_traced_to_environment() {
    assert_eq!(verdicts(Scenario::S4, 42), vec![Verdict::External { node: QName::new("env", "quality_of_service") }]);
}

#[test]
fn hidden_activity_shift_is_undetermined() {
    let v = verdicts(Scenario::S5, 42);
    assert!(matches!(&v[..], [Verdict::Undetermined { node: Some(n), .. }] if n.local() == "user_activity"), "{v:?}");
}

#[test]
fn forced_trace_without_fault_is_negligible() {
    let (map, ds) = generate(&ScenarioConfig::new(Scenario::S0, N, 3)).unwrap();
    let report = trace(&map, &ds, "system.promo_ranking", &TraceConfig::default()).unwrap();
    assert_eq!(report.steps.len(), 1);
    assert_eq!(report.steps[0].pattern, Some(Pattern::Negligible));
    assert_eq!(report.verdicts().len(), 1);
}

#[test]
fn eager_environment_opens_both_views() {
    let (map, ds) = generate(&ScenarioConfig::new(Scenario::S4, N, 5)).unwrap();
    let config = TraceConfig { eager_environment: true, ..Default::default() };
    let report = trace(&map, &ds, "system.promo_ranking", &config).unwrap();
    let questions: Vec<u8> = report.children(0).map(|s| s.question).collect();
    assert_eq!(questions, vec![2, 3]);
    assert!(report.verdicts().iter().all(|(_, v)| matches!(v, Verdict::External { .. })));
}

#[test]
fn unknown_alert_is_rejected() {
    let (map, ds) = generate(&ScenarioConfig::new(Scenario::S0, 100, 0)).unwrap();
    for alert in ["unknown_var", "system.nope", "env.user_activity", "pipeline.parse_quality"] {
        assert!(trace(&map, &ds, alert, &TraceConfig::default()).is_err(), "{alert}");
    }
}

/// A -> B where only P(A) moves between windows: B's conditional tables agree
/// to sampling precision, A's marginals do not.
#[test]
fn marginal_change_stays_in_the_marginal() {
    let map = parse_map("map m\nview system\n  data a\n  data b\n  edge a -> b\n").unwrap();
    let n = 20_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut a, mut b, mut windows) = (Vec::new(), Vec::new(), Vec::new());
    for (window, p_a) in [(Window::Ref, 0.3), (Window::Cur, 0.7)] {
        for _ in 0..n {
            let x = rng.random_bool(p_a) as u8 as f64;
            let y = if rng.random_bool(if x == 1.0 { 0.8 } else { 0.2 }) { 1.0 } else { 0.0 };
            a.push(Some(x));
            b.push(Some(y));
            windows.push(window);
        }
    }
    let ds = WindowedDataset::from_columns(
        &map,
        windows,
        vec![("system.a".into(), Column::Numeric(a)), ("system.b".into(), Column::Numeric(b))],
    )
    .unwrap();
    let set = fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig::default()).unwrap();
    let tol = 4.0 / (n as f64).sqrt();
    let (ia, ib) = (0, 1);
    let b_ref = set.mechanism(ib, Window::Ref);
    let b_cur = set.mechanism(ib, Window::Cur);
    for c in 0..b_ref.configurations() {
        for (x, y) in b_ref.row(c).iter().zip(b_cur.row(c)) {
            assert!((x - y).abs() <= tol, "config {c}: {:?} vs {:?}", b_ref.row(c), b_cur.row(c));
        }
    }
    let gap = (set.mechanism(ia, Window::Ref).row(0)[0] - set.mechanism(ia, Window::Cur).row(0)[0]).abs();
    assert!(gap > 0.3, "{gap}");
}
