//! Traces every simulated scenario and prints the resulting report.
//!
//! `cargo run --release --example scenarios -- [seed] [rows]`

use msm_core::mechanisms::ShiftConfig;
use msm_core::report::{ConfigEcho, ReportDocument};
use msm_core::simulator::{generate, Scenario, ScenarioConfig};
use msm_core::traversal::{detect_alerts, trace, TraceConfig, DEFAULT_ALERT_LEVEL};

fn main() {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let config = TraceConfig::default();
    let shift = ShiftConfig { seed, ..Default::default() };
    for scenario in Scenario::ALL {
        let (map, ds) = generate(&ScenarioConfig::new(scenario, n, seed)).expect("simulation");
        let alerts = detect_alerts(&map, &ds, DEFAULT_ALERT_LEVEL, &shift).expect("detection");
        let report = trace(&map, &ds, scenario.alert(), &config).expect("trace");
        let doc = ReportDocument::new(map.name(), ConfigEcho::new(&config, &shift, DEFAULT_ALERT_LEVEL), alerts, None);
        println!("== {scenario}: {}", scenario.description());
        print!("{}", doc.to_text());
        let doc = ReportDocument::new(map.name(), doc.config.clone(), Vec::new(), Some(report));
        print!("{}", doc.to_text());
    }
}
