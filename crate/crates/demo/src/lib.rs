//! Browser demo: simulate a scenario, trace its alert, compare histograms, and
//! tidy map text. Every export returns a JSON string; errors become JS
//! exceptions carrying a message.

use msm_core::dataset::{Column, Window};
use msm_core::mechanisms::{jsd, Bins, ShiftConfig};
use msm_core::report::{ConfigEcho, ReportDocument};
use msm_core::simulator::{generate, Scenario, ScenarioConfig};
use msm_core::traversal::{detect_alerts, trace, TraceConfig};
use msm_core::{parse_map, serialize_map, NodeKind, ViewKind};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_ROWS: u32 = 20_000;

fn scenario(name: &str, n: u32) -> Result<Scenario, String> {
    if n == 0 || n > MAX_ROWS {
        return Err(format!("rows per window must be in 1..={MAX_ROWS}"));
    }
    name.parse().map_err(|e: msm_core::simulator::SimulatorError| e.to_string())
}

/// Simulate `scenario`, list alerts and trace `alert` (the scenario's usual
/// alert when empty). Returns the report JSON with a `text` rendering added.
pub fn scenario_report(name: &str, n: u32, seed: u32, alert: &str, permutations: u32) -> Result<String, String> {
    let scenario = scenario(name, n)?;
    let seed = u64::from(seed);
    let (map, ds) = generate(&ScenarioConfig::new(scenario, n as usize, seed)).map_err(|e| e.to_string())?;
    let alert = if alert.is_empty() { scenario.alert() } else { alert };
    let mut config = TraceConfig::default();
    config.attribution.seed = seed;
    let shift = ShiftConfig { permutations: permutations as usize, seed, ..Default::default() };
    let alerts = detect_alerts(&map, &ds, 0.01, &shift).map_err(|e| e.to_string())?;
    let report = trace(&map, &ds, alert, &config).map_err(|e| e.to_string())?;
    let doc = ReportDocument::new(map.name(), ConfigEcho::new(&config, &shift, 0.01), alerts, Some(report));
    let mut value: serde_json::Value = serde_json::from_str(&doc.to_json()).map_err(|e| e.to_string())?;
    value["text"] = doc.to_text().into();
    value["scenario"] = json!({ "name": scenario.name(), "description": scenario.description() });
    Ok(value.to_string())
}

#[derive(Serialize)]
struct Histogram {
    name: String,
    labels: Vec<String>,
    reference: Vec<f64>,
    current: Vec<f64>,
    jsd: f64,
}

fn labels(bins: &Bins) -> Vec<String> {
    match bins {
        Bins::Numeric { edges } if edges.is_empty() => vec!["all".into()],
        Bins::Numeric { edges } => {
            let mut out = vec![format!("<= {:.3}", edges[0])];
            out.extend(edges.windows(2).map(|w| format!("{:.3}..{:.3}", w[0], w[1])));
            out.push(format!("> {:.3}", edges[edges.len() - 1]));
            out
        }
        Bins::Categorical { categories } => {
            categories.iter().cloned().chain(std::iter::once("unseen".to_string())).collect()
        }
    }
}

fn normalized(codes: &[Option<usize>], k: usize) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    for c in codes.iter().flatten() {
        counts[*c] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

/// Per system variable: reference and current histograms over reference
/// quantile bins, and their Jensen-Shannon divergence.
pub fn histograms(name: &str, n: u32, seed: u32, bins: u32) -> Result<String, String> {
    let scenario = scenario(name, n)?;
    let (map, ds) = generate(&ScenarioConfig::new(scenario, n as usize, u64::from(seed))).map_err(|e| e.to_string())?;
    let (ref_rows, cur_rows) = (ds.rows_in(Window::Ref), ds.rows_in(Window::Cur));
    let mut out = Vec::new();
    for node in map.view_nodes(&ViewKind::MLSystem).filter(|n| n.kind == NodeKind::Data) {
        let Some(column) = ds.column(&map, &node.name) else { continue };
        let (reference, current) = (column.select(&ref_rows), column.select(&cur_rows));
        let fitted = match column {
            Column::Numeric(_) => Bins::fit(&reference, bins.max(1) as usize),
            Column::Categorical(_) => Bins::fit(&reference.concat(&current), bins.max(1) as usize),
        };
        let k = fitted.cardinality();
        let (p, q) = (normalized(&fitted.encode(&reference), k), normalized(&fitted.encode(&current), k));
        let d = jsd(&q, &p).map_err(|e| e.to_string())?;
        out.push(Histogram { name: node.name.to_string(), labels: labels(&fitted), reference: p, current: q, jsd: d });
    }
    serde_json::to_string(&json!({ "scenario": scenario.name(), "variables": out })).map_err(|e| e.to_string())
}

/// Canonical text of a map, or the first positioned error.
pub fn canonical_map(text: &str) -> String {
    match parse_map(text) {
        Ok(map) => json!({ "ok": true, "canonical": serialize_map(&map) }),
        Err(e) => json!({
            "ok": false,
            "line": e.span.line,
            "column": e.span.column,
            "message": e.kind.to_string(),
        }),
    }
    .to_string()
}

#[wasm_bindgen]
pub fn bundled_map() -> String {
    msm_core::CHURN_MAP.to_string()
}

#[wasm_bindgen]
pub fn run_scenario(scenario: &str, n: u32, seed: u32, alert: &str, permutations: u32) -> Result<String, JsError> {
    scenario_report(scenario, n, seed, alert, permutations).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn variable_histograms(scenario: &str, n: u32, seed: u32, bins: u32) -> Result<String, JsError> {
    histograms(scenario, n, seed, bins).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn format_map(text: &str) -> String {
    canonical_map(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_carries_trace_and_text() {
        let v: serde_json::Value = serde_json::from_str(&scenario_report("S2", 2000, 3, "", 200).unwrap()).unwrap();
        assert_eq!(v["schema"], "msm-report/1");
        assert_eq!(v["trace"]["alert"], "system.promo_ranking");
        assert!(v["text"].as_str().unwrap().contains("trace system.promo_ranking"));
        assert!(scenario_report("S9", 100, 0, "", 200).is_err());
        assert!(scenario_report("S1", 0, 0, "", 200).is_err());
    }

    #[test]
    fn histograms_are_distributions() {
        let v: serde_json::Value = serde_json::from_str(&histograms("S4", 1000, 1, 8).unwrap()).unwrap();
        let vars = v["variables"].as_array().unwrap();
        assert_eq!(vars.len(), 6);
        for var in vars {
            let labels = var["labels"].as_array().unwrap().len();
            for key in ["reference", "current"] {
                let h: Vec<f64> = serde_json::from_value(var[key].clone()).unwrap();
                assert_eq!(h.len(), labels);
                assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn map_formatting() {
        let v: serde_json::Value = serde_json::from_str(&canonical_map(msm_core::CHURN_MAP)).unwrap();
        assert_eq!(v["canonical"], msm_core::CHURN_MAP);
        let v: serde_json::Value = serde_json::from_str(&canonical_map("map m\nview system\n  dat a\n")).unwrap();
        assert_eq!((v["ok"].as_bool(), v["line"].as_u64(), v["column"].as_u64()), (Some(false), Some(3), Some(3)));
    }
}
