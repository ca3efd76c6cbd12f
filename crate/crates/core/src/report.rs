//! Versioned report document with JSON and text renderers.

use std::fmt::Write as _;

use serde::Serialize;

use crate::attribution::Mode;
use crate::mechanisms::{Divergence, ShiftConfig, ShiftTest};
use crate::traversal::{TraceConfig, TraceReport, Verdict};

pub const SCHEMA: &str = "msm-report/1";

/// Every setting that influences a number in the report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub bins: usize,
    pub smoothing: f64,
    pub window_prior: f64,
    pub tau: f64,
    pub epsilon: f64,
    pub branch_cutoff: f64,
    pub alpha: f64,
    pub permutations: usize,
    pub shapley_permutations: usize,
    pub mode: Mode,
    pub divergence: Divergence,
    pub max_branches: usize,
    pub eager_environment: bool,
    pub seed: u64,
}

impl ConfigEcho {
    pub fn new(trace: &TraceConfig, shift: &ShiftConfig, alpha: f64) -> Self {
        Self {
            bins: trace.fit.bins,
            smoothing: trace.fit.smoothing,
            window_prior: trace.fit.window_prior,
            tau: trace.attribution.tau,
            epsilon: trace.attribution.epsilon,
            branch_cutoff: trace.attribution.branch_cutoff,
            alpha,
            permutations: shift.permutations,
            shapley_permutations: trace.attribution.permutations,
            mode: trace.attribution.mode,
            divergence: trace.attribution.divergence,
            max_branches: trace.max_branches,
            eager_environment: trace.eager_environment,
            seed: trace.attribution.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeafVerdict {
    pub step: usize,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportDocument {
    pub schema: &'static str,
    pub map: String,
    pub config: ConfigEcho,
    pub alerts: Vec<ShiftTest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceReport>,
    pub verdicts: Vec<LeafVerdict>,
    pub warnings: Vec<String>,
}

impl ReportDocument {
    pub fn new(map: &str, config: ConfigEcho, alerts: Vec<ShiftTest>, trace: Option<TraceReport>) -> Self {
        let verdicts =
            trace.iter().flat_map(|t| t.verdicts()).map(|(step, v)| LeafVerdict { step, verdict: v.clone() }).collect();
        let warnings = trace.as_ref().map(|t| t.warnings.clone()).unwrap_or_default();
        Self { schema: SCHEMA, map: map.to_string(), config, alerts, trace, verdicts, warnings }
    }

    /// Pretty JSON with object keys sorted, newline-terminated.
    pub fn to_json(&self) -> String {
        // Going through Value sorts keys.
        let value = serde_json::to_value(self).expect("report serializes");
        let mut out = serde_json::to_string_pretty(&value).expect("value serializes");
        out.push('\n');
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if self.trace.is_none() {
            if self.alerts.is_empty() {
                let _ = writeln!(out, "no alerts at alpha={}", self.config.alpha);
            }
            for a in &self.alerts {
                let _ = writeln!(out, "alert {} statistic={:.4} p={:.4}", a.node, a.statistic, a.p_value);
            }
        }
        if let Some(trace) = &self.trace {
            let _ = writeln!(out, "trace {}", trace.alert);
            for step in &trace.steps {
                let indent = "  ".repeat(step.depth);
                let _ = write!(out, "{indent}AQ{} [{}] target={}", step.question, step.view, step.target);
                if step.attribution.is_none() && step.parent.is_some() && step.pattern.is_some() {
                    out.push_str(" branch");
                }
                match step.pattern {
                    Some(p) => {
                        let _ = write!(out, " pattern={p}");
                    }
                    None => out.push_str(" pattern=-"),
                }
                if let Some(a) = &step.attribution {
                    let _ = write!(out, " shift={:.4}", a.total);
                }
                if let (Some(focus), Some(share)) = (&step.focus, step.share) {
                    let _ = write!(out, " top={focus} share={share:.2}");
                }
                if let Some(v) = &step.verdict {
                    let _ = write!(out, " verdict={v}");
                }
                out.push('\n');
                for note in &step.notes {
                    let _ = writeln!(out, "{indent}  note: {note}");
                }
            }
            if !trace.excluded.is_empty() {
                let names: Vec<String> = trace.excluded.iter().map(ToString::to_string).collect();
                let _ = writeln!(out, "unobserved environment variables: {}", names.join(", "));
            }
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::QName;

    #[test]
    fn detect_only_text_and_json() {
        let alerts = vec![ShiftTest { node: QName::new("system", "x"), statistic: 0.25, p_value: 0.001 }];
        let doc = ReportDocument::new(
            "m",
            ConfigEcho::new(&TraceConfig::default(), &ShiftConfig::default(), 0.01),
            alerts,
            None,
        );
        assert_eq!(doc.to_text(), "alert system.x statistic=0.2500 p=0.0010\n");
        let json = doc.to_json();
        assert!(json.contains("\"schema\": \"msm-report/1\""));
        let alerts_at = json.find("\"alerts\"").unwrap();
        let schema_at = json.find("\"schema\"").unwrap();
        assert!(alerts_at < schema_at, "keys are sorted");
    }
}
