//! Seeded structural model of a churn-prediction system with injectable faults.
//!
//! A user's demographics and the quality of service drive their activity; a
//! pipeline turns activity into features, a served model scores churn risk,
//! an outreach policy thresholds the score, a ranking model orders
//! promotions, and promotions go out to users picked for outreach.
//!
//! Both windows come from the baseline parameters; a scenario changes only
//! the current window. All constants are simulator choices.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Column, DatasetError, Window, WindowedDataset};
use crate::format::parse_map;
use crate::map::SystemMap;
use crate::traversal::Pattern;
use crate::CHURN_MAP;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("unknown scenario '{0}' (expected S0..S6)")]
    UnknownScenario(String),
    #[error("invalid simulator parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Scenario {
    /// No fault.
    S0,
    /// Outreach threshold lowered.
    S1,
    /// Event parsing drops records.
    S2,
    /// Feature logic adds a constant bias; nothing records it.
    S3,
    /// Quality of service degrades.
    S4,
    /// Activity rises for a reason the map does not model.
    S5,
    /// Serving switches to a new model version.
    S6,
}

impl Scenario {
    pub const ALL: [Scenario; 7] =
        [Scenario::S0, Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4, Scenario::S5, Scenario::S6];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S0 => "S0",
            Scenario::S1 => "S1",
            Scenario::S2 => "S2",
            Scenario::S3 => "S3",
            Scenario::S4 => "S4",
            Scenario::S5 => "S5",
            Scenario::S6 => "S6",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::S0 => "no fault",
            Scenario::S1 => "outreach policy threshold 0.6 -> 0.4",
            Scenario::S2 => "parse quality 1.0 -> 0.7",
            Scenario::S3 => "unrecorded feature bias +0.5",
            Scenario::S4 => "quality of service mean 1.0 -> 0.6",
            Scenario::S5 => "hidden shift in user activity",
            Scenario::S6 => "model version v1 -> v2",
        }
    }

    /// Current-window parameters derived from the baseline.
    pub fn apply(self, base: &SimParams) -> SimParams {
        let mut p = base.clone();
        match self {
            Scenario::S0 => {}
            Scenario::S1 => p.outreach_threshold = 0.4,
            Scenario::S2 => p.parse_quality = 0.7,
            Scenario::S3 => p.feature_bias = 0.5,
            Scenario::S4 => p.qos_mean = 0.6,
            Scenario::S5 => p.activity_noise_mean = 0.5,
            Scenario::S6 => p.model_version = ModelVersion::V2,
        }
        p
    }

    /// The system-view variable whose alert is traced for this scenario.
    pub fn alert(self) -> &'static str {
        match self {
            Scenario::S1 => "system.promotion_sent",
            _ => "system.promo_ranking",
        }
    }

    /// Pattern and concentrated node of every step the trace should take.
    pub fn expected_path(self) -> Vec<(Pattern, &'static str)> {
        match self {
            Scenario::S0 => vec![(Pattern::Negligible, "")],
            Scenario::S1 => vec![
                (Pattern::SubsystemIsolated, "system.outreach_decision"),
                (Pattern::RootCauseLocalized, "application.outreach_policy"),
            ],
            Scenario::S2 => vec![
                (Pattern::IsolatedAtBoundary, "system.activity_features"),
                (Pattern::RootCauseLocalized, "pipeline.parse_quality"),
            ],
            Scenario::S3 => vec![
                (Pattern::IsolatedAtBoundary, "system.activity_features"),
                (Pattern::ComponentLocalized, "pipeline.activity_features"),
            ],
            Scenario::S4 => vec![
                (Pattern::IsolatedAtBoundary, "system.activity_features"),
                (Pattern::LocalizedAtBoundary, "pipeline.activity_events"),
                (Pattern::ExplainedExternally, "env.quality_of_service"),
            ],
            Scenario::S5 => vec![
                (Pattern::IsolatedAtBoundary, "system.activity_features"),
                (Pattern::LocalizedAtBoundary, "pipeline.activity_events"),
                (Pattern::CannotDetermine, "env.user_activity"),
            ],
            Scenario::S6 => vec![
                (Pattern::SubsystemIsolated, "system.churn_score"),
                (Pattern::RootCauseLocalized, "serving.model_version"),
            ],
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SimulatorError;

    fn from_str(s: &str) -> Result<Self, SimulatorError> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimulatorError::UnknownScenario(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ModelVersion {
    V1,
    V2,
}

impl ModelVersion {
    pub fn token(self) -> &'static str {
        match self {
            ModelVersion::V1 => "v1",
            ModelVersion::V2 => "v2",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimParams {
    /// P(young), P(adult), P(senior).
    pub demographics: [f64; 3],
    /// Baseline activity per demographic group.
    pub activity_base: [f64; 3],
    pub qos_mean: f64,
    pub qos_sd: f64,
    pub activity_noise_mean: f64,
    pub activity_noise_sd: f64,
    /// Expected events per unit of activity.
    pub event_rate: f64,
    /// Fraction of events that survive parsing.
    pub parse_quality: f64,
    /// Stale features are redrawn independently from the baseline generator.
    pub stale: bool,
    pub feature_bias: f64,
    pub model_version: ModelVersion,
    /// Intercept, feature and senior coefficients of each model version.
    pub model_v1: [f64; 3],
    pub model_v2: [f64; 3],
    pub outreach_threshold: f64,
    /// Intercept, churn-score and feature coefficients of the ranking model.
    pub ranking: [f64; 3],
    pub ranking_threshold: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            demographics: [0.5, 0.3, 0.2],
            activity_base: [5.0, 3.0, 2.0],
            qos_mean: 1.0,
            qos_sd: 0.1,
            activity_noise_mean: 0.0,
            activity_noise_sd: 0.2,
            event_rate: 7.0,
            parse_quality: 1.0,
            stale: false,
            feature_bias: 0.0,
            model_version: ModelVersion::V1,
            model_v1: [2.0, -0.8, 0.5],
            model_v2: [1.0, -0.5, 0.9],
            outreach_threshold: 0.6,
            ranking: [-1.0, 2.0, 0.3],
            ranking_threshold: 0.5,
        }
    }
}

impl SimParams {
    fn validate(&self) -> Result<(), SimulatorError> {
        let bad = |m: &str| Err(SimulatorError::InvalidParams(m.to_string()));
        let total: f64 = self.demographics.iter().sum();
        if self.demographics.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad("demographic probabilities must be non-negative and sum to 1");
        }
        if self.activity_base.iter().any(|&b| !(b > 0.0)) || !(self.event_rate > 0.0) {
            return bad("activity base and event rate must be positive");
        }
        if !(self.parse_quality > 0.0 && self.parse_quality <= 1.0) {
            return bad("parse quality must be in (0, 1]");
        }
        if !(self.qos_mean > 0.0) || !(self.qos_sd > 0.0) || !(self.activity_noise_sd > 0.0) {
            return bad("quality-of-service mean and spreads must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Rows per window.
    pub n: usize,
    pub seed: u64,
    /// Baseline parameters (reference window).
    pub params: SimParams,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, n: usize, seed: u64) -> Self {
        Self { scenario, n, seed, params: SimParams::default() }
    }
}

/// One simulated user.
#[derive(Clone, Copy, Debug)]
struct Row {
    demographic: usize,
    qos: f64,
    events: f64,
    features: f64,
    churn: f64,
    outreach: bool,
    ranking: f64,
    sent: bool,
}

const DEMOGRAPHICS: [&str; 3] = ["young", "adult", "senior"];
const SENIOR: usize = 2;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Upstream {
    demographic: usize,
    qos: f64,
    events: f64,
}

fn draw_upstream(p: &SimParams, rng: &mut ChaCha8Rng) -> Upstream {
    let u: f64 = rng.random();
    let demographic = if u < p.demographics[0] {
        0
    } else if u < p.demographics[0] + p.demographics[1] {
        1
    } else {
        2
    };
    let qos_dist = Normal::new(p.qos_mean, p.qos_sd).expect("validated");
    let qos = loop {
        let q = qos_dist.sample(rng);
        if q > 0.0 {
            break q;
        }
    };
    let noise = Normal::new(p.activity_noise_mean, p.activity_noise_sd).expect("validated").sample(rng);
    let activity = p.activity_base[demographic] * qos * noise.exp();
    let rate = p.event_rate * activity * p.parse_quality;
    let events = Poisson::new(rate).expect("positive rate").sample(rng);
    Upstream { demographic, qos, events }
}

fn draw_row(p: &SimParams, rng: &mut ChaCha8Rng, stale: &mut ChaCha8Rng) -> Row {
    let up = draw_upstream(p, rng);
    let features = if p.stale {
        let baseline = SimParams { stale: false, ..SimParams::default() };
        draw_upstream(&baseline, stale).events.ln_1p()
    } else {
        up.events.ln_1p()
    } + p.feature_bias;
    let [a0, a1, a2] = match p.model_version {
        ModelVersion::V1 => p.model_v1,
        ModelVersion::V2 => p.model_v2,
    };
    let senior = if up.demographic == SENIOR { 1.0 } else { 0.0 };
    let churn = logistic(a0 + a1 * features + a2 * senior);
    let outreach = churn >= p.outreach_threshold;
    let [r0, r1, r2] = p.ranking;
    let ranking = logistic(r0 + r1 * churn + r2 * features);
    let sent = outreach && ranking >= p.ranking_threshold;
    Row { demographic: up.demographic, qos: up.qos, events: up.events, features, churn, outreach, ranking, sent }
}

/// The bundled churn map.
pub fn churn_map() -> SystemMap {
    parse_map(CHURN_MAP).expect("bundled map is valid")
}

/// Generates both windows (`n` rows each) and returns them with the churn map.
pub fn generate(config: &ScenarioConfig) -> Result<(SystemMap, WindowedDataset), SimulatorError> {
    if config.n == 0 {
        return Err(SimulatorError::InvalidParams("rows per window must be at least 1".into()));
    }
    let ref_params = &config.params;
    let cur_params = config.scenario.apply(ref_params);
    ref_params.validate()?;
    cur_params.validate()?;

    let mut rows = Vec::with_capacity(2 * config.n);
    let mut windows = Vec::with_capacity(2 * config.n);
    let mut tokens = Vec::with_capacity(2 * config.n);
    for (window, params, stream) in [(Window::Ref, ref_params, 0), (Window::Cur, &cur_params, 1)] {
        let mut main = rng(config.seed, stream);
        let mut stale = rng(config.seed, stream + 2);
        for _ in 0..config.n {
            rows.push(draw_row(params, &mut main, &mut stale));
            windows.push(window);
            tokens.push(params);
        }
    }

    let num = |f: &dyn Fn(&Row) -> f64| Column::Numeric(rows.iter().map(|r| Some(f(r))).collect());
    let cat = |f: &dyn Fn(&Row, &SimParams) -> String| {
        Column::Categorical(rows.iter().zip(&tokens).map(|(r, p)| Some(f(r, p))).collect())
    };
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let columns: Vec<(&str, Column)> = vec![
        ("env.quality_of_service", num(&|r| r.qos)),
        ("system.user_demographics", cat(&|r, _| DEMOGRAPHICS[r.demographic].to_string())),
        ("serving.demographics_in", cat(&|r, _| DEMOGRAPHICS[r.demographic].to_string())),
        ("pipeline.parse_quality", cat(&|_, p| format!("{:.2}", p.parse_quality))),
        ("pipeline.activity_events", num(&|r| r.events)),
        ("pipeline.daily_counts", num(&|r| r.events)),
        ("pipeline.data_freshness", cat(&|_, p| if p.stale { "stale" } else { "fresh" }.to_string())),
        ("system.activity_features", num(&|r| r.features)),
        ("serving.features_in", num(&|r| r.features)),
        ("ranking.features_in", num(&|r| r.features)),
        ("serving.model_version", cat(&|_, p| p.model_version.token().to_string())),
        ("system.churn_score", num(&|r| r.churn)),
        ("application.churn_score_in", num(&|r| r.churn)),
        ("ranking.churn_score_in", num(&|r| r.churn)),
        ("application.outreach_policy", cat(&|_, p| format!("{:.2}", p.outreach_threshold))),
        ("system.outreach_decision", num(&|r| flag(r.outreach))),
        ("promotions.outreach_in", num(&|r| flag(r.outreach))),
        ("system.promo_ranking", num(&|r| r.ranking)),
        ("promotions.ranking_in", num(&|r| r.ranking)),
        ("system.promotion_sent", num(&|r| flag(r.sent))),
    ];
    let map = churn_map();
    let named = columns.into_iter().map(|(n, c)| (n.to_string(), c)).collect();
    let ds = WindowedDataset::from_columns(&map, windows, named)?;
    Ok((map, ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::QName;

    fn csv(config: &ScenarioConfig) -> String {
        let (_, ds) = generate(config).unwrap();
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn deterministic() {
        let c = ScenarioConfig::new(Scenario::S2, 200, 42);
        assert_eq!(csv(&c), csv(&c));
    }

    #[test]
    fn reference_window_shared_across_scenarios() {
        let ref_rows = |s| {
            csv(&ScenarioConfig::new(s, 100, 7)).lines().filter(|l| l.starts_with("ref")).collect::<Vec<_>>().join("\n")
        };
        let base = ref_rows(Scenario::S0);
        for s in Scenario::ALL {
            assert_eq!(ref_rows(s), base, "{s}");
        }
    }

    #[test]
    fn all_columns_mapped() {
        let (map, ds) = generate(&ScenarioConfig::new(Scenario::S0, 10, 1)).unwrap();
        assert!(ds.warnings().is_empty(), "{:?}", ds.warnings());
        assert_eq!(ds.len(), 20);
        assert!(ds.column(&map, &QName::new("env", "user_activity")).is_none());
        assert_eq!(
            ds.source_of(&map, &QName::new("env", "user_activity")),
            Some(QName::new("pipeline", "activity_features"))
        );
    }

    #[test]
    fn scenario_names() {
        assert_eq!("s4".parse::<Scenario>().unwrap(), Scenario::S4);
        assert!(matches!("S9".parse::<Scenario>(), Err(SimulatorError::UnknownScenario(_))));
    }

    #[test]
    fn scenarios_touch_only_their_knob() {
        let base = SimParams::default();
        for s in Scenario::ALL {
            let p = s.apply(&base);
            let changed = [
                p.outreach_threshold != base.outreach_threshold,
                p.parse_quality != base.parse_quality,
                p.feature_bias != base.feature_bias,
                p.qos_mean != base.qos_mean,
                p.activity_noise_mean != base.activity_noise_mean,
                p.model_version != base.model_version,
            ];
            let expected = if s == Scenario::S0 { 0 } else { 1 };
            assert_eq!(changed.iter().filter(|&&c| c).count(), expected, "{s}");
        }
    }
}
