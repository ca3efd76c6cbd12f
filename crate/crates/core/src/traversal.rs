//! Alert detection and the symptom-to-source trace.
//!
//! A trace starts with attribution on the system view for the alerted
//! variable (question 1), follows the matched pattern into the producing
//! subsystem (question 2) and, when the evidence points outside the system,
//! into the environment (question 3). Views are only ever visited in that
//! order, so every trace terminates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::attribution::{attribute, AttributionConfig, AttributionError, AttributionResult, Classification};
use crate::dataset::{DatasetError, WindowedDataset};
use crate::map::{MapError, NodeKind, QName, SystemMap, ViewKind};
use crate::mechanisms::{fit_mechanisms, shift_test, FitConfig, MechanismError, MechanismSet, ShiftConfig, ShiftTest};

pub const DEFAULT_MAX_BRANCHES: usize = 3;
pub const DEFAULT_ALERT_LEVEL: f64 = 0.01;
const SEED_SPREAD: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unknown alert '{0}': not a data node of the system view")]
    UnknownAlert(String),
    #[error("attribution ran on {got}, expected {expected}")]
    ViewMismatch { expected: ViewKind, got: ViewKind },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
}

/// Outcome of one attribution run, read in the context of its view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pattern {
    /// System view: mass on a variable with in-view parents.
    SubsystemIsolated,
    /// System view: mass on a root variable (a feature).
    IsolatedAtBoundary,
    /// Subsystem view: mass on a modulator.
    RootCauseLocalized,
    /// Subsystem view: mass on an internal data variable.
    ComponentLocalized,
    /// Subsystem view: mass on the pipeline's input boundary.
    LocalizedAtBoundary,
    /// Environment view: mass on an upstream random variable.
    ExplainedExternally,
    /// Environment view: mass on the implicated variable itself (or off its ancestry).
    CannotDetermine,
    /// No single node carries enough mass.
    DistributedBranch,
    /// The target barely moved.
    Negligible,
}

impl Pattern {
    pub fn code(self) -> &'static str {
        match self {
            Pattern::SubsystemIsolated => "AP1.1",
            Pattern::IsolatedAtBoundary => "AP1.2",
            Pattern::RootCauseLocalized => "AP2.1",
            Pattern::ComponentLocalized => "AP2.2",
            Pattern::LocalizedAtBoundary => "AP2.3",
            Pattern::ExplainedExternally => "AP3.1",
            Pattern::CannotDetermine => "AP3.2",
            Pattern::DistributedBranch => "distributed",
            Pattern::Negligible => "negligible",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for Pattern {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

/// How a leaf of the trace ends.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// A modulator: a configuration or operational change.
    RootCause {
        node: QName,
    },
    /// A data variable whose own production logic changed.
    Component {
        node: QName,
    },
    /// An external cause in the environment.
    External {
        node: QName,
    },
    Undetermined {
        #[serde(skip_serializing_if = "Option::is_none")]
        node: Option<QName>,
        reason: String,
    },
    Negligible,
}

impl Verdict {
    fn undetermined(reason: impl Into<String>) -> Self {
        Verdict::Undetermined { node: None, reason: reason.into() }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::RootCause { node } => write!(f, "root-cause({node})"),
            Verdict::Component { node } => write!(f, "component({node})"),
            Verdict::External { node } => write!(f, "external({node})"),
            Verdict::Undetermined { node: Some(node), reason } => write!(f, "undetermined({node}): {reason}"),
            Verdict::Undetermined { node: None, reason } => write!(f, "undetermined: {reason}"),
            Verdict::Negligible => f.write_str("negligible"),
        }
    }
}

/// Where a step sends the trace next.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Lead {
    pub view: ViewKind,
    pub target: QName,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    pub depth: usize,
    /// 1 for the system view, 2 for subsystems, 3 for the environment.
    pub question: u8,
    pub view: ViewKind,
    pub target: QName,
    /// Absent on branch steps (they reuse the parent's attribution) and on
    /// views that could not be analysed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attribution: Option<AttributionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Pattern>,
    /// Node the pattern is about.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub focus: Option<QName>,
    /// Share of the focus node.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub share: Option<f64>,
    pub routed_to: Vec<Lead>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceReport {
    pub alert: QName,
    /// Depth-first, children in canonical order.
    pub steps: Vec<TraceStep>,
    /// Environment nodes without data: candidates for hidden variables.
    pub excluded: Vec<QName>,
    pub warnings: Vec<String>,
}

impl TraceReport {
    /// `(step id, verdict)` for every leaf.
    pub fn verdicts(&self) -> Vec<(usize, &Verdict)> {
        self.steps.iter().filter_map(|s| s.verdict.as_ref().map(|v| (s.id, v))).collect()
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &TraceStep> {
        self.steps.iter().filter(move |s| s.parent == Some(id))
    }

    /// Patterns and focus nodes along the first branch of the tree.
    pub fn path(&self) -> Vec<(Pattern, Option<&QName>)> {
        let mut out = Vec::new();
        let mut current = self.steps.first();
        while let Some(step) = current {
            if let Some(p) = step.pattern {
                out.push((p, step.focus.as_ref()));
            }
            current = self.children(step.id).next();
        }
        out
    }

    /// True when no step branched.
    pub fn is_linear(&self) -> bool {
        self.steps.iter().all(|s| self.children(s.id).count() <= 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceConfig {
    pub fit: FitConfig,
    pub attribution: AttributionConfig,
    pub max_branches: usize,
    /// Open the environment alongside the producing subsystem when the system
    /// view points at a feature.
    pub eager_environment: bool,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            attribution: AttributionConfig::default(),
            max_branches: DEFAULT_MAX_BRANCHES,
            eager_environment: false,
        }
    }
}

/// Pattern that concentrated mass on `node` means in `view`, for a given target.
pub fn pattern_for_node(map: &SystemMap, view: &ViewKind, node: &QName, target: &QName) -> Result<Pattern, TraceError> {
    let graph = map.view_graph(view)?;
    let j = graph.index_of(node).ok_or_else(|| MapError::UnknownNode(node.clone()))?;
    let kind = map.node(node).map(|n| n.kind);
    Ok(match view {
        ViewKind::MLSystem if graph.is_root(j) => Pattern::IsolatedAtBoundary,
        ViewKind::MLSystem => Pattern::SubsystemIsolated,
        ViewKind::Subsystem(_) if kind == Some(NodeKind::Modulator) => Pattern::RootCauseLocalized,
        ViewKind::Subsystem(_) if map.node(node).is_some_and(|n| n.boundary) => Pattern::LocalizedAtBoundary,
        ViewKind::Subsystem(_) => Pattern::ComponentLocalized,
        ViewKind::Environment => {
            let t = graph.index_of(target).ok_or_else(|| MapError::UnknownNode(target.clone()))?;
            if j != t && graph.ancestors(t).contains(&j) {
                Pattern::ExplainedExternally
            } else {
                Pattern::CannotDetermine
            }
        }
    })
}

/// Reads an attribution result as a pattern of the given view.
pub fn match_pattern(view: &ViewKind, map: &SystemMap, result: &AttributionResult) -> Result<Pattern, TraceError> {
    if &result.view != view {
        return Err(TraceError::ViewMismatch { expected: view.clone(), got: result.view.clone() });
    }
    match &result.classification {
        Classification::Negligible => Ok(Pattern::Negligible),
        Classification::Distributed { .. } => Ok(Pattern::DistributedBranch),
        Classification::Concentrated { node, .. } => pattern_for_node(map, view, node, &result.target),
    }
}

/// Permutation shift test on every system-view data node; those with
/// `p <= alpha`, smallest p first. Nodes without enough data are skipped.
pub fn detect_alerts(
    map: &SystemMap,
    ds: &WindowedDataset,
    alpha: f64,
    config: &ShiftConfig,
) -> Result<Vec<ShiftTest>, TraceError> {
    let mut alerts: Vec<ShiftTest> = scan(map, ds, config)?.into_iter().filter(|t| t.p_value <= alpha).collect();
    alerts.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then_with(|| a.node.cmp(&b.node)));
    Ok(alerts)
}

/// Shift tests for every testable system-view data node, in node order.
pub fn scan(map: &SystemMap, ds: &WindowedDataset, config: &ShiftConfig) -> Result<Vec<ShiftTest>, TraceError> {
    let mut tests = Vec::new();
    let nodes: Vec<&QName> =
        map.view_nodes(&ViewKind::MLSystem).filter(|n| n.kind == NodeKind::Data).map(|n| &n.name).collect();
    for (i, node) in nodes.into_iter().enumerate() {
        if ds.source_of(map, node).is_none() {
            continue;
        }
        let seed = config.seed.wrapping_add((i as u64).wrapping_mul(SEED_SPREAD));
        match shift_test(ds, map, node, &ShiftConfig { seed, ..*config }) {
            Ok(t) => tests.push(t),
            Err(MechanismError::InsufficientData { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(tests)
}

struct Tracer<'a> {
    map: &'a SystemMap,
    ds: &'a WindowedDataset,
    config: &'a TraceConfig,
    fits: BTreeMap<ViewKind, Result<MechanismSet, String>>,
    steps: Vec<TraceStep>,
    warnings: Vec<String>,
}

/// Traces `alert` from the system view towards its source.
pub fn trace(
    map: &SystemMap,
    ds: &WindowedDataset,
    alert: &str,
    config: &TraceConfig,
) -> Result<TraceReport, TraceError> {
    let alert_name = QName::parse(alert)
        .filter(|q| q.view_kind() == ViewKind::MLSystem)
        .filter(|q| map.node(q).is_some_and(|n| n.kind == NodeKind::Data))
        .ok_or_else(|| TraceError::UnknownAlert(alert.to_string()))?;
    let mut tracer = Tracer { map, ds, config, fits: BTreeMap::new(), steps: Vec::new(), warnings: Vec::new() };
    // The root view must be analysable; deeper failures become verdicts.
    let root = fit_mechanisms(map, ds, &ViewKind::MLSystem, &config.fit)?;
    if root.index_of(&alert_name).is_none() {
        return Err(TraceError::UnknownAlert(alert.to_string()));
    }
    tracer.fits.insert(ViewKind::MLSystem, Ok(root));
    tracer.visit(Lead { view: ViewKind::MLSystem, target: alert_name.clone() }, None, 0)?;

    let mut warnings: Vec<String> = ds.warnings().to_vec();
    let mut excluded = Vec::new();
    for (view, fit) in &tracer.fits {
        if let Ok(set) = fit {
            for name in set.excluded() {
                warnings.push(format!("{name} has no data; left out of the {view} analysis"));
                if *view == ViewKind::Environment {
                    excluded.push(name.clone());
                }
            }
        }
    }
    warnings.extend(tracer.warnings);
    Ok(TraceReport { alert: alert_name, steps: tracer.steps, excluded, warnings })
}

impl Tracer<'_> {
    fn mechanisms(&mut self, view: &ViewKind) -> Result<&MechanismSet, String> {
        if !self.fits.contains_key(view) {
            let fit = fit_mechanisms(self.map, self.ds, view, &self.config.fit).map_err(|e| e.to_string());
            self.fits.insert(view.clone(), fit);
        }
        self.fits[view].as_ref().map_err(Clone::clone)
    }

    fn push(&mut self, lead: &Lead, parent: Option<usize>, depth: usize) -> usize {
        let id = self.steps.len();
        self.steps.push(TraceStep {
            id,
            parent,
            depth,
            question: lead.view.question(),
            view: lead.view.clone(),
            target: lead.target.clone(),
            attribution: None,
            pattern: None,
            focus: None,
            share: None,
            routed_to: Vec::new(),
            verdict: None,
            notes: Vec::new(),
        });
        id
    }

    fn visit(&mut self, lead: Lead, parent: Option<usize>, depth: usize) -> Result<(), TraceError> {
        let id = self.push(&lead, parent, depth);
        let attribution_config = self.config.attribution;
        let attribution = match self.mechanisms(&lead.view) {
            Ok(set) if set.index_of(&lead.target).is_some() => attribute(set, &lead.target, &attribution_config)?,
            Ok(_) => {
                self.steps[id].verdict = Some(Verdict::Undetermined {
                    node: Some(lead.target.clone()),
                    reason: "no data for the target in this view".into(),
                });
                return Ok(());
            }
            Err(reason) => {
                self.steps[id].verdict = Some(Verdict::undetermined(format!("view not analysable: {reason}")));
                return Ok(());
            }
        };
        if attribution.sampled_inference {
            self.warnings.push(format!(
                "{} on {}: state space too large for exact inference; marginals sampled",
                lead.target, lead.view
            ));
        }
        let pattern = match_pattern(&lead.view, self.map, &attribution)?;
        let classification = attribution.classification.clone();
        self.steps[id].attribution = Some(attribution);
        match classification {
            Classification::Negligible => {
                self.steps[id].pattern = Some(Pattern::Negligible);
                self.steps[id].verdict = Some(Verdict::Negligible);
                Ok(())
            }
            Classification::Concentrated { node, share } => {
                self.steps[id].pattern = Some(pattern);
                self.steps[id].focus = Some(node.clone());
                self.steps[id].share = Some(share);
                self.resolve(id, pattern, &node, depth)
            }
            Classification::Distributed { nodes } => {
                self.steps[id].pattern = Some(Pattern::DistributedBranch);
                if nodes.is_empty() {
                    self.steps[id].verdict =
                        Some(Verdict::undetermined("attribution mass is spread thinly over many nodes"));
                    return Ok(());
                }
                let limit = self.config.max_branches.max(1);
                if nodes.len() > limit {
                    let skipped: Vec<String> = nodes[limit..].iter().map(ToString::to_string).collect();
                    self.steps[id].notes.push(format!("branches not expanded: {}", skipped.join(", ")));
                }
                let mut expand: Vec<QName> = nodes.into_iter().take(limit).collect();
                expand.sort();
                let shares: Vec<Option<f64>> = {
                    let a = self.steps[id].attribution.as_ref().expect("set above");
                    expand.iter().map(|n| a.players.iter().position(|p| p == n).map(|i| a.shares[i])).collect()
                };
                for (node, share) in expand.into_iter().zip(shares) {
                    let branch_pattern = pattern_for_node(self.map, &lead.view, &node, &lead.target)?;
                    let branch = self.push(&lead, Some(id), depth + 1);
                    self.steps[id].routed_to.push(Lead { view: lead.view.clone(), target: node.clone() });
                    self.steps[branch].pattern = Some(branch_pattern);
                    self.steps[branch].focus = Some(node.clone());
                    self.steps[branch].share = share;
                    self.resolve(branch, branch_pattern, &node, depth + 1)?;
                }
                Ok(())
            }
        }
    }

    /// Applies a concentrated pattern: sets the verdict or opens the next views.
    fn resolve(&mut self, id: usize, pattern: Pattern, node: &QName, depth: usize) -> Result<(), TraceError> {
        let map = self.map;
        let mut leads = Vec::new();
        match pattern {
            Pattern::SubsystemIsolated => match map.route_subsystem(node) {
                Ok(view) => leads.push(self.subsystem_lead(view)),
                Err(MapError::NoRoute(_)) => {
                    self.steps[id].notes.push("no subsystem produces this variable".into());
                    self.steps[id].verdict = Some(Verdict::Component { node: node.clone() });
                }
                Err(e) => return Err(e.into()),
            },
            Pattern::IsolatedAtBoundary => {
                let route = match map.route_subsystem(node) {
                    Ok(view) => Some(view),
                    Err(MapError::NoRoute(_)) => None,
                    Err(e) => return Err(e.into()),
                };
                let routed = route.is_some();
                if let Some(view) = route {
                    leads.push(self.subsystem_lead(view));
                }
                if !routed || self.config.eager_environment {
                    leads.extend(self.environment_leads(id, &map.measured_sources(node)?));
                }
                if leads.is_empty() && self.steps[id].verdict.is_none() {
                    self.steps[id].verdict = Some(Verdict::Undetermined {
                        node: Some(node.clone()),
                        reason: "no producing subsystem or measured source".into(),
                    });
                }
            }
            Pattern::RootCauseLocalized => self.steps[id].verdict = Some(Verdict::RootCause { node: node.clone() }),
            Pattern::ComponentLocalized => self.steps[id].verdict = Some(Verdict::Component { node: node.clone() }),
            Pattern::LocalizedAtBoundary => {
                let mut sources = map.measured_sources(node)?;
                if sources.is_empty() {
                    if let Some(terminal) = map.terminal(self.steps[id].view.name()) {
                        sources = map.measured_sources(terminal)?;
                    }
                }
                leads.extend(self.environment_leads(id, &sources));
                if leads.is_empty() && self.steps[id].verdict.is_none() {
                    self.steps[id].verdict = Some(Verdict::Undetermined {
                        node: Some(node.clone()),
                        reason: "no measured source for the boundary input".into(),
                    });
                }
            }
            Pattern::ExplainedExternally => self.steps[id].verdict = Some(Verdict::External { node: node.clone() }),
            Pattern::CannotDetermine => {
                let target = self.steps[id].target.clone();
                let reason = if *node == target {
                    "shift originates in the implicated variable itself; hidden confounders possible".to_string()
                } else {
                    self.steps[id].notes.push(format!("non-ancestral mass on {node}"));
                    format!("mass on {node}, which is not upstream of {target}")
                };
                self.steps[id].verdict = Some(Verdict::Undetermined { node: Some(node.clone()), reason });
            }
            Pattern::DistributedBranch | Pattern::Negligible => unreachable!("handled by the caller"),
        }
        leads.sort();
        leads.dedup();
        self.steps[id].routed_to.extend(leads.iter().cloned());
        for lead in leads {
            self.visit(lead, Some(id), depth + 1)?;
        }
        Ok(())
    }

    fn subsystem_lead(&self, view: ViewKind) -> Lead {
        let terminal = self.map.terminal(view.name()).expect("routed subsystems have a terminal").clone();
        Lead { view, target: terminal }
    }

    fn environment_leads(&mut self, id: usize, sources: &[QName]) -> Vec<Lead> {
        if !self.map.has_view(&ViewKind::Environment) {
            if self.steps[id].verdict.is_none() {
                self.steps[id].verdict = Some(Verdict::undetermined("environment not modeled"));
            }
            return Vec::new();
        }
        sources.iter().map(|s| Lead { view: ViewKind::Environment, target: s.clone() }).collect()
    }
}
