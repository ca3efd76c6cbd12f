//! System maps: typed variables, typed relations, and the views they live in.
//!
//! A map is validated once at construction and is immutable afterwards.
//! Every collection inside it iterates in canonical order (lexicographic by
//! qualified name), so anything derived from a map is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::graph::{find_cycle, ViewGraph};

/// View prefix of the ML system view.
pub const SYSTEM_VIEW: &str = "system";
/// View prefix of the environment view.
pub const ENV_VIEW: &str = "env";

/// `[A-Za-z_][A-Za-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// `view.local`. Ordering on `(view, local)` agrees with ordering on the
/// dotted string because `.` sorts below every identifier character.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QName {
    view: String,
    local: String,
}

impl QName {
    pub fn new(view: impl Into<String>, local: impl Into<String>) -> Self {
        Self { view: view.into(), local: local.into() }
    }

    /// Parses `view.local`; both parts must be identifiers.
    pub fn parse(s: &str) -> Option<Self> {
        let (view, local) = s.split_once('.')?;
        (is_identifier(view) && is_identifier(local)).then(|| Self::new(view, local))
    }

    pub fn view(&self) -> &str {
        &self.view
    }

    pub fn local(&self) -> &str {
        &self.local
    }

    pub fn view_kind(&self) -> ViewKind {
        ViewKind::from_name(&self.view)
    }
}

impl fmt::Display for QName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.view, self.local)
    }
}

impl Serialize for QName {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeKind {
    Data,
    Modulator,
    Random,
}

impl NodeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Data => "data",
            NodeKind::Modulator => "modulator",
            NodeKind::Random => "random",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RelationKind {
    Causal,
    /// Same quantity in two views.
    Mapping,
    /// Random -> Data: the data node is a proxy of the random variable.
    Measure,
    /// Data -> Random: a system output brings about an environment outcome.
    Actuate,
}

/// The three kinds of view. Variant order is the canonical view order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViewKind {
    MLSystem,
    Subsystem(String),
    Environment,
}

impl ViewKind {
    pub fn from_name(name: &str) -> Self {
        match name {
            SYSTEM_VIEW => ViewKind::MLSystem,
            ENV_VIEW => ViewKind::Environment,
            other => ViewKind::Subsystem(other.to_string()),
        }
    }

    /// Prefix used in qualified names.
    pub fn name(&self) -> &str {
        match self {
            ViewKind::MLSystem => SYSTEM_VIEW,
            ViewKind::Subsystem(name) => name,
            ViewKind::Environment => ENV_VIEW,
        }
    }

    /// Which attribution question this view answers (1, 2 or 3).
    pub fn question(&self) -> u8 {
        match self {
            ViewKind::MLSystem => 1,
            ViewKind::Subsystem(_) => 2,
            ViewKind::Environment => 3,
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewKind::MLSystem => f.write_str("MLSystem"),
            ViewKind::Subsystem(name) => write!(f, "Subsystem:{name}"),
            ViewKind::Environment => f.write_str("Environment"),
        }
    }
}

impl Serialize for ViewKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Node {
    pub name: QName,
    pub kind: NodeKind,
    /// Input-boundary flag; only meaningful on subsystem data nodes.
    pub boundary: bool,
}

impl Node {
    pub fn new(name: QName, kind: NodeKind) -> Self {
        Self { name, kind, boundary: false }
    }

    pub fn boundary(mut self) -> Self {
        self.boundary = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Relation {
    pub source: QName,
    pub target: QName,
    pub kind: RelationKind,
}

impl Relation {
    pub fn new(source: QName, target: QName, kind: RelationKind) -> Self {
        Self { source, target, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("cycle in view '{view}': {}", cycle_text(.nodes))]
    Cycle { view: String, nodes: Vec<QName> },
    #[error("{kind:?} relation {from} -> {to}: {reason}")]
    KindViolation { from: QName, to: QName, kind: RelationKind, reason: String },
    #[error("{}{reason}", .node.as_ref().map(|n| format!("node {n}: ")).unwrap_or_default())]
    ViewViolation { node: Option<QName>, reason: String },
    #[error("mapping {}: {reason}", list_text(.members))]
    MappingViolation { members: Vec<QName>, reason: String },
    #[error("subsystem '{view}' must have exactly one terminal data node mapped to the system view, found {}", list_text(.terminals))]
    TerminalViolation { view: String, terminals: Vec<QName> },
    #[error("duplicate node {0}")]
    DuplicateNode(QName),
    #[error("invalid identifier '{0}'")]
    InvalidIdentifier(String),
    #[error("unknown node {0}")]
    UnknownNode(QName),
    #[error("unknown view '{0}'")]
    UnknownView(String),
    #[error("no subsystem terminal is mapped to {0}")]
    NoRoute(QName),
}

fn cycle_text(nodes: &[QName]) -> String {
    let mut parts: Vec<String> = nodes.iter().map(ToString::to_string).collect();
    if let Some(first) = nodes.first() {
        parts.push(first.to_string());
    }
    parts.join(" -> ")
}

fn list_text(nodes: &[QName]) -> String {
    let parts: Vec<String> = nodes.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(", "))
}

/// A validated, immutable system map.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMap {
    name: String,
    nodes: BTreeMap<QName, Node>,
    relations: BTreeSet<Relation>,
    views: Vec<ViewKind>,
    /// Equivalence classes over Mapping edges, singletons included.
    classes: Vec<BTreeSet<QName>>,
    class_of: BTreeMap<QName, usize>,
    /// Subsystem view name -> its terminal data node.
    terminals: BTreeMap<String, QName>,
}

impl SystemMap {
    /// Validates nodes and relations and builds the map. Input order does not
    /// matter; the result is canonical.
    pub fn build(
        name: impl Into<String>,
        nodes: impl IntoIterator<Item = Node>,
        relations: impl IntoIterator<Item = Relation>,
    ) -> Result<Self, MapError> {
        let name = name.into();
        if !is_identifier(&name) {
            return Err(MapError::InvalidIdentifier(name));
        }

        let mut node_map = BTreeMap::new();
        for node in nodes {
            for part in [node.name.view(), node.name.local()] {
                if !is_identifier(part) {
                    return Err(MapError::InvalidIdentifier(part.to_string()));
                }
            }
            if node_map.contains_key(&node.name) {
                return Err(MapError::DuplicateNode(node.name));
            }
            node_map.insert(node.name.clone(), node);
        }

        let views: Vec<ViewKind> = node_map.keys().map(QName::view_kind).collect::<BTreeSet<_>>().into_iter().collect();
        if !views.is_empty() && !views.contains(&ViewKind::MLSystem) {
            return Err(MapError::ViewViolation { node: None, reason: "map declares views but no system view".into() });
        }

        for node in node_map.values() {
            check_node_placement(node)?;
        }

        let mut rels = BTreeSet::new();
        for rel in relations {
            rels.insert(check_relation(&node_map, rel)?);
        }

        let map_views = views.clone();
        let mut map = SystemMap {
            name,
            nodes: node_map,
            relations: rels,
            views: map_views,
            classes: Vec::new(),
            class_of: BTreeMap::new(),
            terminals: BTreeMap::new(),
        };

        for view in &views {
            map.check_acyclic(view)?;
        }
        map.check_measures()?;
        map.compute_classes()?;
        map.compute_terminals()?;
        Ok(map)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, name: &QName) -> Option<&Node> {
        self.nodes.get(name)
    }

    pub fn relations(&self) -> impl Iterator<Item = &Relation> {
        self.relations.iter()
    }

    pub fn views(&self) -> &[ViewKind] {
        &self.views
    }

    pub fn has_view(&self, view: &ViewKind) -> bool {
        self.views.contains(view)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes declared in `view`, canonical order.
    pub fn view_nodes<'a>(&'a self, view: &'a ViewKind) -> impl Iterator<Item = &'a Node> + 'a {
        self.nodes.values().filter(move |n| n.name.view() == view.name())
    }

    fn require_node(&self, name: &QName) -> Result<&Node, MapError> {
        self.nodes.get(name).ok_or_else(|| MapError::UnknownNode(name.clone()))
    }

    /// The causal DAG of one view: its nodes (modulators included, always as
    /// roots) and exactly the in-view causal edges.
    pub fn view_graph(&self, view: &ViewKind) -> Result<ViewGraph, MapError> {
        if !self.has_view(view) {
            return Err(MapError::UnknownView(view.name().to_string()));
        }
        Ok(self.view_graph_unchecked(view))
    }

    fn view_graph_unchecked(&self, view: &ViewKind) -> ViewGraph {
        let names: Vec<QName> = self.view_nodes(view).map(|n| n.name.clone()).collect();
        let index: BTreeMap<&QName, usize> = names.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let edges: Vec<(usize, usize)> = self
            .relations
            .iter()
            .filter(|r| r.kind == RelationKind::Causal)
            .filter_map(|r| Some((*index.get(&r.source)?, *index.get(&r.target)?)))
            .collect();
        ViewGraph::new(view.clone(), names, &edges)
    }

    /// All nodes that represent the same quantity as `node` (itself included).
    pub fn equivalence_class(&self, node: &QName) -> Result<BTreeSet<QName>, MapError> {
        self.require_node(node)?;
        Ok(self.classes[self.class_of[node]].clone())
    }

    /// Lexicographically smallest member of the node's equivalence class.
    pub fn canonical(&self, node: &QName) -> Result<QName, MapError> {
        self.require_node(node)?;
        Ok(self.classes[self.class_of[node]].first().cloned().expect("classes are non-empty"))
    }

    /// Terminal data node of a subsystem view.
    pub fn terminal(&self, subsystem: &str) -> Option<&QName> {
        self.terminals.get(subsystem)
    }

    /// Subsystem whose terminal is mapped to this system-view node.
    pub fn route_subsystem(&self, system_node: &QName) -> Result<ViewKind, MapError> {
        self.require_node(system_node)?;
        if system_node.view_kind() != ViewKind::MLSystem {
            return Err(MapError::ViewViolation {
                node: Some(system_node.clone()),
                reason: "routing starts from a system-view node".into(),
            });
        }
        let class = &self.classes[self.class_of[system_node]];
        self.terminals
            .iter()
            .find(|(_, t)| class.contains(*t))
            .map(|(view, _)| ViewKind::Subsystem(view.clone()))
            .ok_or_else(|| MapError::NoRoute(system_node.clone()))
    }

    /// Random variables measured into any member of `data_node`'s class.
    pub fn measured_sources(&self, data_node: &QName) -> Result<Vec<QName>, MapError> {
        let class = self.equivalence_class(data_node)?;
        let sources: BTreeSet<QName> = self
            .relations
            .iter()
            .filter(|r| r.kind == RelationKind::Measure && class.contains(&r.target))
            .map(|r| r.source.clone())
            .collect();
        Ok(sources.into_iter().collect())
    }

    /// Data nodes that measure a random variable.
    pub fn proxies(&self, random_node: &QName) -> Vec<QName> {
        self.relations
            .iter()
            .filter(|r| r.kind == RelationKind::Measure && &r.source == random_node)
            .map(|r| r.target.clone())
            .collect()
    }

    fn check_acyclic(&self, view: &ViewKind) -> Result<(), MapError> {
        let graph = self.view_graph_unchecked(view);
        let parents: Vec<Vec<usize>> = (0..graph.len()).map(|i| graph.parents(i).to_vec()).collect();
        // Self-loops are dropped by nothing above, so find_cycle sees them.
        match find_cycle(&parents) {
            None => Ok(()),
            Some(cycle) => Err(MapError::Cycle {
                view: view.name().to_string(),
                nodes: cycle.into_iter().map(|i| graph.name(i).clone()).collect(),
            }),
        }
    }

    fn check_measures(&self) -> Result<(), MapError> {
        for rel in self.relations.iter().filter(|r| r.kind == RelationKind::Measure) {
            let has_parent = self.relations.iter().any(|r| r.kind == RelationKind::Causal && r.target == rel.target);
            if has_parent {
                return Err(MapError::KindViolation {
                    from: rel.source.clone(),
                    to: rel.target.clone(),
                    kind: rel.kind,
                    reason: "measured data node must be a root of its view".into(),
                });
            }
        }
        Ok(())
    }

    fn compute_classes(&mut self) -> Result<(), MapError> {
        let names: Vec<QName> = self.nodes.keys().cloned().collect();
        let index: BTreeMap<&QName, usize> = names.iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut parent: Vec<usize> = (0..names.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for rel in self.relations.iter().filter(|r| r.kind == RelationKind::Mapping) {
            let a = find(&mut parent, index[&rel.source]);
            let b = find(&mut parent, index[&rel.target]);
            let (lo, hi) = (a.min(b), a.max(b));
            parent[hi] = lo;
        }
        let mut groups: BTreeMap<usize, BTreeSet<QName>> = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().insert(name.clone());
        }
        for class in groups.values() {
            let mut per_view: BTreeMap<&str, Vec<QName>> = BTreeMap::new();
            for member in class {
                per_view.entry(member.view()).or_default().push(member.clone());
            }
            if let Some(clash) = per_view.values().find(|members| members.len() > 1) {
                return Err(MapError::MappingViolation {
                    members: clash.clone(),
                    reason: "equivalence class has two members in one view".into(),
                });
            }
        }
        self.classes = groups.into_values().collect();
        self.class_of =
            self.classes.iter().enumerate().flat_map(|(i, class)| class.iter().map(move |n| (n.clone(), i))).collect();
        Ok(())
    }

    fn compute_terminals(&mut self) -> Result<(), MapError> {
        let subsystems: Vec<String> = self
            .views
            .iter()
            .filter_map(|v| match v {
                ViewKind::Subsystem(name) => Some(name.clone()),
                _ => None,
            })
            .collect();
        for sub in subsystems {
            let view = ViewKind::Subsystem(sub.clone());
            let graph = self.view_graph_unchecked(&view);
            let terminals: Vec<QName> = (0..graph.len())
                .filter(|&i| graph.children(i).is_empty())
                .map(|i| graph.name(i).clone())
                .filter(|n| self.nodes[n].kind == NodeKind::Data)
                .filter(|n| self.classes[self.class_of[n]].iter().any(|m| m.view_kind() == ViewKind::MLSystem))
                .collect();
            if terminals.len() != 1 {
                return Err(MapError::TerminalViolation { view: sub, terminals });
            }
            self.terminals.insert(sub, terminals.into_iter().next().unwrap());
        }

        // Every system node with cross-view mappings must route to exactly one
        // subsystem.
        for class in &self.classes {
            let Some(system_node) = class.iter().find(|n| n.view_kind() == ViewKind::MLSystem) else {
                continue;
            };
            if class.len() < 2 {
                continue;
            }
            let owners: Vec<QName> = self.terminals.values().filter(|t| class.contains(*t)).cloned().collect();
            match owners.len() {
                1 => {}
                0 => {
                    return Err(MapError::MappingViolation {
                        members: class.iter().cloned().collect(),
                        reason: format!("{system_node} is mapped but no subsystem terminal produces it"),
                    })
                }
                _ => {
                    return Err(MapError::MappingViolation {
                        members: owners,
                        reason: format!("{system_node} is produced by more than one subsystem terminal"),
                    })
                }
            }
        }
        Ok(())
    }
}

fn check_node_placement(node: &Node) -> Result<(), MapError> {
    let view = node.name.view_kind();
    let violation =
        |reason: &str| Err(MapError::ViewViolation { node: Some(node.name.clone()), reason: reason.into() });
    match (node.kind, &view) {
        (NodeKind::Random, ViewKind::Environment) => {}
        (NodeKind::Random, _) => return violation("random variables belong to the environment view"),
        (_, ViewKind::Environment) => return violation("only random variables belong to the environment view"),
        (NodeKind::Modulator, ViewKind::MLSystem) => return violation("modulators are not allowed in the system view"),
        _ => {}
    }
    if node.boundary && !(node.kind == NodeKind::Data && matches!(view, ViewKind::Subsystem(_))) {
        return violation("only subsystem data nodes can be boundary inputs");
    }
    Ok(())
}

fn check_relation(nodes: &BTreeMap<QName, Node>, rel: Relation) -> Result<Relation, MapError> {
    let source = nodes.get(&rel.source).ok_or_else(|| MapError::UnknownNode(rel.source.clone()))?;
    let target = nodes.get(&rel.target).ok_or_else(|| MapError::UnknownNode(rel.target.clone()))?;
    let kind_err = |reason: &str| MapError::KindViolation {
        from: rel.source.clone(),
        to: rel.target.clone(),
        kind: rel.kind,
        reason: reason.into(),
    };
    use NodeKind::*;
    match rel.kind {
        RelationKind::Causal => {
            if rel.source.view() != rel.target.view() {
                return Err(kind_err("causal edges stay within one view"));
            }
            if !matches!((source.kind, target.kind), (Data, Data) | (Modulator, Data) | (Random, Random)) {
                return Err(kind_err(&format!(
                    "{} -> {} is not a permitted causal direction",
                    source.kind.keyword(),
                    target.kind.keyword()
                )));
            }
            Ok(rel)
        }
        RelationKind::Mapping => {
            if source.kind != Data || target.kind != Data {
                return Err(kind_err("mappings connect data nodes"));
            }
            if rel.source.view() == rel.target.view() {
                return Err(MapError::MappingViolation {
                    members: vec![rel.source.clone(), rel.target.clone()],
                    reason: "mapped nodes must be in different views".into(),
                });
            }
            // Undirected: store with the smaller name first.
            let (a, b) = if rel.source <= rel.target { (rel.source, rel.target) } else { (rel.target, rel.source) };
            Ok(Relation::new(a, b, RelationKind::Mapping))
        }
        RelationKind::Measure => {
            if source.kind != Random || target.kind != Data {
                return Err(kind_err("measure goes from a random variable to a data variable"));
            }
            Ok(rel)
        }
        RelationKind::Actuate => {
            if source.kind != Data || target.kind != Random {
                return Err(kind_err("actuate goes from a data variable to a random variable"));
            }
            Ok(rel)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> QName {
        QName::parse(s).unwrap()
    }

    fn data(s: &str) -> Node {
        Node::new(q(s), NodeKind::Data)
    }

    fn causal(a: &str, b: &str) -> Relation {
        Relation::new(q(a), q(b), RelationKind::Causal)
    }

    fn equiv(a: &str, b: &str) -> Relation {
        Relation::new(q(a), q(b), RelationKind::Mapping)
    }

    #[test]
    fn empty_map_is_valid() {
        let map = SystemMap::build("m", [], []).unwrap();
        assert!(map.views().is_empty());
        assert!(map.is_empty());
    }

    #[test]
    fn two_cycle_is_named() {
        let err = SystemMap::build(
            "m",
            [data("system.data_a"), data("system.data_b")],
            [causal("system.data_a", "system.data_b"), causal("system.data_b", "system.data_a")],
        )
        .unwrap_err();
        assert_eq!(err, MapError::Cycle { view: "system".into(), nodes: vec![q("system.data_a"), q("system.data_b")] });
        assert!(err.to_string().contains("system.data_a -> system.data_b -> system.data_a"));
    }

    #[test]
    fn modulator_to_modulator_is_rejected() {
        let err = SystemMap::build(
            "m",
            [
                data("system.x"),
                Node::new(q("sub.m"), NodeKind::Modulator),
                Node::new(q("sub.n"), NodeKind::Modulator),
                data("sub.out"),
            ],
            [causal("sub.m", "sub.n"), equiv("sub.out", "system.x")],
        )
        .unwrap_err();
        assert!(matches!(err, MapError::KindViolation { .. }), "{err}");
    }

    #[test]
    fn kinds_must_match_views() {
        let err = SystemMap::build("m", [Node::new(q("system.r"), NodeKind::Random)], []).unwrap_err();
        assert!(matches!(err, MapError::ViewViolation { .. }));
        let err = SystemMap::build("m", [Node::new(q("system.m"), NodeKind::Modulator)], []).unwrap_err();
        assert!(matches!(err, MapError::ViewViolation { .. }));
        let err = SystemMap::build("m", [data("system.x").boundary()], []).unwrap_err();
        assert!(matches!(err, MapError::ViewViolation { .. }));
    }

    #[test]
    fn subsystem_needs_exactly_one_terminal() {
        let err = SystemMap::build("m", [data("system.x"), data("sub.a")], []).unwrap_err();
        assert!(matches!(err, MapError::TerminalViolation { ref terminals, .. } if terminals.is_empty()));

        let err = SystemMap::build(
            "m",
            [data("system.x"), data("system.y"), data("sub.a"), data("sub.b")],
            [equiv("sub.a", "system.x"), equiv("sub.b", "system.y")],
        )
        .unwrap_err();
        assert!(matches!(err, MapError::TerminalViolation { ref terminals, .. } if terminals.len() == 2));
    }

    #[test]
    fn mapping_class_one_member_per_view() {
        let err = SystemMap::build(
            "m",
            [data("system.x"), data("sub.a"), data("sub.b")],
            [equiv("sub.a", "system.x"), equiv("sub.b", "system.x"), causal("sub.a", "sub.b")],
        )
        .unwrap_err();
        assert!(matches!(err, MapError::MappingViolation { .. }), "{err}");
    }

    #[test]
    fn chained_mapping_is_transitive() {
        let map = SystemMap::build(
            "m",
            [data("system.x"), data("a.out"), data("b.input"), data("b.out"), data("system.y")],
            [
                equiv("a.out", "system.x"),
                equiv("system.x", "b.input"),
                causal("b.input", "b.out"),
                equiv("b.out", "system.y"),
            ],
        )
        .unwrap();
        let class = map.equivalence_class(&q("a.out")).unwrap();
        assert_eq!(class, BTreeSet::from([q("a.out"), q("b.input"), q("system.x")]));
        assert_eq!(map.route_subsystem(&q("system.x")).unwrap(), ViewKind::Subsystem("a".into()));
        assert_eq!(map.route_subsystem(&q("system.y")).unwrap(), ViewKind::Subsystem("b".into()));
        assert_eq!(map.canonical(&q("system.x")).unwrap(), q("a.out"));
    }

    #[test]
    fn unmapped_system_node_has_no_route() {
        let map = SystemMap::build("m", [data("system.x")], []).unwrap();
        assert_eq!(map.route_subsystem(&q("system.x")), Err(MapError::NoRoute(q("system.x"))));
        assert_eq!(map.equivalence_class(&q("system.x")).unwrap().len(), 1);
        assert!(matches!(map.equivalence_class(&q("system.nope")), Err(MapError::UnknownNode(_))));
    }

    #[test]
    fn measured_node_must_be_root() {
        let err = SystemMap::build(
            "m",
            [data("system.x"), data("system.y"), Node::new(q("env.r"), NodeKind::Random)],
            [causal("system.x", "system.y"), Relation::new(q("env.r"), q("system.y"), RelationKind::Measure)],
        )
        .unwrap_err();
        assert!(matches!(err, MapError::KindViolation { .. }));
    }

    #[test]
    fn isolated_node_view_graph() {
        let map = SystemMap::build("m", [data("system.x")], []).unwrap();
        let g = map.view_graph(&ViewKind::MLSystem).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(matches!(map.view_graph(&ViewKind::Environment), Err(MapError::UnknownView(_))));
    }
}
