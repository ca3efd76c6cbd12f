//! Plain-text map definitions (`.msm`).
//!
//! ```text
//! map churn
//! view system
//!   data activity_features
//!   data churn_score
//!   edge activity_features -> churn_score
//! view subsystem serving
//!   data features_in boundary
//!   modulator model_version
//!   data score_out
//!   edge features_in -> score_out
//!   edge model_version -> score_out
//! equiv serving.score_out = system.churn_score
//! ```
//!
//! Line oriented; `#` starts a comment and indentation is ignored. Names
//! without a view prefix resolve in the most recent `view` header.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::map::{
    is_identifier, MapError, Node, NodeKind, QName, Relation, RelationKind, SystemMap, ViewKind, ENV_VIEW, SYSTEM_VIEW,
};

/// 1-based source position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl Span {
    fn new(line: usize, column: usize) -> Self {
        Self { line, column }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error(transparent)]
    Map(MapError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}:{}: {kind}", .span.line, .span.column)]
pub struct FormatError {
    pub span: Span,
    pub kind: FormatErrorKind,
}

impl FormatError {
    fn syntax(span: Span, msg: impl Into<String>) -> Self {
        Self { span, kind: FormatErrorKind::Syntax(msg.into()) }
    }

    pub fn is_syntax(&self) -> bool {
        matches!(self.kind, FormatErrorKind::Syntax(_))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decl {
    View(ViewKind),
    Node(Node),
    Relation(Relation),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Declaration {
    pub decl: Decl,
    pub span: Span,
}

/// A parsed (but not yet validated) map file.
#[derive(Clone, Debug)]
pub struct MapDocument {
    source: String,
    name: String,
    declarations: Vec<Declaration>,
}

#[derive(Clone, Debug)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str, line_no: usize) -> Result<Vec<Token<'_>>, FormatError> {
    let mut tokens = Vec::new();
    let mut chars = line.char_indices().peekable();
    let mut column = 0;
    while let Some((start, c)) = chars.next() {
        column += 1;
        let col = column;
        match c {
            '#' => break,
            c if c.is_whitespace() => {}
            '=' => tokens.push(Token { text: &line[start..start + 1], column: col }),
            '-' => {
                if matches!(chars.peek(), Some((_, '>'))) {
                    chars.next();
                    column += 1;
                    tokens.push(Token { text: &line[start..start + 2], column: col });
                } else {
                    return Err(FormatError::syntax(Span::new(line_no, col), "expected '->'"));
                }
            }
            c if c.is_ascii_alphanumeric() || c == '_' || c == '.' => {
                let mut end = start + c.len_utf8();
                while let Some(&(i, n)) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' || n == '.' {
                        end = i + n.len_utf8();
                        chars.next();
                        column += 1;
                    } else {
                        break;
                    }
                }
                tokens.push(Token { text: &line[start..end], column: col });
            }
            other => {
                return Err(FormatError::syntax(Span::new(line_no, col), format!("unexpected character '{other}'")))
            }
        }
    }
    Ok(tokens)
}

/// A name as written, before resolution against the current view.
#[derive(Clone, Debug)]
struct RawName {
    text: String,
    view: Option<String>,
    span: Span,
}

struct RawRelation {
    kind: RelationKind,
    source: RawName,
    target: RawName,
    span: Span,
}

enum Pending {
    Done(Declaration),
    Relation(RawRelation),
}

impl MapDocument {
    /// Parses the syntax and resolves names. Structural validation happens in
    /// [`MapDocument::to_map`].
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut name: Option<String> = None;
        let mut current_view: Option<ViewKind> = None;
        let mut seen_views: BTreeMap<ViewKind, Span> = BTreeMap::new();
        let mut pending: Vec<Pending> = Vec::new();
        let mut declared: BTreeMap<QName, Span> = BTreeMap::new();
        let mut last_line = 0;

        for (idx, raw_line) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            last_line = line_no;
            let line = raw_line.strip_suffix('\r').unwrap_or(raw_line);
            let tokens = tokenize(line, line_no)?;
            let Some(head) = tokens.first() else { continue };
            let span = Span::new(line_no, head.column);
            let at = |t: &Token<'_>| Span::new(line_no, t.column);
            let end_span = Span::new(line_no, line.chars().count() + 1);
            let expect_end = |n: usize| -> Result<(), FormatError> {
                match tokens.get(n) {
                    Some(extra) => Err(FormatError::syntax(at(extra), format!("unexpected '{}'", extra.text))),
                    None => Ok(()),
                }
            };

            if name.is_none() {
                if head.text != "map" {
                    return Err(FormatError::syntax(span, format!("expected 'map <name>', found '{}'", head.text)));
                }
                let ident = tokens.get(1).ok_or_else(|| FormatError::syntax(end_span, "expected map name"))?;
                if !is_identifier(ident.text) {
                    return Err(FormatError::syntax(at(ident), format!("invalid map name '{}'", ident.text)));
                }
                expect_end(2)?;
                name = Some(ident.text.to_string());
                continue;
            }

            match head.text {
                "map" => return Err(FormatError::syntax(span, "duplicate 'map' header")),
                "view" => {
                    let which = tokens.get(1).ok_or_else(|| {
                        FormatError::syntax(end_span, "expected 'system', 'subsystem <name>' or 'environment'")
                    })?;
                    let (view, used) = match which.text {
                        "system" => (ViewKind::MLSystem, 2),
                        "environment" => (ViewKind::Environment, 2),
                        "subsystem" => {
                            let ident = tokens
                                .get(2)
                                .ok_or_else(|| FormatError::syntax(end_span, "expected subsystem name"))?;
                            if !is_identifier(ident.text) {
                                return Err(FormatError::syntax(
                                    at(ident),
                                    format!("invalid subsystem name '{}'", ident.text),
                                ));
                            }
                            if ident.text == SYSTEM_VIEW || ident.text == ENV_VIEW {
                                return Err(FormatError::syntax(
                                    at(ident),
                                    format!("'{}' is a reserved view name", ident.text),
                                ));
                            }
                            (ViewKind::Subsystem(ident.text.to_string()), 3)
                        }
                        other => return Err(FormatError::syntax(at(which), format!("unknown view kind '{other}'"))),
                    };
                    expect_end(used)?;
                    if let Some(first) = seen_views.get(&view) {
                        return Err(FormatError::syntax(
                            span,
                            format!("view '{}' already declared at line {}", view.name(), first.line),
                        ));
                    }
                    seen_views.insert(view.clone(), span);
                    pending.push(Pending::Done(Declaration { decl: Decl::View(view.clone()), span }));
                    current_view = Some(view);
                }
                "data" | "modulator" | "random" => {
                    let kind = match head.text {
                        "data" => NodeKind::Data,
                        "modulator" => NodeKind::Modulator,
                        _ => NodeKind::Random,
                    };
                    let Some(view) = &current_view else {
                        return Err(FormatError::syntax(span, "node declaration before any view header"));
                    };
                    let ident = tokens.get(1).ok_or_else(|| FormatError::syntax(end_span, "expected node name"))?;
                    if !is_identifier(ident.text) {
                        return Err(FormatError::syntax(at(ident), format!("invalid node name '{}'", ident.text)));
                    }
                    let boundary = match tokens.get(2) {
                        None => false,
                        Some(t) if t.text == "boundary" => true,
                        Some(t) => return Err(FormatError::syntax(at(t), format!("unexpected '{}'", t.text))),
                    };
                    expect_end(if boundary { 3 } else { 2 })?;
                    let qname = QName::new(view.name(), ident.text);
                    if let Some(first) = declared.get(&qname) {
                        return Err(FormatError::syntax(
                            span,
                            format!("node '{qname}' already declared at line {}", first.line),
                        ));
                    }
                    declared.insert(qname.clone(), span);
                    let mut node = Node::new(qname, kind);
                    node.boundary = boundary;
                    pending.push(Pending::Done(Declaration { decl: Decl::Node(node), span }));
                }
                "edge" | "measure" | "actuate" | "equiv" => {
                    let (kind, arrow) = match head.text {
                        "edge" => (RelationKind::Causal, "->"),
                        "measure" => (RelationKind::Measure, "->"),
                        "actuate" => (RelationKind::Actuate, "->"),
                        _ => (RelationKind::Mapping, "="),
                    };
                    if kind == RelationKind::Causal && current_view.is_none() {
                        return Err(FormatError::syntax(span, "edge declaration before any view header"));
                    }
                    let raw = |i: usize| -> Result<RawName, FormatError> {
                        let tok = tokens.get(i).ok_or_else(|| FormatError::syntax(end_span, "expected a name"))?;
                        let tspan = at(tok);
                        if let Some(q) = QName::parse(tok.text) {
                            return Ok(RawName {
                                text: tok.text.to_string(),
                                view: Some(q.view().to_string()),
                                span: tspan,
                            });
                        }
                        if is_identifier(tok.text) {
                            return Ok(RawName { text: tok.text.to_string(), view: None, span: tspan });
                        }
                        Err(FormatError::syntax(tspan, format!("invalid name '{}'", tok.text)))
                    };
                    let source = raw(1)?;
                    match tokens.get(2) {
                        Some(t) if t.text == arrow => {}
                        Some(t) => return Err(FormatError::syntax(at(t), format!("expected '{arrow}'"))),
                        None => return Err(FormatError::syntax(end_span, format!("expected '{arrow}'"))),
                    }
                    let target = raw(3)?;
                    expect_end(4)?;
                    let resolve = |r: RawName| -> Result<RawName, FormatError> {
                        if r.view.is_some() {
                            return Ok(r);
                        }
                        match &current_view {
                            Some(v) => Ok(RawName { view: Some(v.name().to_string()), ..r }),
                            None => Err(FormatError::syntax(
                                r.span,
                                format!("unqualified name '{}' outside any view", r.text),
                            )),
                        }
                    };
                    pending.push(Pending::Relation(RawRelation {
                        kind,
                        source: resolve(source)?,
                        target: resolve(target)?,
                        span,
                    }));
                }
                other => return Err(FormatError::syntax(span, format!("unknown keyword '{other}'"))),
            }
        }

        let Some(name) = name else {
            return Err(FormatError::syntax(Span::new(last_line.max(1), 1), "expected 'map <name>'"));
        };

        let lookup = |r: &RawName| -> Result<QName, FormatError> {
            let local = r.text.rsplit('.').next().unwrap_or(&r.text);
            let q = QName::new(r.view.clone().unwrap_or_default(), local);
            if declared.contains_key(&q) {
                Ok(q)
            } else {
                Err(FormatError::syntax(r.span, format!("unknown node '{}'", r.text)))
            }
        };
        let mut declarations = Vec::with_capacity(pending.len());
        for p in pending {
            match p {
                Pending::Done(d) => declarations.push(d),
                Pending::Relation(r) => declarations.push(Declaration {
                    decl: Decl::Relation(Relation::new(lookup(&r.source)?, lookup(&r.target)?, r.kind)),
                    span: r.span,
                }),
            }
        }

        Ok(Self { source: text.to_string(), name, declarations })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn declarations(&self) -> &[Declaration] {
        &self.declarations
    }

    /// Validates the declarations into a map; structural errors carry the
    /// position of the declaration responsible.
    pub fn to_map(&self) -> Result<SystemMap, FormatError> {
        let nodes = self.declarations.iter().filter_map(|d| match &d.decl {
            Decl::Node(n) => Some(n.clone()),
            _ => None,
        });
        let relations = self.declarations.iter().filter_map(|d| match &d.decl {
            Decl::Relation(r) => Some(r.clone()),
            _ => None,
        });
        SystemMap::build(self.name.clone(), nodes, relations)
            .map_err(|err| FormatError { span: self.locate(&err), kind: FormatErrorKind::Map(err) })
    }

    fn relation_span(&self, pred: impl Fn(&Relation) -> bool) -> Option<Span> {
        self.declarations.iter().find_map(|d| match &d.decl {
            Decl::Relation(r) if pred(r) => Some(d.span),
            _ => None,
        })
    }

    fn node_span(&self, name: &QName) -> Option<Span> {
        self.declarations.iter().find_map(|d| match &d.decl {
            Decl::Node(n) if &n.name == name => Some(d.span),
            _ => None,
        })
    }

    fn view_span(&self, view: &str) -> Option<Span> {
        self.declarations.iter().find_map(|d| match &d.decl {
            Decl::View(v) if v.name() == view => Some(d.span),
            _ => None,
        })
    }

    fn locate(&self, err: &MapError) -> Span {
        let fallback = Span::new(1, 1);
        let found = match err {
            MapError::Cycle { nodes, .. } => {
                let from = &nodes[0];
                let to = nodes.get(1).unwrap_or(from);
                self.relation_span(|r| r.kind == RelationKind::Causal && &r.source == from && &r.target == to)
            }
            MapError::KindViolation { from, to, kind, .. } => self.relation_span(|r| {
                r.kind == *kind
                    && ((&r.source == from && &r.target == to)
                        || (*kind == RelationKind::Mapping && &r.source == to && &r.target == from))
            }),
            MapError::ViewViolation { node: Some(n), .. } => self.node_span(n),
            MapError::ViewViolation { node: None, .. } => {
                self.declarations.iter().find(|d| matches!(d.decl, Decl::View(_))).map(|d| d.span)
            }
            MapError::MappingViolation { members, .. } => self.declarations.iter().rev().find_map(|d| match &d.decl {
                Decl::Relation(r)
                    if r.kind == RelationKind::Mapping
                        && (members.contains(&r.source) || members.contains(&r.target)) =>
                {
                    Some(d.span)
                }
                _ => None,
            }),
            MapError::TerminalViolation { view, .. } => self.view_span(view),
            MapError::DuplicateNode(n) | MapError::UnknownNode(n) => self.node_span(n),
            MapError::InvalidIdentifier(_) | MapError::UnknownView(_) | MapError::NoRoute(_) => None,
        };
        found.unwrap_or(fallback)
    }
}

/// Parses and validates a map file.
pub fn parse_map(text: &str) -> Result<SystemMap, FormatError> {
    MapDocument::parse(text)?.to_map()
}

/// Canonical text: views in order system, subsystems, environment; nodes then
/// in-view edges, each sorted; cross-view relations last.
pub fn serialize_map(map: &SystemMap) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "map {}", map.name());
    for view in map.views() {
        out.push('\n');
        match view {
            ViewKind::MLSystem => out.push_str("view system\n"),
            ViewKind::Subsystem(name) => {
                let _ = writeln!(out, "view subsystem {name}");
            }
            ViewKind::Environment => out.push_str("view environment\n"),
        }
        for node in map.view_nodes(view) {
            let flag = if node.boundary { " boundary" } else { "" };
            let _ = writeln!(out, "  {} {}{flag}", node.kind.keyword(), node.name.local());
        }
        for rel in map.relations().filter(|r| r.kind == RelationKind::Causal && r.source.view() == view.name()) {
            let _ = writeln!(out, "  edge {} -> {}", rel.source.local(), rel.target.local());
        }
    }
    let cross: Vec<&Relation> = map.relations().filter(|r| r.kind != RelationKind::Causal).collect();
    if !cross.is_empty() {
        out.push('\n');
        for kind in [RelationKind::Mapping, RelationKind::Measure, RelationKind::Actuate] {
            for rel in cross.iter().filter(|r| r.kind == kind) {
                let line = match kind {
                    RelationKind::Mapping => format!("equiv {} = {}", rel.source, rel.target),
                    RelationKind::Measure => format!("measure {} -> {}", rel.source, rel.target),
                    _ => format!("actuate {} -> {}", rel.source, rel.target),
                };
                out.push_str(&line);
                out.push('\n');
            }
        }
    }
    out
}
