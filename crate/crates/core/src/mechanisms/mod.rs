//! Per-window mechanisms over a shared discretization.
//!
//! Every node of a view gets one mechanism per window: a marginal for roots,
//! a conditional table given its in-view parents otherwise. Swapping some
//! nodes' mechanisms to the current window and propagating is what the
//! attribution set function evaluates.

mod discretize;
mod divergence;
mod inference;
mod shift;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Column, DatasetError, ViewTable, Window, WindowedDataset};
use crate::graph::ViewGraph;
use crate::map::{QName, SystemMap, ViewKind};

pub use discretize::{fit_discretization, Bins, Discretization};
pub use divergence::{jsd, total_variation, Divergence};
pub use shift::{shift_test, ShiftConfig, ShiftTest};

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_SMOOTHING: f64 = 1.0;
pub const DEFAULT_WINDOW_PRIOR: f64 = 10.0;
pub const DEFAULT_STATE_LIMIT: usize = 1_000_000;

const ROW_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("cannot discretize an empty table")]
    EmptyTable,
    #[error("bin count must be at least 2, got {0}")]
    InvalidBinCount(usize),
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("distribution is not normalized (sum {0})")]
    NotNormalized(f64),
    #[error("elimination needs a factor of {size} states, over the limit of {limit}")]
    StateSpaceTooLarge { size: f64, limit: usize },
    #[error("{node}: {rows} rows in window '{window}', need at least {needed}")]
    InsufficientData { node: QName, window: Window, rows: usize, needed: usize },
    #[error("a permutation test needs at least {needed} permutations, got {got}")]
    TooFewPermutations { got: usize, needed: usize },
    #[error("unknown node {0}")]
    UnknownNode(QName),
    #[error("invalid mechanism for {node}: {reason}")]
    InvalidMechanism { node: QName, reason: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// A node's generative rule in one window.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Mechanism {
    Marginal {
        probs: Vec<f64>,
    },
    /// One probability row per parent configuration. Configurations are
    /// mixed-radix over the parents in graph order, last parent fastest.
    Conditional {
        parent_cards: Vec<usize>,
        card: usize,
        rows: Vec<f64>,
    },
}

impl Mechanism {
    pub fn cardinality(&self) -> usize {
        match self {
            Mechanism::Marginal { probs } => probs.len(),
            Mechanism::Conditional { card, .. } => *card,
        }
    }

    pub fn configurations(&self) -> usize {
        match self {
            Mechanism::Marginal { .. } => 1,
            Mechanism::Conditional { parent_cards, .. } => parent_cards.iter().product(),
        }
    }

    pub fn row(&self, config: usize) -> &[f64] {
        match self {
            Mechanism::Marginal { probs } => probs,
            Mechanism::Conditional { card, rows, .. } => &rows[config * card..(config + 1) * card],
        }
    }

    pub fn is_marginal(&self) -> bool {
        matches!(self, Mechanism::Marginal { .. })
    }
}

/// Estimation settings for [`fit_mechanisms`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitConfig {
    /// Quantile bins per numeric variable.
    pub bins: usize,
    /// Laplace pseudo-count added to every cell of the pooled estimate.
    pub smoothing: f64,
    /// Pseudo-count strength with which each window's rows are shrunk toward
    /// the pooled row of the same parent configuration.
    pub window_prior: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { bins: DEFAULT_BINS, smoothing: DEFAULT_SMOOTHING, window_prior: DEFAULT_WINDOW_PRIOR }
    }
}

/// Mechanisms of every node of one view, for both windows.
#[derive(Clone, Debug, PartialEq)]
pub struct MechanismSet {
    graph: ViewGraph,
    cards: Vec<usize>,
    discretization: Option<Discretization>,
    /// `[ref, cur]` per node.
    mechanisms: Vec<[Mechanism; 2]>,
    excluded: Vec<QName>,
    rows: [usize; 2],
}

fn slot(w: Window) -> usize {
    match w {
        Window::Ref => 0,
        Window::Cur => 1,
    }
}

impl MechanismSet {
    /// Assembles a set from explicit tables (`ref_tables[j]`, `cur_tables[j]`
    /// laid out as in [`Mechanism::Conditional`]). Rows must be normalized.
    pub fn from_tables(
        graph: ViewGraph,
        cards: Vec<usize>,
        ref_tables: Vec<Vec<f64>>,
        cur_tables: Vec<Vec<f64>>,
    ) -> Result<Self, MechanismError> {
        let n = graph.len();
        if cards.len() != n || ref_tables.len() != n || cur_tables.len() != n {
            return Err(MechanismError::LengthMismatch(n, cards.len().min(ref_tables.len()).min(cur_tables.len())));
        }
        let mut mechanisms = Vec::with_capacity(n);
        for (j, (r, c)) in ref_tables.into_iter().zip(cur_tables).enumerate() {
            let parent_cards: Vec<usize> = graph.parents(j).iter().map(|&p| cards[p]).collect();
            let build = |table: Vec<f64>| -> Result<Mechanism, MechanismError> {
                let configs: usize = parent_cards.iter().product();
                let invalid = |reason: String| MechanismError::InvalidMechanism { node: graph.name(j).clone(), reason };
                if table.len() != configs * cards[j] {
                    return Err(invalid(format!("expected {} entries, got {}", configs * cards[j], table.len())));
                }
                for (i, row) in table.chunks(cards[j]).enumerate() {
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > ROW_TOLERANCE || row.iter().any(|&x| !(x >= 0.0)) {
                        return Err(invalid(format!("row {i} sums to {sum}")));
                    }
                }
                Ok(if parent_cards.is_empty() {
                    Mechanism::Marginal { probs: table }
                } else {
                    Mechanism::Conditional { parent_cards: parent_cards.clone(), card: cards[j], rows: table }
                })
            };
            mechanisms.push([build(r)?, build(c)?]);
        }
        Ok(Self { graph, cards, discretization: None, mechanisms, excluded: Vec::new(), rows: [0, 0] })
    }

    pub fn graph(&self) -> &ViewGraph {
        &self.graph
    }

    pub fn view(&self) -> &ViewKind {
        self.graph.view()
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn names(&self) -> &[QName] {
        self.graph.names()
    }

    pub fn index_of(&self, name: &QName) -> Option<usize> {
        self.graph.index_of(name)
    }

    pub fn cardinality(&self, node: usize) -> usize {
        self.cards[node]
    }

    pub fn mechanism(&self, node: usize, window: Window) -> &Mechanism {
        &self.mechanisms[node][slot(window)]
    }

    pub fn discretization(&self) -> Option<&Discretization> {
        self.discretization.as_ref()
    }

    /// View nodes left out for lack of data.
    pub fn excluded(&self) -> &[QName] {
        &self.excluded
    }

    /// Complete rows used per window.
    pub fn row_count(&self, window: Window) -> usize {
        self.rows[slot(window)]
    }

    /// True when the node's two tables are identical.
    pub fn is_unchanged(&self, node: usize) -> bool {
        self.mechanisms[node][0] == self.mechanisms[node][1]
    }

    /// Exact marginal of `target` under a per-node window choice.
    pub fn target_marginal(
        &self,
        assignment: &[Window],
        target: usize,
        state_limit: usize,
    ) -> Result<Vec<f64>, MechanismError> {
        assert_eq!(assignment.len(), self.len(), "one window per node");
        inference::target_marginal(self, assignment, target, state_limit)
    }

    /// Ancestral-sampling estimate of the same marginal; deterministic in `seed`.
    pub fn sample_marginal(&self, assignment: &[Window], target: usize, samples: usize, seed: u64) -> Vec<f64> {
        assert_eq!(assignment.len(), self.len(), "one window per node");
        inference::sample_marginal(self, assignment, target, samples.max(1), seed)
    }

    /// Divergence between the node's all-reference and all-current marginals.
    pub fn node_shift(&self, node: usize, divergence: Divergence, state_limit: usize) -> Result<f64, MechanismError> {
        let all_ref = vec![Window::Ref; self.len()];
        let all_cur = vec![Window::Cur; self.len()];
        let p = self.target_marginal(&all_ref, node, state_limit)?;
        let q = self.target_marginal(&all_cur, node, state_limit)?;
        divergence.eval(&p, &q)
    }
}

/// Fits discretization and both windows' mechanisms for one view.
///
/// Bins are fit on the pooled windows. Each parent configuration first gets a
/// pooled, Laplace-smoothed row; each window's row is then its own counts
/// shrunk toward that pooled row with strength `window_prior`. A
/// configuration seen in only one window therefore gets the same row in both.
pub fn fit_mechanisms(
    map: &SystemMap,
    ds: &WindowedDataset,
    view: &ViewKind,
    config: &FitConfig,
) -> Result<MechanismSet, MechanismError> {
    let tables = [ds.view_matrix(map, view, Window::Ref)?, ds.view_matrix(map, view, Window::Cur)?];
    fit_from_tables(&tables, config)
}

pub(crate) fn fit_from_tables(tables: &[ViewTable; 2], config: &FitConfig) -> Result<MechanismSet, MechanismError> {
    let graph = tables[0].graph.clone();
    // Numeric edges come from the reference window alone so a shifted cur
    // window spills into the edge bins; categories are collected from both.
    let basis: Vec<Column> = (0..graph.len())
        .map(|j| match &tables[0].columns[j] {
            Column::Numeric(_) => tables[0].columns[j].clone(),
            Column::Categorical(_) => tables[0].columns[j].concat(&tables[1].columns[j]),
        })
        .collect();
    let named: Vec<(QName, &Column)> = graph.names().iter().cloned().zip(basis.iter()).collect();
    let discretization = fit_discretization(&named, config.bins)?;
    let bins: Vec<&Bins> = discretization.variables.iter().map(|(_, b)| b).collect();
    let cards: Vec<usize> = bins.iter().map(|b| b.cardinality()).collect();

    // codes[w][j][row]
    let codes: Vec<Vec<Vec<usize>>> = tables
        .iter()
        .map(|t| {
            (0..graph.len())
                .map(|j| bins[j].encode(&t.columns[j]).into_iter().map(|c| c.expect("complete rows")).collect())
                .collect()
        })
        .collect();

    let mut mechanisms = Vec::with_capacity(graph.len());
    for j in 0..graph.len() {
        let parents = graph.parents(j);
        let parent_cards: Vec<usize> = parents.iter().map(|&p| cards[p]).collect();
        let configs: usize = parent_cards.iter().product();
        let card = cards[j];
        let mut counts = [vec![0.0f64; configs * card], vec![0.0f64; configs * card]];
        for (w, window_codes) in codes.iter().enumerate() {
            let rows = window_codes[j].len();
            for r in 0..rows {
                let mut config = 0;
                for &p in parents {
                    config = config * cards[p] + window_codes[p][r];
                }
                counts[w][config * card + window_codes[j][r]] += 1.0;
            }
        }

        let mut tables_out = [Vec::with_capacity(configs * card), Vec::with_capacity(configs * card)];
        for c in 0..configs {
            let range = c * card..(c + 1) * card;
            let n_ref: f64 = counts[0][range.clone()].iter().sum();
            let n_cur: f64 = counts[1][range.clone()].iter().sum();
            let pooled_total = n_ref + n_cur + card as f64 * config.smoothing;
            let pooled_row: Vec<f64> = range
                .clone()
                .map(|i| {
                    if pooled_total > 0.0 {
                        (counts[0][i] + counts[1][i] + config.smoothing) / pooled_total
                    } else {
                        1.0 / card as f64
                    }
                })
                .collect();
            for (w, n_w) in [n_ref, n_cur].into_iter().enumerate() {
                let denom = n_w + config.window_prior;
                if denom > 0.0 {
                    let mut row: Vec<f64> = range
                        .clone()
                        .zip(&pooled_row)
                        .map(|(i, &p)| (counts[w][i] + config.window_prior * p) / denom)
                        .collect();
                    normalize(&mut row);
                    tables_out[w].extend(row);
                } else {
                    tables_out[w].extend(pooled_row.iter().copied());
                }
            }
        }
        let [ref_rows, cur_rows] = tables_out;
        let make = |rows: Vec<f64>| {
            if parents.is_empty() {
                Mechanism::Marginal { probs: rows }
            } else {
                Mechanism::Conditional { parent_cards: parent_cards.clone(), card, rows }
            }
        };
        mechanisms.push([make(ref_rows), make(cur_rows)]);
    }

    Ok(MechanismSet {
        graph,
        cards,
        discretization: Some(discretization),
        mechanisms,
        excluded: tables[0].excluded.clone(),
        rows: [tables[0].row_count(), tables[1].row_count()],
    })
}

fn normalize(row: &mut [f64]) {
    let total: f64 = row.iter().sum();
    for v in row {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_map;

    const CHAIN: &str = "map m\nview system\n  data a\n  data b\n  edge a -> b\n";

    fn chain_dataset(ref_rows: &[(f64, f64)], cur_rows: &[(f64, f64)]) -> (SystemMap, WindowedDataset) {
        let map = parse_map(CHAIN).unwrap();
        let mut windows = Vec::new();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (w, rows) in [(Window::Ref, ref_rows), (Window::Cur, cur_rows)] {
            for &(x, y) in rows {
                windows.push(w);
                a.push(Some(x));
                b.push(Some(y));
            }
        }
        let ds = WindowedDataset::from_columns(
            &map,
            windows,
            vec![("system.a".into(), Column::Numeric(a)), ("system.b".into(), Column::Numeric(b))],
        )
        .unwrap();
        (map, ds)
    }

    fn hand_set(pa: [f64; 2], pb_given_a: [f64; 4]) -> MechanismSet {
        let graph =
            ViewGraph::new(ViewKind::MLSystem, vec![QName::new("system", "a"), QName::new("system", "b")], &[(0, 1)]);
        MechanismSet::from_tables(
            graph,
            vec![2, 2],
            vec![pa.to_vec(), pb_given_a.to_vec()],
            vec![pa.to_vec(), pb_given_a.to_vec()],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_chain_is_near_one_hot() {
        let rows: Vec<(f64, f64)> = (0..2000).map(|i| ((i % 4) as f64, (i % 4) as f64)).collect();
        let (map, ds) = chain_dataset(&rows, &rows);
        let set = fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig::default()).unwrap();
        let b = set.index_of(&QName::new("system", "b")).unwrap();
        let mech = set.mechanism(b, Window::Ref);
        for c in 0..mech.configurations() {
            let row = mech.row(c);
            assert!(row[c] > 0.99, "row {c}: {row:?}");
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn identical_windows_identical_mechanisms() {
        let rows: Vec<(f64, f64)> = (0..500).map(|i| ((i * 37 % 11) as f64, (i * 13 % 7) as f64)).collect();
        let (map, ds) = chain_dataset(&rows, &rows);
        let set = fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig::default()).unwrap();
        for j in 0..set.len() {
            assert!(set.is_unchanged(j));
        }
        let again = fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig::default()).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn rows_normalized_and_positive() {
        let r: Vec<(f64, f64)> = (0..300).map(|i| ((i % 5) as f64, ((i * 3) % 9) as f64)).collect();
        let c: Vec<(f64, f64)> = (0..200).map(|i| ((i % 3) as f64 + 2.0, (i % 4) as f64)).collect();
        let (map, ds) = chain_dataset(&r, &c);
        let set = fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig::default()).unwrap();
        for j in 0..set.len() {
            for w in [Window::Ref, Window::Cur] {
                let m = set.mechanism(j, w);
                for cfg in 0..m.configurations() {
                    let row = m.row(cfg);
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                    assert!(row.iter().all(|&p| p > 0.0));
                }
            }
        }
    }

    #[test]
    fn hand_marginalization() {
        let set = hand_set([0.5, 0.5], [1.0, 0.0, 0.0, 1.0]);
        let p = set.target_marginal(&[Window::Ref; 2], 1, DEFAULT_STATE_LIMIT).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let root = set.target_marginal(&[Window::Ref; 2], 0, DEFAULT_STATE_LIMIT).unwrap();
        assert_eq!(root, vec![0.5, 0.5]);
    }

    #[test]
    fn deterministic_chain_sampling() {
        let set = hand_set([0.0, 1.0], [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(set.sample_marginal(&[Window::Ref; 2], 1, 1000, 7), vec![0.0, 1.0]);
        let set = hand_set([0.3, 0.7], [0.2, 0.8, 0.6, 0.4]);
        let a = set.sample_marginal(&[Window::Ref; 2], 1, 5000, 11);
        assert_eq!(a, set.sample_marginal(&[Window::Ref; 2], 1, 5000, 11));
    }

    #[test]
    fn state_limit_enforced() {
        let set = hand_set([0.5, 0.5], [1.0, 0.0, 0.0, 1.0]);
        let err = set.target_marginal(&[Window::Ref; 2], 1, 3).unwrap_err();
        assert!(matches!(err, MechanismError::StateSpaceTooLarge { .. }));
    }

    #[test]
    fn from_tables_validates_rows() {
        let graph = ViewGraph::new(ViewKind::MLSystem, vec![QName::new("system", "a")], &[]);
        let err = MechanismSet::from_tables(graph, vec![2], vec![vec![0.5, 0.6]], vec![vec![0.5, 0.5]]);
        assert!(matches!(err, Err(MechanismError::InvalidMechanism { .. })));
    }
}
