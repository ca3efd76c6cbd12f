//! Reference/current observation windows, one column per equivalence class.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::graph::ViewGraph;
use crate::map::{MapError, NodeKind, QName, SystemMap, ViewKind};

pub const WINDOW_COLUMN: &str = "window";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Ref,
    Cur,
}

impl Window {
    pub fn label(self) -> &'static str {
        match self {
            Window::Ref => "ref",
            Window::Cur => "cur",
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Window {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "ref" => Ok(Window::Ref),
            "cur" => Ok(Window::Cur),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical(v) => v[row].is_none(),
        }
    }

    /// Copies the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }

    /// Concatenation of two columns of the same type.
    pub fn concat(&self, other: &Column) -> Column {
        match (self, other) {
            (Column::Numeric(a), Column::Numeric(b)) => Column::Numeric(a.iter().chain(b).copied().collect()),
            (Column::Categorical(a), Column::Categorical(b)) => {
                Column::Categorical(a.iter().chain(b).cloned().collect())
            }
            _ => panic!("cannot concatenate numeric and categorical columns"),
        }
    }

    fn cell(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) => v[row].map(|x| x.to_string()).unwrap_or_default(),
            Column::Categorical(v) => v[row].clone().unwrap_or_default(),
        }
    }

    /// Numeric unless some non-empty cell fails to parse (or `force_categorical`).
    fn from_cells(cells: Vec<String>, force_categorical: bool) -> Column {
        let numeric: Option<Vec<Option<f64>>> =
            if force_categorical {
                None
            } else {
                cells
                    .iter()
                    .map(|c| {
                        if c.is_empty() {
                            Some(None)
                        } else {
                            c.parse::<f64>().ok().filter(|x| x.is_finite()).map(Some)
                        }
                    })
                    .collect()
            };
        match numeric {
            Some(values) => Column::Numeric(values),
            None => Column::Categorical(cells.into_iter().map(|c| (!c.is_empty()).then_some(c)).collect()),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing '{WINDOW_COLUMN}' column")]
    MissingWindowColumn,
    #[error("columns '{first}' and '{second}' belong to the same equivalence class")]
    DuplicateEquivalenceColumn { first: String, second: String },
    #[error("row {row}: bad window label '{value}' (expected 'ref' or 'cur')")]
    BadWindowLabel { row: usize, value: String },
    #[error("window '{0}' has no rows")]
    EmptyWindow(Window),
    #[error("view {view} has no complete rows in window '{window}'")]
    NoDataForView { view: ViewKind, window: Window },
    #[error("column '{column}' has {got} cells, expected {expected}")]
    RaggedColumn { column: String, got: usize, expected: usize },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Observation table with a window label per row. Columns are stored under
/// the canonical (lexicographically smallest) name of their class.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    windows: Vec<Window>,
    columns: BTreeMap<QName, Column>,
    warnings: Vec<String>,
}

impl WindowedDataset {
    /// Builds a dataset from named columns, unifying mapped names.
    pub fn from_columns(
        map: &SystemMap,
        windows: Vec<Window>,
        named: Vec<(String, Column)>,
    ) -> Result<Self, DatasetError> {
        for w in [Window::Ref, Window::Cur] {
            if !windows.contains(&w) {
                return Err(DatasetError::EmptyWindow(w));
            }
        }
        let mut columns = BTreeMap::new();
        let mut origin: BTreeMap<QName, String> = BTreeMap::new();
        let mut warnings = Vec::new();
        for (header, column) in named {
            if column.len() != windows.len() {
                return Err(DatasetError::RaggedColumn { column: header, got: column.len(), expected: windows.len() });
            }
            let Some(name) = QName::parse(&header).filter(|q| map.node(q).is_some()) else {
                warnings.push(format!("column '{header}' does not match any map node; ignored"));
                continue;
            };
            let canonical = map.canonical(&name)?;
            if let Some(first) = origin.get(&canonical) {
                return Err(DatasetError::DuplicateEquivalenceColumn { first: first.clone(), second: header });
            }
            let column = match (map.node(&name).map(|n| n.kind), column) {
                (Some(NodeKind::Modulator), Column::Numeric(values)) => {
                    Column::Categorical(values.into_iter().map(|v| v.map(|x| x.to_string())).collect())
                }
                (_, c) => c,
            };
            origin.insert(canonical.clone(), header);
            columns.insert(canonical, column);
        }
        Ok(Self { windows, columns, warnings })
    }

    /// Reads CSV: header row, a `window` column with `ref`/`cur`, qualified
    /// node names for the rest. Empty cells are missing values.
    pub fn load_csv(map: &SystemMap, reader: impl Read) -> Result<Self, DatasetError> {
        let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers: Vec<String> = csv.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let window_idx = headers.iter().position(|h| h == WINDOW_COLUMN).ok_or(DatasetError::MissingWindowColumn)?;
        let mut cells: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        let mut windows = Vec::new();
        for (i, record) in csv.records().enumerate() {
            let record = record?;
            let label = record.get(window_idx).unwrap_or("").trim();
            let window = label
                .parse::<Window>()
                .map_err(|_| DatasetError::BadWindowLabel { row: i + 1, value: label.to_string() })?;
            windows.push(window);
            for (c, slot) in cells.iter_mut().enumerate() {
                slot.push(record.get(c).unwrap_or("").trim().to_string());
            }
        }
        let named = headers
            .into_iter()
            .zip(cells)
            .enumerate()
            .filter(|(i, _)| *i != window_idx)
            .map(|(_, (header, cells))| {
                let force =
                    QName::parse(&header).and_then(|q| map.node(&q)).is_some_and(|n| n.kind == NodeKind::Modulator);
                let column = Column::from_cells(cells, force);
                (header, column)
            })
            .collect();
        Self::from_columns(map, windows, named)
    }

    pub fn load_csv_path(map: &SystemMap, path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let file = std::fs::File::open(path)?;
        Self::load_csv(map, std::io::BufReader::new(file))
    }

    /// Writes canonical column names in canonical order.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), DatasetError> {
        let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let mut header = vec![WINDOW_COLUMN.to_string()];
        header.extend(self.columns.keys().map(ToString::to_string));
        csv.write_record(&header)?;
        for (row, window) in self.windows.iter().enumerate() {
            let mut record = vec![window.label().to_string()];
            record.extend(self.columns.values().map(|c| c.cell(row)));
            csv.write_record(&record)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn rows_in(&self, window: Window) -> Vec<usize> {
        (0..self.windows.len()).filter(|&i| self.windows[i] == window).collect()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn column_names(&self) -> impl Iterator<Item = &QName> {
        self.columns.keys()
    }

    /// Column for `name`; any member of its equivalence class works.
    pub fn column(&self, map: &SystemMap, name: &QName) -> Option<&Column> {
        let canonical = map.canonical(name).ok()?;
        self.columns.get(&canonical)
    }

    /// Where a node's values come from: its own class column, or for a
    /// random variable without one, the first measuring proxy with data.
    pub fn source_of(&self, map: &SystemMap, name: &QName) -> Option<QName> {
        if self.column(map, name).is_some() {
            return map.canonical(name).ok();
        }
        if map.node(name)?.kind == NodeKind::Random {
            return map
                .proxies(name)
                .into_iter()
                .find(|p| self.column(map, p).is_some())
                .and_then(|p| map.canonical(&p).ok());
        }
        None
    }

    /// Complete-case table of one view and window.
    pub fn view_matrix(&self, map: &SystemMap, view: &ViewKind, window: Window) -> Result<ViewTable, DatasetError> {
        let graph = map.view_graph(view)?;
        let mut nodes = Vec::new();
        let mut sources = Vec::new();
        let mut excluded = Vec::new();
        for name in graph.names() {
            match self.source_of(map, name) {
                Some(src) => {
                    nodes.push(name.clone());
                    sources.push(src);
                }
                None => excluded.push(name.clone()),
            }
        }
        let source_columns: Vec<&Column> = sources.iter().map(|s| &self.columns[s]).collect();
        let rows: Vec<usize> =
            self.rows_in(window).into_iter().filter(|&r| source_columns.iter().all(|c| !c.is_missing(r))).collect();
        if nodes.is_empty() || rows.is_empty() {
            return Err(DatasetError::NoDataForView { view: view.clone(), window });
        }
        let columns = source_columns.iter().map(|c| c.select(&rows)).collect();
        let keep: Vec<bool> = graph.names().iter().map(|n| nodes.contains(n)).collect();
        Ok(ViewTable { graph: graph.retain(&keep), full_graph: graph, sources, excluded, rows, columns, window })
    }
}

/// Row-aligned values of one view in one window.
#[derive(Clone, Debug)]
pub struct ViewTable {
    /// Causal graph over the nodes that have data.
    pub graph: ViewGraph,
    /// The view's full graph, excluded nodes included.
    pub full_graph: ViewGraph,
    /// Column backing each graph node (canonical name; a proxy for some random nodes).
    pub sources: Vec<QName>,
    /// Nodes with no backing column at all.
    pub excluded: Vec<QName>,
    /// Dataset row indices that were kept.
    pub rows: Vec<usize>,
    pub columns: Vec<Column>,
    pub window: Window,
}

impl ViewTable {
    pub fn nodes(&self) -> &[QName] {
        self.graph.names()
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_map;

    const MAP: &str = "map m
view system
  data x
  data y
  edge x -> y
view subsystem sub
  data input
  data out
  modulator knob
  edge input -> out
  edge knob -> out
view environment
  random r
  random hidden
  edge hidden -> r
equiv sub.out = system.y
measure env.r -> system.x
";

    fn map() -> SystemMap {
        parse_map(MAP).unwrap()
    }

    #[test]
    fn loads_and_unifies_mapped_columns() {
        let csv = "window,system.x,sub.out,sub.knob,unknown\nref,1,2,a,z\nref,2,,a,z\ncur,3,4,1,z\n";
        let ds = WindowedDataset::load_csv(&map(), csv.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.rows_in(Window::Ref), vec![0, 1]);
        let y = QName::new("system", "y");
        let out = QName::new("sub", "out");
        assert_eq!(ds.column(&map(), &y), ds.column(&map(), &out));
        assert_eq!(ds.column(&map(), &y), Some(&Column::Numeric(vec![Some(2.0), None, Some(4.0)])));
        assert!(matches!(ds.column(&map(), &QName::new("sub", "knob")), Some(Column::Categorical(_))));
        assert_eq!(ds.warnings().len(), 1);
    }

    #[test]
    fn duplicate_class_columns() {
        let csv = "window,system.y,sub.out\nref,1,1\ncur,2,2\n";
        let err = WindowedDataset::load_csv(&map(), csv.as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateEquivalenceColumn { .. }));
    }

    #[test]
    fn window_column_rules() {
        let err = WindowedDataset::load_csv(&map(), "system.x\n1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::MissingWindowColumn));
        let err = WindowedDataset::load_csv(&map(), "window,system.x\nref,1\nnow,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::BadWindowLabel { row: 2, .. }));
        let err = WindowedDataset::load_csv(&map(), "window,system.x\nref,1\nref,2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyWindow(Window::Cur)));
    }

    #[test]
    fn view_matrix_uses_proxies_and_reports_exclusions() {
        let csv = "window,system.x,system.y\nref,1,2\nref,2,3\ncur,3,\ncur,4,5\n";
        let ds = WindowedDataset::load_csv(&map(), csv.as_bytes()).unwrap();
        let env = ds.view_matrix(&map(), &ViewKind::Environment, Window::Ref).unwrap();
        assert_eq!(env.nodes(), &[QName::new("env", "r")]);
        assert_eq!(env.sources, vec![QName::new("system", "x")]);
        assert_eq!(env.excluded, vec![QName::new("env", "hidden")]);

        let sys = ds.view_matrix(&map(), &ViewKind::MLSystem, Window::Cur).unwrap();
        assert_eq!(sys.rows, vec![3]);
        assert_eq!(sys.graph.edge_count(), 1);
    }

    #[test]
    fn no_complete_rows() {
        let csv = "window,system.x,system.y\nref,1,\ncur,3,4\n";
        let ds = WindowedDataset::load_csv(&map(), csv.as_bytes()).unwrap();
        let err = ds.view_matrix(&map(), &ViewKind::MLSystem, Window::Ref).unwrap_err();
        assert!(matches!(err, DatasetError::NoDataForView { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let csv = "window,system.x,sub.out\nref,1.5,2\ncur,,4\n";
        let ds = WindowedDataset::load_csv(&map(), csv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "window,sub.out,system.x\nref,2,1.5\ncur,4,\n");
        assert_eq!(WindowedDataset::load_csv(&map(), text.as_bytes()).unwrap().columns, ds.columns);
    }
}
