use serde::Serialize;

use crate::dataset::Column;
use crate::map::QName;

use super::MechanismError;

/// Binning of one variable.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Bins {
    /// Bin `i` holds `(edges[i-1], edges[i]]`; below the first edge is bin 0.
    Numeric { edges: Vec<f64> },
    /// Known categories, plus a trailing bucket for anything unseen.
    Categorical { categories: Vec<String> },
}

impl Bins {
    /// Quantile bins (at most `k`) for numeric columns, category lists for
    /// categorical ones. Missing cells are ignored.
    pub fn fit(column: &Column, k: usize) -> Bins {
        match column {
            Column::Numeric(values) => {
                let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
                sorted.sort_by(f64::total_cmp);
                Bins::Numeric { edges: quantile_edges(&sorted, k) }
            }
            Column::Categorical(values) => {
                let mut categories: Vec<String> = values.iter().flatten().cloned().collect();
                categories.sort();
                categories.dedup();
                Bins::Categorical { categories }
            }
        }
    }

    pub fn cardinality(&self) -> usize {
        match self {
            Bins::Numeric { edges } => edges.len() + 1,
            Bins::Categorical { categories } => categories.len() + 1,
        }
    }

    pub fn bin_numeric(&self, x: f64) -> usize {
        match self {
            Bins::Numeric { edges } => edges.partition_point(|&e| e < x),
            Bins::Categorical { categories } => self.bin_category(&x.to_string()).min(categories.len()),
        }
    }

    pub fn bin_category(&self, token: &str) -> usize {
        match self {
            Bins::Categorical { categories } => {
                categories.binary_search_by(|c| c.as_str().cmp(token)).unwrap_or(categories.len())
            }
            Bins::Numeric { .. } => token.parse::<f64>().map(|x| self.bin_numeric(x)).unwrap_or(0),
        }
    }

    /// Bin indices for every cell; `None` for missing cells.
    pub fn encode(&self, column: &Column) -> Vec<Option<usize>> {
        match column {
            Column::Numeric(v) => v.iter().map(|x| x.map(|x| self.bin_numeric(x))).collect(),
            Column::Categorical(v) => v.iter().map(|x| x.as_deref().map(|t| self.bin_category(t))).collect(),
        }
    }
}

/// Edges at the `i/k` inverted-CDF quantiles, deduplicated, with edges at or
/// above the maximum dropped so no bin is empty by construction.
fn quantile_edges(sorted: &[f64], k: usize) -> Vec<f64> {
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let max = sorted[n - 1];
    let mut edges: Vec<f64> = Vec::with_capacity(k.saturating_sub(1));
    for i in 1..k {
        let idx = (i * n).div_ceil(k).saturating_sub(1);
        let e = sorted[idx.min(n - 1)];
        if e < max && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    edges
}

/// Per-variable binning shared by both windows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discretization {
    pub variables: Vec<(QName, Bins)>,
}

impl Discretization {
    pub fn bins(&self, name: &QName) -> Option<&Bins> {
        self.variables.iter().find(|(n, _)| n == name).map(|(_, b)| b)
    }
}

/// Fits a discretization over the given columns (all of equal length).
pub fn fit_discretization(columns: &[(QName, &Column)], k: usize) -> Result<Discretization, MechanismError> {
    if k < 2 {
        return Err(MechanismError::InvalidBinCount(k));
    }
    if columns.is_empty() || columns.iter().all(|(_, c)| c.is_empty()) {
        return Err(MechanismError::EmptyTable);
    }
    Ok(Discretization { variables: columns.iter().map(|(n, c)| (n.clone(), Bins::fit(c, k))).collect() })
}
