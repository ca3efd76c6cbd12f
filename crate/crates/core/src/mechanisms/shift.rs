//! Two-sample permutation test on one variable's binned marginal.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::{Window, WindowedDataset};
use crate::map::{QName, SystemMap};

use super::{jsd, Bins, MechanismError, DEFAULT_BINS};

pub const MIN_ROWS_PER_WINDOW: usize = 30;
pub const MIN_PERMUTATIONS: usize = 100;
pub const DEFAULT_PERMUTATIONS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ShiftConfig {
    pub permutations: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self { permutations: DEFAULT_PERMUTATIONS, bins: DEFAULT_BINS, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShiftTest {
    pub node: QName,
    /// Jensen-Shannon divergence between the windows' histograms.
    pub statistic: f64,
    pub p_value: f64,
}

fn histogram_jsd(codes: &[usize], split: usize, card: usize, counts: &mut [f64]) -> f64 {
    counts.iter_mut().for_each(|c| *c = 0.0);
    let (a, b) = codes.split_at(split);
    for &c in a {
        counts[c] += 1.0;
    }
    for &c in b {
        counts[card + c] += 1.0;
    }
    let (p, q) = counts.split_at_mut(card);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    p.iter_mut().for_each(|x| *x /= na);
    q.iter_mut().for_each(|x| *x /= nb);
    jsd(p, q).expect("histograms are normalized")
}

/// Permutation test for a change in `node`'s marginal between windows.
///
/// Bins are fit on the pooled rows, so every relabelling is scored on the
/// same footing. `p = (1 + #{perm >= observed}) / (B + 1)`.
pub fn shift_test(
    ds: &WindowedDataset,
    map: &SystemMap,
    node: &QName,
    config: &ShiftConfig,
) -> Result<ShiftTest, MechanismError> {
    if config.permutations < MIN_PERMUTATIONS {
        return Err(MechanismError::TooFewPermutations { got: config.permutations, needed: MIN_PERMUTATIONS });
    }
    if config.bins < 2 {
        return Err(MechanismError::InvalidBinCount(config.bins));
    }
    let source = ds.source_of(map, node).ok_or_else(|| MechanismError::UnknownNode(node.clone()))?;
    let column = ds.column(map, &source).expect("source has a column");
    let mut rows = Vec::new();
    let mut split = 0;
    for window in [Window::Ref, Window::Cur] {
        let present: Vec<usize> = ds.rows_in(window).into_iter().filter(|&r| !column.is_missing(r)).collect();
        if present.len() < MIN_ROWS_PER_WINDOW {
            return Err(MechanismError::InsufficientData {
                node: node.clone(),
                window,
                rows: present.len(),
                needed: MIN_ROWS_PER_WINDOW,
            });
        }
        if window == Window::Ref {
            split = present.len();
        }
        rows.extend(present);
    }
    let pooled = column.select(&rows);
    let bins = Bins::fit(&pooled, config.bins);
    let card = bins.cardinality();
    let mut codes: Vec<usize> = bins.encode(&pooled).into_iter().map(|c| c.expect("no missing cells")).collect();

    let mut counts = vec![0.0; 2 * card];
    let observed = histogram_jsd(&codes, split, card, &mut counts);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut at_least = 0usize;
    for _ in 0..config.permutations {
        codes.shuffle(&mut rng);
        // Tiny tolerance so float noise on exact ties does not count against ties.
        if histogram_jsd(&codes, split, card, &mut counts) >= observed - 1e-12 {
            at_least += 1;
        }
    }
    Ok(ShiftTest {
        node: node.clone(),
        statistic: observed,
        p_value: (1 + at_least) as f64 / (config.permutations + 1) as f64,
    })
}
