//! Shapley attribution of a target's shift to per-node mechanism changes.
//!
//! The game: players are the nodes of one view, and a coalition `S` is worth
//! the divergence between the target's marginal with `S` on current
//! mechanisms (everyone else on reference) and its all-reference marginal.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::Window;
use crate::map::{QName, ViewKind};
use crate::mechanisms::{Divergence, MechanismError, MechanismSet, DEFAULT_STATE_LIMIT};

pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.002;
pub const DEFAULT_BRANCH_CUTOFF: f64 = 0.2;
pub const DEFAULT_EXACT_LIMIT: usize = 12;
pub const DEFAULT_SHAPLEY_PERMUTATIONS: usize = 500;
pub const DEFAULT_SAMPLE_COUNT: usize = 100_000;
/// Coalitions are bitmasks.
pub const MAX_PLAYERS: usize = 64;

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("{players} players exceed the limit of {limit}")]
    TooManyPlayers { players: usize, limit: usize },
    #[error("sampled attribution needs at least one permutation")]
    NoPermutations,
    #[error("{0} is not a node of the view")]
    UnknownTarget(QName),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
}

/// A cooperative game over `players()` players; coalitions are bitmasks.
pub trait Game {
    fn players(&self) -> usize;
    fn value(&mut self, coalition: u64) -> Result<f64, AttributionError>;
}

/// Explicit game given as a table indexed by coalition bitmask.
#[derive(Clone, Debug)]
pub struct TableGame {
    players: usize,
    values: Vec<f64>,
}

impl TableGame {
    pub fn new(players: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 1 << players, "one value per coalition");
        Self { players, values }
    }
}

impl Game for TableGame {
    fn players(&self) -> usize {
        self.players
    }

    fn value(&mut self, coalition: u64) -> Result<f64, AttributionError> {
        Ok(self.values[coalition as usize])
    }
}

/// The mechanism-swap game on one target.
pub struct MechanismGame<'a> {
    set: &'a MechanismSet,
    target: usize,
    divergence: Divergence,
    state_limit: usize,
    sample_count: usize,
    seed: u64,
    /// Only the target and its ancestors can move its marginal.
    relevant: u64,
    sampled: bool,
    baseline: Vec<f64>,
    cache: HashMap<u64, f64>,
}

impl<'a> MechanismGame<'a> {
    /// Falls back to sampled inference for every coalition when exact
    /// elimination would exceed `state_limit`.
    pub fn new(
        set: &'a MechanismSet,
        target: usize,
        divergence: Divergence,
        state_limit: usize,
        sample_count: usize,
        seed: u64,
    ) -> Result<Self, AttributionError> {
        if set.len() > MAX_PLAYERS {
            return Err(AttributionError::TooManyPlayers { players: set.len(), limit: MAX_PLAYERS });
        }
        let mut relevant = 1u64 << target;
        for a in set.graph().ancestors(target) {
            relevant |= 1 << a;
        }
        let all_ref = vec![Window::Ref; set.len()];
        let (baseline, sampled) = match set.target_marginal(&all_ref, target, state_limit) {
            Ok(p) => (p, false),
            Err(MechanismError::StateSpaceTooLarge { .. }) => {
                (set.sample_marginal(&all_ref, target, sample_count, seed), true)
            }
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            set,
            target,
            divergence,
            state_limit,
            sample_count,
            seed,
            relevant,
            sampled,
            baseline,
            cache: HashMap::new(),
        })
    }

    /// True when marginals are estimated by sampling.
    pub fn is_sampled(&self) -> bool {
        self.sampled
    }

    fn marginal(&self, coalition: u64) -> Result<Vec<f64>, AttributionError> {
        let assignment: Vec<Window> =
            (0..self.set.len()).map(|j| if coalition >> j & 1 == 1 { Window::Cur } else { Window::Ref }).collect();
        if self.sampled {
            // Same seed as the baseline: common random numbers keep v(S) smooth.
            Ok(self.set.sample_marginal(&assignment, self.target, self.sample_count, self.seed))
        } else {
            Ok(self.set.target_marginal(&assignment, self.target, self.state_limit)?)
        }
    }
}

impl Game for MechanismGame<'_> {
    fn players(&self) -> usize {
        self.set.len()
    }

    fn value(&mut self, coalition: u64) -> Result<f64, AttributionError> {
        let key = coalition & self.relevant;
        if key == 0 {
            return Ok(0.0);
        }
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let p = self.marginal(key)?;
        let v = self.divergence.eval(&p, &self.baseline)?;
        self.cache.insert(key, v);
        Ok(v)
    }
}

/// Exact Shapley values by enumerating every coalition.
pub fn exact_shapley_values(game: &mut impl Game, limit: usize) -> Result<Vec<f64>, AttributionError> {
    let n = game.players();
    if n > limit.min(MAX_PLAYERS - 1) {
        return Err(AttributionError::TooManyPlayers { players: n, limit });
    }
    let coalitions = 1u64 << n;
    let values = (0..coalitions).map(|s| game.value(s)).collect::<Result<Vec<f64>, _>>()?;
    // weight[s] = s! (n - s - 1)! / n!
    let factorial = |k: usize| (1..=k).map(|i| i as f64).product::<f64>();
    let weight: Vec<f64> = (0..n).map(|s| factorial(s) * factorial(n - s - 1) / factorial(n)).collect();
    let mut phi = vec![0.0; n];
    for (j, phi_j) in phi.iter_mut().enumerate() {
        let bit = 1u64 << j;
        for s in (0..coalitions).filter(|s| s & bit == 0) {
            let size = s.count_ones() as usize;
            *phi_j += weight[size] * (values[(s | bit) as usize] - values[s as usize]);
        }
    }
    Ok(phi)
}

/// Mean marginal contribution over `permutations` seeded random player orders.
pub fn sampled_shapley_values(
    game: &mut impl Game,
    permutations: usize,
    seed: u64,
) -> Result<Vec<f64>, AttributionError> {
    if permutations == 0 {
        return Err(AttributionError::NoPermutations);
    }
    let n = game.players();
    if n > MAX_PLAYERS {
        return Err(AttributionError::TooManyPlayers { players: n, limit: MAX_PLAYERS });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let empty = game.value(0)?;
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut coalition = 0u64;
        let mut prev = empty;
        for &j in &order {
            coalition |= 1 << j;
            let v = game.value(coalition)?;
            phi[j] += v - prev;
            prev = v;
        }
    }
    Ok(phi.into_iter().map(|x| x / permutations as f64).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Exact up to the player limit, sampled above it.
    #[default]
    Auto,
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Classification {
    Concentrated {
        node: QName,
        share: f64,
    },
    /// Nodes above the branch cutoff, largest share first.
    Distributed {
        nodes: Vec<QName>,
    },
    Negligible,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttributionConfig {
    pub divergence: Divergence,
    pub mode: Mode,
    /// Minimum top share for a concentrated outcome.
    pub tau: f64,
    /// Total shifts below this are negligible.
    pub epsilon: f64,
    /// Minimum share for a node to count as a branch of a distributed outcome.
    pub branch_cutoff: f64,
    pub exact_limit: usize,
    pub permutations: usize,
    pub state_limit: usize,
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            divergence: Divergence::JensenShannon,
            mode: Mode::Auto,
            tau: DEFAULT_TAU,
            epsilon: DEFAULT_EPSILON,
            branch_cutoff: DEFAULT_BRANCH_CUTOFF,
            exact_limit: DEFAULT_EXACT_LIMIT,
            permutations: DEFAULT_SHAPLEY_PERMUTATIONS,
            state_limit: DEFAULT_STATE_LIMIT,
            sample_count: DEFAULT_SAMPLE_COUNT,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionResult {
    pub view: ViewKind,
    pub target: QName,
    pub players: Vec<QName>,
    pub scores: Vec<f64>,
    /// `v(N)`: the target's shift with every mechanism on the current window.
    pub total: f64,
    pub shares: Vec<f64>,
    /// `Exact` or `Sampled` (never `Auto`).
    pub mode: Mode,
    /// Marginals estimated by ancestral sampling instead of elimination.
    pub sampled_inference: bool,
    pub classification: Classification,
}

impl AttributionResult {
    /// Builds a result from raw scores and classifies it.
    pub fn new(
        view: ViewKind,
        target: QName,
        players: Vec<QName>,
        scores: Vec<f64>,
        total: f64,
        mode: Mode,
        config: &AttributionConfig,
    ) -> Self {
        let shares = shares(&scores);
        let mut result = Self {
            view,
            target,
            players,
            scores,
            total,
            shares,
            mode,
            sampled_inference: false,
            classification: Classification::Negligible,
        };
        result.classification = classify(&result, config.tau, config.epsilon, config.branch_cutoff);
        result
    }

    pub fn score_of(&self, node: &QName) -> Option<f64> {
        self.players.iter().position(|p| p == node).map(|i| self.scores[i])
    }

    /// Player with the largest share; ties go to the first in order.
    pub fn top(&self) -> Option<(&QName, f64)> {
        let mut best: Option<usize> = None;
        for (i, &w) in self.shares.iter().enumerate() {
            if best.is_none_or(|b| w > self.shares[b]) {
                best = Some(i);
            }
        }
        best.map(|i| (&self.players[i], self.shares[i]))
    }
}

/// `|phi_j| / sum |phi|`, or all zero when every score is zero.
pub fn shares(scores: &[f64]) -> Vec<f64> {
    let total: f64 = scores.iter().map(|s| s.abs()).sum();
    if total > 0.0 {
        scores.iter().map(|s| s.abs() / total).collect()
    } else {
        vec![0.0; scores.len()]
    }
}

pub fn classify(result: &AttributionResult, tau: f64, epsilon: f64, branch_cutoff: f64) -> Classification {
    if !(result.total >= epsilon) || result.shares.iter().all(|&w| w == 0.0) {
        return Classification::Negligible;
    }
    let (top, share) = result.top().expect("non-empty shares");
    if share >= tau {
        return Classification::Concentrated { node: top.clone(), share };
    }
    let mut branches: Vec<usize> = (0..result.players.len()).filter(|&i| result.shares[i] >= branch_cutoff).collect();
    branches.sort_by(|&a, &b| result.shares[b].total_cmp(&result.shares[a]).then(a.cmp(&b)));
    Classification::Distributed { nodes: branches.into_iter().map(|i| result.players[i].clone()).collect() }
}

/// Attributes the target's shift to the nodes of the mechanism set's view.
pub fn attribute(
    set: &MechanismSet,
    target: &QName,
    config: &AttributionConfig,
) -> Result<AttributionResult, AttributionError> {
    let t = set.index_of(target).ok_or_else(|| AttributionError::UnknownTarget(target.clone()))?;
    let mut game = MechanismGame::new(set, t, config.divergence, config.state_limit, config.sample_count, config.seed)?;
    let mode = match config.mode {
        Mode::Auto if set.len() <= config.exact_limit => Mode::Exact,
        Mode::Auto => Mode::Sampled,
        m => m,
    };
    let scores = match mode {
        Mode::Exact => exact_shapley_values(&mut game, config.exact_limit)?,
        _ => sampled_shapley_values(&mut game, config.permutations, config.seed)?,
    };
    let all = if set.len() == 64 { u64::MAX } else { (1u64 << set.len()) - 1 };
    let total = game.value(all)?;
    let mut result =
        AttributionResult::new(set.view().clone(), target.clone(), set.names().to_vec(), scores, total, mode, config);
    result.sampled_inference = game.is_sampled();
    Ok(result)
}

/// [`attribute`] forced to exact mode.
pub fn shapley_exact(
    set: &MechanismSet,
    target: &QName,
    config: &AttributionConfig,
) -> Result<AttributionResult, AttributionError> {
    attribute(set, target, &AttributionConfig { mode: Mode::Exact, ..*config })
}

/// [`attribute`] forced to sampled mode with the given permutations and seed.
pub fn shapley_sampled(
    set: &MechanismSet,
    target: &QName,
    permutations: usize,
    seed: u64,
    config: &AttributionConfig,
) -> Result<AttributionResult, AttributionError> {
    attribute(set, target, &AttributionConfig { mode: Mode::Sampled, permutations, seed, ..*config })
}
