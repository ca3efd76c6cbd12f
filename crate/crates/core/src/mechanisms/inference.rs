//! Exact marginals by variable elimination, and an ancestral-sampling fallback.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Window;

use super::{MechanismError, MechanismSet};

/// Dense table over a sorted set of variables; the last variable varies fastest.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Factor {
    vars: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

/// Advances a mixed-radix counter; returns false after the last state.
fn advance(state: &mut [usize], cards: &[usize]) -> bool {
    for i in (0..state.len()).rev() {
        state[i] += 1;
        if state[i] < cards[i] {
            return true;
        }
        state[i] = 0;
    }
    false
}

impl Factor {
    /// Factor for `P(node | parents)` under the chosen window.
    fn from_mechanism(set: &MechanismSet, node: usize, window: Window) -> Factor {
        let parents = set.graph().parents(node);
        let mut vars: Vec<usize> = parents.to_vec();
        vars.push(node);
        vars.sort_unstable();
        let cards: Vec<usize> = vars.iter().map(|&v| set.cardinality(v)).collect();
        let size: usize = cards.iter().product();
        let mech = set.mechanism(node, window);
        let parent_pos: Vec<usize> = parents.iter().map(|p| vars.binary_search(p).unwrap()).collect();
        let node_pos = vars.binary_search(&node).unwrap();
        let parent_cards: Vec<usize> = parents.iter().map(|&p| set.cardinality(p)).collect();
        let parent_strides = strides(&parent_cards);

        let mut values = Vec::with_capacity(size);
        let mut state = vec![0; vars.len()];
        loop {
            let config: usize = parent_pos.iter().zip(&parent_strides).map(|(&pos, &s)| state[pos] * s).sum();
            values.push(mech.row(config)[state[node_pos]]);
            if !advance(&mut state, &cards) {
                break;
            }
        }
        Factor { vars, cards, values }
    }

    fn size_of(vars: &[usize], set: &MechanismSet) -> f64 {
        vars.iter().map(|&v| set.cardinality(v) as f64).product()
    }

    fn product(factors: &[Factor], card_of: impl Fn(usize) -> usize) -> Factor {
        let mut vars: Vec<usize> = factors.iter().flat_map(|f| f.vars.iter().copied()).collect();
        vars.sort_unstable();
        vars.dedup();
        let cards: Vec<usize> = vars.iter().map(|&v| card_of(v)).collect();
        let size: usize = cards.iter().product();
        // For each input factor, the stride of every output variable in it.
        let maps: Vec<Vec<usize>> = factors
            .iter()
            .map(|f| {
                let fs = strides(&f.cards);
                vars.iter().map(|v| f.vars.binary_search(v).map(|i| fs[i]).unwrap_or(0)).collect()
            })
            .collect();
        let mut values = Vec::with_capacity(size);
        let mut state = vec![0; vars.len()];
        if size > 0 {
            loop {
                let mut v = 1.0;
                for (f, map) in factors.iter().zip(&maps) {
                    let idx: usize = state.iter().zip(map).map(|(s, m)| s * m).sum();
                    v *= f.values[idx];
                }
                values.push(v);
                if !advance(&mut state, &cards) {
                    break;
                }
            }
        }
        Factor { vars, cards, values }
    }

    fn sum_out(&self, var: usize) -> Factor {
        let pos = self.vars.binary_search(&var).expect("variable in factor");
        let mut vars = self.vars.clone();
        vars.remove(pos);
        let mut cards = self.cards.clone();
        let k = cards.remove(pos);
        let inner: usize = self.cards[pos + 1..].iter().product();
        let outer: usize = self.cards[..pos].iter().product();
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for x in 0..k {
                let base = (o * k + x) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        Factor { vars, cards, values }
    }
}

/// Exact marginal of `target` with each node's mechanism taken from the
/// window given in `assignment`.
///
/// Only ancestors of the target take part. Variables are eliminated in
/// min-degree order, ties going to the smaller (lexicographically first) node.
pub(crate) fn target_marginal(
    set: &MechanismSet,
    assignment: &[Window],
    target: usize,
    state_limit: usize,
) -> Result<Vec<f64>, MechanismError> {
    let graph = set.graph();
    let mut relevant: Vec<usize> = graph.ancestors(target).into_iter().collect();
    relevant.push(target);
    relevant.sort_unstable();

    let mut factors: Vec<Factor> = relevant.iter().map(|&v| Factor::from_mechanism(set, v, assignment[v])).collect();
    let mut remaining: Vec<usize> = relevant.iter().copied().filter(|&v| v != target).collect();

    while !remaining.is_empty() {
        let (pick, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut neighbours: Vec<usize> = factors
                    .iter()
                    .filter(|f| f.vars.contains(&v))
                    .flat_map(|f| f.vars.iter().copied())
                    .filter(|&u| u != v)
                    .collect();
                neighbours.sort_unstable();
                neighbours.dedup();
                (i, (neighbours.len(), v))
            })
            .min_by_key(|&(_, key)| key)
            .unwrap();
        let var = remaining.remove(pick);

        let (touching, rest): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.vars.contains(&var));
        let mut scope: Vec<usize> = touching.iter().flat_map(|f| f.vars.iter().copied()).collect();
        scope.sort_unstable();
        scope.dedup();
        let size = Factor::size_of(&scope, set);
        if size > state_limit as f64 {
            return Err(MechanismError::StateSpaceTooLarge { size, limit: state_limit });
        }
        let joined = Factor::product(&touching, |v| set.cardinality(v));
        factors = rest;
        factors.push(joined.sum_out(var));
    }

    let result = Factor::product(&factors, |v| set.cardinality(v));
    debug_assert_eq!(result.vars, vec![target]);
    let total: f64 = result.values.iter().sum();
    Ok(result.values.iter().map(|v| v / total).collect())
}

/// Histogram of `samples` ancestral draws of `target`.
pub(crate) fn sample_marginal(
    set: &MechanismSet,
    assignment: &[Window],
    target: usize,
    samples: usize,
    seed: u64,
) -> Vec<f64> {
    let graph = set.graph();
    let mut needed = graph.ancestors(target);
    needed.insert(target);
    let order: Vec<usize> =
        graph.topo_order().expect("view graphs are acyclic").into_iter().filter(|v| needed.contains(v)).collect();
    let parent_strides: Vec<Vec<usize>> = (0..graph.len())
        .map(|v| strides(&graph.parents(v).iter().map(|&p| set.cardinality(p)).collect::<Vec<_>>()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut value = vec![0usize; graph.len()];
    let mut counts = vec![0u64; set.cardinality(target)];
    for _ in 0..samples {
        for &v in &order {
            let config: usize = graph.parents(v).iter().zip(&parent_strides[v]).map(|(&p, &s)| value[p] * s).sum();
            let row = set.mechanism(v, assignment[v]).row(config);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = row.len() - 1;
            for (i, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            value[v] = pick;
        }
        counts[value[target]] += 1;
    }
    counts.iter().map(|&c| c as f64 / samples as f64).collect()
}
