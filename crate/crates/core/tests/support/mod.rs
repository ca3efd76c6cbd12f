//! Seeded generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use msm_core::dataset::{Column, Window};
use msm_core::graph::ViewGraph;
use msm_core::map::{Node, Relation};
use msm_core::mechanisms::{fit_mechanisms, FitConfig, MechanismSet};
use msm_core::{NodeKind, QName, RelationKind, SystemMap, ViewKind, WindowedDataset};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn q(view: &str, local: &str) -> QName {
    QName::new(view, local)
}

/// Random DAG edges `(i, j)` with `i < j` under a shuffled labelling.
fn random_edges(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for j in 0..n {
        for i in 0..j {
            if rng.random_bool(density) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Node and relation lists for a random map satisfying every structural rule,
/// in shuffled order.
pub fn random_map_parts(rng: &mut ChaCha8Rng) -> (Vec<Node>, Vec<Relation>) {
    let mut nodes = Vec::new();
    let mut relations = Vec::new();

    let n_sys = rng.random_range(1..=6);
    let sys: Vec<QName> = (0..n_sys).map(|i| q("system", &format!("s{i}"))).collect();
    for s in &sys {
        nodes.push(Node::new(s.clone(), NodeKind::Data));
    }
    let sys_edges = random_edges(rng, n_sys, 0.4);
    for &(i, j) in &sys_edges {
        relations.push(Relation::new(sys[i].clone(), sys[j].clone(), RelationKind::Causal));
    }
    let sys_roots: Vec<usize> = (0..n_sys).filter(|&j| sys_edges.iter().all(|&(_, t)| t != j)).collect();

    // Each subsystem owns a distinct system node through its terminal.
    let mut owned: Vec<usize> = (0..n_sys).collect();
    owned.shuffle(rng);
    let n_sub = rng.random_range(0..=n_sys.min(3));
    for (k, &target) in owned.iter().take(n_sub).enumerate() {
        let view = format!("sub{k}");
        let n_data = rng.random_range(1..=4);
        let data: Vec<QName> = (0..n_data).map(|i| q(&view, &format!("d{i}"))).collect();
        // Chain keeps the last node the only sink among the data nodes.
        for i in 0..n_data {
            let mut node = Node::new(data[i].clone(), NodeKind::Data);
            if i == 0 && rng.random_bool(0.5) {
                node = node.boundary();
            }
            nodes.push(node);
            if i > 0 {
                relations.push(Relation::new(data[i - 1].clone(), data[i].clone(), RelationKind::Causal));
            }
        }
        for m in 0..rng.random_range(0..=2) {
            let modulator = q(&view, &format!("m{m}"));
            nodes.push(Node::new(modulator.clone(), NodeKind::Modulator));
            let into = rng.random_range(0..n_data);
            relations.push(Relation::new(modulator, data[into].clone(), RelationKind::Causal));
        }
        relations.push(Relation::new(data[n_data - 1].clone(), sys[target].clone(), RelationKind::Mapping));
    }

    if rng.random_bool(0.7) {
        let n_env = rng.random_range(1..=4);
        let env: Vec<QName> = (0..n_env).map(|i| q("env", &format!("r{i}"))).collect();
        for e in &env {
            nodes.push(Node::new(e.clone(), NodeKind::Random));
        }
        for (i, j) in random_edges(rng, n_env, 0.5) {
            relations.push(Relation::new(env[i].clone(), env[j].clone(), RelationKind::Causal));
        }
        for &root in &sys_roots {
            if rng.random_bool(0.5) {
                let src = env[rng.random_range(0..n_env)].clone();
                relations.push(Relation::new(src, sys[root].clone(), RelationKind::Measure));
            }
        }
        if rng.random_bool(0.5) {
            let from = sys[rng.random_range(0..n_sys)].clone();
            relations.push(Relation::new(from, env[rng.random_range(0..n_env)].clone(), RelationKind::Actuate));
        }
    }

    nodes.shuffle(rng);
    relations.shuffle(rng);
    (nodes, relations)
}

pub fn random_map(seed: u64) -> SystemMap {
    let (nodes, relations) = random_map_parts(&mut rng(seed));
    SystemMap::build("random", nodes, relations).expect("generator emits valid maps")
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random discrete network: `n` nodes, `2..=max_states` states each, random
/// tables for both windows. Nodes listed in `changed` get independent current
/// tables; all others share their reference table.
pub fn random_set(rng: &mut ChaCha8Rng, n: usize, max_states: usize, changed: &[usize]) -> MechanismSet {
    let names: Vec<QName> = (0..n).map(|i| q("system", &format!("v{i}"))).collect();
    let edges = random_edges(rng, n, 0.5);
    let graph = ViewGraph::new(ViewKind::MLSystem, names, &edges);
    let cards: Vec<usize> = (0..n).map(|_| rng.random_range(2..=max_states)).collect();
    let mut ref_tables = Vec::new();
    let mut cur_tables = Vec::new();
    for j in 0..n {
        let configs: usize = graph.parents(j).iter().map(|&p| cards[p]).product();
        let table = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..configs).flat_map(|_| random_distribution(rng, cards[j])).collect()
        };
        let r = table(rng);
        let c = if changed.contains(&j) { table(rng) } else { r.clone() };
        ref_tables.push(r);
        cur_tables.push(c);
    }
    MechanismSet::from_tables(graph, cards, ref_tables, cur_tables).expect("normalized tables")
}

/// Marginal of `target` by summing the full joint.
pub fn brute_force_marginal(set: &MechanismSet, assignment: &[Window], target: usize) -> Vec<f64> {
    let n = set.len();
    let graph = set.graph();
    let cards: Vec<usize> = (0..n).map(|j| set.cardinality(j)).collect();
    let mut out = vec![0.0; cards[target]];
    let mut state = vec![0usize; n];
    loop {
        let mut p = 1.0;
        for j in 0..n {
            let mut config = 0;
            for &parent in graph.parents(j) {
                config = config * cards[parent] + state[parent];
            }
            p *= set.mechanism(j, assignment[j]).row(config)[state[j]];
        }
        out[state[target]] += p;
        let mut i = n;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            state[i] += 1;
            if state[i] < cards[i] {
                break;
            }
            state[i] = 0;
        }
    }
}

/// Mechanisms fitted on random linear-Gaussian data over a random system DAG.
pub fn random_fitted_set(seed: u64, max_nodes: usize, max_bins: usize) -> MechanismSet {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=max_nodes);
    let names: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let edges = random_edges(&mut rng, n, 0.4);
    let mut text = String::from("map random\nview system\n");
    for name in &names {
        text.push_str(&format!("  data {name}\n"));
    }
    for &(i, j) in &edges {
        text.push_str(&format!("  edge {} -> {}\n", names[i], names[j]));
    }
    let map = msm_core::parse_map(&text).expect("valid");

    let rows = 300;
    let weights: Vec<f64> = edges.iter().map(|_| rng.random_range(-1.5..1.5)).collect();
    let shifts: Vec<f64> =
        (0..n).map(|_| if rng.random_bool(0.5) { rng.random_range(-1.0..1.0) } else { 0.0 }).collect();
    let mut columns: Vec<Vec<Option<f64>>> = vec![Vec::new(); n];
    let mut windows = Vec::new();
    for window in [Window::Ref, Window::Cur] {
        for _ in 0..rows {
            let mut values = vec![0.0; n];
            for j in 0..n {
                let mut x: f64 = rng.random_range(-1.0..1.0);
                for (e, &(i, t)) in edges.iter().enumerate() {
                    if t == j {
                        x += weights[e] * values[i];
                    }
                }
                if window == Window::Cur {
                    x += shifts[j];
                }
                values[j] = x;
            }
            for j in 0..n {
                columns[j].push(Some(values[j]));
            }
            windows.push(window);
        }
    }
    let named = names.iter().zip(columns).map(|(name, c)| (format!("system.{name}"), Column::Numeric(c))).collect();
    let ds = WindowedDataset::from_columns(&map, windows, named).expect("dataset");
    let bins = rng.random_range(2..=max_bins);
    fit_mechanisms(&map, &ds, &ViewKind::MLSystem, &FitConfig { bins, ..FitConfig::default() }).expect("fit")
}
