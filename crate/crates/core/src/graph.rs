//! Small index-based DAG used for per-view causal structure.

use std::collections::BTreeSet;

use crate::map::{QName, ViewKind};

/// Causal DAG of a single view. Node indices follow canonical name order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewGraph {
    view: ViewKind,
    nodes: Vec<QName>,
    parents: Vec<Vec<usize>>,
}

impl ViewGraph {
    /// Builds a graph from names and `(parent, child)` index pairs.
    ///
    /// Names are sorted; edges are remapped accordingly. Parent lists come
    /// out ascending and deduplicated.
    pub fn new(view: ViewKind, names: Vec<QName>, edges: &[(usize, usize)]) -> Self {
        let mut order: Vec<usize> = (0..names.len()).collect();
        order.sort_by(|&a, &b| names[a].cmp(&names[b]));
        let mut position = vec![0; names.len()];
        for (new, &old) in order.iter().enumerate() {
            position[old] = new;
        }
        let nodes: Vec<QName> = order.iter().map(|&i| names[i].clone()).collect();
        let mut parents = vec![Vec::new(); nodes.len()];
        for &(p, c) in edges {
            parents[position[c]].push(position[p]);
        }
        for list in &mut parents {
            list.sort_unstable();
            list.dedup();
        }
        Self { view, nodes, parents }
    }

    pub fn view(&self) -> &ViewKind {
        &self.view
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn names(&self) -> &[QName] {
        &self.nodes
    }

    pub fn name(&self, i: usize) -> &QName {
        &self.nodes[i]
    }

    pub fn index_of(&self, name: &QName) -> Option<usize> {
        self.nodes.binary_search(name).ok()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parents[c].contains(&i)).collect()
    }

    pub fn is_root(&self, i: usize) -> bool {
        self.parents[i].is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(Vec::len).sum()
    }

    /// Kahn's algorithm, always releasing the smallest ready index first.
    /// Returns `None` if the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let children: Vec<Vec<usize>> = (0..n).map(|i| self.children(i)).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&next) = ready.iter().next() {
            ready.remove(&next);
            order.push(next);
            for &c in &children[next] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topo_order().is_some()
    }

    /// Strict ancestors of `i`.
    pub fn ancestors(&self, i: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = self.parents[i].clone();
        while let Some(p) = stack.pop() {
            if seen.insert(p) {
                stack.extend(self.parents[p].iter().copied());
            }
        }
        seen
    }

    /// Subgraph on the nodes where `keep` is true; edges touching dropped
    /// nodes are removed.
    pub fn retain(&self, keep: &[bool]) -> ViewGraph {
        let kept: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        let mut remap = vec![usize::MAX; self.len()];
        for (new, &old) in kept.iter().enumerate() {
            remap[old] = new;
        }
        let names = kept.iter().map(|&i| self.nodes[i].clone()).collect();
        let mut edges = Vec::new();
        for &c in &kept {
            for &p in &self.parents[c] {
                if keep[p] {
                    edges.push((remap[p], remap[c]));
                }
            }
        }
        ViewGraph::new(self.view.clone(), names, &edges)
    }
}

/// Finds one directed cycle among `parents`, returned in edge order starting
/// from its smallest index.
pub(crate) fn find_cycle(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut children = vec![Vec::new(); n];
    for (c, ps) in parents.iter().enumerate() {
        for &p in ps {
            children[p].push(c);
        }
    }
    for list in &mut children {
        list.sort_unstable();
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut stack_path: Vec<usize> = Vec::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut frames: Vec<(usize, usize)> = vec![(start, 0)];
        state[start] = 1;
        stack_path.push(start);
        while let Some(&mut (node, ref mut next)) = frames.last_mut() {
            if *next < children[node].len() {
                let child = children[node][*next];
                *next += 1;
                match state[child] {
                    0 => {
                        state[child] = 1;
                        stack_path.push(child);
                        frames.push((child, 0));
                    }
                    1 => {
                        let at = stack_path.iter().position(|&x| x == child).unwrap();
                        let mut cycle = stack_path[at..].to_vec();
                        let min_pos = cycle.iter().enumerate().min_by_key(|(_, &v)| v).map(|(i, _)| i).unwrap();
                        cycle.rotate_left(min_pos);
                        return Some(cycle);
                    }
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack_path.pop();
                frames.pop();
            }
        }
    }
    None
}
