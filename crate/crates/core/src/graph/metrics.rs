use std::collections::{BTreeMap, BTreeSet};

use super::{GraphError, NodeId, OverlayGraph};

/// Degree → fraction of active nodes with that degree.
pub type DegreeDistribution = BTreeMap<usize, f64>;

/// Nodes at distance exactly 2 from `n`.
pub fn second_neighbors(g: &OverlayGraph, n: NodeId) -> BTreeSet<NodeId> {
    let first = g.neighbors(n);
    first
        .iter()
        .flat_map(|m| g.neighbors(*m).iter().copied())
        .filter(|p| *p != n && !first.contains(p))
        .collect()
}

/// Number of distinct links with at least one endpoint in `Π_n ∪ {n}`.
pub fn neighborhood_link_count(g: &OverlayGraph, n: NodeId) -> Result<usize, GraphError> {
    if !g.contains(n) {
        return Err(GraphError::UnknownNode(n));
    }
    if !g.is_active(n) {
        return Err(GraphError::Inactive(n));
    }
    let nbrs = g.neighbors(n);
    // every link of every neighbor, minus the links between two neighbors,
    // which the sum sees from both ends
    let mut ends = 0;
    let mut inner = 0;
    for m in nbrs {
        let theirs = g.neighbors(*m);
        ends += theirs.len() - 1;
        inner += theirs.intersection(nbrs).count();
    }
    let count = nbrs.len() + ends - inner / 2;
    Ok(count)
}

/// [`neighborhood_link_count`] for every node at once, indexed by node id;
/// inactive nodes get 0.
pub fn neighborhood_link_counts(g: &OverlayGraph) -> Vec<usize> {
    let mut stamp = vec![usize::MAX; g.node_count()];
    let mut counts = vec![0; g.node_count()];
    for n in g.active_nodes() {
        let nbrs = g.neighbors(n);
        for m in nbrs {
            stamp[m.index()] = n.index();
        }
        let mut ends = 0;
        let mut inner = 0;
        for m in nbrs {
            let theirs = g.neighbors(*m);
            ends += theirs.len() - 1;
            inner += theirs.iter().filter(|w| stamp[w.index()] == n.index()).count();
        }
        counts[n.index()] = nbrs.len() + ends - inner / 2;
    }
    counts
}

/// Connected component sizes over active nodes, largest first.
pub fn components(g: &OverlayGraph) -> Vec<usize> {
    let mut seen = vec![false; g.node_count()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in g.active_nodes() {
        if seen[start.index()] {
            continue;
        }
        seen[start.index()] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(u) = stack.pop() {
            size += 1;
            for v in g.neighbors(u) {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    stack.push(*v);
                }
            }
        }
        sizes.push(size);
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Members of the largest component over active nodes; ties go to the
/// component holding the smallest id.
pub fn largest_component(g: &OverlayGraph) -> BTreeSet<NodeId> {
    let mut seen = vec![false; g.node_count()];
    let mut best = BTreeSet::new();
    for start in g.active_nodes() {
        if seen[start.index()] {
            continue;
        }
        seen[start.index()] = true;
        let mut members = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for v in g.neighbors(u) {
                if !seen[v.index()] {
                    seen[v.index()] = true;
                    members.insert(*v);
                    stack.push(*v);
                }
            }
        }
        if members.len() > best.len() {
            best = members;
        }
    }
    best
}

pub fn isolated_count(g: &OverlayGraph) -> usize {
    g.active_nodes().filter(|n| g.degree(*n) == 0).count()
}

/// Mean first- and second-neighborhood sizes over active nodes.
pub fn neighborhood_stats(g: &OverlayGraph) -> (f64, f64) {
    let active = g.active_count();
    if active == 0 {
        return (0.0, 0.0);
    }
    let mut stamp = vec![u32::MAX; g.node_count()];
    let mut n1 = 0usize;
    let mut n2 = 0usize;
    for (round, n) in g.active_nodes().enumerate() {
        let mark = round as u32;
        stamp[n.index()] = mark;
        let first = g.neighbors(n);
        n1 += first.len();
        for m in first {
            stamp[m.index()] = mark;
        }
        for m in first {
            for p in g.neighbors(*m) {
                if stamp[p.index()] != mark {
                    stamp[p.index()] = mark;
                    n2 += 1;
                }
            }
        }
    }
    (n1 as f64 / active as f64, n2 as f64 / active as f64)
}

pub fn degree_distribution(g: &OverlayGraph) -> DegreeDistribution {
    let active = g.active_count();
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for n in g.active_nodes() {
        *counts.entry(g.degree(n)).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(d, c)| (d, c as f64 / active as f64))
        .collect()
}
