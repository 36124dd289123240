//! Dynamic undirected overlay graph.
//!
//! Nodes are dense indices that stay valid for the whole run. A failed node
//! keeps its id, loses every link and becomes inactive; an arrival flips an
//! inactive node back to active. Adjacency is kept in ordered sets so that
//! every iteration order is reproducible from the seed alone.

mod metrics;
mod view;

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

pub use metrics::{
    components, degree_distribution, isolated_count, largest_component, neighborhood_link_count, neighborhood_link_counts, neighborhood_stats,
    second_neighbors, DegreeDistribution,
};
pub use view::{NeighborList, NeighborView};

/// Dense node index, stable for the lifetime of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("self-loop on node {0} rejected")]
    SelfLoop(NodeId),
    #[error("node {0} is inactive")]
    Inactive(NodeId),
    #[error("node {0} is already active")]
    AlreadyActive(NodeId),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("nodes {0} and {1} are not adjacent")]
    NotAdjacent(NodeId, NodeId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OverlayGraph {
    adjacency: Vec<BTreeSet<NodeId>>,
    active: Vec<bool>,
    edge_count: usize,
}

impl OverlayGraph {
    /// `n` active nodes and no links.
    pub fn new(n: usize) -> Self {
        OverlayGraph {
            adjacency: vec![BTreeSet::new(); n],
            active: vec![true; n],
            edge_count: 0,
        }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = OverlayGraph::new(n);
        for (a, b) in edges {
            g.add_link(NodeId::from(a), NodeId::from(b))?;
        }
        Ok(g)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.adjacency.len()
    }

    pub fn is_active(&self, n: NodeId) -> bool {
        self.active.get(n.index()).copied().unwrap_or(false)
    }

    pub fn neighbors(&self, n: NodeId) -> &BTreeSet<NodeId> {
        &self.adjacency[n.index()]
    }

    pub fn degree(&self, n: NodeId) -> usize {
        self.adjacency[n.index()].len()
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        self.contains(a) && self.adjacency[a.index()].contains(&b)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adjacency.len()).map(NodeId::from)
    }

    pub fn active_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |n| self.active[n.index()])
    }

    pub fn inactive_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |n| !self.active[n.index()])
    }

    /// Every edge once, as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.nodes().flat_map(move |u| {
            self.adjacency[u.index()]
                .range(NodeId(u.0 + 1)..)
                .map(move |v| (u, *v))
        })
    }

    fn check_active(&self, n: NodeId) -> Result<(), GraphError> {
        if !self.contains(n) {
            return Err(GraphError::UnknownNode(n));
        }
        if !self.active[n.index()] {
            return Err(GraphError::Inactive(n));
        }
        Ok(())
    }

    /// Adds the symmetric link `a`–`b`. Returns `Ok(true)` when the link is
    /// new and `Ok(false)` when it already existed.
    pub fn add_link(&mut self, a: NodeId, b: NodeId) -> Result<bool, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        self.check_active(a)?;
        self.check_active(b)?;
        let fresh = self.adjacency[a.index()].insert(b);
        self.adjacency[b.index()].insert(a);
        if fresh {
            self.edge_count += 1;
        }
        Ok(fresh)
    }

    pub fn remove_link(&mut self, a: NodeId, b: NodeId) -> bool {
        if !self.contains(a) || !self.contains(b) {
            return false;
        }
        let removed = self.adjacency[a.index()].remove(&b);
        self.adjacency[b.index()].remove(&a);
        if removed {
            self.edge_count -= 1;
        }
        removed
    }

    /// Deactivates `f` and drops all of its links. The removed links are
    /// returned as `(f, neighbor)` pairs in neighbor order.
    pub fn fail_node(&mut self, f: NodeId) -> Result<Vec<(NodeId, NodeId)>, GraphError> {
        self.check_active(f)?;
        let nbrs = std::mem::take(&mut self.adjacency[f.index()]);
        for m in &nbrs {
            self.adjacency[m.index()].remove(&f);
        }
        self.edge_count -= nbrs.len();
        self.active[f.index()] = false;
        Ok(nbrs.into_iter().map(|m| (f, m)).collect())
    }

    pub fn activate(&mut self, n: NodeId) -> Result<(), GraphError> {
        if !self.contains(n) {
            return Err(GraphError::UnknownNode(n));
        }
        if self.active[n.index()] {
            return Err(GraphError::AlreadyActive(n));
        }
        self.active[n.index()] = true;
        Ok(())
    }

    pub fn mean_degree(&self) -> f64 {
        let active = self.active_count();
        if active == 0 {
            return 0.0;
        }
        2.0 * self.edge_count as f64 / active as f64
    }

    /// Symmetric, loop-free, and inactive nodes carry no links.
    pub fn is_consistent(&self) -> bool {
        let mut half_edges = 0;
        for u in self.nodes() {
            let adj = &self.adjacency[u.index()];
            if !self.active[u.index()] && !adj.is_empty() {
                return false;
            }
            for v in adj {
                if *v == u || !self.adjacency[v.index()].contains(&u) {
                    return false;
                }
            }
            half_edges += adj.len();
        }
        half_edges == 2 * self.edge_count
    }

    /// Writes the graph as an edge list: a `# nodes=<N> active=<A> round=<r>`
    /// header followed by one `u v` line per edge (`u < v`).
    pub fn write_edge_list<W: Write>(&self, mut out: W, round: u64) -> io::Result<()> {
        writeln!(
            out,
            "# nodes={} active={} round={}",
            self.node_count(),
            self.active_count(),
            round
        )?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

/// Edge clustering coefficient of one link together with its ingredients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeEccRecord {
    pub endpoints: (NodeId, NodeId),
    pub triangles: usize,
    pub ecc: f64,
}

impl EdgeEccRecord {
    /// `triangles / min(deg_n - 1, deg_m - 1)`, or 0 when no triangle fits.
    pub fn from_counts(n: NodeId, m: NodeId, triangles: usize, deg_n: usize, deg_m: usize) -> Self {
        let possible = deg_n.min(deg_m).saturating_sub(1);
        let ecc = if possible == 0 {
            0.0
        } else {
            (triangles as f64 / possible as f64).min(1.0)
        };
        EdgeEccRecord {
            endpoints: (n, m),
            triangles,
            ecc,
        }
    }
}

/// ECC of the existing link `n`–`m`.
pub fn ecc(g: &OverlayGraph, n: NodeId, m: NodeId) -> Result<EdgeEccRecord, GraphError> {
    if !g.contains(n) {
        return Err(GraphError::UnknownNode(n));
    }
    if !g.contains(m) {
        return Err(GraphError::UnknownNode(m));
    }
    if !g.has_link(n, m) {
        return Err(GraphError::NotAdjacent(n, m));
    }
    let (a, b) = (g.neighbors(n), g.neighbors(m));
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let triangles = small.iter().filter(|x| large.contains(x)).count();
    Ok(EdgeEccRecord::from_counts(n, m, triangles, a.len(), b.len()))
}
