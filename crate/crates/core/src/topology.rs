//! Initial overlay construction and topology-preserving joins.
//!
//! Three families are supported: uniform (every node starts with the same
//! degree), clustered (equal-size random-graph clusters joined by sparse
//! inter-cluster links) and scale-free (power-law degree sequence realized by
//! random stub matching). Each family has a matching join rule used when an
//! inactive node comes back.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, NodeId, OverlayGraph};

/// Consecutive rejected stub pairs before the uniform wiring restarts.
const MAX_PAIR_REJECTIONS: usize = 100;
const MAX_WIRING_RESTARTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopologyKind {
    Uniform,
    Clustered,
    ScaleFree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub kind: TopologyKind,
    /// Ignored by the scale-free family, whose size follows from `a` and `b`.
    pub n_nodes: usize,
    pub uniform_degree: usize,
    pub n_clusters: usize,
    /// Intra-cluster link probability.
    pub gamma: f64,
    /// Per-node probability of a link towards each external cluster.
    pub omega: f64,
    pub a: f64,
    pub b: f64,
    /// Links made by a scale-free join. `None` means the rounded current mean
    /// degree (at least one).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub join_links: Option<usize>,
    pub seed: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            kind: TopologyKind::Uniform,
            n_nodes: 200,
            uniform_degree: 6,
            n_clusters: 4,
            gamma: 0.2,
            omega: 0.01,
            a: 6.0,
            b: 2.0,
            join_links: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("invalid `{key}`: {reason}")]
    InvalidParameter { key: &'static str, reason: String },
    #[error("degree sequence has odd sum ({n_nodes} nodes x degree {degree})")]
    OddDegreeSum { n_nodes: usize, degree: usize },
    #[error("could not wire a simple {degree}-regular graph on {n_nodes} nodes")]
    WiringFailed { n_nodes: usize, degree: usize },
    #[error("power law a={a}, b={b} yields no nodes")]
    EmptyPowerLaw { a: f64, b: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn invalid(key: &'static str, reason: impl Into<String>) -> TopologyError {
    TopologyError::InvalidParameter {
        key,
        reason: reason.into(),
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(invalid("gamma", format!("{} is not in [0, 1]", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(invalid("omega", format!("{} is not in [0, 1]", self.omega)));
        }
        if !(self.b > 0.0) {
            return Err(invalid("b", format!("{} must be positive", self.b)));
        }
        if !self.a.is_finite() {
            return Err(invalid("a", "must be finite"));
        }
        if self.join_links == Some(0) {
            return Err(invalid("join_links", "must be at least 1"));
        }
        match self.kind {
            TopologyKind::Uniform => {
                if self.uniform_degree == 0 {
                    return Err(invalid("uniform_degree", "must be at least 1"));
                }
                if self.uniform_degree >= self.n_nodes {
                    return Err(invalid(
                        "uniform_degree",
                        format!("{} must be below n_nodes = {}", self.uniform_degree, self.n_nodes),
                    ));
                }
            }
            TopologyKind::Clustered => {
                if self.n_clusters == 0 {
                    return Err(invalid("n_clusters", "must be at least 1"));
                }
                if self.n_nodes == 0 || self.n_nodes % self.n_clusters != 0 {
                    return Err(invalid(
                        "n_clusters",
                        format!("{} nodes cannot be split into {} equal clusters", self.n_nodes, self.n_clusters),
                    ));
                }
            }
            TopologyKind::ScaleFree => {}
        }
        Ok(())
    }
}

/// A generated overlay. `clusters[i]` is the cluster of node `i` for the
/// clustered family.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub graph: OverlayGraph,
    pub clusters: Option<Vec<u32>>,
}

pub fn generate<R: Rng + ?Sized>(cfg: &TopologyConfig, rng: &mut R) -> Result<Topology, TopologyError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        TopologyKind::Uniform => Topology {
            graph: generate_uniform(cfg, rng)?,
            clusters: None,
        },
        TopologyKind::Clustered => {
            let (graph, clusters) = generate_clustered(cfg, rng)?;
            Topology {
                graph,
                clusters: Some(clusters),
            }
        }
        TopologyKind::ScaleFree => Topology {
            graph: generate_scale_free(cfg, rng)?,
            clusters: None,
        },
    })
}

/// Random graph where every node has degree exactly `uniform_degree`.
///
/// Stubs are paired at random; a pair that would form a self-loop or a
/// duplicate link is rejected and redrawn, and too many consecutive
/// rejections restart the whole wiring.
pub fn generate_uniform<R: Rng + ?Sized>(
    cfg: &TopologyConfig,
    rng: &mut R,
) -> Result<OverlayGraph, TopologyError> {
    let (n, d) = (cfg.n_nodes, cfg.uniform_degree);
    if d == 0 {
        return Err(invalid("uniform_degree", "must be at least 1"));
    }
    if d >= n {
        return Err(invalid("uniform_degree", format!("{d} must be below n_nodes = {n}")));
    }
    if (n * d) % 2 == 1 {
        return Err(TopologyError::OddDegreeSum { n_nodes: n, degree: d });
    }
    'restart: for _ in 0..MAX_WIRING_RESTARTS {
        let mut g = OverlayGraph::new(n);
        let mut stubs: Vec<NodeId> = (0..n).flat_map(|i| std::iter::repeat(NodeId::from(i)).take(d)).collect();
        let mut rejections = 0;
        while !stubs.is_empty() {
            let i = rng.gen_range(0..stubs.len());
            let mut j = rng.gen_range(0..stubs.len() - 1);
            if j >= i {
                j += 1;
            }
            let (a, b) = (stubs[i], stubs[j]);
            if a == b || g.has_link(a, b) {
                rejections += 1;
                if rejections >= MAX_PAIR_REJECTIONS {
                    continue 'restart;
                }
                continue;
            }
            g.add_link(a, b)?;
            rejections = 0;
            stubs.swap_remove(i.max(j));
            stubs.swap_remove(i.min(j));
        }
        return Ok(g);
    }
    Err(TopologyError::WiringFailed { n_nodes: n, degree: d })
}

/// Equal-size clusters, each a G(n, γ) random graph, plus for every node and
/// every other cluster a link to a random member with probability ω.
pub fn generate_clustered<R: Rng + ?Sized>(
    cfg: &TopologyConfig,
    rng: &mut R,
) -> Result<(OverlayGraph, Vec<u32>), TopologyError> {
    cfg.validate()?;
    let n = cfg.n_nodes;
    let size = n / cfg.n_clusters;
    let clusters: Vec<u32> = (0..n).map(|i| (i / size) as u32).collect();
    let mut g = OverlayGraph::new(n);
    for c in 0..cfg.n_clusters {
        let base = c * size;
        for i in base..base + size {
            for j in i + 1..base + size {
                if rng.gen_bool(cfg.gamma) {
                    g.add_link(NodeId::from(i), NodeId::from(j))?;
                }
            }
        }
    }
    for u in 0..n {
        for c in 0..cfg.n_clusters {
            if c as u32 == clusters[u] {
                continue;
            }
            if rng.gen_bool(cfg.omega) {
                let v = c * size + rng.gen_range(0..size);
                g.add_link(NodeId::from(u), NodeId::from(v))?;
            }
        }
    }
    Ok((g, clusters))
}

/// Intended degree of every node in the power-law model: `⌊e^a / d^b⌋`
/// nodes of degree `d` for `d = 1..=⌊e^(a/b)⌋`, lowest degrees first.
pub fn power_law_degrees(a: f64, b: f64) -> Result<Vec<usize>, TopologyError> {
    if !(b > 0.0) {
        return Err(invalid("b", format!("{b} must be positive")));
    }
    let max_degree = (a / b).exp().floor();
    if !max_degree.is_finite() || max_degree > 1e7 {
        return Err(invalid("a", format!("a={a}, b={b} gives an unbounded maximum degree")));
    }
    let mut degrees = Vec::new();
    for d in 1..=(max_degree as usize) {
        let count = (a.exp() / (d as f64).powf(b)).floor() as usize;
        degrees.extend(std::iter::repeat(d).take(count));
    }
    if degrees.is_empty() {
        return Err(TopologyError::EmptyPowerLaw { a, b });
    }
    Ok(degrees)
}

/// Power-law random graph: stubs from [`power_law_degrees`] are shuffled and
/// paired in order. Self-loops and duplicate pairs are dropped, so realized
/// degrees may fall short of the intended ones.
pub fn generate_scale_free<R: Rng + ?Sized>(
    cfg: &TopologyConfig,
    rng: &mut R,
) -> Result<OverlayGraph, TopologyError> {
    let degrees = power_law_degrees(cfg.a, cfg.b)?;
    let mut g = OverlayGraph::new(degrees.len());
    let mut stubs: Vec<NodeId> = degrees
        .iter()
        .enumerate()
        .flat_map(|(i, d)| std::iter::repeat(NodeId::from(i)).take(*d))
        .collect();
    stubs.shuffle(rng);
    for pair in stubs.chunks_exact(2) {
        if pair[0] != pair[1] {
            g.add_link(pair[0], pair[1])?;
        }
    }
    Ok(g)
}

/// Brings the inactive `node` back and wires it following the topology's join
/// rule. Returns the new neighbors. When fewer candidates exist than the rule
/// asks for, the node links to all of them.
pub fn join_node<R: Rng + ?Sized>(
    g: &mut OverlayGraph,
    cfg: &TopologyConfig,
    clusters: Option<&[u32]>,
    node: NodeId,
    rng: &mut R,
) -> Result<Vec<NodeId>, TopologyError> {
    let mean_degree = g.mean_degree();
    g.activate(node)?;
    let candidates: Vec<NodeId> = g.active_nodes().filter(|m| *m != node).collect();
    let mut linked = Vec::new();
    match cfg.kind {
        TopologyKind::Uniform => {
            let k = cfg.uniform_degree.min(candidates.len());
            linked.extend(candidates.choose_multiple(rng, k).copied());
        }
        TopologyKind::Clustered => {
            let clusters = clusters.ok_or_else(|| invalid("n_clusters", "cluster map missing"))?;
            let own = clusters[node.index()];
            for m in &candidates {
                if clusters[m.index()] == own && rng.gen_bool(cfg.gamma) {
                    linked.push(*m);
                }
            }
            for c in 0..cfg.n_clusters as u32 {
                if c == own || !rng.gen_bool(cfg.omega) {
                    continue;
                }
                let members: Vec<NodeId> = candidates
                    .iter()
                    .filter(|m| clusters[m.index()] == c)
                    .copied()
                    .collect();
                if let Some(m) = members.choose(rng) {
                    linked.push(*m);
                }
            }
        }
        TopologyKind::ScaleFree => {
            let k = cfg
                .join_links
                .unwrap_or_else(|| (mean_degree.round() as usize).max(1));
            linked = preferential_targets(g, &candidates, k, rng);
        }
    }
    for m in &linked {
        g.add_link(node, *m)?;
    }
    linked.sort_unstable();
    linked.dedup();
    Ok(linked)
}

/// Draws up to `k` distinct candidates, each with probability proportional
/// to its current degree. Falls back to uniform choice when every candidate
/// has degree zero.
fn preferential_targets<R: Rng + ?Sized>(
    g: &OverlayGraph,
    candidates: &[NodeId],
    k: usize,
    rng: &mut R,
) -> Vec<NodeId> {
    let mut weights: Vec<usize> = candidates.iter().map(|m| g.degree(*m)).collect();
    let mut chosen = Vec::with_capacity(k);
    while chosen.len() < k.min(candidates.len()) {
        let total: usize = weights.iter().sum();
        let idx = if total == 0 {
            let open: Vec<usize> = (0..candidates.len())
                .filter(|i| !chosen.contains(&candidates[*i]))
                .collect();
            open[rng.gen_range(0..open.len())]
        } else {
            let mut ticket = rng.gen_range(0..total);
            let mut idx = 0;
            while ticket >= weights[idx] {
                ticket -= weights[idx];
                idx += 1;
            }
            idx
        };
        weights[idx] = 0;
        chosen.push(candidates[idx]);
    }
    chosen
}
