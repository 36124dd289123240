//! Round-based churn engine.
//!
//! A round applies, in order: the round's failures, failure notifications to
//! the surviving ex-neighbors, arrivals, repair until every session and
//! message has drained, periodic pruning (ECC protocol only), and finally a
//! metrics snapshot. Repair runs in integer ticks inside the round, so it
//! always quiesces before the next churn event.
//!
//! Randomness comes from independent ChaCha streams derived from the run
//! seed: topology construction, churn selection, join wiring, protocol
//! timing and the ECC gate. The churn stream never depends on protocol
//! activity, so random-mode failure sequences are identical across
//! protocols for the same seed.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{
    components, degree_distribution, ecc, isolated_count, neighborhood_link_counts, neighborhood_stats,
    DegreeDistribution, NeighborView, NodeId, OverlayGraph,
};
use crate::harness::{quantize, MetricsRow};
use crate::protocol::{
    on_neighbor_failure, periodic_prune, step_recovery, MessageKind, NodeAgent, ProtocolKind, ProtocolMessage,
    ProtocolParams, StepOutcome,
};
use crate::topology::{self, join_node, Topology, TopologyConfig, TopologyError, TopologyKind};

const STREAM_TOPOLOGY: u64 = 0;
const STREAM_CHURN: u64 = 1;
const STREAM_JOIN: u64 = 2;
const STREAM_PROTOCOL: u64 = 3;
const STREAM_GATE: u64 = 4;

/// Upper bound on repair ticks per round, far above what backoff needs.
const MAX_TICKS: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureModeKind {
    /// Random failures, each paired with an arrival.
    Evolution,
    /// Highest-degree (or most inter-cluster) nodes fail, each paired with an arrival.
    TargetedAttack,
    /// Random failures only, until no active node is left.
    FailuresOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureMode {
    pub kind: FailureModeKind,
    pub events_per_round: usize,
}

impl Default for FailureMode {
    fn default() -> Self {
        FailureMode {
            kind: FailureModeKind::Evolution,
            events_per_round: 1,
        }
    }
}

impl FailureMode {
    pub fn has_arrivals(&self) -> bool {
        self.kind != FailureModeKind::FailuresOnly
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Number of links from `n` into other clusters.
fn inter_cluster_links(g: &OverlayGraph, clusters: &[u32], n: NodeId) -> usize {
    let own = clusters[n.index()];
    g.neighbors(n).iter().filter(|m| clusters[m.index()] != own).count()
}

/// Nodes to fail this round. Random modes draw uniformly among active
/// nodes; the targeted attack takes the highest degrees, or on clustered
/// overlays the most inter-cluster links, ties to the smaller id.
pub fn select_failure_targets(
    g: &OverlayGraph,
    mode: FailureMode,
    topo_kind: TopologyKind,
    clusters: Option<&[u32]>,
    rng: &mut ChaCha8Rng,
) -> Vec<NodeId> {
    let active: Vec<NodeId> = g.active_nodes().collect();
    let count = mode.events_per_round.min(active.len());
    match mode.kind {
        FailureModeKind::Evolution | FailureModeKind::FailuresOnly => {
            active.choose_multiple(rng, count).copied().collect()
        }
        FailureModeKind::TargetedAttack => {
            let score = |n: NodeId| match (topo_kind, clusters) {
                (TopologyKind::Clustered, Some(c)) => inter_cluster_links(g, c, n),
                _ => g.degree(n),
            };
            let mut ranked: Vec<(usize, NodeId)> = active.iter().map(|n| (score(*n), *n)).collect();
            ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            ranked.into_iter().take(count).map(|(_, n)| n).collect()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundCounters {
    pub messages_sent: u64,
    pub messages_dropped: u64,
    pub requests: u64,
    pub accepts: u64,
    pub links_created: u64,
    pub links_lost: u64,
    pub links_pruned: u64,
    pub links_joined: u64,
}

impl RoundCounters {
    fn absorb(&mut self, other: &RoundCounters) {
        self.messages_sent += other.messages_sent;
        self.messages_dropped += other.messages_dropped;
        self.requests += other.requests;
        self.accepts += other.accepts;
        self.links_created += other.links_created;
        self.links_lost += other.links_lost;
        self.links_pruned += other.links_pruned;
        self.links_joined += other.links_joined;
    }
}

/// One simulated overlay under one protocol.
#[derive(Clone, Debug)]
pub struct SimState {
    graph: OverlayGraph,
    topology: TopologyConfig,
    clusters: Option<Vec<u32>>,
    agents: Vec<NodeAgent>,
    kind: ProtocolKind,
    params: ProtocolParams,
    mode: FailureMode,
    round: u64,
    churn_rng: ChaCha8Rng,
    join_rng: ChaCha8Rng,
    protocol_rng: ChaCha8Rng,
    gate_rng: ChaCha8Rng,
    queue: VecDeque<ProtocolMessage>,
    budget: u64,
    delivered: u64,
    tripped: bool,
    divergent: bool,
    round_counters: RoundCounters,
    totals: RoundCounters,
    failure_log: Vec<Vec<NodeId>>,
}

impl SimState {
    /// Builds the initial overlay from `topology` (whose `seed` seeds the
    /// whole run) and resolves defaulted protocol parameters.
    pub fn new(
        topology: &TopologyConfig,
        mode: FailureMode,
        params: &ProtocolParams,
        kind: ProtocolKind,
    ) -> Result<Self, TopologyError> {
        let generated = topology::generate(topology, &mut stream(topology.seed, STREAM_TOPOLOGY))?;
        Ok(Self::from_topology(generated, topology, mode, params, kind))
    }

    /// Starts from an already built overlay.
    pub fn from_topology(
        generated: Topology,
        topology: &TopologyConfig,
        mode: FailureMode,
        params: &ProtocolParams,
        kind: ProtocolKind,
    ) -> Self {
        let Topology { graph, clusters } = generated;
        let mut params = params.clone();
        if params.threshold_degree.is_none() {
            params.threshold_degree = Some(((3.0 * graph.mean_degree()).round() as usize).max(1));
        }
        let agents = graph
            .nodes()
            .map(|n| {
                let view = if kind == ProtocolKind::None {
                    NeighborView::new(n)
                } else {
                    NeighborView::from_graph(&graph, n)
                };
                NodeAgent::new(view)
            })
            .collect();
        let seed = topology.seed;
        let mut state = SimState {
            graph,
            topology: topology.clone(),
            clusters,
            agents,
            kind,
            params,
            mode,
            round: 0,
            churn_rng: stream(seed, STREAM_CHURN),
            join_rng: stream(seed, STREAM_JOIN),
            protocol_rng: stream(seed, STREAM_PROTOCOL),
            gate_rng: stream(seed, STREAM_GATE),
            queue: VecDeque::new(),
            budget: 0,
            delivered: 0,
            tripped: false,
            divergent: false,
            round_counters: RoundCounters::default(),
            totals: RoundCounters::default(),
            failure_log: Vec::new(),
        };
        if state.prunes() {
            state.sample_targets();
            let window = state.params.target_window;
            for n in state.graph.active_nodes().collect::<Vec<_>>() {
                state.agents[n.index()].refresh_targets(window);
            }
        }
        state
    }

    pub fn graph(&self) -> &OverlayGraph {
        &self.graph
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    /// Parameters with defaults resolved against the initial overlay.
    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn clusters(&self) -> Option<&[u32]> {
        self.clusters.as_deref()
    }

    pub fn agent(&self, n: NodeId) -> &NodeAgent {
        &self.agents[n.index()]
    }

    pub fn is_divergent(&self) -> bool {
        self.divergent
    }

    pub fn totals(&self) -> RoundCounters {
        self.totals
    }

    pub fn last_round_counters(&self) -> RoundCounters {
        self.round_counters
    }

    /// Nodes failed in each round so far.
    pub fn failure_log(&self) -> &[Vec<NodeId>] {
        &self.failure_log
    }

    pub fn degree_distribution(&self) -> DegreeDistribution {
        degree_distribution(&self.graph)
    }

    pub fn is_finished(&self) -> bool {
        self.mode.kind == FailureModeKind::FailuresOnly && self.graph.active_count() == 0
    }

    /// Every active node's view matches the graph (trivially true under `None`,
    /// which keeps no views).
    pub fn views_consistent(&self) -> bool {
        self.kind == ProtocolKind::None
            || self
                .graph
                .active_nodes()
                .all(|n| self.agents[n.index()].view.is_synced_with(&self.graph))
    }

    fn uses_views(&self) -> bool {
        self.kind != ProtocolKind::None
    }

    fn prunes(&self) -> bool {
        self.kind == ProtocolKind::Pecc && self.params.pruning
    }

    /// Metrics of the current graph, labelled with the current round.
    pub fn metrics(&self) -> MetricsRow {
        let comps = components(&self.graph);
        let active = self.graph.active_count();
        let main = comps.first().copied().unwrap_or(0);
        let (avg_n1, avg_n2) = neighborhood_stats(&self.graph);
        MetricsRow {
            round: self.round,
            main_component_size: main,
            main_component_fraction: if active == 0 { 0.0 } else { quantize(main as f64 / active as f64) },
            isolated_count: isolated_count(&self.graph),
            avg_n1: quantize(avg_n1),
            avg_n2: quantize(avg_n2),
            active_count: active,
            links_total: self.graph.edge_count(),
            messages_sent: self.round_counters.messages_sent,
            messages_dropped: self.round_counters.messages_dropped,
            links_created: self.round_counters.links_created,
            links_pruned: self.round_counters.links_pruned,
            divergent: self.tripped,
        }
    }

    pub fn run_round(&mut self) -> MetricsRow {
        self.round += 1;
        self.round_counters = RoundCounters::default();
        self.delivered = 0;
        self.tripped = false;
        self.budget = (self.params.message_budget_factor * self.graph.active_count().max(1)) as u64;

        let failed = select_failure_targets(
            &self.graph,
            self.mode,
            self.topology.kind,
            self.clusters.as_deref(),
            &mut self.churn_rng,
        );
        self.apply_failures(&failed);
        if self.mode.has_arrivals() {
            self.apply_arrivals(failed.len());
        }
        if self.uses_views() {
            self.run_recovery();
        }
        if self.prunes() {
            if self.round % self.params.target_check_period == 0 {
                self.prune_all();
            }
            self.sample_targets();
            if self.round % self.params.target_check_period == 0 {
                let window = self.params.target_window;
                for n in self.graph.active_nodes().collect::<Vec<_>>() {
                    self.agents[n.index()].refresh_targets(window);
                }
            }
        }
        if self.tripped {
            self.resync_views();
        }
        self.failure_log.push(failed);
        self.totals.absorb(&self.round_counters);
        debug_assert!(self.graph.is_consistent());
        self.metrics()
    }

    /// One row per round. Failures-only runs ignore `rounds` and stop once
    /// every node has failed.
    pub fn run_to_completion(&mut self, rounds: u64) -> Vec<MetricsRow> {
        let mut rows = Vec::new();
        if self.mode.kind == FailureModeKind::FailuresOnly {
            while !self.is_finished() {
                rows.push(self.run_round());
            }
        } else {
            for _ in 0..rounds {
                rows.push(self.run_round());
            }
        }
        rows
    }

    fn apply_failures(&mut self, failed: &[NodeId]) {
        let mut notices = Vec::new();
        for f in failed {
            let removed = self.graph.fail_node(*f).expect("failure target is active");
            self.round_counters.links_lost += removed.len() as u64;
            notices.extend(removed.into_iter().map(|(f, n)| (n, f)));
            self.agents[f.index()] = NodeAgent::new(NeighborView::new(*f));
        }
        if !self.uses_views() {
            return;
        }
        notices.retain(|(n, _)| self.graph.is_active(*n));

        // every survivor first drops its failed neighbors and learns the
        // updated lists, then decides on repair against the combined damage
        let mut lost = Vec::with_capacity(notices.len());
        for (n, f) in &notices {
            let view = &mut self.agents[n.index()].view;
            let cached = view.cached_ecc(*f).map(|r| r.ecc).unwrap_or(0.0);
            let list = view.remove_neighbor(*f).unwrap_or_default();
            lost.push((*n, *f, list, cached));
        }
        let mut changed: Vec<NodeId> = notices.iter().map(|(n, _)| *n).collect();
        changed.sort_unstable();
        changed.dedup();
        self.announce(&changed);
        self.drain();

        if self.tripped {
            return;
        }
        lost.shuffle(&mut self.protocol_rng);
        for (n, f, list, cached) in lost {
            let agent = &mut self.agents[n.index()];
            if let Some(session) =
                on_neighbor_failure(&agent.view, f, &list, cached, &self.params, self.kind, &mut self.gate_rng)
            {
                agent.sessions.insert(f, session);
            }
        }
    }

    fn apply_arrivals(&mut self, count: usize) {
        let pool: Vec<NodeId> = self.graph.inactive_nodes().collect();
        let joining: Vec<NodeId> = pool.choose_multiple(&mut self.churn_rng, count).copied().collect();
        for node in joining {
            let linked = join_node(
                &mut self.graph,
                &self.topology,
                self.clusters.as_deref(),
                node,
                &mut self.join_rng,
            )
            .expect("joining node is inactive");
            self.round_counters.links_joined += linked.len() as u64;
            self.agents[node.index()] = NodeAgent::new(NeighborView::new(node));
            if !self.uses_views() {
                continue;
            }
            for m in &linked {
                self.agents[node.index()].view.add_neighbor(*m);
                self.agents[m.index()].view.add_neighbor(node);
            }
            let mut changed = linked;
            changed.push(node);
            self.announce(&changed);
            self.drain();
        }
    }

    fn run_recovery(&mut self) {
        let mut tick = 0;
        while !self.tripped {
            let mut open: Vec<(NodeId, NodeId)> = self
                .agents
                .iter()
                .flat_map(|a| a.sessions.keys().map(move |f| (a.id(), *f)))
                .collect();
            if open.is_empty() {
                break;
            }
            if tick >= MAX_TICKS {
                self.trip();
                break;
            }
            open.shuffle(&mut self.protocol_rng);
            for (owner, failed) in open {
                let NodeAgent { view, sessions, .. } = &mut self.agents[owner.index()];
                let Some(session) = sessions.get_mut(&failed) else {
                    continue;
                };
                match step_recovery(session, view, &self.params, tick, &mut self.protocol_rng) {
                    StepOutcome::Idle => {}
                    StepOutcome::Finished => {
                        sessions.remove(&failed);
                    }
                    StepOutcome::Request(msg) => {
                        self.round_counters.requests += 1;
                        self.send(msg);
                    }
                }
            }
            self.drain();
            tick += 1;
        }
    }

    fn prune_all(&mut self) {
        let mut order: Vec<NodeId> = self.graph.active_nodes().collect();
        order.shuffle(&mut self.protocol_rng);
        for n in order {
            if self.tripped {
                break;
            }
            let edges = periodic_prune(n, &self.graph, self.agents[n.index()].targets, &self.params);
            for (a, b) in edges {
                // an earlier removal may have broken the triangle backing this link
                let still_high = ecc(&self.graph, a, b).is_ok_and(|r| r.ecc > self.params.t_ecc);
                if !still_high {
                    continue;
                }
                self.graph.remove_link(a, b);
                self.agents[a.index()].view.remove_neighbor(b);
                self.agents[b.index()].view.remove_neighbor(a);
                self.round_counters.links_pruned += 1;
                self.announce(&[a, b]);
                self.drain();
            }
        }
    }

    fn sample_targets(&mut self) {
        let window = self.params.target_window;
        let links = neighborhood_link_counts(&self.graph);
        for n in self.graph.active_nodes().collect::<Vec<_>>() {
            let sample = (self.graph.degree(n), links[n.index()]);
            self.agents[n.index()].record_sample(sample, window);
        }
    }

    fn announce(&mut self, nodes: &[NodeId]) {
        let mut outbox = Vec::new();
        for n in nodes {
            if self.graph.is_active(*n) {
                self.agents[n.index()].announce_list(&mut outbox);
            }
        }
        for msg in outbox {
            self.send(msg);
        }
    }

    fn send(&mut self, msg: ProtocolMessage) {
        if self.tripped {
            return;
        }
        self.round_counters.messages_sent += 1;
        self.queue.push_back(msg);
    }

    /// Delivers queued messages (and everything they trigger) until the
    /// queue is empty or the round's budget is exhausted.
    fn drain(&mut self) {
        while let Some(msg) = self.queue.pop_front() {
            if self.tripped {
                break;
            }
            self.delivered += 1;
            if self.delivered > self.budget {
                self.trip();
                break;
            }
            if !self.graph.is_active(msg.to) || !self.graph.is_active(msg.from) {
                self.round_counters.messages_dropped += 1;
                if msg.kind == MessageKind::LinkCreationRequest && self.graph.is_active(msg.from) {
                    self.agents[msg.from.index()].expire_request(msg.to);
                }
                continue;
            }
            let to = msg.to;
            let fx = self.agents[to.index()].on_message(msg);
            if let Some(p) = fx.accepted {
                self.round_counters.accepts += 1;
                if self.graph.add_link(to, p).expect("both endpoints active") {
                    self.round_counters.links_created += 1;
                }
            }
            for out in fx.outbox {
                self.send(out);
            }
        }
    }

    /// Message budget exhausted: abandon the round's remaining repair and
    /// resynchronize every view with the graph.
    fn trip(&mut self) {
        self.tripped = true;
        self.divergent = true;
        self.resync_views();
    }

    fn resync_views(&mut self) {
        self.queue.clear();
        for n in self.graph.nodes().collect::<Vec<_>>() {
            let agent = &mut self.agents[n.index()];
            agent.sessions.clear();
            agent.view = if self.graph.is_active(n) {
                NeighborView::from_graph(&self.graph, n)
            } else {
                NeighborView::new(n)
            };
        }
    }
}
