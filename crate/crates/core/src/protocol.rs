//! Node-local maintenance behavior.
//!
//! Three regimes are modelled. `None` never reacts. `P2n` reacts to the
//! failure of a neighbor `f` by linking to every lost second neighbor, i.e.
//! each `p ∈ Π_f` that is neither a first nor a second neighbor any more.
//! Requests are spaced by a random wait, and neighbors announce each new link
//! so that a cluster of nodes sharing a lost second neighbor creates a single
//! replacement link. `Pecc` runs the same repair only with probability
//! `1 − ECC(n, f)` and periodically drops high-ECC links at nodes whose degree
//! and neighborhood link count grew well past their tracked targets.
//!
//! Everything here is a transition on one node's state; the simulation engine
//! owns the message queue and the authoritative graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::graph::{ecc, neighborhood_link_count, NeighborList, NeighborView, NodeId, OverlayGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    None,
    P2n,
    Pecc,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 3] = [ProtocolKind::None, ProtocolKind::P2n, ProtocolKind::Pecc];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::None => "none",
            ProtocolKind::P2n => "p2n",
            ProtocolKind::Pecc => "pecc",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ProtocolKind::None),
            "p2n" => Ok(ProtocolKind::P2n),
            "pecc" => Ok(ProtocolKind::Pecc),
            other => Err(format!("unknown protocol `{other}` (expected none, p2n or pecc)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageKind {
    LinkCreationRequest,
    LinkAccept,
    LinkRefuse,
    /// The sender `q` just linked to `m`.
    NovelLinkNotify { q: NodeId, m: NodeId },
    NeighborListUpdate(NeighborList),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolMessage {
    pub kind: MessageKind,
    pub from: NodeId,
    pub to: NodeId,
}

impl ProtocolMessage {
    pub fn new(kind: MessageKind, from: NodeId, to: NodeId) -> Self {
        ProtocolMessage { kind, from, to }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    /// Degree above which a node stops creating repair links. `None` resolves
    /// to three times the initial mean degree when a run starts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_degree: Option<usize>,
    pub t_ecc: f64,
    /// Links removed per prune.
    pub r: usize,
    pub target_check_period: u64,
    pub target_window: usize,
    /// Multiplier above target that counts as excessive growth.
    pub growth_factor: f64,
    /// Repair waits are uniform in `1..=backoff_max` ticks.
    pub backoff_max: u64,
    pub pruning: bool,
    /// Replaces every locally estimated ECC in the repair gate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecc_override: Option<f64>,
    /// Per-round message budget, as a multiple of the active node count.
    pub message_budget_factor: usize,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            threshold_degree: None,
            t_ecc: 0.5,
            r: 1,
            target_check_period: 5,
            target_window: 10,
            growth_factor: 1.5,
            backoff_max: 3,
            pruning: true,
            ecc_override: None,
            message_budget_factor: 50,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(0.0..=1.0).contains(&self.t_ecc) {
            return Err(ParamError::new("t_ecc", format!("{} is not in [0, 1]", self.t_ecc)));
        }
        if self.r == 0 {
            return Err(ParamError::new("r", "must be at least 1"));
        }
        if self.target_check_period == 0 {
            return Err(ParamError::new("target_check_period", "must be at least 1"));
        }
        if self.target_window == 0 {
            return Err(ParamError::new("target_window", "must be at least 1"));
        }
        if !(self.growth_factor > 1.0) {
            return Err(ParamError::new("growth_factor", format!("{} must exceed 1", self.growth_factor)));
        }
        if self.backoff_max == 0 {
            return Err(ParamError::new("backoff_max", "must be at least 1"));
        }
        if let Some(e) = self.ecc_override {
            if !(0.0..=1.0).contains(&e) {
                return Err(ParamError::new("ecc_override", format!("{e} is not in [0, 1]")));
            }
        }
        if self.message_budget_factor == 0 {
            return Err(ParamError::new("message_budget_factor", "must be at least 1"));
        }
        Ok(())
    }

    fn degree_cap(&self) -> usize {
        self.threshold_degree.unwrap_or(usize::MAX)
    }
}

/// In-flight repair at `owner` after the failure of `failed`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecoverySession {
    pub owner: NodeId,
    pub failed: NodeId,
    /// Lost second neighbors not yet tried.
    pub candidates: BTreeSet<NodeId>,
    pub pending: Option<NodeId>,
    /// End of the current random wait; `None` until the wait is drawn.
    pub backoff_until: Option<u64>,
    pub initial_candidates: usize,
    pub requests_sent: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    Idle,
    Request(ProtocolMessage),
    Finished,
}

/// Reaction of `view.owner()` to the failure of its neighbor `failed`.
///
/// `view` must already have `failed` removed. `failed_list` is the last
/// neighbor list `failed` reported and `cached_ecc` the link's ECC as it was
/// estimated before the failure. `gate` is only drawn from under `Pecc`.
pub fn on_neighbor_failure<R: Rng + ?Sized>(
    view: &NeighborView,
    failed: NodeId,
    failed_list: &BTreeSet<NodeId>,
    cached_ecc: f64,
    params: &ProtocolParams,
    kind: ProtocolKind,
    gate: &mut R,
) -> Option<RecoverySession> {
    if kind == ProtocolKind::None {
        return None;
    }
    let owner = view.owner();
    let candidates: BTreeSet<NodeId> = failed_list
        .iter()
        .filter(|p| **p != owner && **p != failed && !view.within_two_hops(**p))
        .copied()
        .collect();
    if kind == ProtocolKind::Pecc {
        let ecc = params.ecc_override.unwrap_or(cached_ecc);
        let draw: f64 = gate.sample(Open01);
        if draw <= ecc {
            return None;
        }
    }
    if candidates.is_empty() {
        return None;
    }
    Some(RecoverySession {
        owner,
        failed,
        initial_candidates: candidates.len(),
        candidates,
        pending: None,
        backoff_until: None,
        requests_sent: 0,
    })
}

/// One tick of the repair loop: wait a random time, then ask one random
/// candidate, for as long as candidates remain and the owner's degree is
/// within the cap.
pub fn step_recovery<R: Rng + ?Sized>(
    session: &mut RecoverySession,
    view: &NeighborView,
    params: &ProtocolParams,
    now: u64,
    rng: &mut R,
) -> StepOutcome {
    if session.pending.is_some() {
        return StepOutcome::Idle;
    }
    if session.candidates.is_empty() || view.degree() > params.degree_cap() {
        return StepOutcome::Finished;
    }
    match session.backoff_until {
        None => {
            session.backoff_until = Some(now + rng.gen_range(1..=params.backoff_max));
            StepOutcome::Idle
        }
        Some(until) if now < until => StepOutcome::Idle,
        Some(_) => {
            let pick = rng.gen_range(0..session.candidates.len());
            let p = *session.candidates.iter().nth(pick).expect("index in range");
            session.candidates.remove(&p);
            session.pending = Some(p);
            session.backoff_until = None;
            session.requests_sent += 1;
            StepOutcome::Request(ProtocolMessage::new(
                MessageKind::LinkCreationRequest,
                session.owner,
                p,
            ))
        }
    }
}

/// Degree and neighborhood-link targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Targets {
    pub degree: usize,
    pub links: usize,
}

/// Rounded means of the last `window` `(degree, links)` samples.
pub fn update_targets(history: &[(usize, usize)], window: usize) -> Option<Targets> {
    if history.is_empty() {
        return None;
    }
    let recent = &history[history.len().saturating_sub(window.max(1))..];
    let len = recent.len() as f64;
    let degree = recent.iter().map(|s| s.0).sum::<usize>() as f64 / len;
    let links = recent.iter().map(|s| s.1).sum::<usize>() as f64 / len;
    Some(Targets {
        degree: degree.round() as usize,
        links: links.round() as usize,
    })
}

/// Links `node` should drop: when both its degree and its neighborhood link
/// count exceed `growth_factor` times their targets, up to `r` incident
/// links with ECC above `t_ecc`, highest ECC first, ties to the smaller
/// neighbor id.
pub fn periodic_prune(
    node: NodeId,
    g: &OverlayGraph,
    targets: Option<Targets>,
    params: &ProtocolParams,
) -> Vec<(NodeId, NodeId)> {
    let Some(targets) = targets else {
        return Vec::new();
    };
    let Ok(links) = neighborhood_link_count(g, node) else {
        return Vec::new();
    };
    let degree = g.degree(node);
    let grown = degree as f64 > params.growth_factor * targets.degree as f64
        && links as f64 > params.growth_factor * targets.links as f64;
    if !grown {
        return Vec::new();
    }
    let mut scored: Vec<(f64, NodeId)> = g
        .neighbors(node)
        .iter()
        .filter_map(|m| ecc(g, node, *m).ok().map(|rec| (rec.ecc, *m)))
        .filter(|(e, _)| *e > params.t_ecc)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().take(params.r).map(|(_, m)| (node, m)).collect()
}

/// What the engine must apply after a node handled a message.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Effects {
    pub outbox: Vec<ProtocolMessage>,
    /// The node accepted a link request from this node.
    pub accepted: Option<NodeId>,
}

/// Per-node protocol state.
#[derive(Clone, Debug)]
pub struct NodeAgent {
    pub view: NeighborView,
    /// Open repair sessions, keyed by the failed neighbor.
    pub sessions: BTreeMap<NodeId, RecoverySession>,
    pub targets: Option<Targets>,
    pub history: VecDeque<(usize, usize)>,
}

impl NodeAgent {
    pub fn new(view: NeighborView) -> Self {
        NodeAgent {
            view,
            sessions: BTreeMap::new(),
            targets: None,
            history: VecDeque::new(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.view.owner()
    }

    /// Neighbor-list update to every current neighbor.
    pub fn announce_list(&self, outbox: &mut Vec<ProtocolMessage>) {
        let list = NeighborList::new(self.view.first().clone());
        for m in self.view.first() {
            outbox.push(ProtocolMessage::new(
                MessageKind::NeighborListUpdate(list.clone()),
                self.id(),
                *m,
            ));
        }
    }

    /// Records the new link to `p`: tells the old neighbors about it, then
    /// sends the changed list to everyone including `p`.
    fn link_established(&mut self, p: NodeId, outbox: &mut Vec<ProtocolMessage>) {
        if self.view.is_neighbor(p) {
            return;
        }
        for q in self.view.first() {
            outbox.push(ProtocolMessage::new(
                MessageKind::NovelLinkNotify { q: self.id(), m: p },
                self.id(),
                *q,
            ));
        }
        self.view.add_neighbor(p);
        self.announce_list(outbox);
    }

    fn clear_pending(&mut self, p: NodeId) {
        for s in self.sessions.values_mut() {
            if s.pending == Some(p) {
                s.pending = None;
            }
        }
    }

    pub fn has_pending(&self, p: NodeId) -> bool {
        self.sessions.values().any(|s| s.pending == Some(p))
    }

    /// A request to `target` will never be answered (the target is gone).
    pub fn expire_request(&mut self, target: NodeId) {
        self.clear_pending(target);
    }

    pub fn on_message(&mut self, msg: ProtocolMessage) -> Effects {
        let mut fx = Effects::default();
        let from = msg.from;
        match msg.kind {
            MessageKind::LinkAccept => {
                self.clear_pending(from);
                self.link_established(from, &mut fx.outbox);
            }
            MessageKind::LinkRefuse => self.clear_pending(from),
            MessageKind::LinkCreationRequest => {
                // crossing requests: only the smaller id accepts, so the pair
                // ends up with exactly one link
                let crossing = self.has_pending(from) && self.id() > from;
                if crossing || self.view.within_two_hops(from) {
                    fx.outbox.push(ProtocolMessage::new(MessageKind::LinkRefuse, self.id(), from));
                } else {
                    fx.outbox.push(ProtocolMessage::new(MessageKind::LinkAccept, self.id(), from));
                    self.link_established(from, &mut fx.outbox);
                    fx.accepted = Some(from);
                }
            }
            MessageKind::NovelLinkNotify { m, .. } => {
                for s in self.sessions.values_mut() {
                    s.candidates.remove(&m);
                    if s.pending == Some(m) {
                        s.pending = None;
                    }
                }
            }
            MessageKind::NeighborListUpdate(list) => {
                self.view.update_list(from, list);
            }
        }
        fx
    }

    /// Appends a `(degree, links)` sample, keeping at most `window` of them.
    pub fn record_sample(&mut self, sample: (usize, usize), window: usize) {
        self.history.push_back(sample);
        while self.history.len() > window {
            self.history.pop_front();
        }
    }

    pub fn refresh_targets(&mut self, window: usize) {
        let samples: Vec<_> = self.history.iter().copied().collect();
        if let Some(t) = update_targets(&samples, window) {
            self.targets = Some(t);
        }
    }
}
