use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use super::{EdgeEccRecord, NodeId, OverlayGraph};

/// A neighbor list as carried in updates; shared rather than copied.
pub type NeighborList = Arc<BTreeSet<NodeId>>;

/// What a node knows locally: its own links and the most recent neighbor
/// list each neighbor reported.
///
/// `Π²_{n|m}` is derived on demand as `Π_m − Π_n − {n}`, so it tracks changes
/// to the owner's own links without further bookkeeping.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborView {
    owner: NodeId,
    pi: BTreeSet<NodeId>,
    reported: BTreeMap<NodeId, NeighborList>,
}

impl NeighborView {
    pub fn new(owner: NodeId) -> Self {
        NeighborView {
            owner,
            pi: BTreeSet::new(),
            reported: BTreeMap::new(),
        }
    }

    /// A view already consistent with `g`.
    pub fn from_graph(g: &OverlayGraph, owner: NodeId) -> Self {
        let pi = g.neighbors(owner).clone();
        let reported = pi.iter().map(|m| (*m, Arc::new(g.neighbors(*m).clone()))).collect();
        NeighborView {
            owner,
            pi,
            reported,
        }
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    /// `Π_n`.
    pub fn first(&self) -> &BTreeSet<NodeId> {
        &self.pi
    }

    pub fn degree(&self) -> usize {
        self.pi.len()
    }

    pub fn is_neighbor(&self, m: NodeId) -> bool {
        self.pi.contains(&m)
    }

    /// Last neighbor list received from `m`, if `m` is a neighbor that reported.
    pub fn reported(&self, m: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.reported.get(&m).map(|l| &**l)
    }

    /// `Π²_{n|m}`.
    pub fn second_via(&self, m: NodeId) -> BTreeSet<NodeId> {
        self.reported
            .get(&m)
            .map(|list| {
                list.iter()
                    .filter(|p| **p != self.owner && !self.pi.contains(p))
                    .copied()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// `Π²_n`, the union of `Π²_{n|m}` over all neighbors.
    pub fn second(&self) -> BTreeSet<NodeId> {
        self.pi.iter().flat_map(|m| self.second_via(*m)).collect()
    }

    pub fn is_second(&self, p: NodeId) -> bool {
        p != self.owner
            && !self.pi.contains(&p)
            && self
                .pi
                .iter()
                .any(|m| self.reported.get(m).is_some_and(|l| l.contains(&p)))
    }

    /// `p ∈ Π_n ∪ Π²_n`.
    pub fn within_two_hops(&self, p: NodeId) -> bool {
        self.pi.contains(&p) || self.is_second(p)
    }

    pub fn add_neighbor(&mut self, m: NodeId) -> bool {
        m != self.owner && self.pi.insert(m)
    }

    /// Drops `m` and returns the last list it reported.
    pub fn remove_neighbor(&mut self, m: NodeId) -> Option<NeighborList> {
        if self.pi.remove(&m) {
            Some(self.reported.remove(&m).unwrap_or_default())
        } else {
            None
        }
    }

    /// Stores a neighbor-list update. Lists from non-neighbors are ignored.
    pub fn update_list(&mut self, from: NodeId, list: NeighborList) -> bool {
        if self.pi.contains(&from) {
            self.reported.insert(from, list);
            true
        } else {
            false
        }
    }

    /// Locally estimated ECC of the link to `m`, from the last reported list.
    pub fn cached_ecc(&self, m: NodeId) -> Option<EdgeEccRecord> {
        if !self.pi.contains(&m) {
            return None;
        }
        let list = self.reported.get(&m)?;
        let triangles = list.iter().filter(|p| self.pi.contains(p)).count();
        Some(EdgeEccRecord::from_counts(
            self.owner,
            m,
            triangles,
            self.pi.len(),
            list.len(),
        ))
    }

    /// True when `Π_n` and every reported list match `g`.
    pub fn is_synced_with(&self, g: &OverlayGraph) -> bool {
        self.pi == *g.neighbors(self.owner)
            && self.reported.len() == self.pi.len()
            && self
                .pi
                .iter()
                .all(|m| self.reported(*m) == Some(g.neighbors(*m)))
    }
}

#[cfg(test)]
mod tests {
    use super::super::second_neighbors;
    use super::*;

    #[test]
    fn second_neighborhood_matches_bfs() {
        let g = OverlayGraph::from_edges(6, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (4, 5)])
            .unwrap();
        for n in g.nodes() {
            let view = NeighborView::from_graph(&g, n);
            assert_eq!(view.second(), second_neighbors(&g, n));
            assert!(view.is_synced_with(&g));
        }
    }

    #[test]
    fn owner_and_first_neighbors_are_excluded_from_second() {
        let g = OverlayGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let view = NeighborView::from_graph(&g, NodeId(0));
        assert!(view.second().is_empty());
        assert!(view.second_via(NodeId(1)).is_empty());
        assert!(view.within_two_hops(NodeId(2)));
        assert!(!view.is_second(NodeId(2)));
    }

    #[test]
    fn cached_ecc_survives_until_removal() {
        let g = OverlayGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let mut view = NeighborView::from_graph(&g, NodeId(0));
        assert_eq!(view.cached_ecc(NodeId(2)).unwrap().ecc, 1.0);
        let last = view.remove_neighbor(NodeId(2)).unwrap();
        assert_eq!(last.len(), 2);
        assert!(view.cached_ecc(NodeId(2)).is_none());
        assert!(!view.update_list(NodeId(2), NeighborList::default()));
    }
}
