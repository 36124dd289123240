use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use overlay_heal::graph::{
    components, ecc, isolated_count, neighborhood_link_count, neighborhood_link_counts, second_neighbors, NodeId, OverlayGraph,
};
use overlay_heal::protocol::update_targets;
use overlay_heal::topology::{generate, power_law_degrees};
use overlay_heal::{FailureMode, FailureModeKind, ProtocolKind, ProtocolParams, SimState, TopologyConfig, TopologyKind};

fn graph_strategy() -> impl Strategy<Value = OverlayGraph> {
    (2usize..25).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..n * 3).prop_map(move |pairs| {
            OverlayGraph::from_edges(n, pairs.into_iter().filter(|(a, b)| a != b)).unwrap()
        })
    })
}

fn kind_strategy() -> impl Strategy<Value = TopologyKind> {
    prop_oneof![
        Just(TopologyKind::Uniform),
        Just(TopologyKind::Clustered),
        Just(TopologyKind::ScaleFree)
    ]
}

fn mode_strategy() -> impl Strategy<Value = FailureModeKind> {
    prop_oneof![
        Just(FailureModeKind::Evolution),
        Just(FailureModeKind::TargetedAttack),
        Just(FailureModeKind::FailuresOnly)
    ]
}

fn protocol_strategy() -> impl Strategy<Value = ProtocolKind> {
    prop_oneof![Just(ProtocolKind::None), Just(ProtocolKind::P2n), Just(ProtocolKind::Pecc)]
}

fn small_topology(kind: TopologyKind, seed: u64) -> TopologyConfig {
    TopologyConfig {
        kind,
        n_nodes: 60,
        uniform_degree: 4,
        n_clusters: 3,
        gamma: 0.2,
        omega: 0.05,
        a: 4.0,
        b: 2.0,
        seed,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ecc_is_symmetric_and_bounded(g in graph_strategy()) {
        for (a, b) in g.edges() {
            let ab = ecc(&g, a, b).unwrap();
            let ba = ecc(&g, b, a).unwrap();
            prop_assert_eq!(ab.ecc, ba.ecc);
            prop_assert_eq!(ab.triangles, ba.triangles);
            prop_assert!((0.0..=1.0).contains(&ab.ecc));
        }
    }

    #[test]
    fn components_partition_active_nodes(g in graph_strategy(), kill in proptest::collection::vec(0usize..25, 0..6)) {
        let mut g = g;
        for k in kill {
            let f = NodeId((k % g.node_count()) as u32);
            if g.is_active(f) {
                g.fail_node(f).unwrap();
            }
        }
        let comps = components(&g);
        prop_assert_eq!(comps.iter().sum::<usize>(), g.active_count());
        prop_assert!(comps.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(isolated_count(&g) <= comps.iter().filter(|c| **c == 1).count());
        prop_assert!(g.is_consistent());
    }

    #[test]
    fn link_count_matches_enumeration(g in graph_strategy()) {
        let batch = neighborhood_link_counts(&g);
        for n in g.active_nodes() {
            let oracle = g
                .edges()
                .filter(|(u, v)| [u, v].iter().any(|x| **x == n || g.has_link(n, **x)))
                .count();
            prop_assert_eq!(neighborhood_link_count(&g, n).unwrap(), oracle);
            prop_assert_eq!(batch[n.index()], oracle);
        }
    }

    #[test]
    fn targets_are_window_means(samples in proptest::collection::vec((0usize..50, 0usize..500), 1..30), window in 1usize..15) {
        let t = update_targets(&samples, window).unwrap();
        let recent = &samples[samples.len().saturating_sub(window)..];
        let max = recent.iter().map(|s| s.0).max().unwrap();
        let min = recent.iter().map(|s| s.0).min().unwrap();
        prop_assert!(t.degree >= min && t.degree <= max);
    }

    #[test]
    fn generated_topologies_are_simple(kind in kind_strategy(), seed in 0u64..1000) {
        let cfg = small_topology(kind, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = generate(&cfg, &mut rng).unwrap();
        prop_assert!(t.graph.is_consistent());
        if kind == TopologyKind::Uniform {
            prop_assert!(t.graph.active_nodes().all(|n| t.graph.degree(n) == 4));
        }
        if kind == TopologyKind::ScaleFree {
            prop_assert_eq!(t.graph.node_count(), power_law_degrees(4.0, 2.0).unwrap().len());
        }
    }

    /// Views stay in sync with the graph at round boundaries, and the
    /// bookkeeping of every row is coherent.
    #[test]
    fn rounds_preserve_invariants(
        kind in kind_strategy(),
        mode in mode_strategy(),
        protocol in protocol_strategy(),
        events in 1usize..4,
        seed in 0u64..500,
    ) {
        let cfg = small_topology(kind, seed);
        let mode = FailureMode { kind: mode, events_per_round: events };
        let mut sim = SimState::new(&cfg, mode, &ProtocolParams::default(), protocol).unwrap();
        let mut prev_active = sim.graph().active_count();
        for _ in 0..25 {
            if sim.is_finished() {
                break;
            }
            let row = sim.run_round();
            let failures = events.min(prev_active);
            let arrivals = if mode.has_arrivals() { failures } else { 0 };
            prop_assert_eq!(row.active_count, prev_active - failures + arrivals);
            prev_active = row.active_count;
            prop_assert!(row.isolated_count <= row.active_count);
            prop_assert!((0.0..=1.0).contains(&row.main_component_fraction));
            prop_assert!(sim.graph().is_consistent());
            prop_assert!(sim.views_consistent());
            if protocol != ProtocolKind::None {
                for n in sim.graph().active_nodes() {
                    prop_assert_eq!(sim.agent(n).view.second(), second_neighbors(sim.graph(), n));
                }
            } else {
                prop_assert_eq!(row.messages_sent, 0);
                prop_assert_eq!(row.links_created, 0);
            }
            if protocol != ProtocolKind::Pecc {
                prop_assert_eq!(row.links_pruned, 0);
            }
        }
        let t = sim.totals();
        prop_assert_eq!(t.links_created, t.accepts);
    }
}
