use overlay_heal::graph::NodeId;
use overlay_heal::harness::{
    aggregate, aggregate_from_dir, aggregate_protocol, loglog_fit, run_all, run_experiment, write_outputs, RunResult,
};
use overlay_heal::topology::generate;
use overlay_heal::{
    Execution, ExperimentConfig, FailureMode, FailureModeKind, ProtocolKind, SimState, TopologyConfig, TopologyKind,
};
use rand::SeedableRng;

fn small(mode: FailureModeKind, replicates: u64) -> ExperimentConfig {
    ExperimentConfig {
        topology: TopologyConfig {
            n_nodes: 80,
            uniform_degree: 4,
            ..Default::default()
        },
        mode: FailureMode {
            kind: mode,
            events_per_round: 1,
        },
        replicates,
        rounds: 40,
        ..Default::default()
    }
}

#[test]
fn single_replicate_report_is_the_run() {
    let cfg = small(FailureModeKind::Evolution, 1);
    let (runs, report) = run_experiment(&cfg, Execution::Sequential).unwrap();
    for p in &report.protocols {
        let run = runs.iter().find(|r| r.protocol == p.protocol).unwrap();
        assert_eq!(p.rows.len(), run.rows.len());
        for (agg, row) in p.rows.iter().zip(&run.rows) {
            assert_eq!(agg.round, row.round);
            assert_eq!(agg.runs, 1);
            for (s, v) in agg.stats.iter().zip(row.values()) {
                assert_eq!(s.mean, v);
                assert_eq!(s.std, 0.0);
            }
        }
    }
}

#[test]
fn protocols_share_overlays_and_random_failures() {
    let cfg = ExperimentConfig {
        protocols: vec![ProtocolKind::None, ProtocolKind::P2n],
        ..small(FailureModeKind::Evolution, 3)
    };
    for seed in cfg.seeds() {
        let topo = TopologyConfig {
            seed,
            ..cfg.topology.clone()
        };
        let mut a = SimState::new(&topo, cfg.mode, &cfg.params, ProtocolKind::None).unwrap();
        let mut b = SimState::new(&topo, cfg.mode, &cfg.params, ProtocolKind::P2n).unwrap();
        assert_eq!(a.graph(), b.graph());
        a.run_to_completion(cfg.rounds);
        b.run_to_completion(cfg.rounds);
        assert_eq!(a.failure_log(), b.failure_log());
    }
    let runs = run_all(&cfg, Execution::Parallel).unwrap();
    let none: Vec<&RunResult> = runs.iter().filter(|r| r.protocol == ProtocolKind::None).collect();
    let p2n: Vec<&RunResult> = runs.iter().filter(|r| r.protocol == ProtocolKind::P2n).collect();
    for (x, y) in none.iter().zip(&p2n) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.rows[0], y.rows[0]);
    }
}

#[test]
fn aggregation_ignores_replicate_order() {
    let cfg = small(FailureModeKind::TargetedAttack, 5);
    let runs = run_all(&cfg, Execution::Parallel).unwrap();
    let mine: Vec<&RunResult> = runs.iter().filter(|r| r.protocol == ProtocolKind::Pecc).collect();
    let mut reversed = mine.clone();
    reversed.reverse();
    reversed.swap(0, 2);
    assert_eq!(
        aggregate_protocol(ProtocolKind::Pecc, &mine, 4),
        aggregate_protocol(ProtocolKind::Pecc, &reversed, 4)
    );
}

#[test]
fn report_regenerates_from_csv() {
    let cfg = small(FailureModeKind::FailuresOnly, 4);
    let (runs, report) = run_experiment(&cfg, Execution::Parallel).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &runs, &report).unwrap();
    for p in &report.protocols {
        let again = aggregate_from_dir(&cfg, p.protocol, dir.path()).unwrap();
        assert_eq!(again.rows, p.rows);
        assert_eq!(again.summary, p.summary);
        assert_eq!(again.divergent_runs, p.divergent_runs);
    }
}

#[test]
fn evolution_spread_is_below_mean() {
    let cfg = ExperimentConfig {
        replicates: 20,
        ..small(FailureModeKind::Evolution, 20)
    };
    let (_, report) = run_experiment(&cfg, Execution::Parallel).unwrap();
    for p in &report.protocols {
        let frac = p.summary[1];
        assert!(frac.std < frac.mean, "{}: {frac:?}", p.protocol);
    }
}

#[test]
fn failures_only_runs_to_exhaustion() {
    let cfg = small(FailureModeKind::FailuresOnly, 2);
    let runs = run_all(&cfg, Execution::Sequential).unwrap();
    for r in &runs {
        assert_eq!(r.rows.len(), 81);
        assert_eq!(r.rows.last().unwrap().active_count, 0);
    }
}

#[test]
fn snapshot_is_captured_at_the_requested_round() {
    let cfg = ExperimentConfig {
        snapshot_round: Some(10),
        ..small(FailureModeKind::TargetedAttack, 2)
    };
    let (runs, report) = run_experiment(&cfg, Execution::Sequential).unwrap();
    assert!(runs.iter().all(|r| r.snapshot.is_some()));
    assert!(report.protocols.iter().all(|p| p.degree_distribution.is_some()));
    let agg = aggregate(&cfg, &runs);
    assert_eq!(agg, report);
}

#[test]
fn power_law_slope_is_near_two() {
    let cfg = TopologyConfig {
        kind: TopologyKind::ScaleFree,
        ..Default::default()
    };
    let mut slopes = Vec::new();
    for seed in 0..10 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let t = generate(&cfg, &mut rng).unwrap();
        let dist = overlay_heal::graph::degree_distribution(&t.graph);
        let fit = loglog_fit(&dist).unwrap();
        assert!((-2.4..=-1.6).contains(&fit.slope), "seed {seed}: {}", fit.slope);
        slopes.push(fit.slope);
    }
    assert_eq!(slopes.len(), 10);
}

#[test]
fn targeted_attack_hits_the_hub_first() {
    let cfg = TopologyConfig {
        kind: TopologyKind::ScaleFree,
        seed: 3,
        ..Default::default()
    };
    let mode = FailureMode {
        kind: FailureModeKind::TargetedAttack,
        events_per_round: 1,
    };
    let mut sim = SimState::new(&cfg, mode, &Default::default(), ProtocolKind::None).unwrap();
    let g = sim.graph().clone();
    let max = g.active_nodes().map(|n| g.degree(n)).max().unwrap();
    let first: NodeId = g.active_nodes().find(|n| g.degree(*n) == max).unwrap();
    sim.run_round();
    assert_eq!(sim.failure_log()[0], vec![first]);
}
