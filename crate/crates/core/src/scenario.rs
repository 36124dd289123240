//! Preconfigured experiments: three topologies under the three churn modes,
//! plus the degree-distribution comparison on the power-law overlay.
//!
//! This registry is the one place where scenario sizes and rates live.

use crate::config::ConfigError;
use crate::harness::ExperimentConfig;
use crate::sim::{FailureMode, FailureModeKind};
use crate::topology::{TopologyConfig, TopologyKind};

pub const SCENARIOS: [&str; 10] = [
    "uniform-evolution",
    "uniform-attack",
    "uniform-failures",
    "clustered-evolution",
    "clustered-attack",
    "clustered-failures",
    "sf-evolution",
    "sf-attack",
    "sf-failures",
    "sf-degree-dist",
];

const REPLICATES: u64 = 20;

fn uniform() -> TopologyConfig {
    TopologyConfig {
        kind: TopologyKind::Uniform,
        n_nodes: 200,
        uniform_degree: 6,
        ..Default::default()
    }
}

/// Four clusters of 100 nodes, dense inside and joined by a few dozen links.
fn clustered() -> TopologyConfig {
    TopologyConfig {
        kind: TopologyKind::Clustered,
        n_nodes: 400,
        n_clusters: 4,
        gamma: 0.08,
        omega: 0.03,
        ..Default::default()
    }
}

/// The same clusters without any bridge, so the largest component starts at
/// a quarter of the overlay.
fn clustered_apart() -> TopologyConfig {
    TopologyConfig {
        omega: 0.0,
        ..clustered()
    }
}

/// 636 nodes, maximum degree 20.
fn scale_free() -> TopologyConfig {
    TopologyConfig {
        kind: TopologyKind::ScaleFree,
        a: 6.0,
        b: 2.0,
        ..Default::default()
    }
}

fn mode(kind: FailureModeKind) -> FailureMode {
    FailureMode {
        kind,
        events_per_round: 1,
    }
}

fn experiment(topology: TopologyConfig, kind: FailureModeKind, rounds: u64) -> ExperimentConfig {
    ExperimentConfig {
        topology,
        mode: mode(kind),
        replicates: REPLICATES,
        rounds,
        ..Default::default()
    }
}

pub fn scenario(name: &str) -> Result<ExperimentConfig, ConfigError> {
    use FailureModeKind::*;
    let cfg = match name {
        "uniform-evolution" => experiment(uniform(), Evolution, 200),
        "uniform-attack" => experiment(uniform(), TargetedAttack, 100),
        "uniform-failures" => experiment(uniform(), FailuresOnly, 1),
        "clustered-evolution" => experiment(clustered(), Evolution, 200),
        "clustered-attack" => experiment(clustered(), TargetedAttack, 100),
        "clustered-failures" => experiment(clustered_apart(), FailuresOnly, 1),
        "sf-evolution" => experiment(scale_free(), Evolution, 200),
        "sf-attack" => experiment(scale_free(), TargetedAttack, 100),
        "sf-failures" => experiment(scale_free(), FailuresOnly, 1),
        "sf-degree-dist" => ExperimentConfig {
            snapshot_round: Some(50),
            ..experiment(scale_free(), TargetedAttack, 50)
        },
        _ => {
            return Err(ConfigError::UnknownScenario {
                name: name.to_string(),
                valid: SCENARIOS.join(", "),
            })
        }
    };
    Ok(cfg)
}
