//! Round-based simulation of unstructured peer-to-peer overlays under node
//! churn, comparing no maintenance, second-neighborhood repair, and
//! ECC-gated repair with pruning.

pub mod config;
pub mod error;
pub mod exec;
pub mod graph;
pub mod harness;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod topology;

pub use error::{Error, Result};
pub use exec::Execution;
pub use graph::{NodeId, OverlayGraph};
pub use harness::{ExperimentConfig, MetricsRow};
pub use protocol::{ProtocolKind, ProtocolParams};
pub use sim::{FailureMode, FailureModeKind, SimState};
pub use topology::{TopologyConfig, TopologyKind};
