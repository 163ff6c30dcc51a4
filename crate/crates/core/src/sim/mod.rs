//! Deterministic discrete-event simulation of a cluster.

pub mod cluster;
pub mod fault;
pub mod oracle;
pub mod placement;
pub mod queue;
pub mod topology;
pub mod workload;

pub use cluster::{run, Arrival, Cluster, ClusterConfig, LoadSample, NetStats, RunResult, TraceKind, TraceRecord};
pub use fault::{FaultAction, FaultPlan, FaultRule, Trigger};
pub use topology::{NodeSpec, TopologyConfig};
