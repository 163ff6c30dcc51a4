//! JSON cluster configuration for the command line. Durations are given
//! in milliseconds.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dhr::{DhrRegistry, NodeCapabilities};
use crate::error::ConfigError;
use crate::node::{GossipConfig, Mode, Timeouts};
use crate::sim::cluster::ClusterConfig;
use crate::sim::fault::FaultPlan;
use crate::sim::topology::TopologyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "prada")]
    pub mode: Mode,
    #[serde(default = "one")]
    pub replication: usize,
    #[serde(default = "one_u32")]
    pub vnodes: u32,
    /// Registry document: a list of DHR type declarations.
    pub registry: serde_json::Value,
    pub topology: TopologySpec,
    #[serde(default)]
    pub gossip: GossipMs,
    #[serde(default)]
    pub timeouts: TimeoutsMs,
    #[serde(default = "one_u32")]
    pub clients: u32,
    #[serde(default)]
    pub faults: FaultPlan,
    #[serde(default)]
    pub sample_interval_ms: Option<u64>,
    #[serde(default = "yes")]
    pub preload_capabilities: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "lowercase", deny_unknown_fields)]
pub enum TopologySpec {
    /// One region with a single RTT between every pair of nodes.
    Uniform { rtt_ms: f64, capabilities: Vec<NodeCapabilities> },
    /// The ten-region cloud preset, one node per region in preset order.
    Azure10 { capabilities: Vec<NodeCapabilities> },
    Custom(TopologyConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GossipMs {
    pub sync_interval_ms: u64,
    pub load_refresh_ms: u64,
}

impl Default for GossipMs {
    fn default() -> Self {
        let g = GossipConfig::default();
        GossipMs { sync_interval_ms: g.sync_interval.as_millis() as u64, load_refresh_ms: g.load_refresh.as_millis() as u64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeoutsMs {
    pub op_ms: u64,
    pub retries: u32,
    pub client_ms: u64,
    pub cleanup_ms: u64,
}

impl Default for TimeoutsMs {
    fn default() -> Self {
        let t = Timeouts::default();
        TimeoutsMs {
            op_ms: t.op.as_millis() as u64,
            retries: t.retries,
            client_ms: t.client.as_millis() as u64,
            cleanup_ms: t.cleanup.as_millis() as u64,
        }
    }
}

fn prada() -> Mode {
    Mode::Prada
}

fn one() -> usize {
    1
}

fn one_u32() -> u32 {
    1
}

fn yes() -> bool {
    true
}

impl ConfigFile {
    pub fn from_json(doc: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(doc)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let doc = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&doc)
    }

    pub fn registry(&self) -> Result<DhrRegistry, ConfigError> {
        Ok(DhrRegistry::from_value(self.registry.clone())?)
    }

    pub fn cluster_config(&self) -> Result<ClusterConfig, ConfigError> {
        let registry = self.registry()?;
        let topology = match &self.topology {
            TopologySpec::Uniform { rtt_ms, capabilities } => TopologyConfig::uniform(capabilities.clone(), *rtt_ms),
            TopologySpec::Azure10 { capabilities } => TopologyConfig::azure10(capabilities.clone())?,
            TopologySpec::Custom(t) => t.clone(),
        };
        for spec in &topology.nodes {
            registry.validate_caps(&spec.caps)?;
        }
        let mut cfg = ClusterConfig::new(topology, registry, self.replication);
        cfg.mode = self.mode;
        cfg.vnodes = self.vnodes;
        cfg.gossip = GossipConfig {
            sync_interval: Duration::from_millis(self.gossip.sync_interval_ms),
            load_refresh: Duration::from_millis(self.gossip.load_refresh_ms),
        };
        cfg.timeouts = Timeouts {
            op: Duration::from_millis(self.timeouts.op_ms),
            retries: self.timeouts.retries,
            client: Duration::from_millis(self.timeouts.client_ms),
            cleanup: Duration::from_millis(self.timeouts.cleanup_ms),
        };
        cfg.clients = self.clients;
        cfg.faults = self.faults.clone();
        cfg.sample_interval = self.sample_interval_ms.map(Duration::from_millis);
        cfg.preload_capabilities = self.preload_capabilities;
        cfg.validate()?;
        Ok(cfg)
    }
}
