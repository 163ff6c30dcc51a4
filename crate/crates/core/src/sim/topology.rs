//! Node placement in regions and the delay between them.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dhr::NodeCapabilities;
use crate::error::ConfigError;
use crate::ids::NodeId;

/// Azure regions of the geo-distributed deployment, one node each.
pub const AZURE10_REGIONS: [&str; 10] = [
    "asia-east",
    "asia-southeast",
    "canada-east",
    "eu-north",
    "eu-west",
    "japan-east",
    "us-central",
    "us-east",
    "us-southcentral",
    "us-west",
];

/// Upper triangle of the azure10 RTT matrix in ms, row by row. Only the
/// extremes (eu-north to eu-west, asia-east to eu-west) are measured
/// values; the rest are plausible inter-region figures between them.
const AZURE10_UPPER: [f64; 45] = [
    37.0, 215.0, 270.0, 286.2, 52.0, 180.0, 205.0, 185.0, 155.0, // asia-east
    235.0, 255.0, 265.0, 75.0, 200.0, 225.0, 210.0, 175.0, // asia-southeast
    85.0, 95.0, 165.0, 35.0, 27.0, 50.0, 75.0, // canada-east
    24.3, 240.0, 110.0, 80.0, 115.0, 140.0, // eu-north
    250.0, 120.0, 90.0, 125.0, 150.0, // eu-west
    145.0, 170.0, 150.0, 110.0, // japan-east
    30.0, 27.0, 45.0, // us-central
    33.0, 70.0, // us-east
    40.0, // us-southcentral
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub regions: Vec<String>,
    /// Round-trip times between regions in ms. The diagonal is the RTT
    /// between distinct nodes of one region.
    pub rtt_ms: Vec<Vec<f64>>,
    /// Node `i` has id `i`.
    pub nodes: Vec<NodeSpec>,
    /// Upper bound of uniform extra one-way delay in ms.
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default = "yes")]
    pub symmetric: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub region: usize,
    pub caps: NodeCapabilities,
}

impl TopologyConfig {
    /// One region, every pair of nodes `rtt_ms` apart.
    pub fn uniform(caps: Vec<NodeCapabilities>, rtt_ms: f64) -> Self {
        TopologyConfig {
            regions: vec!["uniform".to_string()],
            rtt_ms: vec![vec![rtt_ms]],
            nodes: caps.into_iter().map(|caps| NodeSpec { region: 0, caps }).collect(),
            jitter_ms: 0.0,
            symmetric: true,
        }
    }

    /// The ten-region deployment; `caps[i]` is the node in region `i`.
    pub fn azure10(caps: Vec<NodeCapabilities>) -> Result<Self, ConfigError> {
        if caps.len() != AZURE10_REGIONS.len() {
            return Err(ConfigError::Invalid(format!("azure10 needs 10 nodes, got {}", caps.len())));
        }
        let n = AZURE10_REGIONS.len();
        let mut rtt = vec![vec![0.0; n]; n];
        let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
        for ((i, j), &v) in pairs.zip(AZURE10_UPPER.iter()) {
            rtt[i][j] = v;
            rtt[j][i] = v;
        }
        Ok(TopologyConfig {
            regions: AZURE10_REGIONS.iter().map(|s| s.to_string()).collect(),
            rtt_ms: rtt,
            nodes: caps.into_iter().enumerate().map(|(region, caps)| NodeSpec { region, caps }).collect(),
            jitter_ms: 0.0,
            symmetric: true,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let r = self.regions.len();
        if self.nodes.is_empty() {
            return bad("topology has no nodes".into());
        }
        if r == 0 || self.rtt_ms.len() != r || self.rtt_ms.iter().any(|row| row.len() != r) {
            return bad(format!("rtt matrix must be {r}x{r}"));
        }
        if self.rtt_ms.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("rtt entries must be finite and non-negative".into());
        }
        if self.symmetric {
            for i in 0..r {
                for j in 0..i {
                    if self.rtt_ms[i][j] != self.rtt_ms[j][i] {
                        return bad(format!("rtt matrix not symmetric at ({i},{j})"));
                    }
                }
            }
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return bad("jitter must be non-negative".into());
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.region >= r {
                return bad(format!("node {i} placed in unknown region {}", n.region));
            }
            if n.caps.node_id != NodeId(i as u32) {
                return bad(format!("node {i} carries capabilities of {}", n.caps.node_id));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> u32 {
        self.nodes.len() as u32
    }

    /// Fixed one-way delay from `a` to `b`: half the RTT, zero on one node.
    pub fn one_way(&self, a: NodeId, b: NodeId) -> Duration {
        if a == b {
            return Duration::ZERO;
        }
        let ms = self.rtt_ms[self.nodes[a.index()].region][self.nodes[b.index()].region] / 2.0;
        Duration::from_nanos((ms * 1e6).round() as u64)
    }

    pub fn region_of(&self, n: NodeId) -> &str {
        &self.regions[self.nodes[n.index()].region]
    }

    /// Largest and smallest RTT between distinct nodes, in ms.
    pub fn rtt_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                let v = self.rtt_ms[a.region][b.region];
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caps(n: u32) -> Vec<NodeCapabilities> {
        (0..n).map(|i| NodeCapabilities::new(NodeId(i))).collect()
    }

    #[test]
    fn azure10_extremes() {
        let t = TopologyConfig::azure10(caps(10)).unwrap();
        t.validate().unwrap();
        assert_eq!(t.rtt_range(), (24.3, 286.2));
        let idx = |name: &str| NodeId(AZURE10_REGIONS.iter().position(|r| *r == name).unwrap() as u32);
        assert_eq!(t.one_way(idx("asia-east"), idx("eu-west")), Duration::from_micros(143_100));
        assert_eq!(t.one_way(idx("eu-north"), idx("eu-west")), Duration::from_micros(12_150));
    }

    #[test]
    fn uniform_delays() {
        let t = TopologyConfig::uniform(caps(3), 100.0);
        t.validate().unwrap();
        assert_eq!(t.one_way(NodeId(0), NodeId(2)), Duration::from_millis(50));
        assert_eq!(t.one_way(NodeId(1), NodeId(1)), Duration::ZERO);
    }

    #[test]
    fn asymmetric_matrix_rejected() {
        let mut t = TopologyConfig::azure10(caps(10)).unwrap();
        t.rtt_ms[0][1] += 1.0;
        assert!(t.validate().is_err());
        t.symmetric = false;
        t.validate().unwrap();
    }
}
