//! Insert-only placement simulator for the load-balance studies.
//!
//! Runs the same target selection, load views and gossip merge as the full
//! cluster but skips per-message protocol traffic: each insert is placed
//! at its arrival instant and only gossip exchanges travel through the
//! network with a delay. This keeps `10^6`-insert sweeps cheap.

use std::time::Duration;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::balance::{load_balance_metric_u64, select_targets, LoadReport, LoadView};
use crate::error::ParamError;
use crate::ids::{NodeId, SimTime};
use crate::ring::TokenRing;
use crate::sim::queue::EventQueue;

/// One kind of DHR demand: the nodes that can host it and how often it is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandClass {
    pub name: String,
    pub eligible: Vec<NodeId>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    pub nodes: u32,
    pub replication: usize,
    pub inserts: u64,
    /// Mean insert arrivals per second (Poisson).
    pub rate: f64,
    pub item_bytes: u64,
    pub sync_interval: Duration,
    pub load_refresh: Duration,
    /// One-way delay of a gossip message.
    pub gossip_delay: Duration,
    pub classes: Vec<DemandClass>,
    pub coordinators: CoordinatorPolicy,
}

/// Which node coordinates each insert.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoordinatorPolicy {
    /// One client stream entering through a fixed node.
    Single(NodeId),
    /// Every insert through a uniformly random node.
    Random,
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        let bad = |m: &str| Err(ParamError::Invalid(m.to_string()));
        if self.nodes == 0 || self.inserts == 0 {
            return bad("need at least one node and one insert");
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return bad("rate must be positive");
        }
        if self.replication == 0 || self.replication > self.nodes as usize {
            return bad("replication factor out of range");
        }
        if self.sync_interval.is_zero() || self.load_refresh.is_zero() {
            return bad("gossip intervals must be positive");
        }
        if self.classes.is_empty() || self.classes.iter().any(|c| c.eligible.is_empty() || c.weight < 0.0) {
            return bad("every demand class needs eligible nodes and a non-negative weight");
        }
        if matches!(self.coordinators, CoordinatorPolicy::Single(c) if c.0 >= self.nodes) {
            return bad("coordinator is not a cluster node");
        }
        if self.classes.iter().flat_map(|c| &c.eligible).any(|n| n.0 >= self.nodes) {
            return bad("demand class names an unknown node");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementOutcome {
    /// Final bytes stored per node under load-aware placement.
    pub loads: Vec<u64>,
    /// Final bytes per node when every item lands on its responsible nodes.
    pub hash_loads: Vec<u64>,
    /// Items drawn per demand class.
    pub class_counts: Vec<u64>,
    pub metric: f64,
    pub hash_metric: f64,
    pub degraded: u64,
    pub gossip_messages: u64,
    pub duration: SimTime,
}

enum Event {
    GossipTimer(NodeId),
    RefreshTimer(NodeId),
    Syn { to: NodeId, from: NodeId, reports: Vec<(NodeId, LoadReport)> },
    Ack { to: NodeId, reports: Vec<(NodeId, LoadReport)> },
}

/// Runs one placement experiment with a seeded generator.
pub fn run_placement(cfg: &PlacementConfig, seed: u64) -> Result<PlacementOutcome, ParamError> {
    cfg.validate()?;
    let n = cfg.nodes as usize;
    let ring = TokenRing::evenly_spaced(cfg.nodes, 1).map_err(|e| ParamError::Invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick_class =
        WeightedIndex::new(cfg.classes.iter().map(|c| c.weight)).map_err(|e| ParamError::Invalid(e.to_string()))?;
    let gap = Exp::new(cfg.rate).map_err(|e| ParamError::Invalid(e.to_string()))?;

    let zero = LoadReport { load: 0, time: SimTime::ZERO };
    let mut views: Vec<LoadView> = (0..n)
        .map(|_| {
            let mut v = LoadView::new(n);
            for j in 0..n {
                v.merge_report(NodeId(j as u32), zero);
            }
            v
        })
        .collect();
    let mut loads = vec![0u64; n];
    let mut hash_loads = vec![0u64; n];
    let mut class_counts = vec![0u64; cfg.classes.len()];

    let mut queue = EventQueue::new();
    let sync_ns = cfg.sync_interval.as_nanos() as u64;
    let refresh_ns = cfg.load_refresh.as_nanos() as u64;
    for i in 0..n {
        let node = NodeId(i as u32);
        queue.push(SimTime(rng.random_range(0..sync_ns)), Event::GossipTimer(node));
        queue.push(SimTime(rng.random_range(0..refresh_ns)), Event::RefreshTimer(node));
    }

    let mut degraded = 0u64;
    let mut gossip_messages = 0u64;
    let mut now = SimTime::ZERO;
    let mut next_insert = SimTime::from_secs_f64(gap.sample(&mut rng));
    let mut done = 0u64;

    while done < cfg.inserts {
        if queue.peek_time().is_some_and(|t| t < next_insert) {
            let (t, _, ev) = queue.pop().expect("peeked");
            now = t;
            match ev {
                Event::GossipTimer(node) => {
                    if n > 1 {
                        let mut peer = rng.random_range(0..n - 1) as u32;
                        if peer >= node.0 {
                            peer += 1;
                        }
                        let reports = views[node.index()].reports();
                        gossip_messages += 1;
                        queue.push(now + cfg.gossip_delay, Event::Syn { to: NodeId(peer), from: node, reports });
                    }
                    queue.push(now + cfg.sync_interval, Event::GossipTimer(node));
                }
                Event::RefreshTimer(node) => {
                    let report = LoadReport { load: loads[node.index()], time: now };
                    views[node.index()].merge_report(node, report);
                    queue.push(now + cfg.load_refresh, Event::RefreshTimer(node));
                }
                Event::Syn { to, from, reports } => {
                    let view = &mut views[to.index()];
                    view.merge(&reports);
                    let reply = view.reports();
                    gossip_messages += 1;
                    queue.push(now + cfg.gossip_delay, Event::Ack { to: from, reports: reply });
                }
                Event::Ack { to, reports } => {
                    views[to.index()].merge(&reports);
                }
            }
            continue;
        }

        now = next_insert;
        let class = pick_class.sample(&mut rng);
        class_counts[class] += 1;
        let coordinator = match cfg.coordinators {
            CoordinatorPolicy::Single(c) => c.index(),
            CoordinatorPolicy::Random => rng.random_range(0..n),
        };
        let token: u64 = rng.random();
        let responsible = ring
            .responsible_for_token(token, cfg.replication)
            .expect("replication validated");
        for r in &responsible {
            hash_loads[r.index()] += cfg.item_bytes;
        }
        let sel = select_targets(
            &cfg.classes[class].eligible,
            &responsible,
            cfg.replication,
            &mut views[coordinator],
            cfg.item_bytes,
            now,
        );
        degraded += sel.degraded as u64;
        for t in sel.targets {
            loads[t.index()] += cfg.item_bytes;
            if t.index() != coordinator {
                views[t.index()].bump(t, cfg.item_bytes, now);
            }
        }
        done += 1;
        next_insert = now + Duration::from_secs_f64(gap.sample(&mut rng));
    }

    Ok(PlacementOutcome {
        metric: load_balance_metric_u64(&loads),
        hash_metric: load_balance_metric_u64(&hash_loads),
        loads,
        hash_loads,
        class_counts,
        degraded,
        gossip_messages,
        duration: now,
    })
}
