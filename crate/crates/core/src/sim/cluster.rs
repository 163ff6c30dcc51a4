//! The event loop: delivers messages with topology delays, fires timers,
//! injects faults and records a trace.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balance::load_balance_metric_u64;
use crate::client::{Client, ClientConfig, OpRecord};
use crate::dhr::{eligible_nodes, CapabilityRecord, CapabilityStore, DhrRegistry, DhrRequest};
use crate::error::ConfigError;
use crate::ids::{ClientId, Endpoint, NodeId, OpId, ReqId, SimTime, Version};
use crate::node::{GossipConfig, Message, Mode, Node, NodeConfig, Output, Timeouts, Timer};
use crate::query::Statement;
use crate::recovery::{global_scan, ClusterSnapshot, RepairAction, RepairKind, Violation};
use crate::ring::TokenRing;
use crate::sim::fault::{FaultAction, FaultPlan, FaultState};
use crate::sim::queue::EventQueue;
use crate::sim::topology::TopologyConfig;

#[derive(Debug, Clone)]
pub struct ClusterConfig {
    pub mode: Mode,
    pub replication: usize,
    pub vnodes: u32,
    pub registry: DhrRegistry,
    pub topology: TopologyConfig,
    pub gossip: GossipConfig,
    pub timeouts: Timeouts,
    pub expiry_sweep: Duration,
    pub clients: u32,
    /// Seed every capability replica with the full store before start, as
    /// if it had been configured up front. Announcements still happen.
    pub preload_capabilities: bool,
    /// Interval of per-node load samples; none when unset.
    pub sample_interval: Option<Duration>,
    pub record_trace: bool,
    pub faults: FaultPlan,
}

impl ClusterConfig {
    pub fn new(topology: TopologyConfig, registry: DhrRegistry, replication: usize) -> Self {
        ClusterConfig {
            mode: Mode::Prada,
            replication,
            vnodes: 1,
            registry,
            topology,
            gossip: GossipConfig::default(),
            timeouts: Timeouts::default(),
            expiry_sweep: Duration::from_secs(1),
            clients: 1,
            preload_capabilities: true,
            sample_interval: None,
            record_trace: true,
            faults: FaultPlan::default(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology.validate()?;
        let n = self.topology.nodes.len();
        if self.replication == 0 || self.replication > n {
            return Err(ConfigError::Invalid(format!("replication factor {} outside 1..={n}", self.replication)));
        }
        if self.vnodes == 0 || self.clients == 0 {
            return Err(ConfigError::Invalid("need at least one virtual node and one client".into()));
        }
        if self.gossip.sync_interval.is_zero() || self.gossip.load_refresh.is_zero() || self.expiry_sweep.is_zero() {
            return Err(ConfigError::Invalid("periodic intervals must be positive".into()));
        }
        if self.timeouts.op.is_zero() || self.timeouts.client.is_zero() || self.timeouts.cleanup.is_zero() {
            return Err(ConfigError::Invalid("timeouts must be positive".into()));
        }
        if self.sample_interval.is_some_and(|d| d.is_zero()) {
            return Err(ConfigError::Invalid("sample interval must be positive".into()));
        }
        for spec in &self.topology.nodes {
            self.registry.validate_caps(&spec.caps)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceKind {
    Send,
    Deliver,
    Drop,
}

/// One network event.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub kind: TraceKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub msg: &'static str,
    pub op: Option<OpId>,
    pub req: Option<ReqId>,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSample {
    pub time: SimTime,
    pub metric: f64,
    pub loads: Vec<u64>,
}

/// A statement and when the client submits it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub at: SimTime,
    pub stmt: Statement,
}

enum Event {
    Deliver { from: Endpoint, to: Endpoint, msg: Message },
    NodeTimer(NodeId, Timer),
    ClientTimer(ClientId, Timer),
    Submit { client: ClientId, stmt: Statement, coordinator: Option<NodeId> },
    Fault(FaultAction),
    Sample,
}

pub struct Cluster {
    cfg: ClusterConfig,
    node_cfg: Arc<NodeConfig>,
    nodes: Vec<Node>,
    alive: Vec<bool>,
    clients: Vec<Client>,
    queue: EventQueue<Event>,
    now: SimTime,
    rng: ChaCha8Rng,
    faults: FaultState,
    in_flight: u64,
    submits: u64,
    trace: Vec<TraceRecord>,
    stats: NetStats,
    samples: Vec<LoadSample>,
    next_req: u64,
}

fn req_of(msg: &Message) -> Option<ReqId> {
    match msg {
        Message::Request { req, .. } | Message::Response { req, .. } => Some(*req),
        _ => None,
    }
}

impl Cluster {
    pub fn new(cfg: ClusterConfig, seed: u64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let n = cfg.topology.node_count();
        let ring = TokenRing::evenly_spaced(n, cfg.vnodes)?;
        let node_cfg = Arc::new(NodeConfig {
            mode: cfg.mode,
            replication: cfg.replication,
            nodes: n,
            registry: cfg.registry.clone(),
            ring,
            gossip: cfg.gossip,
            timeouts: cfg.timeouts,
            expiry_sweep: cfg.expiry_sweep,
        });
        let all_caps = CapabilityStore::from_caps(cfg.topology.nodes.iter().map(|s| s.caps.clone()));
        let mut nodes: Vec<Node> = cfg
            .topology
            .nodes
            .iter()
            .map(|s| Node::new(s.caps.clone(), node_cfg.clone(), seed))
            .collect();
        if cfg.preload_capabilities {
            for node in &mut nodes {
                for rec in all_caps.records() {
                    node.state.capability_replica.merge(rec.clone());
                }
            }
        }
        let client_cfg = Arc::new(ClientConfig {
            nodes: n,
            registry: cfg.registry.clone(),
            capabilities: all_caps,
            timeouts: cfg.timeouts,
        });
        let clients = (0..cfg.clients).map(|c| Client::new(ClientId(c), client_cfg.clone(), seed)).collect();
        let mut cluster = Cluster {
            faults: FaultState::new(&cfg.faults),
            alive: vec![true; n as usize],
            node_cfg,
            nodes,
            clients,
            queue: EventQueue::new(),
            now: SimTime::ZERO,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe),
            in_flight: 0,
            submits: 0,
            trace: Vec::new(),
            stats: NetStats::default(),
            samples: Vec::new(),
            next_req: 0,
            cfg,
        };
        for (t, action) in cluster.faults.timed() {
            cluster.queue.push(t, Event::Fault(action));
        }
        if cluster.cfg.sample_interval.is_some() {
            cluster.queue.push(SimTime::ZERO, Event::Sample);
        }
        for i in 0..n {
            let out = cluster.nodes[i as usize].start(SimTime::ZERO);
            cluster.dispatch(Endpoint::Node(NodeId(i)), out);
        }
        Ok(cluster)
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node(&self, n: NodeId) -> &Node {
        &self.nodes[n.index()]
    }

    pub fn node_mut(&mut self, n: NodeId) -> &mut Node {
        &mut self.nodes[n.index()]
    }

    pub fn node_count(&self) -> u32 {
        self.nodes.len() as u32
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        self.alive[n.index()]
    }

    pub fn ring(&self) -> &TokenRing {
        &self.node_cfg.ring
    }

    pub fn responsible(&self, key: &[u8]) -> Vec<NodeId> {
        self.node_cfg.ring.responsible_nodes(key, self.cfg.replication).expect("replication validated")
    }

    pub fn eligible(&self, dhr: &DhrRequest) -> Vec<NodeId> {
        let caps = CapabilityStore::from_caps(self.cfg.topology.nodes.iter().map(|s| s.caps.clone()));
        eligible_nodes(&caps, dhr, &self.cfg.registry)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn samples(&self) -> &[LoadSample] {
        &self.samples
    }

    /// Stored payload bytes per node.
    pub fn loads(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.state.stored_bytes()).collect()
    }

    /// Completed operations of all clients, in submission order.
    pub fn records(&self) -> Vec<OpRecord> {
        let mut all: Vec<OpRecord> = self.clients.iter().flat_map(|c| c.records().iter().cloned()).collect();
        all.sort_by_key(|r| (r.submitted, r.client, r.req));
        all
    }

    /// Messages sent so far that are still travelling.
    pub fn in_flight(&self) -> u64 {
        self.in_flight
    }

    pub fn submit(&mut self, at: SimTime, client: ClientId, stmt: Statement, coordinator: Option<NodeId>) {
        assert!(at >= self.now, "cannot submit into the past");
        self.submits += 1;
        self.queue.push(at, Event::Submit { client, stmt, coordinator });
    }

    /// Queues a workload, spreading statements over the clients round-robin.
    pub fn submit_all(&mut self, arrivals: &[Arrival]) {
        let c = self.cfg.clients;
        for (i, a) in arrivals.iter().enumerate() {
            self.submit(a.at, ClientId(i as u32 % c), a.stmt.clone(), None);
        }
    }

    /// Fail-stop crash: the node handles nothing from now on.
    pub fn crash(&mut self, n: NodeId) {
        self.alive[n.index()] = false;
    }

    pub fn snapshot(&self) -> ClusterSnapshot {
        ClusterSnapshot {
            replication: self.cfg.replication,
            tokens: self.node_cfg.ring.tokens().to_vec(),
            registry: self.cfg.registry.to_value(),
            nodes: self.nodes.iter().enumerate().map(|(i, n)| n.snapshot(self.alive[i])).collect(),
        }
    }

    pub fn scan(&self) -> Vec<Violation> {
        let snap = self.snapshot();
        global_scan(&snap.nodes, &self.node_cfg.ring, self.cfg.replication, &self.cfg.registry)
    }

    /// Capability replicas of the live nodes.
    pub fn capability_replicas(&self) -> Vec<(NodeId, Vec<CapabilityRecord>)> {
        self.nodes
            .iter()
            .filter(|n| self.alive[n.id.index()])
            .map(|n| (n.id, n.state.capability_replica.records().cloned().collect()))
            .collect()
    }

    /// True when nothing is travelling, nothing is waiting to be submitted
    /// and no live participant has work outstanding.
    pub fn is_quiescent(&self) -> bool {
        self.in_flight == 0
            && self.submits == 0
            && self.clients.iter().all(Client::is_idle)
            && self.nodes.iter().enumerate().all(|(i, n)| !self.alive[i] || n.is_idle())
    }

    /// Processes events until the cluster is quiescent or `limit` passes.
    /// Returns whether it became quiescent.
    pub fn run_until_quiescent(&mut self, limit: SimTime) -> bool {
        loop {
            if self.in_flight == 0 && self.submits == 0 && self.is_quiescent() {
                return true;
            }
            match self.queue.peek_time() {
                Some(t) if t <= limit => {
                    self.step();
                }
                _ => return false,
            }
        }
    }

    /// Processes every event due at or before `t`, then sets the clock to `t`.
    pub fn run_until(&mut self, t: SimTime) {
        while self.queue.peek_time().is_some_and(|at| at <= t) {
            self.step();
        }
        self.now = self.now.max(t);
    }

    /// Handles the next event. Returns false when none is queued.
    pub fn step(&mut self) -> bool {
        let Some((at, _, ev)) = self.queue.pop() else { return false };
        self.now = at;
        match ev {
            Event::Deliver { from, to, msg } => self.deliver(from, to, msg),
            Event::NodeTimer(n, timer) => {
                if self.alive[n.index()] {
                    let out = self.nodes[n.index()].on_timer(at, timer);
                    self.dispatch(Endpoint::Node(n), out);
                }
            }
            Event::ClientTimer(c, timer) => {
                let out = self.clients[c.0 as usize].on_timer(at, timer);
                self.dispatch(Endpoint::Client(c), out);
            }
            Event::Submit { client, stmt, coordinator } => {
                self.submits -= 1;
                let (_, out) = self.clients[client.0 as usize].submit(at, stmt, coordinator);
                self.dispatch(Endpoint::Client(client), out);
            }
            Event::Fault(action) => self.apply_fault(action, None, None),
            Event::Sample => {
                let loads = self.loads();
                self.samples.push(LoadSample { time: at, metric: load_balance_metric_u64(&loads), loads });
                if let Some(d) = self.cfg.sample_interval {
                    self.queue.push(at + d, Event::Sample);
                }
            }
        }
        true
    }

    fn record(&mut self, kind: TraceKind, from: Endpoint, to: Endpoint, msg: &Message) {
        if self.cfg.record_trace {
            self.trace.push(TraceRecord {
                time: self.now,
                kind,
                from,
                to,
                msg: msg.kind(),
                op: msg.op(),
                req: req_of(msg),
                bytes: msg.wire_size(),
            });
        }
    }

    fn apply_fault(&mut self, action: FaultAction, from: Option<Endpoint>, to: Option<Endpoint>) {
        let target = match action {
            FaultAction::Crash { node } => Some(node),
            FaultAction::CrashSender => from.and_then(node_of),
            FaultAction::CrashReceiver => to.and_then(node_of),
            FaultAction::Drop | FaultAction::Delay { .. } => None,
        };
        if let Some(n) = target {
            self.crash(n);
        }
    }

    fn delay(&mut self, from: Endpoint, to: Endpoint) -> Duration {
        let (Endpoint::Node(a), Endpoint::Node(b)) = (from, to) else { return Duration::ZERO };
        let base = self.cfg.topology.one_way(a, b);
        let jitter = self.cfg.topology.jitter_ms;
        if jitter > 0.0 && a != b {
            base + Duration::from_nanos((self.rng.random::<f64>() * jitter * 1e6) as u64)
        } else {
            base
        }
    }

    fn dispatch(&mut self, src: Endpoint, outputs: Vec<Output>) {
        for out in outputs {
            match out {
                Output::Timer { after, timer } => {
                    let ev = match src {
                        Endpoint::Node(n) => Event::NodeTimer(n, timer),
                        Endpoint::Client(c) => Event::ClientTimer(c, timer),
                    };
                    self.queue.push(self.now + after, ev);
                }
                Output::Send { to, msg } => {
                    self.stats.sent += 1;
                    self.stats.bytes += msg.wire_size();
                    self.record(TraceKind::Send, src, to, &msg);
                    let mut extra = Duration::ZERO;
                    let mut lost = false;
                    let mut stop = false;
                    for action in self.faults.check(true, msg.kind(), src, to) {
                        match action {
                            FaultAction::Drop => lost = true,
                            FaultAction::Delay { by } => extra += by,
                            FaultAction::CrashSender => {
                                lost = true;
                                stop = true;
                            }
                            _ => {}
                        }
                        self.apply_fault(action, Some(src), Some(to));
                    }
                    if lost {
                        self.stats.dropped += 1;
                        self.record(TraceKind::Drop, src, to, &msg);
                    } else {
                        let at = self.now + self.delay(src, to) + extra;
                        self.in_flight += 1;
                        self.queue.push(at, Event::Deliver { from: src, to, msg });
                    }
                    if stop {
                        break;
                    }
                }
            }
        }
    }

    fn deliver(&mut self, from: Endpoint, to: Endpoint, msg: Message) {
        let mut lost = false;
        for action in self.faults.check(false, msg.kind(), from, to) {
            match action {
                FaultAction::Drop | FaultAction::CrashReceiver => lost = true,
                FaultAction::Delay { by } => {
                    self.apply_fault(action, Some(from), Some(to));
                    self.queue.push(self.now + by, Event::Deliver { from, to, msg });
                    return;
                }
                _ => {}
            }
            self.apply_fault(action, Some(from), Some(to));
        }
        self.in_flight -= 1;
        if let Endpoint::Node(n) = to {
            lost |= !self.alive[n.index()];
        }
        if lost {
            self.stats.dropped += 1;
            self.record(TraceKind::Drop, from, to, &msg);
            return;
        }
        self.stats.delivered += 1;
        self.record(TraceKind::Deliver, from, to, &msg);
        let out = match to {
            Endpoint::Node(n) => self.nodes[n.index()].handle(self.now, from, msg),
            Endpoint::Client(c) => self.clients[c.0 as usize].handle(self.now, from, msg),
        };
        self.dispatch(to, out);
    }

    /// Executes a repair action as ordinary protocol traffic from client 0.
    pub fn apply_repair(&mut self, action: &RepairAction) {
        let me = Endpoint::Client(ClientId(0));
        let mut out = Vec::new();
        match action.kind {
            RepairKind::RollbackCreate => {
                let version = action.version.unwrap_or_default();
                let op = OpId { coordinator: NodeId(u32::MAX), seq: 0 };
                for &n in &action.scope {
                    let msg = Message::Rollback { op, key: action.key.clone(), version };
                    out.push(Output::Send { to: Endpoint::Node(n), msg });
                }
            }
            RepairKind::BroadcastDelete => {
                let version = action.version.unwrap_or(Version { ts: self.now.0, node: u32::MAX });
                for &n in &action.scope {
                    let msg = Message::BroadcastDelete { key: action.key.clone(), version };
                    out.push(Output::Send { to: Endpoint::Node(n), msg });
                }
            }
            RepairKind::ClientBroadcastCleanup => {
                for &n in &action.scope {
                    self.next_req += 1;
                    let msg = Message::Cleanup { key: action.key.clone(), token: u64::MAX - self.next_req };
                    out.push(Output::Send { to: Endpoint::Node(n), msg });
                }
            }
            RepairKind::ReissueCreate
            | RepairKind::ReissueRead
            | RepairKind::ReissueUpdate
            | RepairKind::ExpiryDelete => {
                let stmt = match (&action.stmt, action.kind) {
                    (_, RepairKind::ExpiryDelete) => Statement::Delete { key: action.key.clone() },
                    (Some(s), _) => s.clone(),
                    (None, _) => return,
                };
                let coordinator = action.scope.first().copied();
                self.submit(self.now, ClientId(0), stmt, coordinator);
                return;
            }
        }
        self.dispatch(me, out);
    }

    /// Per-op message sequences `(type, from, to)` of sent messages.
    pub fn op_traces(&self) -> BTreeMap<OpId, Vec<(&'static str, Endpoint, Endpoint)>> {
        let mut out: BTreeMap<OpId, Vec<_>> = BTreeMap::new();
        for r in self.trace.iter().filter(|r| r.kind == TraceKind::Send) {
            if let Some(op) = r.op {
                out.entry(op).or_default().push((r.msg, r.from, r.to));
            }
        }
        out
    }
}

fn node_of(e: Endpoint) -> Option<NodeId> {
    match e {
        Endpoint::Node(n) => Some(n),
        Endpoint::Client(_) => None,
    }
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub quiescent: bool,
    pub records: Vec<OpRecord>,
    pub stats: NetStats,
    pub samples: Vec<LoadSample>,
    pub snapshot: ClusterSnapshot,
    pub violations: Vec<Violation>,
    pub end: SimTime,
}

/// Builds a cluster, runs `workload` to quiescence (or `limit`) and
/// collects the results.
pub fn run(cfg: ClusterConfig, workload: &[Arrival], seed: u64, limit: SimTime) -> Result<RunResult, ConfigError> {
    let mut cluster = Cluster::new(cfg, seed)?;
    cluster.submit_all(workload);
    let quiescent = cluster.run_until_quiescent(limit);
    Ok(RunResult {
        quiescent,
        records: cluster.records(),
        stats: cluster.stats(),
        samples: cluster.samples().to_vec(),
        snapshot: cluster.snapshot(),
        violations: cluster.scan(),
        end: cluster.now(),
    })
}
