//! A storage node as a deterministic state machine.
//!
//! [`Node::handle`] and [`Node::on_timer`] consume one input and return the
//! messages and timers it produces. All randomness comes from a generator
//! owned by the node, so a node's behaviour is a pure function of its state
//! and its input sequence.

mod baseline;
pub mod item;
pub mod message;
pub mod store;
mod update;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::balance::LoadReport;
use crate::coordinator::PendingOp;
use crate::dhr::{node_is_eligible, CapabilityRecord, DhrRegistry, NodeCapabilities};
use crate::ids::{Endpoint, NodeId, OpId, ReqId, SimTime, Version};
use crate::recovery::{CleanupTrack, Delegation};
use crate::ring::TokenRing;

pub use item::{DataItem, RelayEntry};
pub use message::{Message, OpError, Reply};
pub use store::{NodeSnapshot, NodeState};
pub(crate) use update::UpdateTrack;

/// Whether the indirection layer is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Prada,
    /// Plain replicated store without relay and target stores.
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipConfig {
    pub sync_interval: Duration,
    pub load_refresh: Duration,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig { sync_interval: Duration::from_secs(1), load_refresh: Duration::from_secs(60) }
    }
}

/// Deadlines for operations and repairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeouts {
    /// First coordinator deadline; doubled on every reissue.
    pub op: Duration,
    /// Reissues after the first attempt before giving up.
    pub retries: u32,
    /// How long a client waits for its coordinator before recovering.
    pub client: Duration,
    /// How long a cleanup waits for reference answers.
    pub cleanup: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            op: Duration::from_secs(1),
            retries: 3,
            client: Duration::from_secs(20),
            cleanup: Duration::from_secs(1),
        }
    }
}

impl Timeouts {
    pub fn deadline(&self, attempt: u32) -> Duration {
        self.op * 2u32.saturating_pow(attempt.min(20))
    }
}

/// Cluster-wide settings every node shares.
#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub mode: Mode,
    pub replication: usize,
    pub nodes: u32,
    pub registry: DhrRegistry,
    pub ring: TokenRing,
    pub gossip: GossipConfig,
    pub timeouts: Timeouts,
    pub expiry_sweep: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Timer {
    Gossip,
    Refresh,
    Sweep,
    Deadline(OpId),
    UpdateExpire(OpId),
    CleanupDeadline(u64),
    Delegation(ReqId),
    ClientDeadline(ReqId, u32),
    CleanupWait(ReqId, u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Send { to: Endpoint, msg: Message },
    Timer { after: Duration, timer: Timer },
}

pub struct Node {
    pub id: NodeId,
    pub(crate) cfg: Arc<NodeConfig>,
    pub state: NodeState,
    pub(crate) rng: ChaCha8Rng,
    next_seq: u64,
    pub(crate) last_ts: u64,
    pub(crate) next_token: u64,
    pub(crate) pending: BTreeMap<OpId, PendingOp>,
    pub(crate) updates: BTreeMap<OpId, UpdateTrack>,
    pub(crate) cleanups: BTreeMap<u64, CleanupTrack>,
    pub(crate) delegations: BTreeMap<ReqId, Delegation>,
    out: Vec<Output>,
}

impl Node {
    pub fn new(caps: NodeCapabilities, cfg: Arc<NodeConfig>, seed: u64) -> Self {
        let id = caps.node_id;
        let nodes = cfg.nodes as usize;
        Node {
            id,
            state: NodeState::new(caps, nodes),
            rng: ChaCha8Rng::seed_from_u64(seed ^ (u64::from(id.0) + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            cfg,
            next_seq: 0,
            last_ts: 0,
            next_token: 0,
            pending: BTreeMap::new(),
            updates: BTreeMap::new(),
            cleanups: BTreeMap::new(),
            delegations: BTreeMap::new(),
            out: Vec::new(),
        }
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    /// Joins the cluster: announces capabilities and arms periodic timers.
    pub fn start(&mut self, now: SimTime) -> Vec<Output> {
        if self.cfg.mode == Mode::Prada {
            self.announce();
            self.set_timer(self.cfg.expiry_sweep, Timer::Sweep);
        }
        let zero = LoadReport { load: 0, time: now };
        for n in 0..self.cfg.nodes {
            self.state.load_view.merge_report(NodeId(n), zero);
        }
        let sync = self.cfg.gossip.sync_interval.as_nanos() as u64;
        let refresh = self.cfg.gossip.load_refresh.as_nanos() as u64;
        let g = Duration::from_nanos(self.rng.random_range(0..sync.max(1)));
        let r = Duration::from_nanos(self.rng.random_range(0..refresh.max(1)));
        self.set_timer(g, Timer::Gossip);
        self.set_timer(r, Timer::Refresh);
        self.take()
    }

    /// Re-announces (possibly changed) capabilities to the cluster.
    pub fn capability_bootstrap(&mut self, caps: NodeCapabilities) -> Vec<Output> {
        assert_eq!(caps.node_id, self.id, "capabilities belong to another node");
        self.state.caps = caps;
        self.announce();
        self.take()
    }

    fn announce(&mut self) {
        self.state.cap_seq += 1;
        let record = CapabilityRecord { seq: self.state.cap_seq, caps: self.state.caps.clone() };
        self.state.capability_replica.merge(record.clone());
        for n in 0..self.cfg.nodes {
            if n != self.id.0 {
                self.send(NodeId(n), Message::Capability { record: record.clone() });
            }
        }
    }

    /// True when no operation, cleanup or delegation is outstanding.
    pub fn is_idle(&self) -> bool {
        self.pending.is_empty()
            && self.cleanups.is_empty()
            && self.delegations.is_empty()
            && self.updates.values().all(UpdateTrack::is_settled)
    }

    pub fn snapshot(&self, alive: bool) -> NodeSnapshot {
        self.state.snapshot(alive)
    }

    pub fn pending_ops(&self) -> impl Iterator<Item = &PendingOp> {
        self.pending.values()
    }

    pub(crate) fn take(&mut self) -> Vec<Output> {
        std::mem::take(&mut self.out)
    }

    pub(crate) fn send(&mut self, to: NodeId, msg: Message) {
        self.out.push(Output::Send { to: Endpoint::Node(to), msg });
    }

    pub(crate) fn send_to(&mut self, to: Endpoint, msg: Message) {
        self.out.push(Output::Send { to, msg });
    }

    pub(crate) fn set_timer(&mut self, after: Duration, timer: Timer) {
        self.out.push(Output::Timer { after, timer });
    }

    pub(crate) fn next_op(&mut self) -> OpId {
        self.next_seq += 1;
        OpId { coordinator: self.id, seq: self.next_seq }
    }

    /// A version later than any this node handed out before.
    pub(crate) fn fresh_version(&mut self, now: SimTime) -> Version {
        self.last_ts = now.0.max(self.last_ts + 1);
        Version { ts: self.last_ts, node: self.id.0 }
    }

    pub(crate) fn responsible(&self, key: &[u8]) -> Vec<NodeId> {
        self.cfg.ring.responsible_nodes(key, self.cfg.replication).expect("replication factor validated")
    }

    pub(crate) fn drop_displaced(&mut self, key: &[u8], below: Version, displaced: Vec<NodeId>) {
        for n in displaced {
            self.send(n, Message::Drop { key: key.to_vec(), below });
        }
    }

    /// Installs a relay unless a newer delete already removed the key, in
    /// which case the entry's targets are told to delete their copies.
    pub(crate) fn install_relay(&mut self, entry: RelayEntry) -> Vec<NodeId> {
        if let Some(&version) = self.state.tombstones.get(&entry.key).filter(|t| entry.version <= **t) {
            let me = self.id;
            for &t in entry.targets.iter().filter(|t| **t != me) {
                self.send(t, Message::BroadcastDelete { key: entry.key.clone(), version });
            }
            return Vec::new();
        }
        self.state.put_relay(entry)
    }

    pub(crate) fn bump_self(&mut self, bytes: u64, now: SimTime) {
        let id = self.id;
        self.state.load_view.bump(id, bytes, now);
    }

    pub fn handle(&mut self, now: SimTime, from: Endpoint, msg: Message) -> Vec<Output> {
        if self.cfg.mode == Mode::Baseline && self.handle_baseline(now, from, &msg) {
            return self.take();
        }
        match msg {
            Message::Request { req, stmt, after } => self.on_request(now, from, req, stmt, after),
            Message::Response { req, .. } => {
                self.delegations.remove(&req);
            }
            Message::Write { op, item } => {
                let key = item.key.clone();
                let (version, bytes) = (item.version, item.payload_bytes());
                let (newer, displaced) = self.state.put_data(item);
                if newer {
                    self.bump_self(bytes, now);
                }
                self.drop_displaced(&key, version, displaced);
                self.send(op.coordinator, Message::WriteAck { op });
            }
            Message::Read { op, key } => self.on_read(op, key),
            Message::ForwardRead { op, key } => {
                if let Some(item) = self.state.target_store.get(&key) {
                    let item = Some(item.clone());
                    self.send(op.coordinator, Message::ReadReply { op, item });
                }
            }
            Message::TargetWrite { op, item, targets, notify, moved } => {
                self.store_target(now, op, item, &targets, &notify, moved);
            }
            Message::RelayWrite { op, entry } => {
                let (key, version) = (entry.key.clone(), entry.version);
                let displaced = self.install_relay(entry);
                self.drop_displaced(&key, version, displaced);
                self.send(op.coordinator, Message::RelayAck { op });
            }
            Message::Update { op, key, columns, dhr, candidates, designated, attempt, version } => {
                self.on_update(now, op, key, columns, dhr, candidates, designated, attempt, version);
            }
            Message::Move { op, key, columns, dhr, version, targets, holders, source, moved, notify } => {
                self.on_move(now, op, key, columns, dhr, version, targets, holders, source, moved, notify);
            }
            Message::TargetAck { op, key, version, targets, dhr, moved, relay } => {
                if let Endpoint::Node(t) = from {
                    if relay {
                        self.on_update_target_ack(now, op, t, &key, version, &targets, &dhr, moved);
                    }
                    self.coord_target_ack(now, op, t, targets, moved, relay);
                }
            }
            Message::Delete { op, key, version } => {
                let (found, relay) = self.state.delete_up_to(&key, version);
                let forwarded: Vec<NodeId> = relay.unwrap_or_default().into_iter().filter(|t| *t != self.id).collect();
                for &t in &forwarded {
                    self.send(t, Message::TargetDelete { op, key: key.clone(), version });
                }
                self.send(op.coordinator, Message::DeleteAck { op, found, forwarded });
            }
            Message::TargetDelete { op, key, version } => {
                let found = self.state.delete_target_up_to(&key, version);
                self.send(op.coordinator, Message::TargetDeleteAck { op, found });
            }
            Message::Drop { key, below } => {
                self.state.drop_target_below(&key, below);
            }
            Message::Rollback { key, version, .. } => {
                self.state.rollback(&key, version);
            }
            Message::BroadcastDelete { key, version } => {
                self.state.delete_up_to(&key, version);
            }
            Message::Cleanup { key, token } => self.on_cleanup(now, from, key, token),
            Message::CleanupAck { .. } => {}
            Message::RefQuery { key, token } => {
                if let Endpoint::Node(n) = from {
                    let referenced = self.state.relay_store.get(&key).is_some_and(|r| r.targets.contains(&n));
                    self.send(n, Message::RefReply { token, referenced });
                }
            }
            Message::RefReply { token, referenced } => {
                if let Endpoint::Node(n) = from {
                    self.on_ref_reply(n, token, referenced);
                }
            }
            Message::Capability { record } => {
                self.state.capability_replica.merge(record);
            }
            Message::GossipSyn { reports } => {
                self.state.load_view.merge(&reports);
                let reply = self.state.load_view.reports();
                if let Endpoint::Node(n) = from {
                    self.send(n, Message::GossipAck { reports: reply });
                }
            }
            Message::GossipAck { reports } => {
                self.state.load_view.merge(&reports);
            }
            ack @ (Message::WriteAck { .. }
            | Message::RelayAck { .. }
            | Message::ReadReply { .. }
            | Message::UpdateAck { .. }
            | Message::DeleteAck { .. }
            | Message::TargetDeleteAck { .. }) => {
                if let Endpoint::Node(n) = from {
                    self.coord_ack(now, n, ack);
                }
            }
        }
        self.take()
    }

    pub fn on_timer(&mut self, now: SimTime, timer: Timer) -> Vec<Output> {
        match timer {
            Timer::Gossip => {
                let n = self.cfg.nodes;
                if n > 1 {
                    let mut peer = self.rng.random_range(0..n - 1);
                    if peer >= self.id.0 {
                        peer += 1;
                    }
                    let reports = self.state.load_view.reports();
                    self.send(NodeId(peer), Message::GossipSyn { reports });
                }
                self.set_timer(self.cfg.gossip.sync_interval, Timer::Gossip);
            }
            Timer::Refresh => {
                let report = LoadReport { load: self.state.stored_bytes(), time: now };
                let id = self.id;
                self.state.load_view.merge_report(id, report);
                self.set_timer(self.cfg.gossip.load_refresh, Timer::Refresh);
            }
            Timer::Sweep => {
                self.sweep_expired(now);
                self.set_timer(self.cfg.expiry_sweep, Timer::Sweep);
            }
            Timer::Deadline(op) => self.on_deadline(now, op),
            Timer::UpdateExpire(op) => {
                self.updates.remove(&op);
            }
            Timer::CleanupDeadline(token) => self.finish_cleanup(token),
            Timer::Delegation(req) => {
                self.delegations.remove(&req);
            }
            Timer::ClientDeadline(..) | Timer::CleanupWait(..) => {}
        }
        self.take()
    }

    fn on_read(&mut self, op: OpId, key: Vec<u8>) {
        let local = self.state.local_item(&key).cloned();
        if let Some(relay) = self.state.relay_store.get(&key) {
            let forward: Vec<NodeId> = relay.targets.iter().copied().filter(|t| *t != self.id).collect();
            for t in forward {
                self.send(t, Message::ForwardRead { op, key: key.clone() });
            }
            if local.is_some() {
                self.send(op.coordinator, Message::ReadReply { op, item: local });
            }
        } else {
            self.send(op.coordinator, Message::ReadReply { op, item: local });
        }
    }

    /// Stores a redirected item and acknowledges it to the coordinator and
    /// to the nodes in `notify`.
    pub(crate) fn store_target(
        &mut self,
        now: SimTime,
        op: OpId,
        item: DataItem,
        targets: &[NodeId],
        notify: &[NodeId],
        moved: bool,
    ) {
        if !node_is_eligible(&self.state.caps, &item.dhr, &self.cfg.registry) {
            return;
        }
        let sole = targets == [self.id] && self.responsible(&item.key).contains(&self.id);
        let (key, version, dhr, bytes) = (item.key.clone(), item.version, item.dhr.clone(), item.payload_bytes());
        let (newer, displaced) = self.state.put_target(item, sole);
        if newer && op.coordinator != self.id {
            self.bump_self(bytes, now);
        }
        self.drop_displaced(&key, version, displaced);
        let mut to: BTreeSet<NodeId> = notify.iter().copied().collect();
        let relay = !notify.is_empty();
        to.insert(op.coordinator);
        for n in to {
            let ack = Message::TargetAck {
                op,
                key: key.clone(),
                version,
                targets: targets.to_vec(),
                dhr: dhr.clone(),
                moved,
                relay,
            };
            self.send(n, ack);
        }
    }
}

#[cfg(test)]
mod tests;
