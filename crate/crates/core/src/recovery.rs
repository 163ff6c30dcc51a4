//! Failure handling: repair actions for timed-out operations, cleanup of
//! unreferenced copies, delegated expiry deletes, and the global scan used
//! as a consistency oracle on quiescent clusters.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coordinator::{Phase, PendingOp};
use crate::dhr::{node_is_eligible, DhrRegistry, DhrRequest};
use crate::error::ConfigError;
use crate::ids::{Endpoint, NodeId, ReqId, SimTime, Version};
use crate::node::{Message, Node, NodeSnapshot, Timer};
use crate::query::{Columns, OpKind, Statement};
use crate::ring::TokenRing;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepairKind {
    ReissueCreate,
    RollbackCreate,
    ClientBroadcastCleanup,
    ReissueRead,
    ReissueUpdate,
    BroadcastDelete,
    ExpiryDelete,
}

/// One step of a repair. Reissues carry the nodes to avoid in `scope`;
/// the other kinds carry the nodes the step addresses.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairAction {
    pub kind: RepairKind,
    pub key: Vec<u8>,
    pub scope: Vec<NodeId>,
    pub version: Option<Version>,
    pub stmt: Option<Statement>,
}

/// Repairs for an attempt whose deadline passed. An empty list means the
/// retry budget is spent.
pub fn on_ack_timeout(pending: &PendingOp, cluster: &[NodeId], retries: u32) -> Vec<RepairAction> {
    let key = pending.key().to_vec();
    let awaited = pending.awaited();
    let can_retry = pending.attempt < retries;
    let action = |kind, scope: Vec<NodeId>, version| RepairAction {
        kind,
        key: key.clone(),
        scope,
        version,
        stmt: Some(pending.stmt.clone()),
    };
    let mut out = Vec::new();
    match pending.kind() {
        OpKind::Create => {
            let mut scope: BTreeSet<NodeId> = pending.responsible.iter().copied().collect();
            scope.extend(pending.targets());
            out.push(action(RepairKind::RollbackCreate, scope.into_iter().collect(), Some(pending.version)));
            if can_retry {
                let silent: Vec<NodeId> = pending.targets().into_iter().filter(|t| awaited.contains(t)).collect();
                out.push(action(RepairKind::ReissueCreate, silent, None));
            }
        }
        OpKind::Read => {
            if can_retry {
                out.push(action(RepairKind::ReissueRead, Vec::new(), None));
            }
        }
        OpKind::Update => {
            if can_retry {
                let silent: Vec<NodeId> = match &pending.phase {
                    Phase::Update { targets: Some(t), target_acks, .. } => {
                        t.iter().copied().filter(|n| !target_acks.contains(n)).collect()
                    }
                    _ => Vec::new(),
                };
                out.push(action(RepairKind::ReissueUpdate, silent, None));
            }
        }
        OpKind::Delete => {
            out.push(action(RepairKind::BroadcastDelete, cluster.to_vec(), Some(pending.version)));
        }
    }
    out
}

/// A cleanup request waiting for the responsible nodes' reference answers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct CleanupTrack {
    pub requester: Endpoint,
    pub request_token: u64,
    pub key: Vec<u8>,
    pub version: Version,
    pub asked: usize,
    pub replies: usize,
    pub referenced: bool,
}

/// An expiry delete handed to another node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Delegation {
    pub key: Vec<u8>,
    pub to: NodeId,
}

impl Node {
    /// Drops this node's target copy of `key` if no responsible node
    /// references it, then acknowledges to the requester.
    pub(crate) fn on_cleanup(&mut self, _now: SimTime, from: Endpoint, key: Vec<u8>, token: u64) {
        let responsible = self.responsible(&key);
        let held = self.state.target_store.get(&key).map(|i| i.version);
        let Some(version) = held.filter(|_| !responsible.contains(&self.id)) else {
            self.send_to(from, Message::CleanupAck { token });
            return;
        };
        self.next_token += 1;
        let local = self.next_token;
        for &r in &responsible {
            self.send(r, Message::RefQuery { key: key.clone(), token: local });
        }
        let track = CleanupTrack {
            requester: from,
            request_token: token,
            key,
            version,
            asked: responsible.len(),
            replies: 0,
            referenced: false,
        };
        self.cleanups.insert(local, track);
        self.set_timer(self.cfg.timeouts.cleanup, Timer::CleanupDeadline(local));
    }

    pub(crate) fn on_ref_reply(&mut self, _from: NodeId, token: u64, referenced: bool) {
        let Some(track) = self.cleanups.get_mut(&token) else { return };
        track.replies += 1;
        track.referenced |= referenced;
        if track.replies == track.asked {
            self.finish_cleanup(token);
        }
    }

    /// Decides a cleanup with the answers gathered so far. Without any
    /// answer the copy is kept.
    pub(crate) fn finish_cleanup(&mut self, token: u64) {
        let Some(track) = self.cleanups.remove(&token) else { return };
        if track.replies > 0 && !track.referenced {
            self.state.drop_target_exact(&track.key, track.version);
        }
        self.send_to(track.requester, Message::CleanupAck { token: track.request_token });
    }

    /// Hands a delete for every expired target item to a random other node.
    pub(crate) fn sweep_expired(&mut self, now: SimTime) {
        let n = self.cfg.nodes;
        if n < 2 {
            return;
        }
        let busy: BTreeSet<Vec<u8>> = self.delegations.values().map(|d| d.key.clone()).collect();
        let expired: Vec<Vec<u8>> = self
            .state
            .target_store
            .values()
            .filter(|i| i.expiry.is_some_and(|e| e <= now) && !busy.contains(&i.key))
            .map(|i| i.key.clone())
            .collect();
        for key in expired {
            let mut to = self.rng.random_range(0..n - 1);
            if to >= self.id.0 {
                to += 1;
            }
            let to = NodeId(to);
            self.next_token += 1;
            let req = ReqId(self.next_token);
            self.send(to, Message::Request { req, stmt: Statement::Delete { key: key.clone() }, after: self.last_ts });
            self.delegations.insert(req, Delegation { key, to });
            self.set_timer(self.cfg.timeouts.client, Timer::Delegation(req));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    /// A relay names a target that does not hold the item.
    Dangling,
    /// A target copy that some responsible node does not point to.
    Unreferenced,
    /// A node holds an item whose DHRs its capabilities do not satisfy.
    NonCompliant,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub node: NodeId,
    pub key: Vec<u8>,
    /// The missing target of a dangling relay, or the responsible node not
    /// pointing to an unreferenced copy.
    pub other: Option<NodeId>,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.kind {
            ViolationKind::Dangling => "dangling reference",
            ViolationKind::Unreferenced => "unreferenced copy",
            ViolationKind::NonCompliant => "non-compliant item",
        };
        write!(f, "{what} on {} for key {}", self.node, String::from_utf8_lossy(&self.key))?;
        if let Some(o) = self.other {
            write!(f, " ({o})")?;
        }
        Ok(())
    }
}

/// Dumps of every node plus what is needed to interpret them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub replication: usize,
    pub tokens: Vec<(u64, NodeId)>,
    pub registry: serde_json::Value,
    pub nodes: Vec<NodeSnapshot>,
}

impl ClusterSnapshot {
    pub fn scan(&self) -> Result<Vec<Violation>, ConfigError> {
        let ring = TokenRing::from_tokens(self.tokens.clone())?;
        let registry = DhrRegistry::from_value(self.registry.clone())?;
        Ok(global_scan(&self.nodes, &ring, self.replication, &registry))
    }
}

/// Checks referential integrity and compliance over live nodes. Crashed
/// nodes are skipped, and so are references to them.
pub fn global_scan(
    nodes: &[NodeSnapshot],
    ring: &TokenRing,
    replication: usize,
    registry: &DhrRegistry,
) -> Vec<Violation> {
    let live: BTreeMap<NodeId, &NodeSnapshot> = nodes.iter().filter(|s| s.alive).map(|s| (s.node, s)).collect();
    let holds = |n: NodeId, key: &[u8]| live.get(&n).map(|s| s.targets.iter().any(|i| i.key == key));
    let relay_of = |n: NodeId, key: &[u8]| live[&n].relays.iter().find(|r| r.key == key).map(|r| r.targets.clone());
    let mut out = Vec::new();

    for s in live.values() {
        for relay in &s.relays {
            for &t in &relay.targets {
                if holds(t, &relay.key) == Some(false) {
                    out.push(Violation { kind: ViolationKind::Dangling, node: s.node, key: relay.key.clone(), other: Some(t) });
                }
            }
        }
        for item in &s.targets {
            let responsible = ring.responsible_nodes(&item.key, replication).unwrap_or_default();
            let missing = responsible.iter().copied().filter(|r| live.contains_key(r)).find(|&r| {
                match relay_of(r, &item.key) {
                    Some(targets) => !targets.contains(&s.node),
                    None => r != s.node,
                }
            });
            if let Some(r) = missing {
                out.push(Violation { kind: ViolationKind::Unreferenced, node: s.node, key: item.key.clone(), other: Some(r) });
            }
        }
        for item in s.targets.iter().chain(s.data.iter().filter(|i| !i.dhr.is_empty())) {
            if !node_is_eligible(&s.caps, &item.dhr, registry) {
                out.push(Violation { kind: ViolationKind::NonCompliant, node: s.node, key: item.key.clone(), other: None });
            }
        }
    }
    out.sort();
    out
}

/// Digest of every live node's stores, versions included.
pub fn state_hash(nodes: &[NodeSnapshot]) -> String {
    let mut h = Sha256::new();
    for s in nodes.iter().filter(|s| s.alive) {
        h.update(bincode::serialize(s).expect("snapshots encode"));
    }
    hex::encode(h.finalize())
}

/// Digest of what clients can observe: per key the columns, DHRs and the
/// number of live copies. Versions are left out, so reissuing an already
/// applied write leaves it unchanged.
pub fn logical_hash(nodes: &[NodeSnapshot]) -> String {
    let mut view: BTreeMap<&[u8], (&Columns, &DhrRequest, usize)> = BTreeMap::new();
    for s in nodes.iter().filter(|s| s.alive) {
        for item in s.data.iter().chain(&s.targets) {
            let e = view.entry(&item.key).or_insert((&item.columns, &item.dhr, 0));
            e.2 += 1;
        }
    }
    let mut h = Sha256::new();
    h.update(bincode::serialize(&view).expect("views encode"));
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dhr::{NodeCapabilities, Property};
    use crate::node::{DataItem, RelayEntry};

    fn registry() -> DhrRegistry {
        DhrRegistry::from_json(r#"[{"id":"location","kind":"equality","domain":["DE","FR"]}]"#).unwrap()
    }

    fn de() -> DhrRequest {
        DhrRequest::new().with("location", [Property::label("DE")])
    }

    fn item(key: &[u8]) -> DataItem {
        DataItem {
            key: key.to_vec(),
            columns: [("c".to_string(), b"v".to_vec())].into(),
            version: Version { ts: 1, node: 0 },
            dhr: de(),
            expiry: None,
        }
    }

    /// Four nodes, every one in DE; the key's single responsible node is
    /// `r`, its copy lives on `t`.
    fn fixture() -> (Vec<NodeSnapshot>, TokenRing, Vec<u8>, NodeId, NodeId) {
        let ring = TokenRing::evenly_spaced(4, 1).unwrap();
        let key = b"k".to_vec();
        let r = ring.responsible_nodes(&key, 1).unwrap()[0];
        let t = NodeId((r.0 + 1) % 4);
        let nodes = (0..4)
            .map(|n| NodeSnapshot {
                node: NodeId(n),
                alive: true,
                caps: NodeCapabilities::new(NodeId(n)).with("location", [Property::label("DE")]),
                data: Vec::new(),
                relays: Vec::new(),
                targets: Vec::new(),
            })
            .collect();
        (nodes, ring, key, r, t)
    }

    fn relay(key: &[u8], t: NodeId) -> RelayEntry {
        RelayEntry { key: key.to_vec(), targets: vec![t], dhr: de(), version: Version { ts: 1, node: 0 } }
    }

    #[test]
    fn consistent_fixture_is_clean() {
        let (mut nodes, ring, key, r, t) = fixture();
        nodes[r.index()].relays.push(relay(&key, t));
        nodes[t.index()].targets.push(item(&key));
        assert!(global_scan(&nodes, &ring, 1, &registry()).is_empty());
    }

    #[test]
    fn dangling_reference_is_reported_once() {
        let (mut nodes, ring, key, r, t) = fixture();
        nodes[r.index()].relays.push(relay(&key, t));
        let v = global_scan(&nodes, &ring, 1, &registry());
        assert_eq!(v, vec![Violation { kind: ViolationKind::Dangling, node: r, key, other: Some(t) }]);
    }

    #[test]
    fn orphan_copy_is_reported_once() {
        let (mut nodes, ring, key, r, t) = fixture();
        nodes[t.index()].targets.push(item(&key));
        let v = global_scan(&nodes, &ring, 1, &registry());
        assert_eq!(v, vec![Violation { kind: ViolationKind::Unreferenced, node: t, key, other: Some(r) }]);
    }

    #[test]
    fn responsible_target_without_relay_is_referenced() {
        let (mut nodes, ring, key, r, _) = fixture();
        nodes[r.index()].targets.push(item(&key));
        assert!(global_scan(&nodes, &ring, 1, &registry()).is_empty());
    }

    #[test]
    fn dead_nodes_are_ignored() {
        let (mut nodes, ring, key, r, t) = fixture();
        nodes[r.index()].relays.push(relay(&key, t));
        nodes[t.index()].alive = false;
        assert!(global_scan(&nodes, &ring, 1, &registry()).is_empty());
    }

    #[test]
    fn ineligible_holder_is_non_compliant() {
        let (mut nodes, ring, key, r, t) = fixture();
        nodes[r.index()].relays.push(relay(&key, t));
        nodes[t.index()].targets.push(item(&key));
        nodes[t.index()].caps = NodeCapabilities::new(t).with("location", [Property::label("FR")]);
        let v = global_scan(&nodes, &ring, 1, &registry());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NonCompliant);
    }

    #[test]
    fn logical_hash_ignores_versions() {
        let (mut a, _, key, _, t) = fixture();
        a[t.index()].targets.push(item(&key));
        let mut b = a.clone();
        b[t.index()].targets[0].version = Version { ts: 9, node: 3 };
        assert_eq!(logical_hash(&a), logical_hash(&b));
        assert_ne!(state_hash(&a), state_hash(&b));
    }
}
