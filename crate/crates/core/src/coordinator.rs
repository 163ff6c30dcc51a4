//! Coordinator side of the four CRUD flows.
//!
//! Any node coordinates the statements clients send it. Every attempt gets
//! a fresh [`OpId`] and version, so acknowledgements of an abandoned attempt
//! never count towards a later one. Deadlines feed
//! [`recovery::on_ack_timeout`](crate::recovery::on_ack_timeout), whose
//! repair actions the coordinator then executes.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::balance::{rank_candidates, select_targets};
use crate::dhr::{eligible_nodes, DhrRequest};
use crate::ids::{Endpoint, NodeId, OpId, ReqId, SimTime, Version};
use crate::node::{DataItem, Message, Mode, Node, OpError, RelayEntry, Reply, Timer};
use crate::query::{OpKind, Statement};
use crate::recovery::{on_ack_timeout, RepairKind};

/// Progress of one attempt, by statement kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Create without DHRs: waiting for the responsible nodes.
    Write { awaited: BTreeSet<NodeId> },
    /// Create with DHRs: waiting for target and relay acknowledgements.
    Redirect { targets: Vec<NodeId>, targets_left: BTreeSet<NodeId>, relays_left: BTreeSet<NodeId> },
    /// Responsible nodes that reported no data.
    Read { empty: BTreeSet<NodeId> },
    Update {
        designated: NodeId,
        candidates: Vec<NodeId>,
        /// Learnt from the first target acknowledgement.
        targets: Option<Vec<NodeId>>,
        moved: bool,
        target_acks: BTreeSet<NodeId>,
        found: BTreeSet<NodeId>,
    },
    Delete { acked: BTreeSet<NodeId>, forwarded: BTreeSet<NodeId>, target_acks: BTreeSet<NodeId>, found: bool },
}

/// One in-flight statement at its coordinator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingOp {
    pub op: OpId,
    pub req: ReqId,
    pub client: Endpoint,
    pub stmt: Statement,
    pub attempt: u32,
    pub started: SimTime,
    pub deadline: SimTime,
    pub version: Version,
    pub responsible: Vec<NodeId>,
    /// Nodes that missed an acknowledgement in an earlier attempt.
    pub suspects: BTreeSet<NodeId>,
    /// Nodes that may hold state written by any attempt.
    pub touched: BTreeSet<NodeId>,
    pub degraded: bool,
    pub phase: Phase,
}

impl PendingOp {
    pub fn kind(&self) -> OpKind {
        self.stmt.kind()
    }

    pub fn key(&self) -> &[u8] {
        self.stmt.key()
    }

    /// Targets chosen for this attempt, when known.
    pub fn targets(&self) -> Vec<NodeId> {
        match &self.phase {
            Phase::Redirect { targets, .. } => targets.clone(),
            Phase::Update { targets: Some(t), .. } => t.clone(),
            _ => Vec::new(),
        }
    }

    /// Nodes whose acknowledgement is still outstanding.
    pub fn awaited(&self) -> BTreeSet<NodeId> {
        let resp: BTreeSet<NodeId> = self.responsible.iter().copied().collect();
        match &self.phase {
            Phase::Write { awaited } => awaited.clone(),
            Phase::Redirect { targets_left, relays_left, .. } => targets_left | relays_left,
            Phase::Read { empty } => &resp - empty,
            Phase::Update { targets, target_acks, found, .. } => {
                let mut out = &resp - found;
                if let Some(t) = targets {
                    out.extend(t.iter().filter(|n| !target_acks.contains(n)));
                }
                out
            }
            Phase::Delete { acked, forwarded, target_acks, .. } => {
                let mut out = &resp - acked;
                out.extend(forwarded - target_acks);
                out
            }
        }
    }
}

/// An update without DHRs and one with an empty requirement set mean the same.
fn normalize(stmt: Statement) -> Statement {
    match stmt {
        Statement::Update { key, columns, dhr: Some(d) } if d.is_empty() => Statement::Update { key, columns, dhr: None },
        s => s,
    }
}

impl Node {
    pub(crate) fn on_request(&mut self, now: SimTime, from: Endpoint, req: ReqId, stmt: Statement, after: u64) {
        let stmt = normalize(stmt);
        self.last_ts = self.last_ts.max(after);
        if let Some(dhr) = stmt.dhr() {
            let err = if self.cfg.mode == Mode::Baseline {
                Some(OpError::Unsupported)
            } else if self.cfg.registry.validate_request(dhr).is_err() {
                Some(OpError::Invalid)
            } else {
                None
            };
            if let Some(e) = err {
                self.send_to(from, Message::Response { req, reply: Reply::Error(e), ts: after });
                return;
            }
        }
        let responsible = self.responsible(stmt.key());
        let phase = Phase::Read { empty: BTreeSet::new() };
        let p = PendingOp {
            op: OpId { coordinator: self.id, seq: 0 },
            req,
            client: from,
            stmt,
            attempt: 0,
            started: now,
            deadline: now,
            version: Version::default(),
            responsible,
            suspects: BTreeSet::new(),
            touched: BTreeSet::new(),
            degraded: false,
            phase,
        };
        self.begin_attempt(now, p);
    }

    fn eligible(&self, dhr: &DhrRequest) -> Vec<NodeId> {
        eligible_nodes(&self.state.capability_replica, dhr, &self.cfg.registry)
    }

    /// Sends the messages of one attempt and arms its deadline.
    fn begin_attempt(&mut self, now: SimTime, mut p: PendingOp) {
        let op = self.next_op();
        p.op = op;
        p.version = self.fresh_version(now);
        p.deadline = now + self.cfg.timeouts.deadline(p.attempt);
        let version = p.version;
        let key = p.key().to_vec();
        let responsible = p.responsible.clone();
        p.touched.extend(responsible.iter().copied());

        match p.stmt.clone() {
            Statement::Insert { columns, dhr, .. } if dhr.is_empty() => {
                let item = DataItem { key, columns, version, dhr, expiry: None };
                for &n in &responsible {
                    self.send(n, Message::Write { op, item: item.clone() });
                }
                p.phase = Phase::Write { awaited: responsible.iter().copied().collect() };
            }
            Statement::Insert { columns, dhr, .. } => {
                let eligible = self.eligible(&dhr);
                if eligible.is_empty() {
                    return self.finish(p, Reply::Error(OpError::Unsatisfiable));
                }
                let live: Vec<NodeId> = eligible.into_iter().filter(|n| !p.suspects.contains(n)).collect();
                if live.is_empty() {
                    return self.finish(p, Reply::Error(OpError::RetriesExhausted));
                }
                let expiry = self.cfg.registry.lifetime(&dhr).map(|l| now + l);
                let item = DataItem { key: key.clone(), columns, version, dhr: dhr.clone(), expiry };
                let bytes = item.payload_bytes();
                let r = self.cfg.replication;
                let sel = select_targets(&live, &responsible, r, &mut self.state.load_view, bytes, now);
                p.degraded = sel.degraded;
                let targets = sel.targets;
                for &t in &targets {
                    let msg = Message::TargetWrite {
                        op,
                        item: item.clone(),
                        targets: targets.clone(),
                        notify: Vec::new(),
                        moved: false,
                    };
                    self.send(t, msg);
                }
                let relays: BTreeSet<NodeId> =
                    responsible.iter().copied().filter(|&n| targets.as_slice() != [n]).collect();
                let entry = RelayEntry { key, targets: targets.clone(), dhr, version };
                for &n in &relays {
                    self.send(n, Message::RelayWrite { op, entry: entry.clone() });
                }
                p.touched.extend(targets.iter().copied());
                p.phase = Phase::Redirect { targets_left: targets.iter().copied().collect(), targets, relays_left: relays };
            }
            Statement::Select { .. } => {
                for &n in &responsible {
                    self.send(n, Message::Read { op, key: key.clone() });
                }
                p.phase = Phase::Read { empty: BTreeSet::new() };
            }
            Statement::Update { columns, dhr, .. } => {
                let candidates = match &dhr {
                    Some(d) => {
                        let eligible = self.eligible(d);
                        if eligible.is_empty() {
                            return self.finish(p, Reply::Error(OpError::Unsatisfiable));
                        }
                        let live: Vec<NodeId> = eligible.into_iter().filter(|n| !p.suspects.contains(n)).collect();
                        if live.is_empty() {
                            return self.finish(p, Reply::Error(OpError::RetriesExhausted));
                        }
                        p.degraded = live.len() < self.cfg.replication;
                        rank_candidates(&live, &responsible, &self.state.load_view)
                    }
                    None => Vec::new(),
                };
                let designated = responsible[p.attempt as usize % responsible.len()];
                for &n in &responsible {
                    let msg = Message::Update {
                        op,
                        key: key.clone(),
                        columns: columns.clone(),
                        dhr: dhr.clone(),
                        candidates: candidates.clone(),
                        designated,
                        attempt: p.attempt,
                        version,
                    };
                    self.send(n, msg);
                }
                p.touched.extend(candidates.iter().copied());
                p.phase = Phase::Update {
                    designated,
                    candidates,
                    targets: None,
                    moved: false,
                    target_acks: BTreeSet::new(),
                    found: BTreeSet::new(),
                };
            }
            Statement::Delete { .. } => {
                for &n in &responsible {
                    self.send(n, Message::Delete { op, key: key.clone(), version });
                }
                p.phase = Phase::Delete {
                    acked: BTreeSet::new(),
                    forwarded: BTreeSet::new(),
                    target_acks: BTreeSet::new(),
                    found: false,
                };
            }
        }
        self.set_timer(self.cfg.timeouts.deadline(p.attempt), Timer::Deadline(op));
        self.pending.insert(op, p);
    }

    /// Answers the submitter. Updates that needed reissues also ask every
    /// node they may have touched to drop copies nobody references.
    fn finish(&mut self, p: PendingOp, reply: Reply) {
        if p.kind() == OpKind::Update && p.attempt > 0 {
            for &n in p.touched.iter().filter(|n| !p.responsible.contains(n)) {
                self.next_token += 1;
                let token = self.next_token;
                self.send(n, Message::Cleanup { key: p.key().to_vec(), token });
            }
        }
        self.send_to(p.client, Message::Response { req: p.req, reply, ts: p.version.ts });
    }

    fn complete(&mut self, op: OpId, reply: Reply) {
        if let Some(p) = self.pending.remove(&op) {
            self.finish(p, reply);
        }
    }

    pub(crate) fn coord_ack(&mut self, _now: SimTime, from: NodeId, ack: Message) {
        let Some(op) = ack.op() else { return };
        let Some(p) = self.pending.get_mut(&op) else { return };
        let degraded = p.degraded;
        let r = p.responsible.len();
        let outcome = match (&mut p.phase, ack) {
            (Phase::Write { awaited }, Message::WriteAck { .. }) => {
                awaited.remove(&from);
                awaited.is_empty().then(Reply::ok)
            }
            (Phase::Redirect { targets_left, relays_left, .. }, Message::RelayAck { .. }) => {
                relays_left.remove(&from);
                (targets_left.is_empty() && relays_left.is_empty()).then_some(Reply::Ok { item: None, degraded })
            }
            (Phase::Read { empty }, Message::ReadReply { item, .. }) => match item {
                Some(item) => Some(Reply::Ok { item: Some(item), degraded: false }),
                None => {
                    empty.insert(from);
                    (empty.len() == r).then_some(Reply::NotFound)
                }
            },
            (Phase::Update { designated, found, .. }, Message::UpdateAck { found: f, .. }) => {
                if f {
                    found.insert(from);
                    (found.len() == r).then_some(Reply::Ok { item: None, degraded })
                } else {
                    (from == *designated).then_some(Reply::NotFound)
                }
            }
            (Phase::Delete { acked, forwarded, target_acks, found }, msg) => {
                match msg {
                    Message::DeleteAck { found: f, forwarded: fw, .. } => {
                        acked.insert(from);
                        *found |= f;
                        forwarded.extend(fw);
                    }
                    Message::TargetDeleteAck { found: f, .. } => {
                        target_acks.insert(from);
                        *found |= f;
                    }
                    _ => return,
                }
                let done = acked.len() == r && forwarded.is_subset(target_acks);
                done.then(|| if *found { Reply::ok() } else { Reply::NotFound })
            }
            _ => None,
        };
        if let Some(reply) = outcome {
            self.complete(op, reply);
        }
    }

    pub(crate) fn coord_target_ack(
        &mut self,
        _now: SimTime,
        op: OpId,
        from: NodeId,
        acked_targets: Vec<NodeId>,
        was_moved: bool,
        _relay: bool,
    ) {
        let Some(p) = self.pending.get_mut(&op) else { return };
        let degraded = p.degraded;
        let outcome = match &mut p.phase {
            Phase::Redirect { targets_left, relays_left, .. } => {
                targets_left.remove(&from);
                (targets_left.is_empty() && relays_left.is_empty()).then_some(Reply::Ok { item: None, degraded })
            }
            Phase::Update { targets, moved, target_acks, .. } => {
                if targets.is_none() {
                    *targets = Some(acked_targets);
                    *moved = was_moved;
                }
                target_acks.insert(from);
                let t = targets.as_ref().expect("set above");
                (!*moved && t.iter().all(|n| target_acks.contains(n))).then_some(Reply::Ok { item: None, degraded })
            }
            _ => None,
        };
        if let Some(reply) = outcome {
            self.complete(op, reply);
        }
    }

    /// Runs the repair actions for an attempt whose deadline passed.
    pub(crate) fn on_deadline(&mut self, now: SimTime, op: OpId) {
        let Some(mut p) = self.pending.remove(&op) else { return };
        let cluster: Vec<NodeId> = (0..self.cfg.nodes).map(NodeId).collect();
        let actions = on_ack_timeout(&p, &cluster, self.cfg.timeouts.retries);
        let mut settled = false;
        for a in actions {
            match a.kind {
                RepairKind::RollbackCreate => {
                    let version = a.version.expect("rollback names a version");
                    for n in a.scope {
                        self.send(n, Message::Rollback { op, key: a.key.clone(), version });
                    }
                }
                RepairKind::BroadcastDelete => {
                    let version = a.version.expect("broadcast names a version");
                    for n in a.scope {
                        self.send(n, Message::BroadcastDelete { key: a.key.clone(), version });
                    }
                    let done = p.clone();
                    self.finish(done, Reply::ok());
                    settled = true;
                }
                RepairKind::ReissueCreate | RepairKind::ReissueRead | RepairKind::ReissueUpdate => {
                    p.suspects.extend(a.scope);
                    p.attempt += 1;
                    let next = p.clone();
                    self.begin_attempt(now, next);
                    settled = true;
                }
                RepairKind::ClientBroadcastCleanup | RepairKind::ExpiryDelete => {}
            }
        }
        if !settled {
            self.finish(p, Reply::Error(OpError::RetriesExhausted));
        }
    }
}
