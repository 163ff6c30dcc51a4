//! Client side: submits statements to a coordinator and recovers when the
//! coordinator stops answering.
//!
//! On a timed-out create with DHRs or an update, the client asks every
//! eligible node to drop copies no responsible node references, then
//! reissues through another coordinator. A timed-out delete is finished by
//! broadcasting the delete to every node. Reads and plain creates are
//! simply reissued.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dhr::{eligible_nodes, CapabilityStore, DhrRegistry};
use crate::ids::{ClientId, Endpoint, NodeId, ReqId, SimTime, Version};
use crate::node::{Message, OpError, Output, Reply, Timeouts, Timer};
use crate::query::{OpKind, Statement};

/// What a client knows about the cluster.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    pub nodes: u32,
    pub registry: DhrRegistry,
    /// Capability store shipped to clients so they can work out eligible nodes.
    pub capabilities: CapabilityStore,
    pub timeouts: Timeouts,
}

/// Outcome of one submitted statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub client: ClientId,
    pub req: ReqId,
    pub kind: OpKind,
    pub key: Vec<u8>,
    pub dhr: bool,
    /// Coordinator of the final attempt.
    pub coordinator: NodeId,
    pub submitted: SimTime,
    pub completed: SimTime,
    pub attempts: u32,
    pub reply: Reply,
}

impl OpRecord {
    pub fn qct(&self) -> std::time::Duration {
        self.completed - self.submitted
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Waiting,
    CleaningUp { tokens: BTreeSet<u64> },
}

#[derive(Debug, Clone)]
struct InFlight {
    stmt: Statement,
    submitted: SimTime,
    attempt: u32,
    coordinator: NodeId,
    stage: Stage,
}

pub struct Client {
    pub id: ClientId,
    cfg: Arc<ClientConfig>,
    rng: ChaCha8Rng,
    next_req: u64,
    next_token: u64,
    /// Newest version timestamp seen in a response.
    clock: u64,
    inflight: BTreeMap<ReqId, InFlight>,
    records: Vec<OpRecord>,
    out: Vec<Output>,
}

impl Client {
    pub fn new(id: ClientId, cfg: Arc<ClientConfig>, seed: u64) -> Self {
        Client {
            id,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0xc1_1e47 ^ u64::from(id.0).rotate_left(32)),
            cfg,
            next_req: 0,
            next_token: 0,
            clock: 0,
            inflight: BTreeMap::new(),
            records: Vec::new(),
            out: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.inflight.is_empty()
    }

    pub fn records(&self) -> &[OpRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<OpRecord> {
        std::mem::take(&mut self.records)
    }

    /// Sends `stmt` to `coordinator`, or to a uniformly random node.
    pub fn submit(&mut self, now: SimTime, stmt: Statement, coordinator: Option<NodeId>) -> (ReqId, Vec<Output>) {
        self.next_req += 1;
        let req = ReqId(self.next_req);
        let coordinator = coordinator.unwrap_or_else(|| NodeId(self.rng.random_range(0..self.cfg.nodes)));
        let op = InFlight { stmt, submitted: now, attempt: 0, coordinator, stage: Stage::Waiting };
        self.inflight.insert(req, op);
        self.dispatch(req);
        (req, self.take())
    }

    fn take(&mut self) -> Vec<Output> {
        std::mem::take(&mut self.out)
    }

    fn send(&mut self, to: NodeId, msg: Message) {
        self.out.push(Output::Send { to: Endpoint::Node(to), msg });
    }

    fn dispatch(&mut self, req: ReqId) {
        let op = &self.inflight[&req];
        let (to, stmt, attempt) = (op.coordinator, op.stmt.clone(), op.attempt);
        let after = self.clock;
        self.send(to, Message::Request { req, stmt, after });
        self.out.push(Output::Timer { after: self.cfg.timeouts.client, timer: Timer::ClientDeadline(req, attempt) });
    }

    fn record(&mut self, now: SimTime, req: ReqId, reply: Reply) {
        let Some(op) = self.inflight.remove(&req) else { return };
        self.records.push(OpRecord {
            client: self.id,
            req,
            kind: op.stmt.kind(),
            key: op.stmt.key().to_vec(),
            dhr: op.stmt.dhr().is_some_and(|d| !d.is_empty()),
            coordinator: op.coordinator,
            submitted: op.submitted,
            completed: now,
            attempts: op.attempt + 1,
            reply,
        });
    }

    pub fn handle(&mut self, now: SimTime, _from: Endpoint, msg: Message) -> Vec<Output> {
        match msg {
            Message::Response { req, reply, ts } => {
                self.clock = self.clock.max(ts);
                if self.inflight.get(&req).is_some_and(|op| matches!(op.stage, Stage::Waiting)) {
                    self.record(now, req, reply);
                }
            }
            Message::CleanupAck { token } => {
                let done = self.inflight.iter_mut().find_map(|(req, op)| match &mut op.stage {
                    Stage::CleaningUp { tokens } => tokens.remove(&token).then_some((*req, tokens.is_empty())),
                    Stage::Waiting => None,
                });
                if let Some((req, true)) = done {
                    self.reissue(req);
                }
            }
            _ => {}
        }
        self.take()
    }

    pub fn on_timer(&mut self, now: SimTime, timer: Timer) -> Vec<Output> {
        match timer {
            Timer::ClientDeadline(req, attempt) => self.on_deadline(now, req, attempt),
            Timer::CleanupWait(req, attempt) => {
                let waiting = self
                    .inflight
                    .get(&req)
                    .is_some_and(|op| op.attempt == attempt && matches!(op.stage, Stage::CleaningUp { .. }));
                if waiting {
                    self.reissue(req);
                }
            }
            _ => {}
        }
        self.take()
    }

    fn on_deadline(&mut self, now: SimTime, req: ReqId, attempt: u32) {
        let Some(op) = self.inflight.get(&req) else { return };
        if op.attempt != attempt || !matches!(op.stage, Stage::Waiting) {
            return;
        }
        let stmt = op.stmt.clone();
        match stmt.kind() {
            OpKind::Delete => {
                self.clock = now.0.max(self.clock + 1);
                let version = Version { ts: self.clock, node: u32::MAX };
                for n in 0..self.cfg.nodes {
                    self.send(NodeId(n), Message::BroadcastDelete { key: stmt.key().to_vec(), version });
                }
                self.record(now, req, Reply::ok());
            }
            _ if attempt >= self.cfg.timeouts.retries => {
                self.record(now, req, Reply::Error(OpError::RetriesExhausted));
            }
            OpKind::Read => self.reissue(req),
            OpKind::Create if stmt.dhr().is_none() => self.reissue(req),
            OpKind::Create | OpKind::Update => {
                let scope: Vec<NodeId> = match stmt.dhr() {
                    Some(d) => eligible_nodes(&self.cfg.capabilities, d, &self.cfg.registry),
                    None => (0..self.cfg.nodes).map(NodeId).collect(),
                };
                let mut tokens = BTreeSet::new();
                for n in scope {
                    self.next_token += 1;
                    tokens.insert(self.next_token);
                    self.send(n, Message::Cleanup { key: stmt.key().to_vec(), token: self.next_token });
                }
                if tokens.is_empty() {
                    return self.reissue(req);
                }
                self.inflight.get_mut(&req).expect("present").stage = Stage::CleaningUp { tokens };
                let wait = self.cfg.timeouts.cleanup * 3;
                self.out.push(Output::Timer { after: wait, timer: Timer::CleanupWait(req, attempt) });
            }
        }
    }

    /// Retries through a coordinator other than the last one.
    fn reissue(&mut self, req: ReqId) {
        let n = self.cfg.nodes;
        let pick = if n > 1 { self.rng.random_range(0..n - 1) } else { 0 };
        let Some(op) = self.inflight.get_mut(&req) else { return };
        op.coordinator = NodeId(if n > 1 && pick >= op.coordinator.0 { pick + 1 } else { pick });
        op.attempt += 1;
        op.stage = Stage::Waiting;
        self.dispatch(req);
    }
}
