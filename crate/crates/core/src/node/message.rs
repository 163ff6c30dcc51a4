use serde::{Deserialize, Serialize};

use crate::balance::LoadReport;
use crate::dhr::{CapabilityRecord, DhrRequest};
use crate::ids::{NodeId, OpId, ReqId, Version};
use crate::node::item::{DataItem, RelayEntry};
use crate::query::{Columns, Statement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpError {
    /// No live node satisfies the requested DHRs.
    Unsatisfiable,
    RetriesExhausted,
    /// The node runs without the indirection layer.
    Unsupported,
    /// The statement names DHR types or properties the registry lacks.
    Invalid,
}

impl OpError {
    pub fn as_str(self) -> &'static str {
        match self {
            OpError::Unsatisfiable => "unsatisfiable",
            OpError::RetriesExhausted => "retries-exhausted",
            OpError::Unsupported => "unsupported",
            OpError::Invalid => "invalid",
        }
    }
}

/// What a coordinator answers to a submitted statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reply {
    Ok { item: Option<DataItem>, degraded: bool },
    NotFound,
    Error(OpError),
}

impl Reply {
    pub fn ok() -> Reply {
        Reply::Ok { item: None, degraded: false }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Reply::Ok { .. } => "ok",
            Reply::NotFound => "not-found",
            Reply::Error(e) => e.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Message {
    /// `after` is the newest version timestamp the client has seen; the
    /// coordinator stamps the operation above it.
    Request { req: ReqId, stmt: Statement, after: u64 },
    /// `ts` is the timestamp of the version the operation used.
    Response { req: ReqId, reply: Reply, ts: u64 },

    Write { op: OpId, item: DataItem },
    WriteAck { op: OpId },

    Read { op: OpId, key: Vec<u8> },
    ForwardRead { op: OpId, key: Vec<u8> },
    ReadReply { op: OpId, item: Option<DataItem> },

    Update {
        op: OpId,
        key: Vec<u8>,
        columns: Columns,
        dhr: Option<DhrRequest>,
        candidates: Vec<NodeId>,
        designated: NodeId,
        attempt: u32,
        version: Version,
    },
    UpdateAck { op: OpId, found: bool },
    /// Tells a current holder to apply an update and hand the result to
    /// the new targets.
    Move {
        op: OpId,
        key: Vec<u8>,
        columns: Columns,
        dhr: DhrRequest,
        version: Version,
        targets: Vec<NodeId>,
        holders: Vec<NodeId>,
        source: NodeId,
        moved: bool,
        notify: Vec<NodeId>,
    },

    TargetWrite { op: OpId, item: DataItem, targets: Vec<NodeId>, notify: Vec<NodeId>, moved: bool },
    TargetAck { op: OpId, key: Vec<u8>, version: Version, targets: Vec<NodeId>, dhr: DhrRequest, moved: bool, relay: bool },
    RelayWrite { op: OpId, entry: RelayEntry },
    RelayAck { op: OpId },

    Delete { op: OpId, key: Vec<u8>, version: Version },
    DeleteAck { op: OpId, found: bool, forwarded: Vec<NodeId> },
    TargetDelete { op: OpId, key: Vec<u8>, version: Version },
    TargetDeleteAck { op: OpId, found: bool },

    /// Removes a displaced target copy older than `below`.
    Drop { key: Vec<u8>, below: Version },
    /// Undoes exactly the writes of one create attempt.
    Rollback { op: OpId, key: Vec<u8>, version: Version },
    BroadcastDelete { key: Vec<u8>, version: Version },
    Cleanup { key: Vec<u8>, token: u64 },
    CleanupAck { token: u64 },
    RefQuery { key: Vec<u8>, token: u64 },
    RefReply { token: u64, referenced: bool },

    Capability { record: CapabilityRecord },
    GossipSyn { reports: Vec<(NodeId, LoadReport)> },
    GossipAck { reports: Vec<(NodeId, LoadReport)> },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Request { .. } => "Request",
            Message::Response { .. } => "Response",
            Message::Write { .. } => "Write",
            Message::WriteAck { .. } => "WriteAck",
            Message::Read { .. } => "Read",
            Message::ForwardRead { .. } => "ForwardRead",
            Message::ReadReply { .. } => "ReadReply",
            Message::Update { .. } => "Update",
            Message::UpdateAck { .. } => "UpdateAck",
            Message::Move { .. } => "Move",
            Message::TargetWrite { .. } => "TargetWrite",
            Message::TargetAck { .. } => "TargetAck",
            Message::RelayWrite { .. } => "RelayWrite",
            Message::RelayAck { .. } => "RelayAck",
            Message::Delete { .. } => "Delete",
            Message::DeleteAck { .. } => "DeleteAck",
            Message::TargetDelete { .. } => "TargetDelete",
            Message::TargetDeleteAck { .. } => "TargetDeleteAck",
            Message::Drop { .. } => "Drop",
            Message::Rollback { .. } => "Rollback",
            Message::BroadcastDelete { .. } => "BroadcastDelete",
            Message::Cleanup { .. } => "Cleanup",
            Message::CleanupAck { .. } => "CleanupAck",
            Message::RefQuery { .. } => "RefQuery",
            Message::RefReply { .. } => "RefReply",
            Message::Capability { .. } => "Capability",
            Message::GossipSyn { .. } => "GossipSyn",
            Message::GossipAck { .. } => "GossipAck",
        }
    }

    /// The coordinator operation this message belongs to, if any.
    pub fn op(&self) -> Option<OpId> {
        match self {
            Message::Write { op, .. }
            | Message::WriteAck { op }
            | Message::Read { op, .. }
            | Message::ForwardRead { op, .. }
            | Message::ReadReply { op, .. }
            | Message::Update { op, .. }
            | Message::UpdateAck { op, .. }
            | Message::Move { op, .. }
            | Message::TargetWrite { op, .. }
            | Message::TargetAck { op, .. }
            | Message::RelayWrite { op, .. }
            | Message::RelayAck { op }
            | Message::Delete { op, .. }
            | Message::DeleteAck { op, .. }
            | Message::TargetDelete { op, .. }
            | Message::TargetDeleteAck { op, .. }
            | Message::Rollback { op, .. } => Some(*op),
            _ => None,
        }
    }

    pub fn wire_size(&self) -> u64 {
        bincode::serialized_size(self).expect("messages encode")
    }
}
