use serde::{Deserialize, Serialize};

use crate::dhr::DhrRequest;
use crate::ids::{NodeId, SimTime, Version};
use crate::query::Columns;

/// A stored row.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataItem {
    pub key: Vec<u8>,
    pub columns: Columns,
    pub version: Version,
    pub dhr: DhrRequest,
    pub expiry: Option<SimTime>,
}

impl DataItem {
    /// Bytes counted towards a node's load: key plus column values.
    pub fn payload_bytes(&self) -> u64 {
        (self.key.len() + self.columns.values().map(Vec::len).sum::<usize>()) as u64
    }

    /// Applies a (possibly partial) column update.
    pub fn merged(&self, columns: &Columns, version: Version, dhr: DhrRequest, expiry: Option<SimTime>) -> DataItem {
        let mut next = self.clone();
        next.columns.extend(columns.iter().map(|(k, v)| (k.clone(), v.clone())));
        next.version = version;
        next.dhr = dhr;
        next.expiry = expiry;
        next
    }
}

/// Indirection record held by a responsible node: where a key's data lives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelayEntry {
    pub key: Vec<u8>,
    pub targets: Vec<NodeId>,
    pub dhr: DhrRequest,
    pub version: Version,
}

impl RelayEntry {
    /// Encoded size of the entry as it travels and is stored.
    pub fn wire_size(&self) -> u64 {
        bincode::serialized_size(self).expect("relay entries encode")
    }
}
