use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::balance::LoadView;
use crate::dhr::{CapabilityStore, NodeCapabilities};
use crate::ids::{NodeId, Version};
use crate::node::item::{DataItem, RelayEntry};

/// The three stores of a node plus its capability replica and load view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeState {
    pub node_id: NodeId,
    pub caps: NodeCapabilities,
    pub cap_seq: u64,
    pub data_store: BTreeMap<Vec<u8>, DataItem>,
    pub relay_store: BTreeMap<Vec<u8>, RelayEntry>,
    pub target_store: BTreeMap<Vec<u8>, DataItem>,
    pub capability_replica: CapabilityStore,
    pub load_view: LoadView,
    /// Highest delete version applied per key. Writes at or below it are
    /// stale and ignored.
    pub tombstones: BTreeMap<Vec<u8>, Version>,
    stored_bytes: u64,
}

/// Serializable dump of a node's stores for offline checking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub node: NodeId,
    pub alive: bool,
    pub caps: NodeCapabilities,
    pub data: Vec<DataItem>,
    pub relays: Vec<RelayEntry>,
    pub targets: Vec<DataItem>,
}

/// Nodes whose stale copies must be told to drop them.
pub type Displaced = Vec<NodeId>;

impl NodeState {
    pub fn new(caps: NodeCapabilities, nodes: usize) -> Self {
        NodeState {
            node_id: caps.node_id,
            caps,
            cap_seq: 0,
            data_store: BTreeMap::new(),
            relay_store: BTreeMap::new(),
            target_store: BTreeMap::new(),
            capability_replica: CapabilityStore::new(),
            load_view: LoadView::new(nodes),
            tombstones: BTreeMap::new(),
            stored_bytes: 0,
        }
    }

    /// Payload bytes held in the data and target stores.
    pub fn stored_bytes(&self) -> u64 {
        self.stored_bytes
    }

    pub fn snapshot(&self, alive: bool) -> NodeSnapshot {
        NodeSnapshot {
            node: self.node_id,
            alive,
            caps: self.caps.clone(),
            data: self.data_store.values().cloned().collect(),
            relays: self.relay_store.values().cloned().collect(),
            targets: self.target_store.values().cloned().collect(),
        }
    }

    fn buried(&self, key: &[u8], version: Version) -> bool {
        self.tombstones.get(key).is_some_and(|t| version <= *t)
    }

    fn bury(&mut self, key: &[u8], version: Version) {
        let t = self.tombstones.entry(key.to_vec()).or_insert(version);
        *t = (*t).max(version);
    }

    fn remove_data_if(&mut self, key: &[u8], pred: impl Fn(Version) -> bool) -> bool {
        match self.data_store.get(key) {
            Some(item) if pred(item.version) => {
                let item = self.data_store.remove(key).expect("present");
                self.stored_bytes -= item.payload_bytes();
                true
            }
            _ => false,
        }
    }

    fn remove_target_if(&mut self, key: &[u8], pred: impl Fn(Version) -> bool) -> bool {
        match self.target_store.get(key) {
            Some(item) if pred(item.version) => {
                let item = self.target_store.remove(key).expect("present");
                self.stored_bytes -= item.payload_bytes();
                true
            }
            _ => false,
        }
    }

    /// Removes an older relay and reports its targets other than `keep`.
    fn remove_relay_older(&mut self, key: &[u8], version: Version, keep: &[NodeId]) -> Displaced {
        match self.relay_store.get(key) {
            Some(old) if old.version < version => {
                let old = self.relay_store.remove(key).expect("present");
                old.targets.into_iter().filter(|t| *t != self.node_id && !keep.contains(t)).collect()
            }
            _ => Vec::new(),
        }
    }

    /// Stores an item on the standard path. Returns whether it was newer.
    pub fn put_data(&mut self, item: DataItem) -> (bool, Displaced) {
        if self.buried(&item.key, item.version)
            || self.data_store.get(&item.key).is_some_and(|cur| cur.version >= item.version)
        {
            return (false, Vec::new());
        }
        let displaced = self.remove_relay_older(&item.key, item.version, &[]);
        self.remove_target_if(&item.key, |v| v < item.version);
        self.remove_data_if(&item.key, |_| true);
        self.stored_bytes += item.payload_bytes();
        self.data_store.insert(item.key.clone(), item);
        (true, displaced)
    }

    /// Stores a redirected item. `sole_responsible` is set when this node
    /// is responsible for the key and the only target, so no relay is kept.
    pub fn put_target(&mut self, item: DataItem, sole_responsible: bool) -> (bool, Displaced) {
        if self.buried(&item.key, item.version)
            || self.target_store.get(&item.key).is_some_and(|cur| cur.version >= item.version)
        {
            return (false, Vec::new());
        }
        let displaced =
            if sole_responsible { self.remove_relay_older(&item.key, item.version, &[]) } else { Vec::new() };
        self.remove_data_if(&item.key, |v| v < item.version);
        self.remove_target_if(&item.key, |_| true);
        self.stored_bytes += item.payload_bytes();
        self.target_store.insert(item.key.clone(), item);
        (true, displaced)
    }

    /// Installs a relay entry, replacing older local state for the key.
    pub fn put_relay(&mut self, entry: RelayEntry) -> Displaced {
        if self.buried(&entry.key, entry.version)
            || self.relay_store.get(&entry.key).is_some_and(|cur| cur.version >= entry.version)
        {
            return Vec::new();
        }
        let displaced = self.remove_relay_older(&entry.key, entry.version, &entry.targets);
        self.remove_data_if(&entry.key, |v| v < entry.version);
        if !entry.targets.contains(&self.node_id) {
            self.remove_target_if(&entry.key, |v| v < entry.version);
        }
        self.relay_store.insert(entry.key.clone(), entry);
        displaced
    }

    /// Drops the relay for a key when this node became its sole holder.
    pub fn clear_relay_below(&mut self, key: &[u8], version: Version) -> Displaced {
        self.remove_relay_older(key, version, &[])
    }

    /// Removes everything for `key` at or below `version`. Returns the
    /// targets of a removed relay, and whether anything was found.
    pub fn delete_up_to(&mut self, key: &[u8], version: Version) -> (bool, Option<Vec<NodeId>>) {
        self.bury(key, version);
        let mut found = self.remove_data_if(key, |v| v <= version);
        found |= self.remove_target_if(key, |v| v <= version);
        let relay = match self.relay_store.get(key) {
            Some(r) if r.version <= version => self.relay_store.remove(key).map(|r| r.targets),
            _ => None,
        };
        (found || relay.is_some(), relay)
    }

    /// Removes only target copies, used by forwarded deletes.
    pub fn delete_target_up_to(&mut self, key: &[u8], version: Version) -> bool {
        self.bury(key, version);
        self.remove_target_if(key, |v| v <= version)
    }

    /// Removes exactly the state written at `version`.
    pub fn rollback(&mut self, key: &[u8], version: Version) -> bool {
        let mut hit = self.remove_data_if(key, |v| v == version);
        hit |= self.remove_target_if(key, |v| v == version);
        if self.relay_store.get(key).is_some_and(|r| r.version == version) {
            self.relay_store.remove(key);
            hit = true;
        }
        hit
    }

    pub fn drop_target_below(&mut self, key: &[u8], below: Version) -> bool {
        self.remove_target_if(key, |v| v < below)
    }

    /// Drops a target copy only if it still has `version`.
    pub fn drop_target_exact(&mut self, key: &[u8], version: Version) -> bool {
        self.remove_target_if(key, |v| v == version)
    }

    /// Local copy of a key's data, wherever it is held.
    pub fn local_item(&self, key: &[u8]) -> Option<&DataItem> {
        self.data_store.get(key).or_else(|| self.target_store.get(key))
    }
}
