//! Replica handlers of the plain store, used when the indirection layer is
//! switched off. Only the data store is consulted.

use crate::ids::{Endpoint, SimTime};
use crate::node::{Message, Node};

impl Node {
    /// Handles `msg` without relay or target stores. Returns false for
    /// messages the two modes share (client, coordinator and gossip traffic).
    pub(crate) fn handle_baseline(&mut self, now: SimTime, _from: Endpoint, msg: &Message) -> bool {
        match msg {
            Message::Write { op, item } => {
                let bytes = item.payload_bytes();
                if self.state.put_data(item.clone()).0 {
                    self.bump_self(bytes, now);
                }
                self.send(op.coordinator, Message::WriteAck { op: *op });
            }
            Message::Read { op, key } => {
                let item = self.state.data_store.get(key).cloned();
                self.send(op.coordinator, Message::ReadReply { op: *op, item });
            }
            Message::Update { op, key, columns, version, .. } => {
                let found = match self.state.data_store.get(key) {
                    Some(item) => {
                        if item.version < *version {
                            let next = item.merged(columns, *version, item.dhr.clone(), item.expiry);
                            self.state.put_data(next);
                        }
                        true
                    }
                    None => false,
                };
                self.send(op.coordinator, Message::UpdateAck { op: *op, found });
            }
            Message::Delete { op, key, version } => {
                let found = self.state.data_store.get(key).is_some_and(|i| i.version <= *version);
                if found {
                    self.state.delete_up_to(key, *version);
                }
                self.send(op.coordinator, Message::DeleteAck { op: *op, found, forwarded: Vec::new() });
            }
            Message::ForwardRead { .. }
            | Message::Move { .. }
            | Message::TargetWrite { .. }
            | Message::RelayWrite { .. }
            | Message::TargetDelete { .. }
            | Message::Drop { .. }
            | Message::Cleanup { .. }
            | Message::RefQuery { .. }
            | Message::Capability { .. } => {}
            _ => return false,
        }
        true
    }
}
