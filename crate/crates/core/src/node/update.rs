//! Responsible-node and holder side of updates.
//!
//! The designated responsible node picks the new targets and tells every
//! current holder to apply the update. Holders that stay targets apply it
//! in place; one source holder ships the result to newly chosen targets.
//! Each responsible node switches its relay once every new target has
//! acknowledged, so a reference never points at a node lacking the data.

use std::collections::BTreeSet;

use crate::dhr::DhrRequest;
use crate::ids::{NodeId, OpId, SimTime, Version};
use crate::node::item::RelayEntry;
use crate::node::{Message, Node, Timer};
use crate::query::Columns;

#[derive(Debug, Clone, Default)]
pub(crate) struct UpdateTrack {
    pub seen: bool,
    pub acks: BTreeSet<NodeId>,
    pub installed: bool,
}

impl UpdateTrack {
    pub fn is_settled(&self) -> bool {
        self.installed
    }
}

impl Node {
    fn track(&mut self, op: OpId) -> &mut UpdateTrack {
        if !self.updates.contains_key(&op) {
            let after = self.cfg.timeouts.client;
            self.set_timer(after, Timer::UpdateExpire(op));
        }
        self.updates.entry(op).or_default()
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn on_update(
        &mut self,
        now: SimTime,
        op: OpId,
        key: Vec<u8>,
        columns: Columns,
        dhr: Option<DhrRequest>,
        candidates: Vec<NodeId>,
        designated: NodeId,
        attempt: u32,
        version: Version,
    ) {
        if self.updates.get(&op).is_some_and(|t| t.seen || t.installed) {
            return;
        }
        if let Some(item) = self.state.data_store.get(&key) {
            if dhr.is_none() {
                if item.version < version {
                    let next = item.merged(&columns, version, item.dhr.clone(), item.expiry);
                    self.state.put_data(next);
                }
                self.send(op.coordinator, Message::UpdateAck { op, found: true });
                return;
            }
        }
        let holders: Option<(Vec<NodeId>, DhrRequest)> = if let Some(relay) = self.state.relay_store.get(&key) {
            Some((relay.targets.clone(), relay.dhr.clone()))
        } else if let Some(item) = self.state.target_store.get(&key) {
            Some((vec![self.id], item.dhr.clone()))
        } else {
            self.state.data_store.get(&key).map(|item| (vec![self.id], item.dhr.clone()))
        };
        let Some((holders, current)) = holders else {
            self.send(op.coordinator, Message::UpdateAck { op, found: false });
            return;
        };
        self.track(op).seen = true;
        if designated != self.id {
            return;
        }

        let responsible = self.responsible(&key);
        let targets = match &dhr {
            None => holders.clone(),
            Some(_) => choose_targets(&candidates, &holders, &responsible, self.cfg.replication),
        };
        let new_dhr = dhr.unwrap_or(current);
        let moved = targets.iter().collect::<BTreeSet<_>>() != holders.iter().collect::<BTreeSet<_>>();
        let source = holders[attempt as usize % holders.len()];
        let bytes = self.state.local_item(&key).map_or(0, |i| i.payload_bytes());
        for t in targets.iter().filter(|t| !holders.contains(t)) {
            self.state.load_view.bump(*t, bytes, now);
        }
        for &h in &holders {
            let msg = Message::Move {
                op,
                key: key.clone(),
                columns: columns.clone(),
                dhr: new_dhr.clone(),
                version,
                targets: targets.clone(),
                holders: holders.clone(),
                source,
                moved,
                notify: responsible.clone(),
            };
            self.send(h, msg);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn on_move(
        &mut self,
        now: SimTime,
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
    ) {
        let Some(item) = self.state.local_item(&key) else { return };
        let expiry = self.cfg.registry.lifetime(&dhr).map(|l| SimTime(version.ts) + l);
        let next = if item.version < version { item.merged(&columns, version, dhr, expiry) } else { item.clone() };
        if source == self.id {
            for &t in targets.iter().filter(|t| !holders.contains(t)) {
                let msg =
                    Message::TargetWrite { op, item: next.clone(), targets: targets.clone(), notify: notify.clone(), moved };
                self.send(t, msg);
            }
        }
        if targets.contains(&self.id) {
            self.store_target(now, op, next, &targets, &notify, moved);
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn on_update_target_ack(
        &mut self,
        _now: SimTime,
        op: OpId,
        from: NodeId,
        key: &[u8],
        version: Version,
        targets: &[NodeId],
        dhr: &DhrRequest,
        moved: bool,
    ) {
        if !self.responsible(key).contains(&self.id) {
            return;
        }
        let track = self.track(op);
        if track.installed {
            return;
        }
        track.acks.insert(from);
        if !targets.iter().all(|t| track.acks.contains(t)) {
            return;
        }
        track.installed = true;
        let displaced = if targets == [self.id] {
            self.state.clear_relay_below(key, version)
        } else {
            let entry = RelayEntry { key: key.to_vec(), targets: targets.to_vec(), dhr: dhr.clone(), version };
            self.install_relay(entry)
        };
        self.drop_displaced(key, version, displaced);
        if moved {
            self.send(op.coordinator, Message::UpdateAck { op, found: true });
        }
    }
}

/// New targets for an update: eligible responsible nodes first, then
/// current holders that stay eligible, then the best-ranked candidates.
pub(crate) fn choose_targets(
    candidates: &[NodeId],
    holders: &[NodeId],
    responsible: &[NodeId],
    r: usize,
) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = Vec::with_capacity(r);
    let tiers = [
        candidates.iter().filter(|c| responsible.contains(c)).copied().collect::<Vec<_>>(),
        candidates.iter().filter(|c| holders.contains(c)).copied().collect(),
        candidates.to_vec(),
    ];
    for n in tiers.into_iter().flatten() {
        if out.len() == r {
            break;
        }
        if !out.contains(&n) {
            out.push(n);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_prefers_responsible_then_holders() {
        let n = |v: &[u32]| v.iter().map(|&x| NodeId(x)).collect::<Vec<_>>();
        assert_eq!(choose_targets(&n(&[4, 1, 2, 3]), &n(&[3]), &n(&[4]), 2), n(&[4, 3]));
        assert_eq!(choose_targets(&n(&[1, 2]), &n(&[7]), &n(&[0]), 1), n(&[1]));
        assert_eq!(choose_targets(&n(&[1]), &n(&[1, 2]), &n(&[]), 3), n(&[1]));
    }
}
