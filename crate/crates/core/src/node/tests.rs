use super::*;
use crate::dhr::{DhrRequest, Property};
use crate::ids::ClientId;

fn registry() -> DhrRegistry {
    DhrRegistry::from_json(r#"[{"id":"location","kind":"equality","domain":["DE","FR"]}]"#).unwrap()
}

fn config(nodes: u32, mode: Mode) -> Arc<NodeConfig> {
    Arc::new(NodeConfig {
        mode,
        replication: 1,
        nodes,
        registry: registry(),
        ring: TokenRing::evenly_spaced(nodes, 1).unwrap(),
        gossip: GossipConfig::default(),
        timeouts: Timeouts::default(),
        expiry_sweep: Duration::from_secs(1),
    })
}

fn node(id: u32, nodes: u32, loc: &str) -> Node {
    let caps = NodeCapabilities::new(NodeId(id)).with("location", [Property::label(loc)]);
    Node::new(caps, config(nodes, Mode::Prada), 7)
}

fn de() -> DhrRequest {
    DhrRequest::new().with("location", [Property::label("DE")])
}

fn item(key: &[u8], dhr: DhrRequest) -> DataItem {
    DataItem {
        key: key.to_vec(),
        columns: [("c".to_string(), b"value".to_vec())].into(),
        version: Version { ts: 1, node: 0 },
        dhr,
        expiry: None,
    }
}

fn sends(out: &[Output]) -> Vec<(Endpoint, &Message)> {
    out.iter()
        .filter_map(|o| match o {
            Output::Send { to, msg } => Some((*to, msg)),
            Output::Timer { .. } => None,
        })
        .collect()
}

const OP: OpId = OpId { coordinator: NodeId(3), seq: 1 };

#[test]
fn read_of_local_data_answers_directly() {
    let mut n = node(0, 4, "DE");
    n.state.put_data(item(b"k", DhrRequest::new()));
    let out = n.handle(SimTime::ZERO, Endpoint::Node(NodeId(3)), Message::Read { op: OP, key: b"k".to_vec() });
    let s = sends(&out);
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].0, Endpoint::Node(NodeId(3)));
    assert!(matches!(s[0].1, Message::ReadReply { item: Some(_), .. }));
}

#[test]
fn read_of_relayed_key_forwards_to_every_target() {
    let mut n = node(0, 4, "FR");
    let entry = RelayEntry { key: b"k".to_vec(), targets: vec![NodeId(1), NodeId(2)], dhr: de(), version: Version::default() };
    n.state.put_relay(entry);
    let out = n.handle(SimTime::ZERO, Endpoint::Node(NodeId(3)), Message::Read { op: OP, key: b"k".to_vec() });
    let s = sends(&out);
    assert_eq!(s.len(), 2);
    assert!(s.iter().all(|(_, m)| matches!(m, Message::ForwardRead { op, .. } if *op == OP)));
    let to: Vec<Endpoint> = s.iter().map(|(e, _)| *e).collect();
    assert_eq!(to, vec![Endpoint::Node(NodeId(1)), Endpoint::Node(NodeId(2))]);
}

#[test]
fn read_of_unknown_key_reports_nothing_found() {
    let mut n = node(0, 4, "DE");
    let out = n.handle(SimTime::ZERO, Endpoint::Node(NodeId(3)), Message::Read { op: OP, key: b"x".to_vec() });
    let s = sends(&out);
    assert_eq!(s.len(), 1);
    assert!(matches!(s[0].1, Message::ReadReply { item: None, .. }));
}

#[test]
fn target_without_the_item_stays_silent_on_forward() {
    let mut n = node(1, 4, "DE");
    let out = n.handle(SimTime::ZERO, Endpoint::Node(NodeId(0)), Message::ForwardRead { op: OP, key: b"k".to_vec() });
    assert!(sends(&out).is_empty());
}

#[test]
fn single_node_replica_holds_only_itself() {
    let mut n = node(0, 1, "DE");
    let out = n.start(SimTime::ZERO);
    assert!(sends(&out).is_empty());
    assert_eq!(n.state.capability_replica.len(), 1);
    assert!(n.state.capability_replica.contains(NodeId(0)));
}

#[test]
fn rejoin_with_new_capabilities_wins_by_sequence() {
    let mut a = node(0, 2, "DE");
    let mut b = node(1, 2, "DE");
    let first = a.start(SimTime::ZERO);
    let fr = NodeCapabilities::new(NodeId(0)).with("location", [Property::label("FR")]);
    let second = a.capability_bootstrap(fr.clone());
    // deliver out of order: the later announcement must survive
    for (_, msg) in sends(&second).into_iter().chain(sends(&first)) {
        b.handle(SimTime::ZERO, Endpoint::Node(NodeId(0)), msg.clone());
    }
    assert_eq!(b.state.capability_replica.get(NodeId(0)), Some(&fr));
    assert_eq!(a.state.capability_replica.get(NodeId(0)), Some(&fr));
}

#[test]
fn ineligible_target_write_is_refused() {
    let mut n = node(1, 4, "FR");
    let msg = Message::TargetWrite { op: OP, item: item(b"k", de()), targets: vec![NodeId(1)], notify: vec![], moved: false };
    let out = n.handle(SimTime::ZERO, Endpoint::Node(NodeId(3)), msg);
    assert!(sends(&out).is_empty());
    assert!(n.state.target_store.is_empty());
}

#[test]
fn eligible_target_write_is_stored_and_acked() {
    let mut n = node(1, 4, "DE");
    let msg = Message::TargetWrite { op: OP, item: item(b"k", de()), targets: vec![NodeId(1)], notify: vec![], moved: false };
    let out = n.handle(SimTime::ZERO, Endpoint::Node(NodeId(3)), msg);
    let s = sends(&out);
    assert_eq!(s.len(), 1);
    assert!(matches!(s[0].1, Message::TargetAck { relay: false, .. }));
    assert_eq!(n.state.stored_bytes(), 6);
}

#[test]
fn baseline_rejects_dhr_statements() {
    let caps = NodeCapabilities::new(NodeId(0));
    let mut n = Node::new(caps, config(2, Mode::Baseline), 1);
    let stmt = crate::query::Statement::Insert { key: b"k".to_vec(), columns: Columns::new(), dhr: de() };
    let out = n.handle(SimTime::ZERO, Endpoint::Client(ClientId(0)), Message::Request { req: ReqId(1), stmt, after: 0 });
    let s = sends(&out);
    assert_eq!(s.len(), 1);
    assert!(matches!(s[0].1, Message::Response { reply: Reply::Error(OpError::Unsupported), .. }));
}

use crate::query::Columns;
