use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use prada::experiment::{aggregate, read_runs, write_csv, RunRow};
use prada::node::Reply;
use prada::recovery::{logical_hash, state_hash, RepairAction, RepairKind};
use prada::sim::topology::AZURE10_REGIONS;
use prada::sim::workload::{generate, location, location_registry, CrudMix, WorkloadKind, WorkloadParams};
use prada::sim::{Arrival, Cluster, ClusterConfig, TopologyConfig, TraceKind};
use prada::stats::Summary;
use prada::{ClientId, DhrRegistry, DhrRequest, Endpoint, NodeCapabilities, NodeId, Property, SimTime, Statement, Version};

fn azure_cluster(r: usize, seed: u64) -> Cluster {
    let caps = AZURE10_REGIONS
        .iter()
        .enumerate()
        .map(|(i, reg)| NodeCapabilities::new(NodeId(i as u32)).with("location", [Property::label(*reg)]))
        .collect();
    let cfg = ClusterConfig::new(TopologyConfig::azure10(caps).unwrap(), location_registry(&AZURE10_REGIONS), r);
    Cluster::new(cfg, seed).unwrap()
}

fn crud(ops: u64, seed: u64) -> Vec<Arrival> {
    let kind = WorkloadKind::UniformCrud { mix: CrudMix::default(), dhr_fraction: 0.5 };
    generate(kind, WorkloadParams { ops, rate: 50.0, start: SimTime::from_secs_f64(1.0) }, seed).unwrap()
}

fn settle(c: &mut Cluster) {
    let limit = c.now() + Duration::from_secs(24 * 3600);
    assert!(c.run_until_quiescent(limit), "cluster did not settle");
}

fn loaded(r: usize, ops: u64, seed: u64) -> Cluster {
    let mut c = azure_cluster(r, seed);
    c.submit_all(&crud(ops, seed));
    settle(&mut c);
    c
}

#[test]
fn same_seed_same_run() {
    let a = loaded(3, 400, 7);
    let b = loaded(3, 400, 7);
    assert_eq!(a.trace(), b.trace());
    assert_eq!(state_hash(&a.snapshot().nodes), state_hash(&b.snapshot().nodes));
    assert_eq!(a.records(), b.records());
}

#[test]
fn deliveries_respect_link_delay() {
    let c = loaded(2, 300, 3);
    let topo = &c.config().topology;
    let mut links: BTreeMap<(Endpoint, Endpoint), (Vec<SimTime>, Vec<SimTime>)> = BTreeMap::new();
    for t in c.trace() {
        let e = links.entry((t.from, t.to)).or_default();
        match t.kind {
            TraceKind::Send => e.0.push(t.time),
            TraceKind::Deliver => e.1.push(t.time),
            TraceKind::Drop => {}
        }
    }
    assert!(!links.is_empty());
    for ((from, to), (sent, delivered)) in links {
        let delay = match (from, to) {
            (Endpoint::Node(a), Endpoint::Node(b)) => topo.one_way(a, b),
            _ => Duration::ZERO,
        };
        assert!(delivered.len() <= sent.len());
        // the k-th delivery cannot precede the k-th send plus the delay
        for (k, d) in delivered.iter().enumerate() {
            assert!(*d >= sent[k] + delay, "{from:?}->{to:?} delivery {k} at {d:?} before {:?}", sent[k] + delay);
        }
    }
}

#[test]
fn messages_are_conserved() {
    let c = loaded(3, 300, 5);
    let s = c.stats();
    assert_eq!(s.sent, s.delivered + s.dropped);
    let count = |k| c.trace().iter().filter(|t| t.kind == k).count() as u64;
    assert_eq!((count(TraceKind::Send), count(TraceKind::Deliver)), (s.sent, s.delivered));
    assert_eq!(c.in_flight(), 0);
}

#[test]
fn fault_free_runs_stay_consistent() {
    for (r, seed) in (1..=3).flat_map(|r| (0..40).map(move |s| (r, s))) {
        let c = loaded(r, 500, seed);
        assert_eq!(c.scan(), vec![], "r={r} seed={seed}");
        let snap = c.snapshot();
        let plain: BTreeSet<&[u8]> = snap.nodes.iter().flat_map(|s| s.data.iter().map(|i| &i.key[..])).collect();
        for s in &snap.nodes {
            for item in &s.targets {
                assert!(!item.dhr.is_empty(), "unconstrained item in a target store");
                assert!(!plain.contains(&item.key[..]), "key held both plain and as target");
                assert!(c.eligible(&item.dhr).contains(&s.node));
            }
            for relay in &s.relays {
                let eligible = c.eligible(&relay.dhr);
                assert_eq!(relay.targets.len(), r.min(eligible.len()));
                assert!(relay.targets.iter().all(|t| eligible.contains(t)));
            }
        }
    }
}

#[test]
fn every_request_gets_one_reply() {
    let ops = 400;
    let c = loaded(3, ops, 9);
    let recs = c.records();
    assert_eq!(recs.len() as u64, ops);
    let reqs: BTreeSet<_> = recs.iter().map(|r| r.req).collect();
    assert_eq!(reqs.len() as u64, ops);
    assert!(recs.iter().all(|r| r.attempts == 1));
}

#[test]
fn repairs_are_idempotent() {
    let mut c = loaded(3, 300, 4);
    let nodes: Vec<NodeId> = (0..10).map(NodeId).collect();
    let before = state_hash(&c.snapshot().nodes);
    let snap = c.snapshot();
    let live = |key: &[u8]| snap.nodes.iter().any(|s| s.data.iter().chain(&s.targets).any(|i| i.key == key));
    let rec = c.records().into_iter().find(|r| r.kind.as_str() == "create" && live(&r.key)).unwrap();
    // a rollback below every stored version changes nothing
    c.apply_repair(&RepairAction {
        kind: RepairKind::RollbackCreate,
        key: rec.key.clone(),
        scope: nodes.clone(),
        version: Some(Version { ts: 0, node: 0 }),
        stmt: None,
    });
    settle(&mut c);
    assert_eq!(state_hash(&c.snapshot().nodes), before);

    // reissuing a write that already applied leaves the visible state alone
    let logical = logical_hash(&c.snapshot().nodes);
    let columns = [("c0".to_string(), b"again".to_vec())].into();
    let stmt = Statement::Update { key: rec.key.clone(), columns, dhr: None };
    let at = c.now();
    c.submit(at, ClientId(0), stmt.clone(), None);
    settle(&mut c);
    assert_eq!(c.records().last().unwrap().reply, Reply::ok());
    let applied = logical_hash(&c.snapshot().nodes);
    assert_ne!(applied, logical);
    c.apply_repair(&RepairAction { kind: RepairKind::ReissueUpdate, key: rec.key, scope: vec![], version: None, stmt: Some(stmt) });
    settle(&mut c);
    assert_eq!(logical_hash(&c.snapshot().nodes), applied);
    assert_eq!(c.scan(), vec![]);
}

#[test]
fn expired_items_disappear() {
    let registry = DhrRegistry::from_json(
        r#"[{"id":"location","kind":"equality","domain":["DE","US"]},
            {"id":"max-lifetime","kind":"threshold","domain":[60,3600,86400],"expires":true}]"#,
    )
    .unwrap();
    let caps = (0..6)
        .map(|i| {
            NodeCapabilities::new(NodeId(i))
                .with("location", [Property::label(if i < 3 { "DE" } else { "US" })])
                .with("max-lifetime", [Property::Level(86400)])
        })
        .collect();
    let cfg = ClusterConfig::new(TopologyConfig::uniform(caps, 20.0), registry, 2);
    let mut c = Cluster::new(cfg, 1).unwrap();
    let dhr = DhrRequest::new().with("max-lifetime", [Property::Level(60)]);
    let columns = [("c1".to_string(), b"v".to_vec())].into();
    c.submit(SimTime::from_secs_f64(1.0), ClientId(0), Statement::Insert { key: b"short".to_vec(), columns, dhr }, None);
    c.run_until(SimTime::from_secs_f64(30.0));
    let held = |c: &Cluster| c.snapshot().nodes.iter().filter(|s| s.targets.iter().any(|i| i.key == b"short")).count();
    assert_eq!(held(&c), 2);
    c.run_until(SimTime::from_secs_f64(120.0));
    assert_eq!(held(&c), 0);
    assert!(c.snapshot().nodes.iter().all(|s| s.relays.is_empty()));
    assert_eq!(c.scan(), vec![]);
}

#[test]
fn capabilities_spread_without_preload() {
    let caps: Vec<NodeCapabilities> = (0..8)
        .map(|i| NodeCapabilities::new(NodeId(i)).with("location", [Property::label(if i % 2 == 0 { "DE" } else { "US" })]))
        .collect();
    let mut cfg = ClusterConfig::new(TopologyConfig::uniform(caps.clone(), 50.0), location_registry(&["DE", "US"]), 1);
    cfg.preload_capabilities = false;
    let mut c = Cluster::new(cfg, 2).unwrap();
    c.run_until(SimTime::from_secs_f64(30.0));
    for (node, records) in c.capability_replicas() {
        let known: Vec<NodeCapabilities> = records.into_iter().map(|r| r.caps).collect();
        assert_eq!(known, caps, "replica on {node:?}");
    }
    assert_eq!(c.eligible(&location("US")), vec![NodeId(1), NodeId(3), NodeId(5), NodeId(7)]);
}

#[test]
fn load_reports_converge() {
    let mut c = loaded(2, 300, 6);
    let refresh = c.config().gossip.load_refresh;
    let until = c.now() + refresh * 3;
    c.run_until(until);
    let stored: Vec<u64> = (0..10).map(|n| c.node(NodeId(n)).state.stored_bytes()).collect();
    assert!(stored.iter().sum::<u64>() > 0);
    for viewer in 0..10 {
        let view = &c.node(NodeId(viewer)).state.load_view;
        for n in 0..10 {
            assert_eq!(view.reported(NodeId(n)).map(|r| r.load), Some(stored[n as usize]), "view of n{viewer} on n{n}");
            assert_eq!(view.effective_load(NodeId(n)), stored[n as usize]);
        }
    }
}

#[test]
fn aggregate_is_recomputable_from_csv() {
    let rows: Vec<RunRow> = (0..3)
        .flat_map(|p| {
            (0..7u32).map(move |rep| RunRow {
                experiment: "demo".into(),
                series: "s".into(),
                point: p as f64 * 0.1,
                repeat: rep,
                seed: 100 + rep as u64,
                metric: "m".into(),
                value: (p as f64 + 1.0) / 3.0 + rep as f64 * 1e-3,
            })
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("demo_runs.csv");
    write_csv(&path, &rows).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, "experiment,series,point,repeat,seed,metric,value");
    let back = read_runs(&path).unwrap();
    let agg = aggregate(&back);
    assert_eq!(agg.len(), 3);
    for (p, a) in agg.iter().enumerate() {
        let vals: Vec<f64> = rows.iter().filter(|r| r.point == a.point).map(|r| r.value).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert_eq!(a.n, 7);
        assert!((a.mean - mean).abs() < 1e-12, "point {p}");
        assert!((a.ci99 - Summary::of(&vals).ci99).abs() < 1e-12);
    }
}
