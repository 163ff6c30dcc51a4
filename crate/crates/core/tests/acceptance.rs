//! Acceptance suite: one check per criterion, each printing a pass/fail line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use statrs::statistics::Statistics;

use prada::balance::load_balance_metric;
use prada::experiment::{
    fault_suite, fault_tolerance_reads, quiet_cluster_config, run_experiment, three_region_caps, three_region_registry,
    ExperimentName, ExperimentSpec,
};
use prada::node::{Mode, Reply};
use prada::query::Columns;
use prada::sim::cluster::{Cluster, ClusterConfig};
use prada::sim::workload::{generate, location, CrudMix, WorkloadKind, WorkloadParams};
use prada::sim::TopologyConfig;
use prada::{parse, render, ClientId, DhrRegistry, DhrRequest, NodeId, Property, SimTime, Statement};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn settle(c: &mut Cluster) {
    let limit = c.now() + Duration::from_secs(3600);
    assert!(c.run_until_quiescent(limit), "cluster did not settle");
}

fn exec(c: &mut Cluster, stmt: Statement, coordinator: NodeId) -> prada::client::OpRecord {
    let at = c.now();
    c.submit(at, ClientId(0), stmt, Some(coordinator));
    settle(c);
    c.records().last().cloned().expect("a record")
}

fn cols(per_column: usize) -> Columns {
    (0..10).map(|i| (format!("c{i}"), vec![b'v'; per_column])).collect()
}

/// A key whose responsible nodes all lie in US (nodes 6-9).
fn us_key(c: &Cluster, tag: &str) -> Vec<u8> {
    (0..)
        .map(|i| format!("{tag}-{i}").into_bytes())
        .find(|k| c.responsible(k).iter().all(|n| n.0 >= 6))
        .expect("some key hashes into US")
}

fn coexistence() -> Outcome {
    let params = WorkloadParams { ops: 10_000, rate: 200.0, start: SimTime::from_secs_f64(1.0) };
    let kind = WorkloadKind::UniformCrud { mix: CrudMix::default(), dhr_fraction: 0.0 };
    let workload = generate(kind, params, 11).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for mode in [Mode::Prada, Mode::Baseline] {
        let mut cfg = ClusterConfig::new(TopologyConfig::uniform(three_region_caps(), 100.0), three_region_registry(), 3);
        cfg.mode = mode;
        let mut c = Cluster::new(cfg, 5).map_err(|e| e.to_string())?;
        c.submit_all(&workload);
        settle(&mut c);
        // operation traffic only: requests, replies and coordinator messages
        let trace: Vec<_> = c
            .trace()
            .iter()
            .filter(|r| r.op.is_some() || r.req.is_some())
            .map(|r| (r.time, r.kind, r.msg, r.from, r.to, r.bytes))
            .collect();
        let stored: Vec<u64> = (0..10).map(|n| c.node(NodeId(n)).state.stored_bytes()).collect();
        let replies: Vec<_> = c.records().into_iter().map(|r| (r.req, r.qct(), r.reply)).collect();
        runs.push((trace, stored, replies));
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure(a.2.len() == 10_000, || format!("{} replies", a.2.len()))?;
    ensure(a.0.len() == b.0.len(), || format!("trace lengths {} vs {}", a.0.len(), b.0.len()))?;
    if let Some(i) = (0..a.0.len()).find(|&i| a.0[i] != b.0[i]) {
        return Err(format!("traces diverge at record {i}: {:?} vs {:?}", a.0[i], b.0[i]));
    }
    ensure(a.1 == b.1, || format!("stored bytes {:?} vs {:?}", a.1, b.1))?;
    ensure(a.2 == b.2, || "replies or completion times differ".into())?;
    Ok(format!("{} operation messages identical, {} bytes stored", a.0.len(), a.1.iter().sum::<u64>()))
}

fn read_indirection() -> Outcome {
    let mut c = Cluster::new(quiet_cluster_config(Mode::Prada, 1), 3).map_err(|e| e.to_string())?;
    settle(&mut c);
    let coordinator = NodeId(3); // FR: neither responsible (US) nor target (DE)
    let dhr_key = us_key(&c, "dhr");
    let plain_key = us_key(&c, "plain");
    let ins = Statement::Insert { key: dhr_key.clone(), columns: cols(20), dhr: location("DE") };
    ensure(exec(&mut c, ins, coordinator).reply == Reply::ok(), || "dhr insert failed".into())?;
    let ins = Statement::Insert { key: plain_key.clone(), columns: cols(20), dhr: DhrRequest::new() };
    ensure(exec(&mut c, ins, coordinator).reply == Reply::ok(), || "plain insert failed".into())?;
    let dhr = exec(&mut c, Statement::Select { key: dhr_key }, coordinator);
    let plain = exec(&mut c, Statement::Select { key: plain_key }, coordinator);
    ensure(matches!(dhr.reply, Reply::Ok { item: Some(_), .. }), || format!("dhr read {:?}", dhr.reply))?;
    ensure(matches!(plain.reply, Reply::Ok { item: Some(_), .. }), || format!("plain read {:?}", plain.reply))?;
    ensure(dhr.qct() == Duration::from_millis(150), || format!("dhr read took {:?}", dhr.qct()))?;
    ensure(plain.qct() == Duration::from_millis(100), || format!("plain read took {:?}", plain.qct()))?;
    Ok("DHR read 150 ms, plain read 100 ms".into())
}

fn fig6_balance() -> Outcome {
    let out = run_experiment(&ExperimentSpec::new(ExperimentName::Fig6, 10, 2024)).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for a in out.aggregate.iter().filter(|a| a.series == "prada" && a.metric == "balance") {
        ensure(a.n == 10, || format!("{} runs at rate {}", a.n, a.point))?;
        ensure(a.mean < 0.005, || format!("mean balance {} at rate {}", a.mean, a.point))?;
        worst = worst.max(a.mean);
    }
    Ok(format!("worst mean balance {worst:.2e} over 4 rates x 10 seeds"))
}

fn fig7_gap() -> Outcome {
    let out = run_experiment(&ExperimentSpec::new(ExperimentName::Fig7, 10, 2024)).map_err(|e| e.to_string())?;
    for r in out.runs.iter().filter(|r| r.metric == "gap") {
        ensure(r.value < 3e-4, || format!("gap {} at shift {} seed {}", r.value, r.point, r.seed))?;
    }
    let pick = |m: &str| -> Vec<(f64, f64, f64)> {
        out.aggregate.iter().filter(|a| a.series == "prada" && a.metric == m).map(|a| (a.point, a.mean, a.ci99)).collect()
    };
    let gaps = pick("gap");
    ensure(gaps.len() == 11, || format!("{} shift points", gaps.len()))?;
    let worst = gaps.iter().map(|g| g.1).fold(f64::MIN, f64::max);
    ensure(worst < 3e-4, || format!("mean gap {worst}"))?;
    let bal = pick("balance");
    for w in bal.windows(2) {
        let ((p0, m0, c0), (p1, m1, c1)) = (w[0], w[1]);
        ensure(m1 + c1 >= m0 - c0, || format!("balance falls from {m0} at {p0}% to {m1} at {p1}%"))?;
    }
    Ok(format!("worst mean gap {worst:.2e}, balance rises {:.4} -> {:.4}", bal[0].1, bal[10].1))
}

fn fault_tolerance() -> Outcome {
    let mut total = 0;
    for seed in [1, 2, 3] {
        for (crashed, reply) in fault_tolerance_reads(seed) {
            ensure(matches!(reply, Reply::Ok { item: Some(_), .. }), || format!("seed {seed} crashed {crashed:?}: {reply:?}"))?;
            total += 1;
        }
    }
    ensure(total == 27, || format!("{total} combinations"))?;
    Ok(format!("{total} reads with two responsible and two target nodes down"))
}

fn recovery() -> Outcome {
    let mut scenarios = 0;
    let mut exhausted = 0;
    for seed in [1, 2, 3] {
        for o in fault_suite(&[1, 3], seed) {
            scenarios += 1;
            exhausted += usize::from(matches!(o.reply, Some(Reply::Error(_))));
            ensure(o.passed(), || {
                format!("{} (seed {seed}): quiescent={} reply={:?} violations={:?}", o.scenario.label, o.quiescent, o.reply, o.violations)
            })?;
        }
    }
    Ok(format!("{scenarios} crash scenarios clean ({exhausted} ended in an error reply)"))
}

fn relay_overhead() -> Outcome {
    let mut per_r = Vec::new();
    for r in 1..=3 {
        let mut sizes = Vec::new();
        for per_column in [20, 40] {
            let mut traffic = Vec::new();
            let mut relay = 0;
            for (mode, dhr) in [(Mode::Baseline, DhrRequest::new()), (Mode::Prada, location("DE"))] {
                let mut c = Cluster::new(quiet_cluster_config(mode, r), 9).map_err(|e| e.to_string())?;
                settle(&mut c);
                let key = us_key(&c, "relay");
                let before = c.stats().bytes;
                let rec = exec(&mut c, Statement::Insert { key: key.clone(), columns: cols(per_column), dhr }, NodeId(9));
                ensure(rec.reply == Reply::ok(), || format!("insert {:?}", rec.reply))?;
                traffic.push(c.stats().bytes - before);
                let entries: Vec<u64> = c
                    .responsible(&key)
                    .iter()
                    .filter_map(|&n| c.node(n).state.relay_store.get(&key).map(|e| e.wire_size()))
                    .collect();
                relay = entries.iter().sum::<u64>();
                if mode == Mode::Prada {
                    ensure(entries.len() == r && entries.iter().all(|&e| e == entries[0]), || format!("relay entries {entries:?}"))?;
                    sizes.push((entries[0], traffic[1] - traffic[0]));
                }
            }
            ensure(relay > 0, || "no relay stored".into())?;
        }
        ensure(sizes[0] == sizes[1], || format!("r={r}: 200 B gives {:?}, 400 B gives {:?}", sizes[0], sizes[1]))?;
        per_r.push(sizes[0]);
    }
    let unit = per_r[0].1 as f64;
    for (i, &(_, overhead)) in per_r.iter().enumerate() {
        let per_replica = overhead as f64 / (i + 1) as f64;
        ensure((per_replica - unit).abs() / unit < 0.05, || format!("per-replica overhead {per_replica} vs {unit}"))?;
    }
    Ok(format!("entry bytes {:?}, traffic overhead {:?} for r = 1..3, equal for 200 and 400 B",
        per_r.iter().map(|p| p.0).collect::<Vec<_>>(), per_r.iter().map(|p| p.1).collect::<Vec<_>>()))
}

fn parser_registry() -> DhrRegistry {
    DhrRegistry::from_json(
        r#"[{"id":"location","kind":"equality","domain":["DE","FR","UK","US"]},
            {"id":"encryption","kind":"threshold","domain":[0,128,192,256],"aliases":{"AES-128":128,"AES-192":192,"AES-256":256}},
            {"id":"max-lifetime","kind":"threshold","domain":[60,3600],"expires":true}]"#,
    )
    .expect("registry")
}

fn dhr_strategy() -> impl Strategy<Value = DhrRequest> {
    let loc = proptest::sample::subsequence(vec!["DE", "FR", "UK", "US"], 1..=4);
    let enc = proptest::sample::subsequence(vec![0u64, 128, 192, 256], 1..=4);
    let life = proptest::sample::subsequence(vec![60u64, 3600], 1..=2);
    (proptest::option::of(loc), proptest::option::of(enc), proptest::option::of(life)).prop_map(|(l, e, t)| {
        let mut d = DhrRequest::new();
        if let Some(l) = l {
            d = d.with("location", l.into_iter().map(Property::label));
        }
        if let Some(e) = e {
            d = d.with("encryption", e.into_iter().map(Property::Level));
        }
        if let Some(t) = t {
            d = d.with("max-lifetime", t.into_iter().map(Property::Level));
        }
        d
    })
}

fn statement_strategy() -> impl Strategy<Value = Statement> {
    let key = proptest::collection::vec(any::<u8>(), 1..24);
    let columns = proptest::collection::btree_map("c[a-z0-9_]{0,8}", proptest::collection::vec(any::<u8>(), 0..24), 1..5);
    prop_oneof![
        (key.clone(), columns.clone(), dhr_strategy()).prop_map(|(key, columns, dhr)| Statement::Insert { key, columns, dhr }),
        key.clone().prop_map(|key| Statement::Select { key }),
        (key.clone(), columns, dhr_strategy())
            .prop_map(|(key, columns, dhr)| Statement::Update { key, columns, dhr: (!dhr.is_empty()).then_some(dhr) }),
        key.prop_map(|key| Statement::Delete { key }),
    ]
}

fn parser_fidelity() -> Outcome {
    let reg = parser_registry();
    let text = "INSERT INTO t (k, c1) VALUES ('x','v') WITH REQUIREMENTS location = { 'DE', 'FR', 'UK' } AND encryption = { 'AES-256' }";
    let stmt = parse(text, &reg).map_err(|e| e.to_string())?;
    let expected = DhrRequest::new()
        .with("location", ["DE".into(), "FR".into(), "UK".into()])
        .with("encryption", [256.into()]);
    ensure(stmt.dhr() == Some(&expected), || format!("parsed {:?}", stmt.dhr()))?;
    let mut runner = TestRunner::new(Config { cases: 10_000, failure_persistence: None, ..Config::default() });
    runner
        .run(&statement_strategy(), |s| {
            let back = parse(&render(&s), &reg).map_err(|e| TestCaseError::fail(format!("{e} in {}", render(&s))))?;
            prop_assert_eq!(back, s);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("example parses exactly; 10000 generated statements round-trip".into())
}

fn metric_correctness() -> Outcome {
    for n in [1, 2, 10, 100] {
        for v in [0.0, 1.0, 220.0, 1e9] {
            ensure(load_balance_metric(&vec![v; n]) == 0.0, || format!("equal loads {v} x {n}"))?;
        }
    }
    let vecs = proptest::collection::vec(0.0f64..1e6, 2..64).prop_filter("non-zero mean", |v| v.iter().any(|&x| x > 0.0));
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner
        .run(&(vecs, 1e-3f64..1e3), |(loads, c)| {
            let m = load_balance_metric(&loads);
            let scaled: Vec<f64> = loads.iter().map(|x| x * c).collect();
            let ms = load_balance_metric(&scaled);
            prop_assert!((ms - m).abs() <= 1e-12 * m.max(f64::MIN_POSITIVE), "scale {c}: {m} vs {ms}");
            let direct = loads.iter().population_std_dev() / loads.iter().mean();
            prop_assert!((direct - m).abs() <= 1e-12 * m.max(1e-300), "direct {direct} vs {m}");
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("zero on equal loads; scale invariance and direct evaluation agree on 1000 vectors".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("coexistence with the plain store", coexistence),
        ("read indirection costs half an RTT", read_indirection),
        ("load balance under throughput", fig6_balance),
        ("gap to the optimum under demand shift", fig7_gap),
        ("reads survive r-1 failures", fault_tolerance),
        ("recovery leaves a consistent cluster", recovery),
        ("constant relay overhead per replica", relay_overhead),
        ("parser fidelity", parser_fidelity),
        ("load metric correctness", metric_correctness),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("{id} FAIL {name}: {why} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
