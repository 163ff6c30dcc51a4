//! Built-in experiments: load balance under throughput and demand shift,
//! per-operation hop and latency counts, and the crash-recovery suite.
//!
//! Every run produces rows in one long-format schema so per-run and
//! aggregate CSVs share columns across experiments.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dhr::{DhrRegistry, DhrRequest, NodeCapabilities, Property};
use crate::ids::{ClientId, NodeId, SimTime};
use crate::node::{GossipConfig, Mode, Reply};
use crate::query::{Columns, OpKind, Statement};
use crate::recovery::Violation;
use crate::sim::cluster::{Cluster, ClusterConfig, TraceKind};
use crate::sim::fault::{FaultAction, FaultPlan, FaultRule, Trigger};
use crate::sim::oracle::{fractional_optimum, optimal_balance};
use crate::sim::placement::{run_placement, CoordinatorPolicy, DemandClass, PlacementConfig};
use crate::sim::topology::TopologyConfig;
use crate::sim::workload::{self, FIG7_REGIONS, VALUE_BYTES, KEY_BYTES};
use crate::stats::Summary;
use crate::ids::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    Fig6,
    Fig7,
    Hopcount,
    Faults,
}

impl ExperimentName {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Fig6 => "fig6",
            ExperimentName::Fig7 => "fig7",
            ExperimentName::Hopcount => "hopcount",
            ExperimentName::Faults => "faults",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub repeats: u32,
    pub master_seed: u64,
    /// Explicit per-repeat seeds; derived from `master_seed` when absent.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Sweep values replacing the built-in ones.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    /// Inserts per run for the load-balance experiments.
    #[serde(default)]
    pub inserts: Option<u64>,
    #[serde(default)]
    pub full_scale: bool,
}

impl ExperimentSpec {
    pub fn new(name: ExperimentName, repeats: u32, master_seed: u64) -> Self {
        ExperimentSpec { name, repeats, master_seed, seeds: None, sweep: None, inserts: None, full_scale: false }
    }

    pub fn seeds(&self) -> Result<Vec<u64>, ExperimentError> {
        if self.repeats == 0 {
            return Err(ExperimentError::Spec("repeats must be at least 1".into()));
        }
        match &self.seeds {
            Some(s) if s.len() < self.repeats as usize => {
                Err(ExperimentError::Spec(format!("{} seeds for {} repeats", s.len(), self.repeats)))
            }
            Some(s) => Ok(s[..self.repeats as usize].to_vec()),
            None => Ok(derive_seeds(self.master_seed, self.repeats as usize)),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment spec: {0}")]
    Spec(String),
    #[error("run {run}: {message}")]
    Run { run: String, message: String },
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
}

/// Per-repeat seeds drawn from one master seed.
pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.random()).collect()
}

/// One measured value of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub experiment: String,
    pub series: String,
    pub point: f64,
    pub repeat: u32,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Mean and 99% interval of one metric at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub series: String,
    pub point: f64,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub ci99: f64,
}

/// Groups rows by (experiment, series, point, metric) in first-seen order.
pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateRow> {
    type Group = (String, String, u64, String);
    let mut order: Vec<Group> = Vec::new();
    let mut groups: BTreeMap<Group, (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let k = (r.experiment.clone(), r.series.clone(), r.point.to_bits(), r.metric.clone());
        let e = groups.entry(k.clone()).or_insert_with(|| {
            order.push(k);
            (r.point, Vec::new())
        });
        e.1.push(r.value);
    }
    order
        .into_iter()
        .map(|k| {
            let (point, vals) = &groups[&k];
            let s = Summary::of(vals);
            AggregateRow { experiment: k.0, series: k.1, point: *point, metric: k.3, n: s.n, mean: s.mean, ci99: s.ci99 }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub runs: Vec<RunRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentOutput {
    /// Writes `<name>_runs.csv` and `<name>_aggregate.csv` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        write_csv(&dir.join(format!("{name}_runs.csv")), &self.runs)?;
        write_csv(&dir.join(format!("{name}_aggregate.csv")), &self.aggregate)?;
        let mut f = std::fs::File::create(dir.join(format!("{name}_summary.json")))?;
        serde_json::to_writer_pretty(&mut f, &self.aggregate).map_err(std::io::Error::from)?;
        writeln!(f)?;
        Ok(())
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, ExperimentError> {
    let seeds = spec.seeds()?;
    let runs = match spec.name {
        ExperimentName::Fig6 => fig6(spec, &seeds)?,
        ExperimentName::Fig7 => fig7(spec, &seeds)?,
        ExperimentName::Hopcount => hopcount(spec, &seeds)?,
        ExperimentName::Faults => faults(spec, &seeds)?,
    };
    Ok(ExperimentOutput { aggregate: aggregate(&runs), runs })
}

fn row(exp: &str, series: &str, point: f64, repeat: u32, seed: u64, metric: &str, value: f64) -> RunRow {
    RunRow {
        experiment: exp.to_string(),
        series: series.to_string(),
        point,
        repeat,
        seed,
        metric: metric.to_string(),
        value,
    }
}

pub const FIG6_RATES: [f64; 4] = [1e2, 1e3, 1e4, 1e5];
pub const FIG7_RATE: f64 = 2e4;
pub const DESK_INSERTS: u64 = 1_000_000;
pub const FULL_INSERTS: u64 = 10_000_000;

/// Gossip cadence and per-item size of the load studies.
pub fn placement_config(nodes: u32, rate: f64, inserts: u64, classes: Vec<DemandClass>) -> PlacementConfig {
    PlacementConfig {
        nodes,
        replication: 1,
        inserts,
        rate,
        item_bytes: (KEY_BYTES + VALUE_BYTES) as u64,
        sync_interval: Duration::from_secs(1),
        load_refresh: Duration::from_secs(60),
        gossip_delay: Duration::from_millis(50),
        classes,
        coordinators: CoordinatorPolicy::Single(NodeId(0)),
    }
}

pub fn fig6_classes() -> Vec<DemandClass> {
    let reqs: Vec<(String, DhrRequest, f64)> =
        workload::fig6_requests().into_iter().map(|r| (r.to_string(), r, 1.0)).collect();
    workload::demand_classes(&workload::fig6_capabilities(), &workload::fig6_registry(), &reqs)
}

pub fn fig7_classes(shift: f64) -> Vec<DemandClass> {
    let demand = workload::fig7_demand(shift);
    let reqs: Vec<(String, DhrRequest, f64)> =
        FIG7_REGIONS.iter().zip(demand).map(|(r, w)| (r.to_string(), workload::location(r), w)).collect();
    let registry = workload::location_registry(&FIG7_REGIONS);
    workload::demand_classes(&workload::fig7_capabilities(100), &registry, &reqs)
}

/// Metric, hindsight optimum and their gap for one load-balance run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancePoint {
    pub metric: f64,
    pub optimum: f64,
    pub hash_metric: f64,
}

pub fn fig6_run(rate: f64, inserts: u64, seed: u64) -> Result<BalancePoint, ExperimentError> {
    let classes = fig6_classes();
    let cfg = placement_config(10, rate, inserts, classes.clone());
    let out = run_placement(&cfg, seed)
        .map_err(|e| ExperimentError::Run { run: format!("fig6 rate={rate} seed={seed}"), message: e.to_string() })?;
    let realized: Vec<(Vec<NodeId>, u64)> =
        classes.iter().zip(&out.class_counts).map(|(c, &k)| (c.eligible.clone(), k)).collect();
    Ok(BalancePoint { metric: out.metric, optimum: fractional_optimum(10, &realized), hash_metric: out.hash_metric })
}

pub fn fig7_run(shift: f64, inserts: u64, seed: u64) -> Result<BalancePoint, ExperimentError> {
    let classes = fig7_classes(shift);
    let cfg = placement_config(100, FIG7_RATE, inserts, classes.clone());
    let out = run_placement(&cfg, seed)
        .map_err(|e| ExperimentError::Run { run: format!("fig7 shift={shift} seed={seed}"), message: e.to_string() })?;
    let nodes: Vec<u32> = classes.iter().map(|c| c.eligible.len() as u32).collect();
    Ok(BalancePoint { metric: out.metric, optimum: optimal_balance(&nodes, &out.class_counts), hash_metric: out.hash_metric })
}

fn balance_rows(exp: &str, points: &[f64], seeds: &[u64], f: impl Fn(f64, u64) -> Result<BalancePoint, ExperimentError> + Sync) -> Result<Vec<RunRow>, ExperimentError> {
    let jobs: Vec<(f64, u32, u64)> =
        points.iter().flat_map(|&p| seeds.iter().enumerate().map(move |(i, &s)| (p, i as u32, s))).collect();
    let results: Vec<Result<Vec<RunRow>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(p, rep, seed)| {
            let b = f(p, seed)?;
            Ok(vec![
                row(exp, "prada", p, rep, seed, "balance", b.metric),
                row(exp, "prada", p, rep, seed, "optimum", b.optimum),
                row(exp, "prada", p, rep, seed, "gap", b.metric - b.optimum),
                row(exp, "hash", p, rep, seed, "balance", b.hash_metric),
            ])
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn inserts(spec: &ExperimentSpec) -> u64 {
    spec.inserts.unwrap_or(if spec.full_scale { FULL_INSERTS } else { DESK_INSERTS })
}

fn fig6(spec: &ExperimentSpec, seeds: &[u64]) -> Result<Vec<RunRow>, ExperimentError> {
    let rates = spec.sweep.clone().unwrap_or(FIG6_RATES.to_vec());
    let n = inserts(spec);
    balance_rows("fig6", &rates, seeds, |rate, seed| fig6_run(rate, n, seed))
}

/// Shift sweep in percent.
pub fn fig7_shifts() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) * 10.0).collect()
}

fn fig7(spec: &ExperimentSpec, seeds: &[u64]) -> Result<Vec<RunRow>, ExperimentError> {
    let shifts = spec.sweep.clone().unwrap_or_else(fig7_shifts);
    if shifts.iter().any(|s| !(0.0..=100.0).contains(s)) {
        return Err(ExperimentError::Spec("shift sweep values are percentages in [0, 100]".into()));
    }
    let n = inserts(spec);
    balance_rows("fig7", &shifts, seeds, |shift, seed| fig7_run(shift / 100.0, n, seed))
}

/// Ten nodes: 0-2 in DE, 3-5 in FR, 6-9 in US.
pub fn three_region_caps() -> Vec<NodeCapabilities> {
    (0..10)
        .map(|i| {
            let loc = match i {
                0..=2 => "DE",
                3..=5 => "FR",
                _ => "US",
            };
            NodeCapabilities::new(NodeId(i)).with("location", [Property::label(loc)])
        })
        .collect()
}

pub fn three_region_registry() -> DhrRegistry {
    workload::location_registry(&["DE", "FR", "US"])
}

/// Uniform 100 ms cluster over the three-region capabilities with gossip
/// pushed out of the measurement window.
pub fn quiet_cluster_config(mode: Mode, r: usize) -> ClusterConfig {
    let mut cfg = ClusterConfig::new(TopologyConfig::uniform(three_region_caps(), 100.0), three_region_registry(), r);
    cfg.mode = mode;
    let far = Duration::from_secs(1 << 30);
    cfg.gossip = GossipConfig { sync_interval: far, load_refresh: far };
    cfg.expiry_sweep = far;
    cfg
}

fn columns(tag: &str) -> Columns {
    (0..10).map(|i| (format!("c{i}"), format!("{tag}{i:0>19}").into_bytes())).collect()
}

/// Runs `stmt` alone and returns its record plus messages and bytes sent.
fn isolated(c: &mut Cluster, stmt: Statement, coordinator: Option<NodeId>) -> (crate::client::OpRecord, u64, u64) {
    let before = c.stats();
    let at = c.now();
    c.submit(at, ClientId(0), stmt, coordinator);
    let ok = c.run_until_quiescent(at + Duration::from_secs(3600));
    debug_assert!(ok, "isolated statement did not settle");
    let after = c.stats();
    let rec = c.records().last().cloned().expect("one record");
    (rec, after.sent - before.sent, after.bytes - before.bytes)
}

/// Mean QCT, messages and bytes per operation kind for one configuration.
pub fn hopcount_run(mode: Mode, r: usize, dhr: bool, keys: u32, seed: u64) -> Result<Vec<(String, f64)>, ExperimentError> {
    let run = format!("hopcount mode={mode:?} r={r} dhr={dhr} seed={seed}");
    let mut c = Cluster::new(quiet_cluster_config(mode, r), seed)
        .map_err(|e| ExperimentError::Run { run: run.clone(), message: e.to_string() })?;
    c.run_until_quiescent(SimTime::from_secs_f64(60.0));
    let mut sums: BTreeMap<&'static str, [f64; 3]> = BTreeMap::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs = ["DE", "FR", "US"];
    for k in 0..keys {
        let key = workload::row_key('h', u64::from(k));
        let (first, second) = if dhr {
            let l = locs[rng.random_range(0..3)];
            (workload::location(l), Some(workload::location(l)))
        } else {
            (DhrRequest::new(), None)
        };
        let stmts = [
            Statement::Insert { key: key.clone(), columns: columns("a"), dhr: first },
            Statement::Select { key: key.clone() },
            Statement::Update { key: key.clone(), columns: columns("b"), dhr: second },
            Statement::Delete { key: key.clone() },
        ];
        for stmt in stmts {
            let (rec, msgs, bytes) = isolated(&mut c, stmt, None);
            if !matches!(rec.reply, Reply::Ok { .. }) {
                return Err(ExperimentError::Run { run, message: format!("{:?} on key {k}: {:?}", rec.kind, rec.reply) });
            }
            let e = sums.entry(rec.kind.as_str()).or_default();
            e[0] += rec.qct().as_secs_f64() * 1e3;
            e[1] += msgs as f64;
            e[2] += bytes as f64;
        }
    }
    let k = f64::from(keys.max(1));
    Ok(sums
        .into_iter()
        .flat_map(|(kind, s)| {
            [
                (format!("{kind}_qct_ms"), s[0] / k),
                (format!("{kind}_messages"), s[1] / k),
                (format!("{kind}_bytes"), s[2] / k),
            ]
        })
        .collect())
}

fn hopcount(spec: &ExperimentSpec, seeds: &[u64]) -> Result<Vec<RunRow>, ExperimentError> {
    let rs: Vec<usize> = spec.sweep.clone().unwrap_or(vec![1.0, 2.0, 3.0]).into_iter().map(|r| r as usize).collect();
    let series = [("baseline", Mode::Baseline, false), ("prada-plain", Mode::Prada, false), ("prada-dhr", Mode::Prada, true)];
    let mut jobs = Vec::new();
    for &r in &rs {
        for s in series {
            for (i, &seed) in seeds.iter().enumerate() {
                jobs.push((r, s, i as u32, seed));
            }
        }
    }
    let results: Vec<Result<Vec<RunRow>, ExperimentError>> = jobs
        .par_iter()
        .map(|&(r, (name, mode, dhr), rep, seed)| {
            let vals = hopcount_run(mode, r, dhr, 50, seed)?;
            Ok(vals.into_iter().map(|(m, v)| row("hopcount", name, r as f64, rep, seed, &m, v)).collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// One crash scenario of the recovery suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub label: String,
    pub r: usize,
    pub op: OpKind,
    pub plan: FaultPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaultOutcome {
    pub scenario: FaultScenario,
    pub seed: u64,
    pub quiescent: bool,
    pub reply: Option<Reply>,
    pub violations: Vec<Violation>,
}

impl FaultOutcome {
    pub fn passed(&self) -> bool {
        self.quiescent && self.reply.is_some() && self.violations.is_empty()
    }
}

/// Key, coordinator and statements of the fault suite for replication `r`.
/// Responsible nodes sit in US, the coordinator is a US node outside them,
/// and the item starts in DE.
pub struct FaultSetup {
    pub r: usize,
    pub key: Vec<u8>,
    pub responsible: Vec<NodeId>,
    pub coordinator: NodeId,
}

impl FaultSetup {
    pub fn new(r: usize) -> Self {
        let probe = Cluster::new(quiet_cluster_config(Mode::Prada, r), 0).expect("static config");
        let us = |n: &NodeId| n.0 >= 6;
        for i in 0.. {
            let key = format!("tracked-{i}").into_bytes();
            let responsible = probe.responsible(&key);
            if !responsible.iter().all(us) {
                continue;
            }
            if let Some(coordinator) = (6..10).map(NodeId).find(|n| !responsible.contains(n)) {
                return FaultSetup { r, key, responsible, coordinator };
            }
        }
        unreachable!()
    }

    fn prologue(&self) -> Vec<Statement> {
        vec![Statement::Insert { key: self.key.clone(), columns: columns("a"), dhr: workload::location("DE") }]
    }

    fn statement(&self, op: OpKind) -> Statement {
        let key = self.key.clone();
        match op {
            OpKind::Create => self.prologue().remove(0),
            OpKind::Read => Statement::Select { key },
            OpKind::Update => Statement::Update { key, columns: columns("b"), dhr: Some(workload::location("FR")) },
            OpKind::Delete => Statement::Delete { key },
        }
    }

    /// Builds the cluster, runs the prologue (none for create) and submits
    /// the measured statement. Returns the submit instant.
    fn start(&self, op: OpKind, plan: FaultPlan, seed: u64) -> (Cluster, SimTime) {
        let mut cfg = quiet_cluster_config(Mode::Prada, self.r);
        cfg.faults = plan;
        let mut c = Cluster::new(cfg, seed).expect("static config");
        c.run_until_quiescent(SimTime::from_secs_f64(60.0));
        if op != OpKind::Create {
            for stmt in self.prologue() {
                let at = c.now();
                c.submit(at, ClientId(0), stmt, Some(self.coordinator));
                c.run_until_quiescent(at + Duration::from_secs(3600));
            }
        }
        let at = c.now() + Duration::from_secs(1);
        c.submit(at, ClientId(0), self.statement(op), Some(self.coordinator));
        (c, at)
    }

    /// Crash plans for every message boundary of a fault-free run of `op`.
    pub fn scenarios(&self, op: OpKind, seed: u64) -> Vec<FaultScenario> {
        let (mut c, t0) = self.start(op, FaultPlan::default(), seed);
        c.run_until_quiescent(t0 + Duration::from_secs(3600));
        let holders = |c: &Cluster| -> Vec<NodeId> {
            (0..c.node_count()).map(NodeId).filter(|&n| c.node(n).state.target_store.contains_key(&self.key)).collect()
        };
        let mut roles: BTreeSet<NodeId> = self.responsible.iter().copied().collect();
        roles.insert(self.coordinator);
        roles.extend(holders(&c));
        // targets before the statement ran
        let (pre, _) = self.start(op, FaultPlan::default(), seed);
        roles.extend(holders(&pre));

        let mut seen: BTreeMap<(TraceKind, &str, Endpoint, Endpoint), u32> = BTreeMap::new();
        let mut plans = Vec::new();
        for rec in c.trace() {
            let n = seen.entry((rec.kind, rec.msg, rec.from, rec.to)).or_default();
            *n += 1;
            if rec.time < t0 {
                continue;
            }
            let rule = |trigger, action| FaultRule {
                trigger,
                kind: Some(rec.msg.to_string()),
                from: Some(rec.from),
                to: Some(rec.to),
                occurrence: *n,
                action,
            };
            match rec.kind {
                TraceKind::Deliver => {
                    for &role in &roles {
                        let label = format!("{} r={} crash {} before {} {}->{} #{}", op.as_str(), self.r, role, rec.msg, rec.from, rec.to, n);
                        plans.push((label, FaultPlan::new(vec![rule(Trigger::Deliver, FaultAction::Crash { node: role })])));
                    }
                }
                TraceKind::Send if rec.from == Endpoint::Node(self.coordinator) => {
                    let label = format!("{} r={} coordinator dies sending {} ->{} #{}", op.as_str(), self.r, rec.msg, rec.to, n);
                    plans.push((label, FaultPlan::new(vec![rule(Trigger::Send, FaultAction::CrashSender)])));
                }
                _ => {}
            }
        }
        plans.into_iter().map(|(label, plan)| FaultScenario { label, r: self.r, op, plan }).collect()
    }

    pub fn run(&self, scenario: &FaultScenario, seed: u64) -> FaultOutcome {
        let (mut c, t0) = self.start(scenario.op, scenario.plan.clone(), seed);
        let quiescent = c.run_until_quiescent(t0 + Duration::from_secs(3600));
        let reply = c.records().into_iter().find(|r| r.submitted == t0).map(|r| r.reply);
        FaultOutcome { scenario: scenario.clone(), seed, quiescent, reply, violations: c.scan() }
    }
}

pub const FAULT_OPS: [OpKind; 4] = [OpKind::Create, OpKind::Read, OpKind::Update, OpKind::Delete];

/// Every crash scenario for every op and replication factor, run with `seed`.
pub fn fault_suite(rs: &[usize], seed: u64) -> Vec<FaultOutcome> {
    let mut jobs = Vec::new();
    for &r in rs {
        let setup = FaultSetup::new(r);
        for op in FAULT_OPS {
            for s in setup.scenarios(op, seed) {
                jobs.push((r, s));
            }
        }
    }
    let setups: BTreeMap<usize, FaultSetup> = rs.iter().map(|&r| (r, FaultSetup::new(r))).collect();
    jobs.par_iter().map(|(r, s)| setups[r].run(s, seed)).collect()
}

fn faults(spec: &ExperimentSpec, seeds: &[u64]) -> Result<Vec<RunRow>, ExperimentError> {
    let rs: Vec<usize> = spec.sweep.clone().unwrap_or(vec![1.0, 3.0]).into_iter().map(|r| r as usize).collect();
    let mut out = Vec::new();
    for (rep, &seed) in seeds.iter().enumerate() {
        for o in fault_suite(&rs, seed) {
            let s = &o.scenario;
            let series = s.op.as_str();
            let p = s.r as f64;
            out.push(row("faults", series, p, rep as u32, seed, "violations", o.violations.len() as f64));
            out.push(row("faults", series, p, rep as u32, seed, "replied", f64::from(u8::from(o.reply.is_some()))));
            let exhausted = matches!(o.reply, Some(Reply::Error(crate::node::OpError::RetriesExhausted)));
            out.push(row("faults", series, p, rep as u32, seed, "exhausted", f64::from(u8::from(exhausted))));
            out.push(row("faults", series, p, rep as u32, seed, "passed", f64::from(u8::from(o.passed()))));
        }
    }
    Ok(out)
}

/// Writes a DE item with r = 3 whose responsible nodes are all in US, then
/// for each pair of crashed responsible nodes combined with each pair of
/// crashed targets reads it through a surviving node. Returns the crashed
/// set and the read reply of every combination.
pub fn fault_tolerance_reads(seed: u64) -> Vec<(Vec<NodeId>, Reply)> {
    let setup = FaultSetup::new(3);
    let mut base = Cluster::new(quiet_cluster_config(Mode::Prada, 3), seed).expect("static config");
    base.run_until_quiescent(SimTime::from_secs_f64(60.0));
    let (rec, _, _) = isolated(&mut base, setup.prologue().remove(0), Some(setup.coordinator));
    assert_eq!(rec.reply, Reply::ok(), "setup insert failed");
    let targets: Vec<NodeId> =
        (0..10).map(NodeId).filter(|&n| base.node(n).state.target_store.contains_key(&setup.key)).collect();
    let pairs = |v: &[NodeId]| -> Vec<[NodeId; 2]> {
        let mut out = Vec::new();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                out.push([v[i], v[j]]);
            }
        }
        out
    };
    let mut out = Vec::new();
    for rp in pairs(&setup.responsible) {
        for tp in pairs(&targets) {
            let mut c = Cluster::new(quiet_cluster_config(Mode::Prada, 3), seed).expect("static config");
            c.run_until_quiescent(SimTime::from_secs_f64(60.0));
            isolated(&mut c, setup.prologue().remove(0), Some(setup.coordinator));
            let crashed: Vec<NodeId> = rp.iter().chain(&tp).copied().collect();
            for &n in &crashed {
                c.crash(n);
            }
            let coordinator = (0..10).map(NodeId).find(|n| !crashed.contains(n)).expect("a survivor");
            let (rec, _, _) = isolated(&mut c, Statement::Select { key: setup.key.clone() }, Some(coordinator));
            out.push((crashed, rec.reply));
        }
    }
    out
}
