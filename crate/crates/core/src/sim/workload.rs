//! Seeded statement streams and the cluster layouts they run against.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::dhr::{eligible_nodes, CapabilityStore, DhrRegistry, DhrRequest, NodeCapabilities, Property};
use crate::error::ParamError;
use crate::ids::{NodeId, SimTime};
use crate::query::{Columns, Statement};
use crate::sim::cluster::Arrival;
use crate::sim::placement::DemandClass;
use crate::sim::topology::AZURE10_REGIONS;

/// Row layout of the benchmarks: a 20 B key and 200 B spread over 10 columns.
pub const KEY_BYTES: usize = 20;
pub const COLUMNS: usize = 10;
pub const VALUE_BYTES: usize = 200;

/// Regions of the DHR-fit study and the share of nodes in each.
pub const FIG7_REGIONS: [&str; 5] = ["NA", "EU", "AP", "SA", "CN"];
pub const FIG7_NODE_SHARE: [f64; 5] = [0.64, 0.17, 0.16, 0.02, 0.01];
/// Demand once all North American demand has moved elsewhere.
pub const FIG7_FULL_SHIFT: [f64; 5] = [0.0, 0.4761, 0.4473, 0.0574, 0.0191];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// Inserts drawing one of the eight requirement combinations of the
    /// two-type grid uniformly.
    Fig6,
    /// Inserts demanding one location, drawn from the demand shifted away
    /// from North America by `shift` (0 to 1).
    Fig7 { shift: f64 },
    /// Creates, reads, updates and deletes over a key pool; a fraction of
    /// creates carries a location requirement.
    UniformCrud { mix: CrudMix, dhr_fraction: f64 },
    /// Users posting located messages and reading them back.
    Microblog { users: u32 },
}

/// Relative weights of the four operation kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrudMix {
    pub create: f64,
    pub read: f64,
    pub update: f64,
    pub delete: f64,
}

impl Default for CrudMix {
    fn default() -> Self {
        CrudMix { create: 0.25, read: 0.5, update: 0.15, delete: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkloadParams {
    pub ops: u64,
    /// Mean arrivals per second (Poisson).
    pub rate: f64,
    pub start: SimTime,
}

/// Demand vector of the DHR-fit study: linear between the node
/// distribution (shift 0) and the fully shifted vector (shift 1).
pub fn fig7_demand(shift: f64) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (i, o) in out.iter_mut().enumerate() {
        *o = (1.0 - shift) * FIG7_NODE_SHARE[i] + shift * FIG7_FULL_SHIFT[i];
    }
    out
}

/// Equality types `A` and `B`, each with two properties.
pub fn fig6_registry() -> DhrRegistry {
    DhrRegistry::from_json(
        r#"[{"id":"A","kind":"equality","domain":["A1","A2"]},{"id":"B","kind":"equality","domain":["B1","B2"]}]"#,
    )
    .expect("static registry")
}

/// Ten nodes: A1 on 0-4, A2 on 5-9, B1 on {0,1,5,6,7}, B2 on the rest, so
/// every A/B combination is offered by two or three nodes.
pub fn fig6_capabilities() -> Vec<NodeCapabilities> {
    (0..10u32)
        .map(|i| {
            let a = if i < 5 { "A1" } else { "A2" };
            let b = if matches!(i, 0 | 1 | 5 | 6 | 7) { "B1" } else { "B2" };
            NodeCapabilities::new(NodeId(i)).with("A", [Property::label(a)]).with("B", [Property::label(b)])
        })
        .collect()
}

/// The eight requirement sets: one property of one type, or one of each.
pub fn fig6_requests() -> Vec<DhrRequest> {
    let mut out = Vec::new();
    for a in ["A1", "A2"] {
        out.push(DhrRequest::new().with("A", [Property::label(a)]));
    }
    for b in ["B1", "B2"] {
        out.push(DhrRequest::new().with("B", [Property::label(b)]));
    }
    for a in ["A1", "A2"] {
        for b in ["B1", "B2"] {
            out.push(DhrRequest::new().with("A", [Property::label(a)]).with("B", [Property::label(b)]));
        }
    }
    out
}

pub fn location_registry(regions: &[&str]) -> DhrRegistry {
    let domain: Vec<String> = regions.iter().map(|r| format!("\"{r}\"")).collect();
    DhrRegistry::from_json(&format!(r#"[{{"id":"location","kind":"equality","domain":[{}]}}]"#, domain.join(",")))
        .expect("region names are plain labels")
}

pub fn location(region: &str) -> DhrRequest {
    DhrRequest::new().with("location", [Property::label(region)])
}

/// Nodes spread over regions by share, largest remainders first; node ids
/// are assigned region by region.
pub fn regional_capabilities(nodes: u32, regions: &[&str], share: &[f64]) -> Vec<NodeCapabilities> {
    let exact: Vec<f64> = share.iter().map(|s| s * nodes as f64).collect();
    let mut counts: Vec<u32> = exact.iter().map(|e| e.floor() as u32).collect();
    let mut order: Vec<usize> = (0..share.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut missing = nodes - counts.iter().sum::<u32>();
    for i in order {
        if missing == 0 {
            break;
        }
        counts[i] += 1;
        missing -= 1;
    }
    let mut out = Vec::new();
    for (r, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let id = NodeId(out.len() as u32);
            out.push(NodeCapabilities::new(id).with("location", [Property::label(regions[r])]));
        }
    }
    out
}

pub fn fig7_capabilities(nodes: u32) -> Vec<NodeCapabilities> {
    regional_capabilities(nodes, &FIG7_REGIONS, &FIG7_NODE_SHARE)
}

/// Demand classes for the placement simulator, with eligible nodes
/// computed from the capabilities.
pub fn demand_classes(
    caps: &[NodeCapabilities],
    registry: &DhrRegistry,
    requests: &[(String, DhrRequest, f64)],
) -> Vec<DemandClass> {
    let store = CapabilityStore::from_caps(caps.iter().cloned());
    requests
        .iter()
        .map(|(name, req, weight)| DemandClass {
            name: name.clone(),
            eligible: eligible_nodes(&store, req, registry),
            weight: *weight,
        })
        .collect()
}

/// Fixed-width row key.
pub fn row_key(prefix: char, n: u64) -> Vec<u8> {
    format!("{prefix}{n:0width$}", width = KEY_BYTES - 1).into_bytes()
}

/// Ten columns of 20 bytes each, derived from `seed`.
pub fn row_columns(rng: &mut impl Rng) -> Columns {
    let per = VALUE_BYTES / COLUMNS;
    (0..COLUMNS)
        .map(|i| {
            let v: Vec<u8> = (0..per).map(|_| rng.random_range(b'a'..=b'z')).collect();
            (format!("c{i}"), v)
        })
        .collect()
}

/// Generates a workload. The same `(kind, params, seed)` always yields the
/// same stream.
pub fn generate(kind: WorkloadKind, params: WorkloadParams, seed: u64) -> Result<Vec<Arrival>, ParamError> {
    let bad = |m: &str| ParamError::Invalid(m.to_string());
    if !(params.rate > 0.0 && params.rate.is_finite()) {
        return Err(bad("rate must be positive"));
    }
    let gap = Exp::new(params.rate).map_err(|e| bad(&e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = params.start;
    let mut out = Vec::with_capacity(params.ops as usize);
    let mut next_time = |rng: &mut ChaCha8Rng| {
        t = t + std::time::Duration::from_secs_f64(gap.sample(rng));
        t
    };

    match kind {
        WorkloadKind::Fig6 => {
            let reqs = fig6_requests();
            for i in 0..params.ops {
                let at = next_time(&mut rng);
                let dhr = reqs[rng.random_range(0..reqs.len())].clone();
                let stmt = Statement::Insert { key: row_key('k', i), columns: row_columns(&mut rng), dhr };
                out.push(Arrival { at, stmt });
            }
        }
        WorkloadKind::Fig7 { shift } => {
            if !(0.0..=1.0).contains(&shift) {
                return Err(bad("shift must lie in [0, 1]"));
            }
            let pick = WeightedIndex::new(fig7_demand(shift)).map_err(|e| bad(&e.to_string()))?;
            for i in 0..params.ops {
                let at = next_time(&mut rng);
                let dhr = location(FIG7_REGIONS[pick.sample(&mut rng)]);
                let stmt = Statement::Insert { key: row_key('k', i), columns: row_columns(&mut rng), dhr };
                out.push(Arrival { at, stmt });
            }
        }
        WorkloadKind::UniformCrud { mix, dhr_fraction } => {
            if !(0.0..=1.0).contains(&dhr_fraction) {
                return Err(bad("dhr fraction must lie in [0, 1]"));
            }
            let weights = [mix.create, mix.read, mix.update, mix.delete];
            let pick = WeightedIndex::new(weights).map_err(|e| bad(&e.to_string()))?;
            let mut created = 0u64;
            for _ in 0..params.ops {
                let at = next_time(&mut rng);
                let choice = if created == 0 { 0 } else { pick.sample(&mut rng) };
                let stmt = if choice == 0 {
                    let dhr = if rng.random_bool(dhr_fraction) {
                        location(AZURE10_REGIONS[rng.random_range(0..AZURE10_REGIONS.len())])
                    } else {
                        DhrRequest::new()
                    };
                    created += 1;
                    Statement::Insert { key: row_key('k', created - 1), columns: row_columns(&mut rng), dhr }
                } else {
                    let key = row_key('k', rng.random_range(0..created));
                    match choice {
                        1 => Statement::Select { key },
                        2 => {
                            let mut columns = row_columns(&mut rng);
                            columns.retain(|name, _| name == "c0");
                            Statement::Update { key, columns, dhr: None }
                        }
                        _ => Statement::Delete { key },
                    }
                };
                out.push(Arrival { at, stmt });
            }
        }
        WorkloadKind::Microblog { users } => {
            if users == 0 {
                return Err(bad("need at least one user"));
            }
            let home: Vec<&str> =
                (0..users).map(|_| AZURE10_REGIONS[rng.random_range(0..AZURE10_REGIONS.len())]).collect();
            let mut posts: Vec<u64> = vec![0; users as usize];
            let mut all = 0u64;
            for _ in 0..params.ops {
                let at = next_time(&mut rng);
                let u = rng.random_range(0..users) as usize;
                let roll: f64 = rng.random();
                let stmt = if all == 0 || roll < 0.4 {
                    let key = format!("u{u:05}:t{:012}", posts[u]).into_bytes();
                    posts[u] += 1;
                    all += 1;
                    let columns: Columns = [("body".to_string(), row_columns(&mut rng).remove("c0").unwrap())].into();
                    Statement::Insert { key, columns, dhr: location(home[u]) }
                } else if roll < 0.7 && posts[u] > 0 {
                    // userline: one of the user's own messages
                    let key = format!("u{u:05}:t{:012}", rng.random_range(0..posts[u])).into_bytes();
                    Statement::Select { key }
                } else {
                    // timeline: a message of any user
                    let v = loop {
                        let v = rng.random_range(0..users) as usize;
                        if posts[v] > 0 {
                            break v;
                        }
                    };
                    let key = format!("u{v:05}:t{:012}", rng.random_range(0..posts[v])).into_bytes();
                    Statement::Select { key }
                };
                out.push(Arrival { at, stmt });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig7_endpoints() {
        assert_eq!(fig7_demand(0.0), FIG7_NODE_SHARE);
        assert_eq!(fig7_demand(1.0), FIG7_FULL_SHIFT);
        let mid = fig7_demand(0.5);
        assert!((mid.iter().sum::<f64>() - 1.0).abs() < 1e-3);
        assert!((mid[0] - 0.32).abs() < 1e-12);
    }

    #[test]
    fn fig7_node_split() {
        let caps = fig7_capabilities(100);
        let count = |r: &str| caps.iter().filter(|c| c.supported["location"].contains(&Property::label(r))).count();
        assert_eq!([count("NA"), count("EU"), count("AP"), count("SA"), count("CN")], [64, 17, 16, 2, 1]);
    }

    #[test]
    fn fig6_grid_offers_two_or_three_nodes_per_pair() {
        let classes = demand_classes(
            &fig6_capabilities(),
            &fig6_registry(),
            &fig6_requests().into_iter().map(|r| (r.to_string(), r, 1.0)).collect::<Vec<_>>(),
        );
        let sizes: Vec<usize> = classes.iter().map(|c| c.eligible.len()).collect();
        assert_eq!(sizes, vec![5, 5, 5, 5, 2, 3, 3, 2]);
    }

    #[test]
    fn rows_match_benchmark_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cols = row_columns(&mut rng);
        assert_eq!(cols.len(), 10);
        assert_eq!(cols.values().map(Vec::len).sum::<usize>(), 200);
        assert_eq!(row_key('k', 7).len(), 20);
    }

    #[test]
    fn streams_are_seeded() {
        let p = WorkloadParams { ops: 10_000, rate: 1000.0, start: SimTime::ZERO };
        let a = generate(WorkloadKind::Fig6, p, 5).unwrap();
        assert_eq!(a, generate(WorkloadKind::Fig6, p, 5).unwrap());
        assert_ne!(a, generate(WorkloadKind::Fig6, p, 6).unwrap());
        let crud = WorkloadKind::UniformCrud { mix: CrudMix::default(), dhr_fraction: 0.5 };
        assert_eq!(generate(crud, p, 1).unwrap(), generate(crud, p, 1).unwrap());
    }
}
