//! Load views, the load-balance metric and target selection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ids::{NodeId, SimTime};

/// A node's self-reported storage load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoadReport {
    pub load: u64,
    pub time: SimTime,
}

/// One node's picture of cluster load: gossiped reports plus local
/// estimators for data placed since the last report was taken.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoadView {
    reported: Vec<Option<LoadReport>>,
    estimators: Vec<u64>,
    /// Bumps per node in placement order, so a report can retire exactly
    /// the bytes it already reflects.
    pending: Vec<VecDeque<(SimTime, u64)>>,
}

impl LoadView {
    pub fn new(nodes: usize) -> Self {
        LoadView { reported: vec![None; nodes], estimators: vec![0; nodes], pending: vec![VecDeque::new(); nodes] }
    }

    fn grow(&mut self, node: NodeId) {
        if node.index() >= self.reported.len() {
            self.reported.resize(node.index() + 1, None);
            self.estimators.resize(node.index() + 1, 0);
            self.pending.resize(node.index() + 1, VecDeque::new());
        }
    }

    pub fn len(&self) -> usize {
        self.reported.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reported.is_empty()
    }

    pub fn reported(&self, node: NodeId) -> Option<LoadReport> {
        self.reported.get(node.index()).copied().flatten()
    }

    pub fn estimator(&self, node: NodeId) -> u64 {
        self.estimators.get(node.index()).copied().unwrap_or(0)
    }

    pub fn effective_load(&self, node: NodeId) -> u64 {
        self.reported(node).map_or(0, |r| r.load) + self.estimator(node)
    }

    /// Records `bytes` placed on `node` at time `at`.
    pub fn bump(&mut self, node: NodeId, bytes: u64, at: SimTime) {
        self.grow(node);
        let i = node.index();
        self.estimators[i] += bytes;
        match self.pending[i].back_mut() {
            Some(last) if last.0 == at => last.1 += bytes,
            _ => self.pending[i].push_back((at, bytes)),
        }
    }

    /// Accepts `report` if strictly newer than the one held and retires the
    /// estimator bytes placed up to the report's time. Bumps are never
    /// later than the local clock, so a report taken now clears the
    /// estimator entirely.
    pub fn merge_report(&mut self, node: NodeId, report: LoadReport) -> bool {
        self.grow(node);
        let i = node.index();
        if self.reported[i].is_some_and(|cur| cur.time >= report.time) {
            return false;
        }
        self.reported[i] = Some(report);
        let queue = &mut self.pending[i];
        while let Some(&(t, b)) = queue.front() {
            if t > report.time {
                break;
            }
            self.estimators[i] -= b;
            queue.pop_front();
        }
        true
    }

    pub fn merge(&mut self, reports: &[(NodeId, LoadReport)]) -> usize {
        reports.iter().filter(|(n, r)| self.merge_report(*n, *r)).count()
    }

    pub fn reports(&self) -> Vec<(NodeId, LoadReport)> {
        self.reported
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|r| (NodeId(i as u32), r)))
            .collect()
    }
}

/// Standard deviation of the loads normalised by their mean; 0 when all
/// loads are zero.
pub fn load_balance_metric(loads: &[f64]) -> f64 {
    assert!(!loads.is_empty(), "metric needs at least one node");
    let n = loads.len() as f64;
    let mean = loads.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = loads.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub fn load_balance_metric_u64(loads: &[u64]) -> f64 {
    let v: Vec<f64> = loads.iter().map(|&l| l as f64).collect();
    load_balance_metric(&v)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub targets: Vec<NodeId>,
    /// Fewer eligible nodes than the replication factor.
    pub degraded: bool,
}

/// All eligible nodes in preference order: eligible responsible nodes in
/// ring order, then the rest by ascending effective load and node id.
pub fn rank_candidates(eligible: &[NodeId], responsible: &[NodeId], view: &LoadView) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = responsible.iter().copied().filter(|n| eligible.contains(n)).collect();
    let mut rest: Vec<(u64, NodeId)> = eligible
        .iter()
        .copied()
        .filter(|n| !responsible.contains(n))
        .map(|n| (view.effective_load(n), n))
        .collect();
    rest.sort_unstable();
    out.extend(rest.into_iter().map(|(_, n)| n));
    out
}

/// Picks up to `r` targets and charges `item_bytes` to each in `view`.
pub fn select_targets(
    eligible: &[NodeId],
    responsible: &[NodeId],
    r: usize,
    view: &mut LoadView,
    item_bytes: u64,
    now: SimTime,
) -> Selection {
    let mut targets: Vec<NodeId> = responsible.iter().copied().filter(|n| eligible.contains(n)).take(r).collect();
    let need = r - targets.len();
    if need > 0 {
        if need == 1 {
            // the common r=1 fill: a single linear pass
            let best = eligible
                .iter()
                .copied()
                .filter(|n| !targets.contains(n))
                .min_by_key(|&n| (view.effective_load(n), n));
            targets.extend(best);
        } else {
            let ranked = rank_candidates(eligible, responsible, view);
            let fill: Vec<NodeId> = ranked.into_iter().filter(|n| !targets.contains(n)).take(need).collect();
            targets.extend(fill);
        }
    }
    for &t in &targets {
        view.bump(t, item_bytes, now);
    }
    Selection { degraded: targets.len() < r, targets }
}
