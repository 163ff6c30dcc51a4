//! Optimal load balance computed with hindsight about the realized demand.

use std::collections::VecDeque;

use crate::balance::{load_balance_metric, load_balance_metric_u64};
use crate::ids::NodeId;

/// Integer loads when each group's items are split as evenly as possible
/// over that group's nodes. Groups list node counts and item counts.
pub fn even_split_loads(nodes: &[u32], items: &[u64]) -> Vec<u64> {
    assert_eq!(nodes.len(), items.len(), "one item count per group");
    let mut out = Vec::new();
    for (&n, &c) in nodes.iter().zip(items) {
        if n == 0 {
            assert_eq!(c, 0, "items demanded from an empty group");
            continue;
        }
        let (q, rem) = (c / n as u64, c % n as u64);
        out.extend((0..n as u64).map(|i| q + u64::from(i < rem)));
    }
    out
}

/// Load balance of the even split.
pub fn optimal_balance(nodes: &[u32], items: &[u64]) -> f64 {
    load_balance_metric_u64(&even_split_loads(nodes, items))
}

/// Minimum metric over every assignment of every item to a node of its
/// group. Exponential; meant for toy instances.
pub fn brute_force_optimum(nodes: &[u32], items: &[u64]) -> f64 {
    let total_nodes: u32 = nodes.iter().sum();
    let mut slots = Vec::new();
    let mut base = 0u32;
    for (&n, &c) in nodes.iter().zip(items) {
        for _ in 0..c {
            slots.push((base, n));
        }
        base += n;
    }
    let mut choice = vec![0u32; slots.len()];
    let mut best = f64::INFINITY;
    loop {
        let mut loads = vec![0u64; total_nodes as usize];
        for (&(b, _), &c) in slots.iter().zip(&choice) {
            loads[(b + c) as usize] += 1;
        }
        best = best.min(load_balance_metric_u64(&loads));
        // odometer step
        let mut i = 0;
        loop {
            if i == slots.len() {
                return best;
            }
            choice[i] += 1;
            if choice[i] < slots[i].1 {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Whether items of the given classes can be split fractionally so every
/// node carries exactly the mean load. Decided by a max-flow with class
/// demand scaled by `nodes` and node capacity equal to the total.
pub fn balanced_feasible(nodes: u32, classes: &[(Vec<NodeId>, u64)]) -> bool {
    let n = nodes as usize;
    let total: u64 = classes.iter().map(|c| c.1).sum();
    let (src, sink) = (0, 1);
    let class_at = |k: usize| 2 + k;
    let node_at = |i: usize| 2 + classes.len() + i;
    let mut g = Dinic::new(2 + classes.len() + n);
    for (k, (eligible, count)) in classes.iter().enumerate() {
        g.add_edge(src, class_at(k), count * nodes as u64);
        for e in eligible {
            g.add_edge(class_at(k), node_at(e.index()), u64::MAX / 4);
        }
    }
    for i in 0..n {
        g.add_edge(node_at(i), sink, total);
    }
    g.max_flow(src, sink) == total * nodes as u64
}

/// Fractional optimum for overlapping eligible sets. The densest union of
/// eligible sets (items confined to it per node) takes its density as
/// load; it is removed and the rest solved again. This minimizes every
/// convex spread measure including the metric.
pub fn fractional_optimum(nodes: u32, classes: &[(Vec<NodeId>, u64)]) -> f64 {
    assert!(classes.len() < 24, "subset enumeration over classes");
    let n = nodes as usize;
    let masks: Vec<u128> = classes
        .iter()
        .map(|(e, _)| e.iter().fold(0u128, |m, x| m | (1u128 << x.index())))
        .collect();
    assert!(n <= 128, "node masks are 128 bits");
    let mut loads = vec![0.0; n];
    let mut left: Vec<usize> = (0..classes.len()).filter(|&k| classes[k].1 > 0).collect();
    let mut taken = 0u128;
    while !left.is_empty() {
        let mut best: Option<(f64, u128, Vec<usize>)> = None;
        for sub in 1u32..(1 << left.len()) {
            let set = (0..left.len()).filter(|b| sub >> b & 1 == 1).fold(0u128, |m, b| m | masks[left[b]]) & !taken;
            let size = set.count_ones();
            if size == 0 {
                continue;
            }
            let inside: Vec<usize> = left.iter().copied().filter(|&k| masks[k] & !taken & !set == 0).collect();
            let density = inside.iter().map(|&k| classes[k].1 as f64).sum::<f64>() / size as f64;
            if best.as_ref().is_none_or(|b| density > b.0 + 1e-12) {
                best = Some((density, set, inside));
            }
        }
        let (density, set, inside) = best.expect("a class with nodes remains");
        for (i, l) in loads.iter_mut().enumerate() {
            if set >> i & 1 == 1 {
                *l = density;
            }
        }
        taken |= set;
        left.retain(|k| !inside.contains(k));
    }
    load_balance_metric(&loads)
}

struct Dinic {
    graph: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<u64>,
    level: Vec<i32>,
    iter: Vec<usize>,
}

impl Dinic {
    fn new(n: usize) -> Self {
        Dinic { graph: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new(), level: vec![0; n], iter: vec![0; n] }
    }

    fn add_edge(&mut self, a: usize, b: usize, c: u64) {
        self.graph[a].push(self.to.len());
        self.to.push(b);
        self.cap.push(c);
        self.graph[b].push(self.to.len());
        self.to.push(a);
        self.cap.push(0);
    }

    fn bfs(&mut self, s: usize) {
        self.level.fill(-1);
        self.level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &e in &self.graph[v] {
                let w = self.to[e];
                if self.cap[e] > 0 && self.level[w] < 0 {
                    self.level[w] = self.level[v] + 1;
                    q.push_back(w);
                }
            }
        }
    }

    fn dfs(&mut self, v: usize, t: usize, f: u64) -> u64 {
        if v == t {
            return f;
        }
        while self.iter[v] < self.graph[v].len() {
            let e = self.graph[v][self.iter[v]];
            let w = self.to[e];
            if self.cap[e] > 0 && self.level[v] < self.level[w] {
                let d = self.dfs(w, t, f.min(self.cap[e]));
                if d > 0 {
                    self.cap[e] -= d;
                    self.cap[e ^ 1] += d;
                    return d;
                }
            }
            self.iter[v] += 1;
        }
        0
    }

    fn max_flow(&mut self, s: usize, t: usize) -> u64 {
        let mut flow = 0;
        loop {
            self.bfs(s);
            if self.level[t] < 0 {
                return flow;
            }
            self.iter.fill(0);
            loop {
                let f = self.dfs(s, t, u64::MAX);
                if f == 0 {
                    break;
                }
                flow += f;
            }
        }
    }
}
