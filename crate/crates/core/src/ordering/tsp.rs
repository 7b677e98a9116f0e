//! Greedy maximum-weight path cover over the document graph.

use std::collections::BTreeSet;

use super::{SortedPath, Strategy};
use crate::error::{Error, Result};
use crate::graph::{DegreeMode, DocumentGraph, TieBreak};

/// Which adjacent document the walk moves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// The unvisited neighbor with the highest edge weight.
    #[default]
    MaxWeight,
    /// The unvisited neighbor with the lowest edge weight, matching the
    /// literal `argmin` reading of the traversal rule.
    MinWeight,
}

#[derive(Debug, Clone)]
pub struct TspOptions {
    pub step: StepRule,
    pub degree: DegreeMode,
    pub tie_break: TieBreak,
}

impl TspOptions {
    pub fn seeded(seed: u64) -> Self {
        Self {
            step: StepRule::MaxWeight,
            degree: DegreeMode::Dynamic,
            tie_break: TieBreak::seeded(seed),
        }
    }

    pub fn deterministic() -> Self {
        Self {
            step: StepRule::MaxWeight,
            degree: DegreeMode::Dynamic,
            tie_break: TieBreak::LowestId,
        }
    }
}

/// Visited flags plus degree buckets for O(log n) minimum-degree lookups.
pub struct Traversal<'g> {
    graph: &'g DocumentGraph,
    mode: DegreeMode,
    visited: Vec<bool>,
    degree: Vec<usize>,
    buckets: Vec<BTreeSet<u32>>,
    min_bucket: usize,
    remaining: usize,
}

impl<'g> Traversal<'g> {
    pub fn new(graph: &'g DocumentGraph, mode: DegreeMode) -> Self {
        let n = graph.node_count();
        let degree: Vec<usize> = (0..n as u32).map(|u| graph.degree(u)).collect();
        let max = degree.iter().copied().max().unwrap_or(0);
        let mut buckets = vec![BTreeSet::new(); max + 1];
        for (u, &d) in degree.iter().enumerate() {
            buckets[d].insert(u as u32);
        }
        let min_bucket = buckets.iter().position(|b| !b.is_empty()).unwrap_or(0);
        Self {
            graph,
            mode,
            visited: vec![false; n],
            degree,
            buckets,
            min_bucket,
            remaining: n,
        }
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_visited(&self, u: u32) -> bool {
        self.visited[u as usize]
    }

    /// Current degree of an unvisited node.
    pub fn degree(&self, u: u32) -> usize {
        self.degree[u as usize]
    }

    /// An unvisited node of minimum degree, or `None` when all are visited.
    pub fn select_min_degree(&mut self, tie: &mut TieBreak) -> Option<u32> {
        if self.remaining == 0 {
            return None;
        }
        while self.buckets[self.min_bucket].is_empty() {
            self.min_bucket += 1;
        }
        let bucket = &self.buckets[self.min_bucket];
        tie.pick(bucket.iter().copied(), bucket.len())
    }

    pub fn visit(&mut self, u: u32) {
        let ui = u as usize;
        debug_assert!(!self.visited[ui]);
        self.visited[ui] = true;
        self.remaining -= 1;
        self.buckets[self.degree[ui]].remove(&u);
        if self.mode == DegreeMode::Dynamic {
            for nb in self.graph.neighbors(u) {
                let v = nb.id as usize;
                if !self.visited[v] {
                    let d = self.degree[v];
                    self.buckets[d].remove(&nb.id);
                    self.buckets[d - 1].insert(nb.id);
                    self.degree[v] = d - 1;
                    self.min_bucket = self.min_bucket.min(d - 1);
                }
            }
        }
    }

    fn next_step(&self, from: u32, rule: StepRule) -> Option<(u32, f32)> {
        let mut candidates = self
            .graph
            .neighbors(from)
            .iter()
            .filter(|nb| !self.visited[nb.id as usize]);
        match rule {
            // Adjacency is already ranked by descending weight, ascending id.
            StepRule::MaxWeight => candidates.next().map(|nb| (nb.id, nb.score)),
            StepRule::MinWeight => candidates
                .min_by(|a, b| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)))
                .map(|nb| (nb.id, nb.score)),
        }
    }
}

/// Orders every document along a greedy maximum-weight path.
///
/// Each walk starts at an unvisited minimum-degree document and repeatedly
/// steps to an unvisited neighbor chosen by `options.step`. When the walk is
/// stranded, a weight-0 jump is recorded and a new walk starts from another
/// minimum-degree document.
pub fn tsp_path(graph: &DocumentGraph, options: &TspOptions) -> Result<SortedPath> {
    let n = graph.node_count();
    if n == 0 {
        return Err(Error::invalid("cannot order an empty graph"));
    }
    let mut tie = options.tie_break.clone();
    let mut traversal = Traversal::new(graph, options.degree);
    let mut order = Vec::with_capacity(n);
    let mut jumps = Vec::new();
    let mut weight = 0f64;

    while let Some(start) = traversal.select_min_degree(&mut tie) {
        if !order.is_empty() {
            jumps.push(order.len());
        }
        traversal.visit(start);
        order.push(start);
        let mut current = start;
        while let Some((next, w)) = traversal.next_step(current, options.step) {
            traversal.visit(next);
            order.push(next);
            weight += f64::from(w);
            current = next;
        }
    }

    Ok(SortedPath {
        order,
        jumps,
        weight: Some(weight),
        strategy: Strategy::Icp,
    })
}

/// Largest node count accepted by [`brute_force_max_path`].
pub const BRUTE_FORCE_LIMIT: usize = 10;

/// Exhaustive maximum-weight Hamiltonian path; missing edges weigh 0.
///
/// Returns the lexicographically first optimal order.
pub fn brute_force_max_path(graph: &DocumentGraph) -> Result<(Vec<u32>, f64)> {
    let n = graph.node_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::invalid(format!(
            "brute force is limited to {BRUTE_FORCE_LIMIT} nodes, graph has {n}"
        )));
    }
    let mut w = vec![0f64; n * n];
    for a in 0..n as u32 {
        for nb in graph.neighbors(a) {
            w[a as usize * n + nb.id as usize] = f64::from(nb.score);
        }
    }
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut best = (perm.clone(), f64::NEG_INFINITY);
    loop {
        let total: f64 = perm
            .windows(2)
            .map(|p| w[p[0] as usize * n + p[1] as usize])
            .sum();
        if total > best.1 {
            best = (perm.clone(), total);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    if n == 0 {
        best.1 = 0.0;
    }
    Ok(best)
}

fn next_permutation(p: &mut [u32]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let Some(i) = (0..p.len() - 1).rev().find(|&i| p[i] < p[i + 1]) else {
        return false;
    };
    let j = (i + 1..p.len())
        .rev()
        .find(|&j| p[j] > p[i])
        .expect("pivot exists");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}
