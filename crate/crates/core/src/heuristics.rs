//! Classical seed-selection baselines.
//!
//! Ties are always broken toward the smaller node id.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::diffusion::{sample_live_edges, LiveEdgeGraph, ReachScratch};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;

/// An ordered list of distinct seed nodes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SeedSet {
    nodes: Vec<NodeId>,
}

impl SeedSet {
    pub fn new() -> Self {
        SeedSet::default()
    }

    /// Panics on repeated nodes.
    pub fn from_nodes(nodes: Vec<NodeId>) -> Self {
        let mut sorted = nodes.clone();
        sorted.sort_unstable();
        assert!(sorted.windows(2).all(|w| w[0] != w[1]), "duplicate seed");
        SeedSet { nodes }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.nodes.contains(&v)
    }

    pub fn push(&mut self, v: NodeId) {
        assert!(!self.contains(v), "node {v} already selected");
        self.nodes.push(v);
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &v in &self.nodes {
            mask[v] = true;
        }
        mask
    }

    pub fn into_nodes(self) -> Vec<NodeId> {
        self.nodes
    }
}

pub(crate) fn check_budget(graph: &Graph, k: usize) -> Result<()> {
    if k > graph.node_count() {
        Err(Error::Budget { k, n: graph.node_count() })
    } else {
        Ok(())
    }
}

/// `k` distinct nodes drawn uniformly.
pub fn select_random(graph: &Graph, k: usize, rng_seed: u64) -> Result<SeedSet> {
    check_budget(graph, k)?;
    let mut rng = rng::seeded(rng_seed);
    Ok(SeedSet::from_nodes(index::sample(&mut rng, graph.node_count(), k).into_vec()))
}

/// Top-`k` nodes by total outgoing weight.
pub fn select_high_degree(graph: &Graph, k: usize) -> Result<SeedSet> {
    check_budget(graph, k)?;
    let score: Vec<f64> = (0..graph.node_count()).map(|v| graph.out_weight_sum(v)).collect();
    let mut order: Vec<NodeId> = (0..graph.node_count()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(SeedSet::from_nodes(order))
}

/// Default DegreeDiscount propagation parameter: the mean arc weight.
pub fn mean_arc_weight(graph: &Graph) -> f64 {
    if graph.edge_count() == 0 {
        return 0.0;
    }
    graph.arcs().map(|(_, _, w)| w).sum::<f64>() / graph.edge_count() as f64
}

/// DegreeDiscount: repeatedly take the node with the largest discounted degree
/// `d - 2t - (d - t)·t·p`, where `d` is the total outgoing weight and `t` the
/// number of already selected nodes with an arc into it.
pub fn select_degree_discount(graph: &Graph, k: usize, p: Option<f64>) -> Result<SeedSet> {
    check_budget(graph, k)?;
    let p = p.unwrap_or_else(|| mean_arc_weight(graph));
    let n = graph.node_count();
    let degree: Vec<f64> = (0..n).map(|v| graph.out_weight_sum(v)).collect();
    let mut discounted = degree.clone();
    let mut hits = vec![0usize; n];
    let mut chosen = vec![false; n];
    let mut seeds = SeedSet::new();
    for _ in 0..k {
        let mut best: Option<NodeId> = None;
        for v in 0..n {
            if chosen[v] {
                continue;
            }
            // strict > keeps the smaller id on ties
            if best.is_none_or(|b| discounted[v] > discounted[b]) {
                best = Some(v);
            }
        }
        let u = best.expect("k <= n leaves a candidate");
        chosen[u] = true;
        seeds.push(u);
        for &v in graph.out_neighbors(u) {
            if chosen[v] {
                continue;
            }
            hits[v] += 1;
            let t = hits[v] as f64;
            discounted[v] = degree[v] - 2.0 * t - (degree[v] - t) * t * p;
        }
    }
    Ok(seeds)
}

/// Result of greedy hill climbing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyOutcome {
    pub seeds: SeedSet,
    /// Estimated spread after each selection.
    pub trace: Vec<f64>,
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    gain: u64,
    node: NodeId,
    round: usize,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.cmp(&other.gain).then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Estimated-spread objective over a fixed pool of live-edge samples. Every
/// candidate is scored on the same samples, so the objective is a deterministic
/// coverage function and hence exactly monotone and submodular.
pub struct LiveEdgeObjective {
    samples: Vec<LiveEdgeGraph>,
    covered: Vec<Vec<bool>>,
    total: u64,
    n: usize,
}

impl LiveEdgeObjective {
    pub fn new(graph: &Graph, simulations: usize, rng_seed: u64) -> Self {
        let samples = sample_live_edges(graph, simulations, rng_seed);
        let n = graph.node_count();
        LiveEdgeObjective { covered: vec![vec![false; n]; samples.len()], samples, total: 0, n }
    }

    /// Marginal coverage of `v`, summed over samples.
    pub fn gain(&self, v: NodeId, scratch: &mut ReachScratch) -> u64 {
        self.samples
            .iter()
            .zip(&self.covered)
            .map(|(s, c)| s.marginal(v, c, scratch) as u64)
            .sum()
    }

    pub fn commit(&mut self, v: NodeId) {
        let mut stack = Vec::new();
        for (s, c) in self.samples.iter().zip(self.covered.iter_mut()) {
            self.total += s.cover(v, c, &mut stack) as u64;
        }
    }

    /// Current estimated spread (fraction of nodes).
    pub fn spread(&self) -> f64 {
        if self.n == 0 || self.samples.is_empty() {
            return 0.0;
        }
        self.total as f64 / (self.samples.len() * self.n) as f64
    }
}

/// Greedy hill climbing on estimated spread with lazy (CELF) re-evaluation.
///
/// The estimate uses `simulations` live-edge samples drawn once from `rng_seed`
/// and shared by all candidate evaluations.
pub fn select_greedy_celf(graph: &Graph, k: usize, simulations: usize, rng_seed: u64) -> Result<GreedyOutcome> {
    check_budget(graph, k)?;
    if simulations == 0 {
        return Err(Error::Config("greedy needs at least one simulation".into()));
    }
    let mut objective = LiveEdgeObjective::new(graph, simulations, rng_seed);
    let initial: Vec<u64> = (0..graph.node_count())
        .into_par_iter()
        .map_init(ReachScratch::default, |scratch, v| objective.gain(v, scratch))
        .collect();
    let mut heap: BinaryHeap<Candidate> = initial
        .into_iter()
        .enumerate()
        .map(|(node, gain)| Candidate { gain, node, round: 0 })
        .collect();

    let mut scratch = ReachScratch::default();
    let mut seeds = SeedSet::new();
    let mut trace = Vec::with_capacity(k);
    while seeds.len() < k {
        let top = heap.pop().expect("candidates remain while |S| < k <= n");
        let round = seeds.len();
        if top.round == round {
            objective.commit(top.node);
            seeds.push(top.node);
            trace.push(objective.spread());
        } else {
            let gain = objective.gain(top.node, &mut scratch);
            heap.push(Candidate { gain, node: top.node, round });
        }
    }
    Ok(GreedyOutcome { seeds, trace })
}
