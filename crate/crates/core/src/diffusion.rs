//! Linear Threshold diffusion.
//!
//! With the thresholds fixed by a [`ThresholdRealization`] a cascade is
//! deterministic: a node turns active once the weights of its active
//! in-neighbors reach its threshold. Expected spread averages the final active
//! fraction over independent threshold draws.

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::{self, Rng};

/// Slack on the activation comparison so that sums such as `0.5 + 0.5`
/// reach a threshold of exactly `1.0` regardless of summation order.
pub const ACTIVATION_TOLERANCE: f64 = 1e-12;

/// Largest graph accepted by [`exact_spread`].
pub const EXACT_MAX_NODES: usize = 16;
/// Largest number of live-edge configurations [`exact_spread`] will visit.
pub const EXACT_MAX_CONFIGURATIONS: u64 = 1 << 26;

/// One draw of node thresholds, each in the open interval (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRealization {
    theta: Vec<f64>,
    seed: u64,
}

impl ThresholdRealization {
    pub fn sample(n: usize, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        Self::sample_with(n, &mut rng, seed)
    }

    pub fn sample_with(n: usize, rng: &mut Rng, seed: u64) -> Self {
        let mut theta = Vec::with_capacity(n);
        fill_thresholds(&mut theta, n, rng);
        ThresholdRealization { theta, seed }
    }

    pub fn from_values(theta: Vec<f64>) -> Result<Self> {
        if let Some(bad) = theta.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::Contract(format!("threshold {bad} outside (0, 1)")));
        }
        Ok(ThresholdRealization { theta, seed: 0 })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

fn fill_thresholds(theta: &mut Vec<f64>, n: usize, rng: &mut Rng) {
    theta.clear();
    theta.extend((0..n).map(|_| loop {
        let t: f64 = rng.gen();
        if t > 0.0 {
            break t;
        }
    }));
}

/// Order in which newly activated nodes are expanded. The fixed point does not
/// depend on it; the choice exists so that this can be checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrontierOrder {
    Fifo,
    Lifo,
}

/// Cascade bookkeeping under one threshold realization.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeState {
    active: Vec<bool>,
    /// Weight received from active in-neighbors. Frozen once a node activates.
    accumulated: Vec<f64>,
    frontier: Vec<NodeId>,
    active_count: usize,
}

impl CascadeState {
    pub fn new(n: usize) -> Self {
        CascadeState {
            active: vec![false; n],
            accumulated: vec![0.0; n],
            frontier: Vec::new(),
            active_count: 0,
        }
    }

    pub fn is_active(&self, v: NodeId) -> bool {
        self.active[v]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn accumulated(&self) -> &[f64] {
        &self.accumulated
    }

    pub fn active_count(&self) -> usize {
        self.active_count
    }

    pub fn node_count(&self) -> usize {
        self.active.len()
    }

    /// Fraction of active nodes.
    pub fn spread(&self) -> f64 {
        if self.active.is_empty() {
            0.0
        } else {
            self.active_count as f64 / self.active.len() as f64
        }
    }

    pub fn all_active(&self) -> bool {
        self.active_count == self.active.len()
    }

    fn reset(&mut self) {
        self.active.iter_mut().for_each(|a| *a = false);
        self.accumulated.iter_mut().for_each(|a| *a = 0.0);
        self.frontier.clear();
        self.active_count = 0;
    }

    fn activate(&mut self, v: NodeId) {
        self.active[v] = true;
        self.active_count += 1;
        self.frontier.push(v);
    }

    /// Adds a seed to a fixed-point state and propagates to the new fixed point.
    /// Returns the number of newly activated nodes (0 if `v` was already active).
    pub fn add_seed(&mut self, graph: &Graph, thresholds: &ThresholdRealization, v: NodeId) -> usize {
        self.add_seed_ordered(graph, thresholds, v, FrontierOrder::Lifo)
    }

    fn add_seed_ordered(
        &mut self,
        graph: &Graph,
        thresholds: &ThresholdRealization,
        v: NodeId,
        order: FrontierOrder,
    ) -> usize {
        if self.active[v] {
            return 0;
        }
        let before = self.active_count;
        self.activate(v);
        self.propagate(graph, thresholds.theta(), order);
        self.active_count - before
    }

    fn propagate(&mut self, graph: &Graph, theta: &[f64], order: FrontierOrder) {
        let mut head = 0;
        loop {
            let u = match order {
                FrontierOrder::Lifo => match self.frontier.pop() {
                    Some(u) => u,
                    None => break,
                },
                FrontierOrder::Fifo => {
                    if head == self.frontier.len() {
                        self.frontier.clear();
                        break;
                    }
                    head += 1;
                    self.frontier[head - 1]
                }
            };
            for (&v, &w) in graph.out_neighbors(u).iter().zip(graph.out_weights(u)) {
                if self.active[v] {
                    continue;
                }
                self.accumulated[v] += w;
                if self.accumulated[v] + ACTIVATION_TOLERANCE >= theta[v] {
                    self.activate(v);
                }
            }
        }
    }
}

/// Runs the cascade from `seeds` to its fixed point.
pub fn simulate(graph: &Graph, seeds: &[NodeId], thresholds: &ThresholdRealization) -> CascadeState {
    simulate_ordered(graph, seeds, thresholds, FrontierOrder::Lifo)
}

pub fn simulate_ordered(
    graph: &Graph,
    seeds: &[NodeId],
    thresholds: &ThresholdRealization,
    order: FrontierOrder,
) -> CascadeState {
    let mut state = CascadeState::new(graph.node_count());
    run_into(&mut state, graph, seeds, thresholds.theta(), order);
    state
}

fn run_into(state: &mut CascadeState, graph: &Graph, seeds: &[NodeId], theta: &[f64], order: FrontierOrder) {
    state.reset();
    for &s in seeds {
        if !state.active[s] {
            state.activate(s);
        }
    }
    state.propagate(graph, theta, order);
}

/// The fixed point for the seed set of `state` plus `new_seed`.
pub fn simulate_incremental(
    graph: &Graph,
    state: &CascadeState,
    new_seed: NodeId,
    thresholds: &ThresholdRealization,
) -> CascadeState {
    let mut next = state.clone();
    next.add_seed(graph, thresholds, new_seed);
    next
}

/// Monte-Carlo estimate of the expected active fraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub simulations: usize,
}

impl SpreadEstimate {
    /// Mean number of active nodes.
    pub fn active_count(&self, n: usize) -> f64 {
        self.mean * n as f64
    }
}

/// Averages the final active fraction over `simulations` independent threshold
/// draws. Simulation `i` uses stream `i` of `rng_seed`, and the reduction is over
/// integer counts, so the result does not depend on the thread count.
pub fn estimate_spread(graph: &Graph, seeds: &[NodeId], simulations: usize, rng_seed: u64) -> SpreadEstimate {
    assert!(simulations >= 1, "at least one simulation is required");
    let n = graph.node_count();
    if n == 0 {
        return SpreadEstimate { mean: 0.0, std_error: 0.0, simulations };
    }
    let (sum, sum_sq) = (0..simulations as u64)
        .into_par_iter()
        .map_init(
            || (CascadeState::new(n), Vec::with_capacity(n)),
            |(state, theta), i| {
                let mut rng = rng::stream(rng_seed, i);
                fill_thresholds(theta, n, &mut rng);
                run_into(state, graph, seeds, theta, FrontierOrder::Lifo);
                let c = state.active_count as u64;
                (c, (c as u128) * (c as u128))
            },
        )
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    summarize(sum, sum_sq, simulations, n)
}

fn summarize(sum: u64, sum_sq: u128, simulations: usize, n: usize) -> SpreadEstimate {
    let sims = simulations as f64;
    let mean_count = sum as f64 / sims;
    let std_error = if simulations > 1 {
        // exact integer numerator: sims * Σc² - (Σc)²
        let num = (simulations as u128) * sum_sq - (sum as u128) * (sum as u128);
        let var = num as f64 / (sims * (sims - 1.0));
        var.max(0.0).sqrt() / sims.sqrt() / n as f64
    } else {
        0.0
    };
    SpreadEstimate { mean: mean_count / n as f64, std_error, simulations }
}

/// Exact expected spread by enumerating live-edge configurations: every
/// non-seed node keeps at most one incoming arc, arc `(u, v)` with probability
/// `w(u, v)`, and the active set is everything reachable from the seeds.
pub fn exact_spread(graph: &Graph, seeds: &[NodeId]) -> Result<f64> {
    let n = graph.node_count();
    if n > EXACT_MAX_NODES {
        return Err(Error::Size(format!("{n} nodes, limit is {EXACT_MAX_NODES}")));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut is_seed = vec![false; n];
    for &s in seeds {
        is_seed[s] = true;
    }

    // choices[v] = list of (parent, probability); seeds need no choice
    let choices: Vec<Vec<(Option<NodeId>, f64)>> = (0..n)
        .map(|v| {
            if is_seed[v] {
                return vec![(None, 1.0)];
            }
            let mut opts: Vec<(Option<NodeId>, f64)> = graph
                .in_neighbors(v)
                .iter()
                .zip(graph.in_weights(v))
                .filter(|(_, &w)| w > 0.0)
                .map(|(&u, &w)| (Some(u), w))
                .collect();
            let rest = 1.0 - opts.iter().map(|o| o.1).sum::<f64>();
            if rest > 1e-15 {
                opts.push((None, rest));
            }
            opts
        })
        .collect();
    let configurations = choices
        .iter()
        .try_fold(1u64, |acc, c| acc.checked_mul(c.len() as u64))
        .filter(|&c| c <= EXACT_MAX_CONFIGURATIONS)
        .ok_or_else(|| Error::Size(format!("more than {EXACT_MAX_CONFIGURATIONS} live-edge configurations")))?;
    debug_assert!(configurations >= 1);

    let mut parent = vec![None; n];
    let total = enumerate(0, 1.0, &choices, &mut parent, &is_seed);
    Ok(total / n as f64)
}

fn enumerate(
    v: usize,
    prob: f64,
    choices: &[Vec<(Option<NodeId>, f64)>],
    parent: &mut [Option<NodeId>],
    is_seed: &[bool],
) -> f64 {
    if v == choices.len() {
        return prob * reached_count(parent, is_seed) as f64;
    }
    let mut acc = 0.0;
    for &(p, w) in &choices[v] {
        parent[v] = p;
        acc += enumerate(v + 1, prob * w, choices, parent, is_seed);
    }
    acc
}

// A node is reached iff walking its chosen parents hits a seed.
fn reached_count(parent: &[Option<NodeId>], is_seed: &[bool]) -> usize {
    let n = parent.len();
    (0..n)
        .filter(|&v| {
            let mut x = v;
            for _ in 0..=n {
                if is_seed[x] {
                    return true;
                }
                match parent[x] {
                    Some(p) => x = p,
                    None => return false,
                }
            }
            false
        })
        .count()
}

/// A sampled live-edge graph: each node keeps at most one incoming arc, chosen
/// with probability equal to its weight. Reachability from a seed set in this
/// graph has the same distribution as the LT active set under uniform thresholds.
#[derive(Debug, Clone)]
pub struct LiveEdgeGraph {
    offsets: Vec<u32>,
    children: Vec<u32>,
}

impl LiveEdgeGraph {
    pub fn sample(graph: &Graph, rng: &mut Rng) -> Self {
        let n = graph.node_count();
        let mut parent: Vec<u32> = vec![u32::MAX; n];
        for (v, slot) in parent.iter_mut().enumerate() {
            let r: f64 = rng.gen();
            let mut cum = 0.0;
            for (&u, &w) in graph.in_neighbors(v).iter().zip(graph.in_weights(v)) {
                cum += w;
                if r < cum {
                    *slot = u as u32;
                    break;
                }
            }
        }
        let mut offsets = vec![0u32; n + 1];
        for &p in &parent {
            if p != u32::MAX {
                offsets[p as usize + 1] += 1;
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut children = vec![0u32; offsets[n] as usize];
        for (v, &p) in parent.iter().enumerate() {
            if p != u32::MAX {
                children[cursor[p as usize] as usize] = v as u32;
                cursor[p as usize] += 1;
            }
        }
        LiveEdgeGraph { offsets, children }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn children(&self, v: NodeId) -> &[u32] {
        &self.children[self.offsets[v] as usize..self.offsets[v + 1] as usize]
    }

    /// Number of nodes reachable from `v` without entering `covered`. Because a
    /// reachable set is closed under successors, this is the marginal coverage of `v`.
    pub fn marginal(&self, v: NodeId, covered: &[bool], scratch: &mut ReachScratch) -> usize {
        if covered[v] {
            return 0;
        }
        scratch.begin(self.node_count());
        let epoch = scratch.epoch;
        scratch.stamp[v] = epoch;
        scratch.stack.push(v as u32);
        let mut count = 0;
        while let Some(x) = scratch.stack.pop() {
            count += 1;
            for &c in self.children(x as usize) {
                let c = c as usize;
                if !covered[c] && scratch.stamp[c] != epoch {
                    scratch.stamp[c] = epoch;
                    scratch.stack.push(c as u32);
                }
            }
        }
        count
    }

    /// Marks everything reachable from `v` as covered; returns how many nodes were added.
    pub fn cover(&self, v: NodeId, covered: &mut [bool], stack: &mut Vec<u32>) -> usize {
        if covered[v] {
            return 0;
        }
        covered[v] = true;
        stack.clear();
        stack.push(v as u32);
        let mut count = 0;
        while let Some(x) = stack.pop() {
            count += 1;
            for &c in self.children(x as usize) {
                if !covered[c as usize] {
                    covered[c as usize] = true;
                    stack.push(c);
                }
            }
        }
        count
    }
}

/// Reusable visit marks for [`LiveEdgeGraph::marginal`].
#[derive(Debug, Default, Clone)]
pub struct ReachScratch {
    stamp: Vec<u32>,
    epoch: u32,
    stack: Vec<u32>,
}

impl ReachScratch {
    fn begin(&mut self, n: usize) {
        if self.stamp.len() != n || self.epoch == u32::MAX {
            self.stamp = vec![0; n];
            self.epoch = 0;
        }
        self.epoch += 1;
        self.stack.clear();
    }
}

/// `count` live-edge graphs, graph `i` drawn from stream `i` of `rng_seed`.
pub fn sample_live_edges(graph: &Graph, count: usize, rng_seed: u64) -> Vec<LiveEdgeGraph> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| LiveEdgeGraph::sample(graph, &mut rng::stream(rng_seed, i)))
        .collect()
}
