//! Q-driven seed selection.
//!
//! Each adaptive step re-encodes the graph with the current seeds marked and
//! adds the `batch` highest-Q non-seed nodes. `batch = 1` re-encodes after every
//! pick; `batch = budget` ranks once.

use serde::Serialize;

use crate::diffusion::{estimate_spread, SpreadEstimate};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::heuristics::{check_budget, SeedSet};
use crate::qnet::QNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferenceConfig {
    pub budget: usize,
    /// Nodes added per adaptive step, `1 <= batch <= budget` (any value when the budget is 0).
    pub batch: usize,
}

impl InferenceConfig {
    pub fn new(budget: usize, batch: usize) -> Self {
        InferenceConfig { budget, batch }
    }

    /// One adaptive step for the whole budget.
    pub fn all_at_once(budget: usize) -> Self {
        InferenceConfig { budget, batch: budget.max(1) }
    }

    pub fn steps(&self) -> usize {
        self.budget.div_ceil(self.batch.max(1))
    }
}

/// Q statistics of one adaptive step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepSnapshot {
    pub step: usize,
    pub candidates: usize,
    pub chosen: Vec<NodeId>,
    pub chosen_q: Vec<f64>,
    pub q_max: f64,
    pub q_min: f64,
    pub q_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Selection {
    pub seeds: SeedSet,
    pub steps: Vec<StepSnapshot>,
}

/// Positions of the `count` largest values, ordered by decreasing value and
/// then increasing candidate id.
pub fn top_by_q(candidates: &[NodeId], q: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    let cmp = |&a: &usize, &b: &usize| q[b].total_cmp(&q[a]).then(candidates[a].cmp(&candidates[b]));
    let count = count.min(idx.len());
    if count == 0 {
        return Vec::new();
    }
    if count < idx.len() {
        idx.select_nth_unstable_by(count - 1, cmp);
        idx.truncate(count);
    }
    idx.sort_unstable_by(cmp);
    idx
}

pub fn select_seeds(graph: &Graph, network: &QNetwork, config: &InferenceConfig) -> Result<Selection> {
    check_budget(graph, config.budget)?;
    if config.budget > 0 && (config.batch == 0 || config.batch > config.budget) {
        return Err(Error::Config(format!(
            "batch {} must lie in 1..={}",
            config.batch, config.budget
        )));
    }
    network.validate()?;
    let n = graph.node_count();
    let mut mask = vec![false; n];
    let mut seeds = SeedSet::new();
    let mut steps = Vec::with_capacity(config.steps());
    while seeds.len() < config.budget {
        let take = config.batch.min(config.budget - seeds.len());
        let (candidates, q) = network.q_non_seeds(graph, &mask)?;
        let picked = top_by_q(&candidates, &q, take);
        let mut chosen = Vec::with_capacity(take);
        let mut chosen_q = Vec::with_capacity(take);
        for &i in &picked {
            chosen.push(candidates[i]);
            chosen_q.push(q[i]);
            mask[candidates[i]] = true;
            seeds.push(candidates[i]);
        }
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &x in &q {
            lo = lo.min(x);
            hi = hi.max(x);
            sum += x;
        }
        steps.push(StepSnapshot {
            step: steps.len(),
            candidates: candidates.len(),
            chosen,
            chosen_q,
            q_max: hi,
            q_min: lo,
            q_mean: sum / q.len() as f64,
        });
    }
    Ok(Selection { seeds, steps })
}

/// Spread of a seed set with the absolute active count alongside the rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionReport {
    pub spread: SpreadEstimate,
    pub active_rate: f64,
    pub active_count: f64,
    pub nodes: usize,
    pub seeds: usize,
}

pub fn evaluate_solution(graph: &Graph, seeds: &[NodeId], simulations: usize, rng_seed: u64) -> SolutionReport {
    let spread = estimate_spread(graph, seeds, simulations, rng_seed);
    SolutionReport {
        spread,
        active_rate: spread.mean,
        active_count: spread.active_count(graph.node_count()),
        nodes: graph.node_count(),
        seeds: seeds.len(),
    }
}
