//! Training loop: ε-greedy episodes on small synthetic graphs, n-step
//! experience assembly, mini-batch updates against a periodically synced
//! target network, and validation by the area under the inactive-rate curve.
//!
//! One iteration is one gradient step. An episode is played every
//! `interaction_period` iterations and the validation set is scored every
//! `validation_period` iterations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, TrainingMeta};
use crate::diffusion::{CascadeState, ThresholdRealization};
use crate::error::{Error, Result};
use crate::graph::{generate, GeneratorConfig, Graph, GraphModel, NodeId};
use crate::qnet::{self, Adam, Experience, QNetParams, QNetwork, ReplayBuffer};
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_episodes: u64,
    pub max_iterations: u64,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub graph_m: usize,
    pub graph_p: f64,
    pub n_step: usize,
    pub batch_size: usize,
    pub validation_period: u64,
    pub interaction_period: u64,
    pub validation_graphs: usize,
    pub validation_seed: u64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the episode horizon over which ε decays linearly.
    pub eps_decay_fraction: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub learning_rate: f64,
    /// Gradient steps between target-network syncs.
    pub target_sync: usize,
    pub embedding_dim: usize,
    pub layers: usize,
    pub replay_capacity: usize,
    /// Experiences required before the first gradient step.
    pub warmup: usize,
    pub init_scale: f64,
    pub rng_seed: u64,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_episodes: 1_000_000,
            max_iterations: 100_000,
            min_nodes: 30,
            max_nodes: 50,
            graph_m: 4,
            graph_p: 0.05,
            n_step: 5,
            batch_size: 64,
            validation_period: 300,
            interaction_period: 10,
            validation_graphs: 100,
            validation_seed: 0x005e_ed0f_7a11,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_fraction: 0.1,
            gamma: 1.0,
            alpha: 1e-3,
            learning_rate: 1e-4,
            target_sync: 1000,
            embedding_dim: 64,
            layers: 3,
            replay_capacity: qnet::REPLAY_CAPACITY,
            warmup: 1000,
            init_scale: 0.05,
            rng_seed: 1,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_step < 1 {
            return bad("n_step must be >= 1");
        }
        if self.min_nodes < self.graph_m + 1 || self.min_nodes > self.max_nodes {
            return bad("graph scale range must be non-empty with min_nodes > graph_m");
        }
        if self.validation_period < 1 || self.interaction_period < 1 || self.target_sync < 1 {
            return bad("periods must be >= 1");
        }
        if self.batch_size < 1 || self.replay_capacity < self.batch_size {
            return bad("batch_size must be >= 1 and fit in the replay buffer");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("epsilon values must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.graph_p) {
            return bad("graph_p must lie in [0, 1]");
        }
        if self.embedding_dim == 0 || !self.embedding_dim.is_multiple_of(2) || self.layers == 0 {
            return bad("embedding_dim must be even and layers >= 1");
        }
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        Ok(())
    }

    fn generator(&self, n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig::new(GraphModel::PowerlawCluster, n)
            .with_m(self.graph_m)
            .with_p(self.graph_p)
            .with_seed(seed)
    }

    /// Episodes the run can actually play: the episode budget, capped by one
    /// episode per interaction period.
    pub fn episode_horizon(&self) -> u64 {
        self.max_episodes.min(self.max_iterations / self.interaction_period).max(1)
    }

    /// Exploration rate for the `episode`-th episode (0-based): linear decay
    /// over the first `eps_decay_fraction` of the episode horizon, then constant.
    pub fn epsilon(&self, episode: u64) -> f64 {
        let horizon = self.eps_decay_fraction * self.episode_horizon() as f64;
        let progress = if horizon <= 0.0 { 1.0 } else { (episode as f64 / horizon).min(1.0) };
        self.eps_start + (self.eps_end - self.eps_start) * progress
    }
}

/// A full rollout to complete activation.
#[derive(Debug, Clone)]
pub struct EpisodeTrace {
    pub graph: Arc<Graph>,
    pub thresholds: ThresholdRealization,
    pub actions: Vec<NodeId>,
    /// `σ_t - 1` after each action.
    pub rewards: Vec<f64>,
}

impl EpisodeTrace {
    /// Seeds needed to activate every node.
    pub fn k_star(&self) -> usize {
        self.actions.len()
    }
}

/// Plays one episode: with probability `epsilon` a uniformly random non-seed
/// node, otherwise the arg-max of Q (smaller id on ties), until every node is active.
pub fn run_episode(
    network: &QNetwork,
    graph: Arc<Graph>,
    thresholds: ThresholdRealization,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<EpisodeTrace> {
    let n = graph.node_count();
    let mut state = CascadeState::new(n);
    let mut mask = vec![false; n];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    while !state.all_active() {
        let action = if rng.gen::<f64>() < epsilon {
            let free: Vec<NodeId> = (0..n).filter(|&v| !mask[v]).collect();
            free[rng.gen_range(0..free.len())]
        } else {
            let (candidates, q) = network.q_non_seeds(&graph, &mask)?;
            candidates[qnet::argmax(&candidates, &q).expect("non-seed node exists while inactive nodes remain")]
        };
        mask[action] = true;
        state.add_seed(&graph, &thresholds, action);
        actions.push(action);
        rewards.push(qnet::reward(&state));
    }
    Ok(EpisodeTrace { graph, thresholds, actions, rewards })
}

/// One experience per step, looking `min(n, k* - t)` steps ahead.
pub fn assemble_experiences(trace: &EpisodeTrace, n: usize) -> Vec<Experience> {
    let k = trace.k_star();
    let actions: Arc<[NodeId]> = trace.actions.clone().into();
    (0..k)
        .map(|t| {
            let h = n.min(k - t);
            Experience {
                graph: trace.graph.clone(),
                actions: actions.clone(),
                t,
                next: t + h,
                reward: trace.rewards[t..t + h].iter().sum(),
                terminal: t + n >= k,
            }
        })
        .collect()
}

/// Greedy rollout and its normalized area under the inactive-rate curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReturnReport {
    /// `(1/N) Σ_{k=1}^{k*} (1 - σ_k)`
    pub value: f64,
    pub rewards: Vec<f64>,
    pub actions: Vec<NodeId>,
}

impl ReturnReport {
    pub fn k_star(&self) -> usize {
        self.actions.len()
    }
}

pub fn compute_return(network: &QNetwork, graph: &Graph, thresholds: &ThresholdRealization) -> Result<ReturnReport> {
    let n = graph.node_count();
    let mut state = CascadeState::new(n);
    let mut mask = vec![false; n];
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut area = 0.0;
    while !state.all_active() {
        let (candidates, q) = network.q_non_seeds(graph, &mask)?;
        let v = candidates[qnet::argmax(&candidates, &q).expect("candidates non-empty")];
        mask[v] = true;
        state.add_seed(graph, thresholds, v);
        actions.push(v);
        rewards.push(qnet::reward(&state));
        area += (n - state.active_count()) as f64 / n as f64;
    }
    Ok(ReturnReport { value: if n == 0 { 0.0 } else { area / n as f64 }, rewards, actions })
}

/// A held-out graph with its fixed threshold draw.
#[derive(Debug, Clone)]
pub struct ValidationCase {
    pub graph: Graph,
    pub thresholds: ThresholdRealization,
}

/// Held-out graphs from `config.validation_seed`, independent of the training stream.
pub fn validation_set(config: &TrainConfig) -> Result<Vec<ValidationCase>> {
    let mut rng = rng::seeded(config.validation_seed);
    (0..config.validation_graphs)
        .map(|_| {
            let n = rng.gen_range(config.min_nodes..=config.max_nodes);
            let graph = generate(&config.generator(n, rng.next_u64()))?;
            let thresholds = ThresholdRealization::sample(n, rng.next_u64());
            Ok(ValidationCase { graph, thresholds })
        })
        .collect()
}

/// Mean Return over a validation set; case scores are summed in order.
pub fn mean_return(network: &QNetwork, cases: &[ValidationCase]) -> Result<f64> {
    if cases.is_empty() {
        return Ok(0.0);
    }
    let values: Vec<Result<f64>> = cases
        .par_iter()
        .map(|c| compute_return(network, &c.graph, &c.thresholds).map(|r| r.value))
        .collect();
    let mut sum = 0.0;
    for v in values {
        sum += v?;
    }
    Ok(sum / cases.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub iteration: u64,
    /// Mean loss of the gradient steps since the previous row.
    pub loss: Option<f64>,
    pub val_return: f64,
    pub episodes: u64,
}

pub const LOG_HEADER: &str = "iteration,loss,val_return,episodes";

pub fn write_log<W: Write>(rows: &[LogRow], mut out: W) -> Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for r in rows {
        let loss = r.loss.map(|l| format!("{l:?}")).unwrap_or_default();
        writeln!(out, "{},{},{:?},{}", r.iteration, loss, r.val_return, r.episodes)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub iterations: u64,
    pub episodes: u64,
    pub gradient_steps: u64,
    pub initial_return: f64,
    pub best_return: f64,
    pub best_iteration: u64,
    pub final_return: f64,
    pub log: Vec<LogRow>,
}

pub struct Trainer {
    config: TrainConfig,
    params: QNetParams,
    adam: Adam,
    buffer: ReplayBuffer,
    graph_rng: Rng,
    explore_rng: Rng,
    replay_rng: Rng,
    validation: Vec<ValidationCase>,
    iteration: u64,
    episodes: u64,
    gradient_steps: u64,
    log: Vec<LogRow>,
    pending_loss: (f64, u64),
    best: Option<(f64, u64, QNetwork)>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng::stream(config.rng_seed, 0);
        let network = QNetwork::init(config.embedding_dim, config.layers, config.init_scale, &mut init_rng)?;
        let adam = Adam::new(&network, config.learning_rate);
        let validation = validation_set(&config)?;
        Ok(Trainer {
            params: QNetParams::new(network),
            adam,
            buffer: ReplayBuffer::new(config.replay_capacity),
            graph_rng: rng::stream(config.rng_seed, 1),
            explore_rng: rng::stream(config.rng_seed, 2),
            replay_rng: rng::stream(config.rng_seed, 3),
            validation,
            iteration: 0,
            episodes: 0,
            gradient_steps: 0,
            log: Vec::new(),
            pending_loss: (0.0, 0),
            best: None,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn params(&self) -> &QNetParams {
        &self.params
    }

    pub fn network(&self) -> &QNetwork {
        &self.params.online
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn validation_cases(&self) -> &[ValidationCase] {
        &self.validation
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Network with the lowest validation Return seen so far.
    pub fn best_network(&self) -> &QNetwork {
        self.best.as_ref().map(|b| &b.2).unwrap_or(&self.params.online)
    }

    fn sample_graph(&mut self) -> Result<(Arc<Graph>, ThresholdRealization)> {
        let n = self.graph_rng.gen_range(self.config.min_nodes..=self.config.max_nodes);
        let graph = generate(&self.config.generator(n, self.graph_rng.next_u64()))?;
        let thresholds = ThresholdRealization::sample(n, self.graph_rng.next_u64());
        Ok((Arc::new(graph), thresholds))
    }

    /// Plays one training episode and stores its experiences.
    pub fn play_episode(&mut self) -> Result<EpisodeTrace> {
        let (graph, thresholds) = self.sample_graph()?;
        let eps = self.config.epsilon(self.episodes);
        let trace = run_episode(&self.params.online, graph, thresholds, eps, &mut self.explore_rng)?;
        for exp in assemble_experiences(&trace, self.config.n_step) {
            self.buffer.push(exp);
        }
        self.episodes += 1;
        Ok(trace)
    }

    fn ready(&self) -> bool {
        self.buffer.len() >= self.config.warmup.max(self.config.batch_size)
    }

    /// One mini-batch update. Returns `None` while the buffer is warming up.
    pub fn gradient_step(&mut self) -> Result<Option<f64>> {
        if !self.ready() {
            return Ok(None);
        }
        let batch = self
            .buffer
            .sample(self.config.batch_size, &mut self.replay_rng)
            .expect("buffer holds a full batch");
        let (loss, grads) = qnet::loss_and_gradients(&batch, &self.params, self.config.gamma, self.config.alpha)
            .map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!(
                    "{what} at iteration {} (divergence)",
                    self.iteration
                )),
                other => other,
            })?;
        self.adam.update(&mut self.params.online, &grads);
        self.gradient_steps += 1;
        self.params.steps_since_sync += 1;
        if self.params.steps_since_sync >= self.config.target_sync {
            self.params.sync_target();
        }
        Ok(Some(loss))
    }

    /// Scores the online network, logs a row and tracks the best snapshot.
    pub fn validate(&mut self) -> Result<f64> {
        let value = mean_return(&self.params.online, &self.validation)?;
        let (sum, count) = std::mem::take(&mut self.pending_loss);
        self.log.push(LogRow {
            iteration: self.iteration,
            loss: (count > 0).then(|| sum / count as f64),
            val_return: value,
            episodes: self.episodes,
        });
        let improved = self.best.as_ref().is_none_or(|b| value < b.0);
        if improved {
            self.best = Some((value, self.iteration, self.params.online.clone()));
            if let Some(dir) = self.config.checkpoint_dir.clone() {
                self.write_checkpoint(&dir.join("best.ckpt"), self.best_network(), value)?;
            }
        }
        Ok(value)
    }

    fn episodes_left(&self) -> bool {
        self.episodes < self.config.max_episodes
    }

    pub fn checkpoint(&self, network: &QNetwork, val_return: Option<f64>) -> Checkpoint {
        Checkpoint {
            network: network.clone(),
            adam: Some(self.adam.clone()),
            meta: TrainingMeta {
                iteration: self.iteration,
                episodes: self.episodes,
                val_return,
                rng_seed: self.config.rng_seed,
            },
        }
    }

    fn write_checkpoint(&self, path: &Path, network: &QNetwork, val_return: f64) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        self.checkpoint(network, Some(val_return)).save(path)
    }

    /// Runs the full schedule.
    pub fn train(&mut self) -> Result<TrainSummary> {
        let warm = self.config.warmup.max(self.config.batch_size);
        while self.buffer.len() < warm && self.episodes_left() {
            self.play_episode()?;
        }
        let initial = self.validate()?;
        while self.iteration < self.config.max_iterations {
            if self.iteration.is_multiple_of(self.config.interaction_period) {
                if !self.episodes_left() {
                    break;
                }
                self.play_episode()?;
            }
            if let Some(loss) = self.gradient_step()? {
                self.pending_loss.0 += loss;
                self.pending_loss.1 += 1;
            }
            self.iteration += 1;
            if self.iteration.is_multiple_of(self.config.validation_period) {
                self.validate()?;
            }
        }
        if self.log.last().map(|r| r.iteration) != Some(self.iteration) {
            self.validate()?;
        }
        let final_return = self.log.last().map(|r| r.val_return).unwrap_or(initial);
        let (best_return, best_iteration, _) = self.best.clone().expect("validated at least once");
        if let Some(dir) = self.config.checkpoint_dir.clone() {
            self.write_checkpoint(&dir.join("final.ckpt"), &self.params.online.clone(), final_return)?;
            let file = fs::File::create(dir.join("train_log.csv"))?;
            write_log(&self.log, std::io::BufWriter::new(file))?;
        }
        Ok(TrainSummary {
            iterations: self.iteration,
            episodes: self.episodes,
            gradient_steps: self.gradient_steps,
            initial_return: initial,
            best_return,
            best_iteration,
            final_return,
            log: self.log.clone(),
        })
    }
}
