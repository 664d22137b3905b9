use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphModel {
    /// Holme-Kim growth: preferential attachment plus triad formation.
    PowerlawCluster,
    BarabasiAlbert,
    WattsStrogatz,
    ErdosRenyi,
}

impl FromStr for GraphModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plc" | "powerlaw-cluster" => Ok(GraphModel::PowerlawCluster),
            "ba" | "barabasi-albert" => Ok(GraphModel::BarabasiAlbert),
            "ws" | "watts-strogatz" => Ok(GraphModel::WattsStrogatz),
            "er" | "erdos-renyi" => Ok(GraphModel::ErdosRenyi),
            other => Err(Error::Config(format!("unknown graph model '{other}'"))),
        }
    }
}

impl fmt::Display for GraphModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphModel::PowerlawCluster => "powerlaw-cluster",
            GraphModel::BarabasiAlbert => "barabasi-albert",
            GraphModel::WattsStrogatz => "watts-strogatz",
            GraphModel::ErdosRenyi => "erdos-renyi",
        })
    }
}

/// Parameters of a synthetic graph.
///
/// `m` is the number of attachment edges per new node (PLC, BA) or the number
/// of ring neighbors on each side (WS); ER ignores it. `p` is the triad
/// probability (PLC), rewiring probability (WS) or edge probability (ER).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub model: GraphModel,
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(model: GraphModel, n: usize) -> Self {
        GeneratorConfig { model, n, m: 4, p: 0.05, seed: 0 }
    }

    pub fn with_m(self, m: usize) -> Self {
        GeneratorConfig { m, ..self }
    }

    pub fn with_p(self, p: f64) -> Self {
        GeneratorConfig { p, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        GeneratorConfig { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::Config(format!("probability p={} outside [0, 1]", self.p)));
        }
        match self.model {
            GraphModel::PowerlawCluster | GraphModel::BarabasiAlbert => {
                if self.m < 1 || self.n < self.m + 1 {
                    return Err(Error::Config(format!(
                        "{} needs m >= 1 and n >= m + 1 (got n={}, m={})",
                        self.model, self.n, self.m
                    )));
                }
            }
            GraphModel::WattsStrogatz => {
                if self.m < 1 || self.n < 2 * self.m + 1 {
                    return Err(Error::Config(format!(
                        "watts-strogatz needs m >= 1 and n >= 2m + 1 (got n={}, m={})",
                        self.n, self.m
                    )));
                }
            }
            GraphModel::ErdosRenyi => {
                if self.n == 0 {
                    return Err(Error::Config("erdos-renyi needs n >= 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// Samples an undirected graph from the configured model.
pub fn generate(config: &GeneratorConfig) -> Result<Graph> {
    config.validate()?;
    let mut rng = seeded(config.seed);
    let edges = match config.model {
        GraphModel::PowerlawCluster => powerlaw_cluster(config.n, config.m, config.p, &mut rng),
        GraphModel::BarabasiAlbert => barabasi_albert(config.n, config.m, &mut rng),
        GraphModel::WattsStrogatz => watts_strogatz(config.n, config.m, config.p, &mut rng),
        GraphModel::ErdosRenyi => erdos_renyi(config.n, config.p, &mut rng),
    };
    Ok(Graph::from_edges(config.n, edges, false).0)
}

/// `m` distinct elements of `pool`, drawn uniformly (with rejection on repeats).
fn random_subset(pool: &[NodeId], m: usize, rng: &mut ChaCha8Rng) -> Vec<NodeId> {
    let mut picked = Vec::with_capacity(m);
    while picked.len() < m {
        let x = *pool.choose(rng).expect("non-empty attachment pool");
        if !picked.contains(&x) {
            picked.push(x);
        }
    }
    picked
}

// Starts from m isolated nodes; each later node attaches to m distinct targets
// drawn proportionally to degree (the first one connects to all m seeds).
fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::with_capacity(m * (n - m));
    let mut repeated: Vec<NodeId> = (0..m).collect();
    for source in m..n {
        let targets = random_subset(&repeated, m, rng);
        for &t in &targets {
            edges.push((source, t));
        }
        repeated.extend_from_slice(&targets);
        repeated.extend(std::iter::repeat_n(source, m));
    }
    edges
}

fn powerlaw_cluster(n: usize, m: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let mut adj: Vec<HashSet<NodeId>> = vec![HashSet::new(); n];
    let mut edges = Vec::with_capacity(m * (n - m));
    let mut repeated: Vec<NodeId> = (0..m).collect();
    let add = |u: NodeId, v: NodeId, adj: &mut Vec<HashSet<NodeId>>, edges: &mut Vec<_>| {
        if adj[u].insert(v) {
            adj[v].insert(u);
            edges.push((u, v));
        }
    };
    for source in m..n {
        let mut targets = random_subset(&repeated, m, rng);
        let mut target = targets.pop().expect("m >= 1");
        add(source, target, &mut adj, &mut edges);
        repeated.push(target);
        let mut count = 1;
        while count < m {
            if rng.gen::<f64>() < p {
                let mut hood: Vec<NodeId> = adj[target]
                    .iter()
                    .copied()
                    .filter(|&x| x != source && !adj[source].contains(&x))
                    .collect();
                if !hood.is_empty() {
                    // HashSet iteration order is not stable across runs
                    hood.sort_unstable();
                    let nbr = *hood.choose(rng).unwrap();
                    add(source, nbr, &mut adj, &mut edges);
                    repeated.push(nbr);
                    count += 1;
                    continue;
                }
            }
            target = targets.pop().expect("m targets drawn");
            add(source, target, &mut adj, &mut edges);
            repeated.push(target);
            count += 1;
        }
        repeated.extend(std::iter::repeat_n(source, m));
    }
    edges
}

fn watts_strogatz(n: usize, m: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let mut adj: Vec<HashSet<NodeId>> = vec![HashSet::new(); n];
    for u in 0..n {
        for j in 1..=m {
            let v = (u + j) % n;
            adj[u].insert(v);
            adj[v].insert(u);
        }
    }
    for j in 1..=m {
        for u in 0..n {
            let v = (u + j) % n;
            if rng.gen::<f64>() < p && adj[u].contains(&v) && adj[u].len() < n - 1 {
                let w = loop {
                    let w = rng.gen_range(0..n);
                    if w != u && !adj[u].contains(&w) {
                        break w;
                    }
                };
                adj[u].remove(&v);
                adj[v].remove(&u);
                adj[u].insert(w);
                adj[w].insert(u);
            }
        }
    }
    let mut edges = Vec::new();
    for (u, nbrs) in adj.iter().enumerate() {
        edges.extend(nbrs.iter().filter(|&&v| u < v).map(|&v| (u, v)));
    }
    edges.sort_unstable();
    edges
}

fn erdos_renyi(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<(NodeId, NodeId)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    edges
}
