use std::path::Path;
use std::str::FromStr;

use anyhow::{Context, Result};
use dreim_core::heuristics::{select_degree_discount, select_greedy_celf, select_high_degree, select_random};
use dreim_core::inference::{select_seeds, InferenceConfig, Selection};
use dreim_core::qnet::QNetwork;
use dreim_core::{Checkpoint, Graph, NodeId};

use crate::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dreim,
    Random,
    Degree,
    DegreeDiscount,
    Greedy,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "dreim" => Method::Dreim,
            "random" => Method::Random,
            "degree" => Method::Degree,
            "degree-discount" | "dd" => Method::DegreeDiscount,
            "greedy" | "celf" => Method::Greedy,
            other => return Err(format!("unknown method '{other}' (dreim, random, degree, degree-discount, greedy)")),
        })
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dreim => "dreim",
            Method::Random => "random",
            Method::Degree => "degree",
            Method::DegreeDiscount => "degree-discount",
            Method::Greedy => "greedy",
        }
    }
}

/// Everything a selector may need besides the graph and budget.
pub struct Selector {
    pub network: Option<QNetwork>,
    /// Nodes per adaptive step for the learned method; 0 means the whole budget.
    pub batch: usize,
    pub greedy_simulations: usize,
    pub discount: Option<f64>,
}

impl Selector {
    pub fn new(methods: &[Method], checkpoint: Option<&Path>, batch: usize, greedy_simulations: usize) -> Result<Self> {
        let network = match (methods.contains(&Method::Dreim), checkpoint) {
            (true, None) => return Err(usage("method dreim requires --checkpoint")),
            (true, Some(path)) => Some(
                Checkpoint::load(path)
                    .with_context(|| format!("loading checkpoint {}", path.display()))?
                    .network,
            ),
            (false, _) => None,
        };
        Ok(Selector { network, batch, greedy_simulations, discount: None })
    }

    /// Seeds in selection order and, for the learned method, the step log.
    pub fn select(&self, method: Method, graph: &Graph, k: usize, seed: u64) -> Result<(Vec<NodeId>, Option<Selection>)> {
        let nodes = match method {
            Method::Dreim => {
                let net = self.network.as_ref().ok_or_else(|| usage("method dreim requires --checkpoint"))?;
                let batch = if self.batch == 0 { k.max(1) } else { self.batch.min(k.max(1)) };
                let sel = select_seeds(graph, net, &InferenceConfig::new(k, batch))?;
                return Ok((sel.seeds.nodes().to_vec(), Some(sel)));
            }
            Method::Random => select_random(graph, k, seed)?.into_nodes(),
            Method::Degree => select_high_degree(graph, k)?.into_nodes(),
            Method::DegreeDiscount => select_degree_discount(graph, k, self.discount)?.into_nodes(),
            Method::Greedy => select_greedy_celf(graph, k, self.greedy_simulations, seed)?.seeds.into_nodes(),
        };
        Ok((nodes, None))
    }
}
