//! Fixtures shared by the benchmarks.

use dreim_core::qnet::QNetwork;
use dreim_core::{generate, GeneratorConfig, Graph, GraphModel};

/// Powerlaw-cluster graph with `n` nodes, `m = 4`, `p = 0.05`.
pub fn plc(n: usize, seed: u64) -> Graph {
    generate(&GeneratorConfig::new(GraphModel::PowerlawCluster, n).with_seed(seed)).expect("valid generator config")
}

/// Untrained network with the default shape (d = 64, three layers).
pub fn network(seed: u64) -> QNetwork {
    QNetwork::init(64, 3, 0.05, &mut dreim_core::rng::seeded(seed)).expect("valid network shape")
}
