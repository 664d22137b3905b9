//! Weighted directed graphs in compressed adjacency form.
//!
//! Every arc `(u, v)` carries the Linear Threshold weight `1 / indeg(v)`, so the
//! incoming weights of any node with at least one in-neighbor sum to one.
//! Undirected inputs are stored as two opposite arcs.

mod generate;
mod io;

pub use generate::{generate, GeneratorConfig, GraphModel};
pub use io::{load_edge_list, parse_edge_list, write_edge_list, LoadReport};

pub type NodeId = usize;

/// Counts of input arcs discarded while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildStats {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl BuildStats {
    pub fn dropped(&self) -> usize {
        self.self_loops + self.duplicates
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    directed: bool,
    out_offsets: Vec<usize>,
    out_targets: Vec<NodeId>,
    out_weights: Vec<f64>,
    in_offsets: Vec<usize>,
    in_sources: Vec<NodeId>,
    in_weights: Vec<f64>,
    /// Original node labels, indexed by compact id. `None` means labels are the ids.
    labels: Option<Vec<u64>>,
}

impl Graph {
    /// Builds a graph on `n` nodes. For undirected graphs each pair is
    /// inserted in both directions. Self-loops and repeated arcs are dropped.
    ///
    /// Panics if an endpoint is `>= n`.
    pub fn from_edges<I>(n: usize, edges: I, directed: bool) -> (Graph, BuildStats)
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut stats = BuildStats::default();
        let mut arcs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            assert!(u < n && v < n, "edge ({u}, {v}) out of range for {n} nodes");
            if u == v {
                stats.self_loops += 1;
                continue;
            }
            arcs.push((u, v));
            if !directed {
                arcs.push((v, u));
            }
        }
        arcs.sort_unstable();
        let before = arcs.len();
        arcs.dedup();
        let removed = before - arcs.len();
        // An undirected duplicate removes two arcs.
        stats.duplicates = if directed { removed } else { removed / 2 };

        let mut out_offsets = vec![0usize; n + 1];
        for &(u, _) in &arcs {
            out_offsets[u + 1] += 1;
        }
        for i in 0..n {
            out_offsets[i + 1] += out_offsets[i];
        }
        let out_targets: Vec<NodeId> = arcs.iter().map(|&(_, v)| v).collect();

        let mut in_offsets = vec![0usize; n + 1];
        for &(_, v) in &arcs {
            in_offsets[v + 1] += 1;
        }
        for i in 0..n {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut cursor = in_offsets.clone();
        let mut in_sources = vec![0; arcs.len()];
        // arcs are sorted by source, so every in-list comes out sorted by source id
        for &(u, v) in &arcs {
            in_sources[cursor[v]] = u;
            cursor[v] += 1;
        }

        let m = arcs.len();
        let graph = Graph {
            n,
            directed,
            out_offsets,
            out_targets,
            out_weights: vec![0.0; m],
            in_offsets,
            in_sources,
            in_weights: vec![0.0; m],
            labels: None,
        };
        (normalize_weights(graph), stats)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Number of directed arcs.
    pub fn edge_count(&self) -> usize {
        self.out_targets.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn out_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.out_targets[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn out_weights(&self, v: NodeId) -> &[f64] {
        &self.out_weights[self.out_offsets[v]..self.out_offsets[v + 1]]
    }

    pub fn in_neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn in_weights(&self, v: NodeId) -> &[f64] {
        &self.in_weights[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    pub fn out_degree(&self, v: NodeId) -> usize {
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    /// Sum of outgoing arc weights.
    pub fn out_weight_sum(&self, v: NodeId) -> f64 {
        self.out_weights(v).iter().sum()
    }

    /// All arcs as `(source, target, weight)`, ordered by source then target.
    pub fn arcs(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.n).flat_map(move |u| {
            self.out_neighbors(u)
                .iter()
                .zip(self.out_weights(u))
                .map(move |(&v, &w)| (u, v, w))
        })
    }

    /// Arcs enumerated through the in-adjacency, ordered by target then source.
    pub fn in_arcs(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.n).flat_map(move |v| {
            self.in_neighbors(v)
                .iter()
                .zip(self.in_weights(v))
                .map(move |(&u, &w)| (u, v, w))
        })
    }

    pub fn has_arc(&self, u: NodeId, v: NodeId) -> bool {
        self.out_neighbors(u).binary_search(&v).is_ok()
    }

    /// Original label of a compact node id.
    pub fn label(&self, v: NodeId) -> u64 {
        match &self.labels {
            Some(labels) => labels[v],
            None => v as u64,
        }
    }

    /// Compact id of an original label.
    pub fn node_of_label(&self, label: u64) -> Option<NodeId> {
        match &self.labels {
            Some(labels) => labels.binary_search(&label).ok(),
            None => usize::try_from(label).ok().filter(|&v| v < self.n),
        }
    }

    pub(crate) fn with_labels(mut self, labels: Vec<u64>) -> Self {
        debug_assert_eq!(labels.len(), self.n);
        debug_assert!(labels.windows(2).all(|w| w[0] < w[1]));
        self.labels = Some(labels);
        self
    }

    /// Relabels nodes: node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[NodeId]) -> Graph {
        assert_eq!(perm.len(), self.n);
        let edges = self.arcs().map(|(u, v, _)| (perm[u], perm[v]));
        Graph::from_edges(self.n, edges, true).0.with_directed(self.directed)
    }

    fn with_directed(mut self, directed: bool) -> Self {
        self.directed = directed;
        self
    }
}

/// Assigns every arc `(u, v)` the weight `1 / indeg(v)`.
pub fn normalize_weights(mut graph: Graph) -> Graph {
    for v in 0..graph.n {
        let (lo, hi) = (graph.in_offsets[v], graph.in_offsets[v + 1]);
        let w = if hi > lo { 1.0 / (hi - lo) as f64 } else { 0.0 };
        graph.in_weights[lo..hi].iter_mut().for_each(|x| *x = w);
    }
    for u in 0..graph.n {
        let (lo, hi) = (graph.out_offsets[u], graph.out_offsets[u + 1]);
        for i in lo..hi {
            let v = graph.out_targets[i];
            let deg = graph.in_offsets[v + 1] - graph.in_offsets[v];
            graph.out_weights[i] = 1.0 / deg as f64;
        }
    }
    graph
}

/// Raw input attributes of a node: `[sum of outgoing weights, is-seed flag]`.
pub fn node_feature(graph: &Graph, v: NodeId, seed_mask: &[bool]) -> [f64; 2] {
    [
        graph.out_weight_sum(v),
        if seed_mask[v] { 1.0 } else { 0.0 },
    ]
}
