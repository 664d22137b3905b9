use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{BuildStats, Graph};
use crate::error::{Error, Result};

/// Outcome of reading an edge list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

impl LoadReport {
    pub fn drop_count(&self) -> usize {
        self.self_loops + self.duplicates
    }
}

/// Reads a whitespace-separated `u v` edge list. Lines starting with `#` and
/// blank lines are skipped. Labels are compacted to `0..N` in ascending order.
pub fn load_edge_list(path: impl AsRef<Path>, directed: bool) -> Result<(Graph, LoadReport)> {
    let path = path.as_ref();
    let file = File::open(path)?;
    parse_edge_list(BufReader::new(file), directed, path)
}

pub fn parse_edge_list<R: BufRead>(
    reader: R,
    directed: bool,
    origin: &Path,
) -> Result<(Graph, LoadReport)> {
    let mut raw: Vec<(u64, u64)> = Vec::new();
    let mut lines = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        lines += 1;
        let bad = |msg: String| Error::Load { path: origin.to_path_buf(), line: idx + 1, msg };
        let mut fields = trimmed.split_whitespace();
        let mut next_id = || -> Result<u64> {
            let tok = fields.next().ok_or_else(|| bad("expected two node ids".into()))?;
            tok.parse::<u64>().map_err(|e| bad(format!("bad node id '{tok}': {e}")))
        };
        let u = next_id()?;
        let v = next_id()?;
        if fields.next().is_some() {
            return Err(bad("trailing fields after node pair".into()));
        }
        raw.push((u, v));
    }

    let mut index: BTreeMap<u64, usize> = BTreeMap::new();
    for &(u, v) in &raw {
        index.insert(u, 0);
        index.insert(v, 0);
    }
    let labels: Vec<u64> = index.keys().copied().collect();
    for (i, slot) in index.values_mut().enumerate() {
        *slot = i;
    }
    let edges = raw.iter().map(|(u, v)| (index[u], index[v]));
    let (graph, BuildStats { self_loops, duplicates }) = Graph::from_edges(labels.len(), edges, directed);
    Ok((graph.with_labels(labels), LoadReport { lines, self_loops, duplicates }))
}

/// Writes the graph in the edge-list format, using original labels. Undirected
/// graphs emit each edge once with the smaller compact id first.
pub fn write_edge_list<W: Write>(graph: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "# nodes {} arcs {} directed {}", graph.node_count(), graph.edge_count(), graph.is_directed())?;
    for (u, v, _) in graph.arcs() {
        if graph.is_directed() || u < v {
            writeln!(out, "{} {}", graph.label(u), graph.label(v))?;
        }
    }
    Ok(())
}
