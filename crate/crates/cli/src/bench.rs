//! Paired method comparison on generated graphs.
//!
//! Every (scale, repetition) pair fixes one graph seed and one evaluation
//! seed; all methods and budgets in that cell share both.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::Args;
use dreim_core::inference::evaluate_solution;
use dreim_core::rng::derive;
use dreim_core::{generate, GeneratorConfig, Graph, GraphModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::methods::{Method, Selector};
use crate::usage;

pub const SCHEMA: &str = "# dreim bench-v1";
pub const SUMMARY_SCHEMA: &str = "# dreim bench-summary-v1";

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated node counts.
    #[arg(long, value_delimiter = ',', required = true)]
    scales: Vec<usize>,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',', default_value = "30")]
    budgets: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "dreim")]
    methods: Vec<Method>,
    /// Graphs per scale.
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Simulations for each reported spread.
    #[arg(long, default_value_t = 10_000)]
    simulations: usize,
    #[arg(long, default_value_t = 1000)]
    greedy_simulations: usize,
    #[arg(long, default_value = "plc")]
    model: GraphModel,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-cell CSV; stdout when omitted or "-".
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Aggregated CSV: mean and std over repetitions, and the wall-clock fit.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub scale: usize,
    pub repetition: usize,
    pub graph_seed: u64,
    pub nodes: usize,
    pub arcs: usize,
    pub method: &'static str,
    pub k: usize,
    pub active_rate_mean: f64,
    pub std_error: f64,
    pub wall_ms: f64,
    pub seed_count: usize,
}

struct Instance {
    scale: usize,
    repetition: usize,
    graph_seed: u64,
    eval_seed: u64,
    graph: Graph,
}

/// Least-squares fit `y = a + b x`; returns (intercept, slope, R²).
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((my - slope * mx, slope, r2))
}

pub fn run(a: BenchArgs) -> Result<()> {
    if a.repetitions == 0 || a.methods.is_empty() || a.budgets.is_empty() {
        return Err(usage("bench needs at least one repetition, method and budget"));
    }
    let selector = Selector::new(&a.methods, a.checkpoint.as_deref(), a.batch, a.greedy_simulations)?;

    let mut specs = Vec::new();
    for (si, &scale) in a.scales.iter().enumerate() {
        for rep in 0..a.repetitions {
            let graph_seed = derive(derive(a.seed, si as u64), rep as u64);
            specs.push((scale, rep, graph_seed));
        }
    }
    let instances: Vec<Instance> = specs
        .into_par_iter()
        .map(|(scale, repetition, graph_seed)| {
            let cfg = GeneratorConfig { model: a.model, n: scale, m: a.m, p: a.p, seed: graph_seed };
            Ok(Instance { scale, repetition, graph_seed, eval_seed: derive(graph_seed, 1), graph: generate(&cfg)? })
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (i, inst) in instances.iter().enumerate() {
        for &method in &a.methods {
            for &k in &a.budgets {
                if k > inst.graph.node_count() {
                    return Err(usage(format!("budget {k} exceeds scale {}", inst.scale)));
                }
                cells.push((i, method, k));
            }
        }
    }
    let rows: Vec<Row> = cells
        .into_par_iter()
        .map(|(i, method, k)| {
            let inst = &instances[i];
            let start = Instant::now();
            let (seeds, _) = selector.select(method, &inst.graph, k, derive(inst.graph_seed, 2))?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let eval = evaluate_solution(&inst.graph, &seeds, a.simulations, inst.eval_seed);
            Ok(Row {
                scale: inst.scale,
                repetition: inst.repetition,
                graph_seed: inst.graph_seed,
                nodes: inst.graph.node_count(),
                arcs: inst.graph.edge_count(),
                method: method.name(),
                k,
                active_rate_mean: eval.active_rate,
                std_error: eval.spread.std_error,
                wall_ms,
                seed_count: seeds.len(),
            })
        })
        .collect::<Result<_>>()?;

    {
        let sink: Box<dyn Write> = match crate::output_path(&a.output) {
            Some(p) => Box::new(std::fs::File::create(p)?),
            None => Box::new(std::io::stdout().lock()),
        };
        write_rows(&rows, sink)?;
    }
    let summary = summarize(&rows);
    for line in &summary.fits {
        eprintln!("{line}");
    }
    if let Some(path) = &a.summary {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{SUMMARY_SCHEMA}")?;
        let mut w = csv::Writer::from_writer(&mut f);
        for s in &summary.groups {
            w.serialize(s)?;
        }
        w.flush()?;
        drop(w);
        for line in &summary.fits {
            writeln!(f, "# {line}")?;
        }
    }
    Ok(())
}

pub fn write_rows<W: Write>(rows: &[Row], mut out: W) -> Result<()> {
    writeln!(out, "{SCHEMA}")?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct Group {
    pub scale: usize,
    pub method: &'static str,
    pub k: usize,
    pub instances: usize,
    pub active_rate_mean: f64,
    /// Sample standard deviation across instances (0 for a single instance).
    pub active_rate_std: f64,
    pub wall_ms_mean: f64,
    pub arcs_mean: f64,
}

pub struct Summary {
    pub groups: Vec<Group>,
    pub fits: Vec<String>,
}

pub fn summarize(rows: &[Row]) -> Summary {
    let mut by: BTreeMap<(&str, usize, usize), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by.entry((r.method, r.k, r.scale)).or_default().push(r);
    }
    let mut groups = Vec::new();
    for ((method, k, scale), rs) in &by {
        let n = rs.len() as f64;
        let mean = rs.iter().map(|r| r.active_rate_mean).sum::<f64>() / n;
        let var = if rs.len() > 1 {
            rs.iter().map(|r| (r.active_rate_mean - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        groups.push(Group {
            scale: *scale,
            method,
            k: *k,
            instances: rs.len(),
            active_rate_mean: mean,
            active_rate_std: var.sqrt(),
            wall_ms_mean: rs.iter().map(|r| r.wall_ms).sum::<f64>() / n,
            arcs_mean: rs.iter().map(|r| r.arcs as f64).sum::<f64>() / n,
        });
    }
    let mut fits = Vec::new();
    let mut series: BTreeMap<(&str, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for g in &groups {
        series.entry((g.method, g.k)).or_default().push((g.arcs_mean, g.wall_ms_mean));
    }
    for ((method, k), pts) in series {
        if let Some((intercept, slope, r2)) = linear_fit(&pts) {
            fits.push(format!(
                "fit method={method} k={k} scales={} wall_ms = {intercept:.4} + {slope:.6e} * arcs, r2 = {r2:.4}",
                pts.len()
            ));
        }
    }
    Summary { groups, fits }
}
