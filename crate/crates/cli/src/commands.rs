use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use dreim_core::graph::{load_edge_list, write_edge_list, LoadReport};
use dreim_core::inference::evaluate_solution;
use dreim_core::{exact_spread, generate as generate_graph, GeneratorConfig, Graph, GraphModel, NodeId, TrainConfig, Trainer};
use serde::Serialize;
use serde_json::json;

use crate::methods::{Method, Selector};
use crate::{output_path, usage};

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match output_path(path) {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json(path: &Option<PathBuf>, value: &impl Serialize) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// plc, ba, ws or er
    #[arg(long, default_value = "plc")]
    model: GraphModel,
    /// Number of nodes.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 0.05)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted or "-".
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = GeneratorConfig { model: a.model, n: a.n, m: a.m, p: a.p, seed: a.seed };
    let graph = generate_graph(&cfg)?;
    let mut out = open_output(&a.output)?;
    write_edge_list(&graph, &mut out)?;
    out.flush()?;
    eprintln!("{} graph: {} nodes, {} arcs", a.model, graph.node_count(), graph.edge_count());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with `TrainConfig` keys; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for best.ckpt, final.ckpt and train_log.csv.
    #[arg(long, default_value = "dreim-run")]
    out_dir: PathBuf,
    #[arg(long)]
    max_iterations: Option<u64>,
    #[arg(long)]
    max_episodes: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    n_step: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    target_sync: Option<usize>,
    #[arg(long)]
    validation_period: Option<u64>,
    #[arg(long)]
    validation_graphs: Option<usize>,
    #[arg(long)]
    min_nodes: Option<usize>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn load_train_config(path: &std::path::Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| usage(format!("config {}: {}", path.display(), e.message())))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_train_config(p)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($flag:ident => $field:ident) => {
            if let Some(v) = a.$flag {
                cfg.$field = v;
            }
        };
    }
    set!(max_iterations => max_iterations);
    set!(max_episodes => max_episodes);
    set!(lr => learning_rate);
    set!(embedding_dim => embedding_dim);
    set!(layers => layers);
    set!(batch_size => batch_size);
    set!(n_step => n_step);
    set!(warmup => warmup);
    set!(target_sync => target_sync);
    set!(validation_period => validation_period);
    set!(validation_graphs => validation_graphs);
    set!(min_nodes => min_nodes);
    set!(max_nodes => max_nodes);
    set!(seed => rng_seed);
    cfg.checkpoint_dir = Some(a.out_dir.clone());
    fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    fs::write(a.out_dir.join("config.toml"), toml::to_string(&cfg)?)?;

    let start = Instant::now();
    let mut trainer = Trainer::new(cfg)?;
    let s = trainer.train()?;
    let summary = json!({
        "iterations": s.iterations,
        "episodes": s.episodes,
        "gradient_steps": s.gradient_steps,
        "initial_return": s.initial_return,
        "best_return": s.best_return,
        "best_iteration": s.best_iteration,
        "final_return": s.final_return,
        "wall_seconds": start.elapsed().as_secs_f64(),
        "out_dir": a.out_dir,
    });
    write_json(&None, &summary)
}

#[derive(Debug, Args)]
pub struct GraphInput {
    /// Edge list, one `src dst` pair per line.
    #[arg(long)]
    graph: PathBuf,
    /// Treat pairs as arcs instead of undirected edges.
    #[arg(long)]
    directed: bool,
}

impl GraphInput {
    fn load(&self) -> Result<(Graph, LoadReport)> {
        let (g, report) = load_edge_list(&self.graph, self.directed)?;
        if report.drop_count() > 0 {
            eprintln!(
                "{}: dropped {} self-loops and {} duplicate edges",
                self.graph.display(),
                report.self_loops,
                report.duplicates
            );
        }
        Ok((g, report))
    }
}

fn labels(graph: &Graph, nodes: &[NodeId]) -> Vec<u64> {
    nodes.iter().map(|&v| graph.label(v)).collect()
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    input: GraphInput,
    #[arg(long, default_value = "dreim")]
    method: Method,
    /// Trained checkpoint, required by the dreim method.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    budget: usize,
    /// Nodes per adaptive step (dreim); 0 selects the whole budget at once.
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Simulations for the reported spread.
    #[arg(long, default_value_t = 10_000)]
    simulations: usize,
    /// Live-edge samples for the greedy method.
    #[arg(long, default_value_t = 1000)]
    greedy_simulations: usize,
    /// DegreeDiscount propagation parameter (default: mean arc weight).
    #[arg(long)]
    discount: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path; stdout when omitted or "-".
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Comma-separated budgets for an active-rate sweep.
    #[arg(long, value_delimiter = ',', requires = "sweep_output")]
    sweep: Vec<usize>,
    /// CSV destination of the sweep.
    #[arg(long, requires = "sweep")]
    sweep_output: Option<PathBuf>,
}

pub const SWEEP_SCHEMA: &str = "# dreim sweep-v1";

fn write_sweep(a: &InferArgs, selector: &Selector, graph: &Graph) -> Result<()> {
    let path = a.sweep_output.as_ref().expect("clap enforces --sweep-output");
    let mut out = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(out, "{SWEEP_SCHEMA}")?;
    writeln!(out, "method,budget,active_rate,std_error,active_count,selection_ms")?;
    for &k in &a.sweep {
        let start = Instant::now();
        let (seeds, _) = selector.select(a.method, graph, k, a.seed)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let eval = evaluate_solution(graph, &seeds, a.simulations, a.seed);
        writeln!(
            out,
            "{},{k},{},{},{},{ms:.3}",
            a.method.name(),
            eval.active_rate,
            eval.spread.std_error,
            eval.active_count
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn infer(a: InferArgs) -> Result<()> {
    let (graph, report) = a.input.load()?;
    let mut selector = Selector::new(&[a.method], a.checkpoint.as_deref(), a.batch, a.greedy_simulations)?;
    selector.discount = a.discount;
    let start = Instant::now();
    let (seeds, selection) = selector.select(a.method, &graph, a.budget, a.seed)?;
    let selection_ms = start.elapsed().as_secs_f64() * 1e3;
    let eval = evaluate_solution(&graph, &seeds, a.simulations, a.seed);
    if !a.sweep.is_empty() {
        write_sweep(&a, &selector, &graph)?;
    }

    let steps: Vec<_> = selection
        .iter()
        .flat_map(|s| s.steps.iter())
        .map(|st| {
            eprintln!(
                "step {}: {} candidates, picked {:?}, q max {:.6} mean {:.6}",
                st.step,
                st.candidates,
                labels(&graph, &st.chosen),
                st.q_max,
                st.q_mean
            );
            json!({
                "step": st.step,
                "candidates": st.candidates,
                "chosen": labels(&graph, &st.chosen),
                "chosen_q": st.chosen_q,
                "q_max": st.q_max,
                "q_min": st.q_min,
                "q_mean": st.q_mean,
            })
        })
        .collect();
    let out = json!({
        "method": a.method.name(),
        "graph": {
            "path": a.input.graph,
            "nodes": graph.node_count(),
            "arcs": graph.edge_count(),
            "dropped": report.drop_count(),
        },
        "budget": a.budget,
        "seeds": labels(&graph, &seeds),
        "active_rate": eval.active_rate,
        "std_error": eval.spread.std_error,
        "active_count": eval.active_count,
        "simulations": a.simulations,
        "selection_ms": selection_ms,
        "steps": steps,
    });
    write_json(&a.output, &out)
}

#[derive(Debug, Args)]
pub struct SpreadArgs {
    #[command(flatten)]
    input: GraphInput,
    /// Comma-separated node labels.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    simulations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compute the exact spread (graphs of at most 16 nodes).
    #[arg(long)]
    exact: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

pub fn spread(a: SpreadArgs) -> Result<()> {
    let (graph, _) = a.input.load()?;
    let mut nodes = Vec::with_capacity(a.seeds.len());
    for &label in &a.seeds {
        let v = graph
            .node_of_label(label)
            .ok_or_else(|| usage(format!("seed {label} is not a node of the graph")))?;
        if !nodes.contains(&v) {
            nodes.push(v);
        }
    }
    let eval = evaluate_solution(&graph, &nodes, a.simulations, a.seed);
    let exact = if a.exact { Some(exact_spread(&graph, &nodes)?) } else { None };
    let out = json!({
        "nodes": graph.node_count(),
        "seeds": labels(&graph, &nodes),
        "active_rate": eval.active_rate,
        "std_error": eval.spread.std_error,
        "active_count": eval.active_count,
        "simulations": a.simulations,
        "exact": exact,
    });
    write_json(&a.output, &out)
}
