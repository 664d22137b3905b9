use std::path::Path;
use std::process::{Command, Output};

use dreim_core::diffusion::sample_live_edges;
use dreim_core::graph::load_edge_list;
use dreim_core::Graph;
use serde_json::Value;

fn dreim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dreim")).args(args).output().expect("run dreim")
}

fn ok(args: &[&str]) -> String {
    let out = dreim(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).expect("json output")
}

fn gen(dir: &Path, name: &str, n: usize, seed: u64) -> String {
    let path = dir.join(name);
    let p = path.to_str().unwrap().to_string();
    ok(&["generate", "--model", "plc", "--n", &n.to_string(), "--m", "4", "--p", "0.05", "--seed", &seed.to_string(), "-o", &p]);
    p
}

fn tiny_train(dir: &Path, extra: &[&str]) -> Value {
    let cfg = dir.join("train.toml");
    std::fs::write(
        &cfg,
        "embedding_dim = 8\nlayers = 2\nbatch_size = 4\nwarmup = 8\nvalidation_graphs = 3\nvalidation_period = 10\nmin_nodes = 8\nmax_nodes = 12\ngraph_m = 2\n",
    )
    .unwrap();
    let out = dir.join("run");
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--max-iterations", "30"];
    args.extend_from_slice(extra);
    json(&args)
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.txt", 40, 1);
    let b = gen(dir.path(), "b.txt", 40, 1);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let (g, _) = load_edge_list(&a, false).unwrap();
    assert_eq!(g.node_count(), 40);
}

#[test]
fn impossible_generator_is_usage_error() {
    let out = dreim(&["generate", "--n", "2", "--m", "4"]);
    assert_eq!(out.status.code(), Some(2));
    let out = dreim(&["generate", "--n", "ten"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_log_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let summary = tiny_train(dir.path(), &[]);
    assert_eq!(summary["iterations"], 30);
    let run = dir.path().join("run");
    let log = std::fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert!(log.starts_with("iteration,loss,val_return"));
    assert_eq!(log.lines().count(), 1 + 4);
    assert!(run.join("best.ckpt").exists() && run.join("final.ckpt").exists());
}

#[test]
fn zero_learning_rate_keeps_return_flat() {
    let dir = tempfile::tempdir().unwrap();
    tiny_train(dir.path(), &["--lr", "0"]);
    let log = std::fs::read_to_string(dir.path().join("run/train_log.csv")).unwrap();
    let values: Vec<&str> = log.lines().skip(1).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert!(values.windows(2).all(|w| w[0] == w[1]), "{values:?}");
}

#[test]
fn unknown_config_key_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "learning_rate = 0.1\nbogus = 3\n").unwrap();
    let out = dreim(&["train", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));
}

#[test]
fn infer_modes() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.txt", 30, 3);
    let empty = json(&["infer", "--graph", &g, "--method", "degree", "--budget", "0", "--simulations", "50"]);
    assert_eq!(empty["seeds"].as_array().unwrap().len(), 0);
    assert_eq!(empty["active_rate"], 0.0);

    let missing = dreim(&["infer", "--graph", &g, "--method", "dreim", "--budget", "3"]);
    assert_eq!(missing.status.code(), Some(2));

    tiny_train(dir.path(), &[]);
    let ckpt = dir.path().join("run/best.ckpt");
    let ckpt = ckpt.to_str().unwrap();
    let once = json(&["infer", "--graph", &g, "--checkpoint", ckpt, "--budget", "4", "--batch", "4", "--simulations", "100"]);
    assert_eq!(once["steps"].as_array().unwrap().len(), 1);
    assert_eq!(once["seeds"].as_array().unwrap().len(), 4);
    let sweep = dir.path().join("sweep.csv");
    ok(&["infer", "--graph", &g, "--method", "degree", "--budget", "1", "--simulations", "100", "--sweep", "1,2,5", "--sweep-output", sweep.to_str().unwrap()]);
    let sweep = std::fs::read_to_string(sweep).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "# dreim sweep-v1");
    assert_eq!(lines.len(), 2 + 3);
    assert!(lines[4].starts_with("degree,5,"));
    let adaptive = json(&["infer", "--graph", &g, "--checkpoint", ckpt, "--budget", "4", "--batch", "1", "--simulations", "100"]);
    assert_eq!(adaptive["steps"].as_array().unwrap().len(), 4);
}

/// Greedy by full re-evaluation on the same live-edge samples.
fn naive_greedy(g: &Graph, k: usize, samples: usize, seed: u64) -> Vec<u64> {
    let live = sample_live_edges(g, samples, seed);
    let n = g.node_count();
    let value = |set: &[usize]| -> usize {
        live.iter()
            .map(|s| {
                let mut seen = vec![false; n];
                let mut stack = set.to_vec();
                set.iter().for_each(|&v| seen[v] = true);
                while let Some(u) = stack.pop() {
                    for &c in s.children(u) {
                        if !seen[c as usize] {
                            seen[c as usize] = true;
                            stack.push(c as usize);
                        }
                    }
                }
                seen.iter().filter(|&&x| x).count()
            })
            .sum()
    };
    let mut chosen: Vec<usize> = Vec::new();
    for _ in 0..k {
        let best = (0..n)
            .filter(|v| !chosen.contains(v))
            .map(|v| {
                let mut s = chosen.clone();
                s.push(v);
                (value(&s), v)
            })
            .fold(None::<(usize, usize)>, |b, c| match b {
                Some(b) if b.0 >= c.0 => Some(b),
                _ => Some(c),
            })
            .unwrap();
        chosen.push(best.1);
    }
    chosen.iter().map(|&v| g.label(v)).collect()
}

#[test]
fn greedy_matches_naive_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let g = gen(dir.path(), "g.txt", 20, 8);
    let out = json(&["infer", "--graph", &g, "--method", "greedy", "--budget", "3", "--greedy-simulations", "300", "--seed", "5", "--simulations", "100"]);
    let got: Vec<u64> = out["seeds"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    let (graph, _) = load_edge_list(&g, false).unwrap();
    assert_eq!(got, naive_greedy(&graph, 3, 300, 5));
}

#[test]
fn spread_reports_exact_value() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("path.txt");
    std::fs::write(&g, "# a path\n10 20\n20 30\n").unwrap();
    let out = json(&["spread", "--graph", g.to_str().unwrap(), "--seeds", "20", "--exact", "--simulations", "1000", "--threads", "1"]);
    // the middle node activates each end with probability 1
    assert_eq!(out["exact"], 1.0);
    let unknown = dreim(&["spread", "--graph", g.to_str().unwrap(), "--seeds", "99"]);
    assert_eq!(unknown.status.code(), Some(2));
}

#[test]
fn bench_rows_are_paired_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("bench.csv");
    let summary_path = dir.path().join("summary.csv");
    ok(&[
        "bench", "--scales", "60,120", "--budgets", "2,4", "--methods", "random,degree", "--repetitions", "3",
        "--simulations", "200", "--seed", "7", "-o", csv_path.to_str().unwrap(), "--summary", summary_path.to_str().unwrap(),
    ]);
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# dreim bench-v1"));
    let body = lines.collect::<Vec<_>>().join("\n");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["scale", "repetition", "graph_seed", "nodes", "arcs", "method", "k", "active_rate_mean", "std_error", "wall_ms", "seed_count"]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 2 * 3 * 2 * 2);
    let mut seeds = std::collections::BTreeMap::new();
    for r in &rows {
        let key = (r[0].to_string(), r[1].to_string());
        let entry = seeds.entry(key).or_insert_with(|| r[2].to_string());
        assert_eq!(entry, &r[2], "methods in a cell must share the graph");
        assert_eq!(r[6], r[10]);
    }
    assert_eq!(seeds.len(), 6);
    let summary = std::fs::read_to_string(&summary_path).unwrap();
    assert!(summary.starts_with("# dreim bench-summary-v1\nscale,method,k,instances,active_rate_mean,active_rate_std"));
    assert!(summary.contains("r2 ="));

    let again = dir.path().join("again.csv");
    ok(&[
        "bench", "--scales", "60,120", "--budgets", "2,4", "--methods", "random,degree", "--repetitions", "3",
        "--simulations", "200", "--seed", "7", "-o", again.to_str().unwrap(), "--threads", "1",
    ]);
    let strip = |t: &str| -> Vec<String> {
        t.lines().map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 9).map(|(_, c)| c).collect::<Vec<_>>().join(",")).collect()
    };
    assert_eq!(strip(&text), strip(&std::fs::read_to_string(&again).unwrap()));
}
