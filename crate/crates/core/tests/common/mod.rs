#![allow(dead_code)]

use dreim_core::rng::{self, Rng};
use dreim_core::{Graph, NodeId};
use rand::seq::SliceRandom;
use rand::Rng as _;

/// Each ordered (directed) or unordered pair becomes an edge with probability `p`.
pub fn random_graph(rng: &mut Rng, n: usize, p: f64, directed: bool) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u == v || (!directed && v < u) {
                continue;
            }
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges, directed).0
}

pub fn random_subset(rng: &mut Rng, n: usize, k: usize) -> Vec<NodeId> {
    let mut all: Vec<NodeId> = (0..n).collect();
    all.shuffle(rng);
    all.truncate(k);
    all
}

pub fn random_permutation(rng: &mut Rng, n: usize) -> Vec<NodeId> {
    let mut perm: Vec<NodeId> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

pub fn rng_for(case: u64) -> Rng {
    rng::stream(0x00ac_ce97, case)
}

/// Number of live-edge configurations the exact enumerator visits.
pub fn configurations(graph: &Graph) -> u64 {
    (0..graph.node_count()).map(|v| graph.in_degree(v) as u64 + 1).product()
}

/// Independent exact LT spread: each node keeps one in-arc with probability
/// equal to its weight (or none), enumerated recursively, and the spread is
/// the expected fraction of nodes reachability-connected to a seed.
pub fn brute_force_spread(graph: &Graph, seeds: &[NodeId]) -> f64 {
    let n = graph.node_count();
    let mut choice = vec![None; n];
    fn walk(graph: &Graph, seeds: &[NodeId], v: usize, choice: &mut Vec<Option<NodeId>>, prob: f64, acc: &mut f64) {
        let n = graph.node_count();
        if v == n {
            let reached = (0..n)
                .filter(|&u| {
                    let mut cur = u;
                    for _ in 0..=n {
                        if seeds.contains(&cur) {
                            return true;
                        }
                        match choice[cur] {
                            Some(p) => cur = p,
                            None => return false,
                        }
                    }
                    false
                })
                .count();
            *acc += prob * reached as f64 / n as f64;
            return;
        }
        let rest: f64 = 1.0 - graph.in_weights(v).iter().sum::<f64>();
        if rest > 1e-15 {
            choice[v] = None;
            walk(graph, seeds, v + 1, choice, prob * rest, acc);
        }
        for (&u, &w) in graph.in_neighbors(v).iter().zip(graph.in_weights(v)) {
            choice[v] = Some(u);
            walk(graph, seeds, v + 1, choice, prob * w, acc);
        }
        choice[v] = None;
    }
    let mut acc = 0.0;
    if n > 0 {
        walk(graph, seeds, 0, &mut choice, 1.0, &mut acc);
    }
    acc
}

pub mod checks {
    use super::*;
    use dreim_core::encoder::{self, EncoderParams};
    use dreim_core::qnet::{self, Experience, QNetParams, QNetwork};
    use dreim_core::{heuristics, inference, InferenceConfig};
    use std::sync::Arc;

    /// `|a - b| / max(|a|, |b|)` over the whole gradient vector (0 when both vanish).
    pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
        let scale = na.max(nb);
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }

    fn flatten(net: &QNetwork) -> Vec<f64> {
        net.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    fn set_param(net: &mut QNetwork, mut index: usize, value: f64) {
        for t in net.tensors_mut() {
            if index < t.len() {
                *t.iter_mut().nth(index).unwrap() = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    /// Random batch of transitions on one graph with `n` nodes.
    pub fn random_batch(rng: &mut Rng, n: usize, batch: usize) -> Vec<Experience> {
        let g = Arc::new(loop {
            let g = random_graph(rng, n, 0.45, false);
            if g.edge_count() > 0 {
                break g;
            }
        });
        (0..batch)
            .map(|_| {
                let actions: Arc<[usize]> = random_subset(rng, n, n).into();
                let t = rng.gen_range(0..n - 1);
                let next = (t + rng.gen_range(1..=2)).min(n);
                Experience {
                    graph: g.clone(),
                    actions,
                    t,
                    next,
                    reward: -rng.gen::<f64>(),
                    terminal: next == n,
                }
            })
            .collect()
    }

    /// Central finite-difference check of the full batch loss; returns the relative error.
    pub fn loss_gradient_error(case: u64, dim: usize, n: usize, batch: usize) -> f64 {
        let mut rng = rng_for(10_000 + case);
        let exps = random_batch(&mut rng, n, batch);
        let refs: Vec<&Experience> = exps.iter().collect();
        let online = QNetwork::init(dim, 2, 0.6, &mut rng).unwrap();
        let mut params = QNetParams::new(online);
        params.target = QNetwork::init(dim, 2, 0.6, &mut rng).unwrap();
        let (gamma, alpha) = (1.0, 0.1);
        let (_, grads) = qnet::loss_and_gradients(&refs, &params, gamma, alpha).unwrap();
        let analytic = flatten(&grads);
        let base = flatten(&params.online);
        let h = 1e-6;
        let numeric: Vec<f64> = (0..base.len())
            .map(|i| {
                let mut p = params.clone();
                set_param(&mut p.online, i, base[i] + h);
                let up = qnet::loss_and_gradients(&refs, &p, gamma, alpha).unwrap().0;
                set_param(&mut p.online, i, base[i] - h);
                let down = qnet::loss_and_gradients(&refs, &p, gamma, alpha).unwrap().0;
                (up - down) / (2.0 * h)
            })
            .collect();
        relative_error(&analytic, &numeric)
    }

    /// Largest deviation of a row norm from 1 and of a permuted embedding from
    /// the original (rows matched through the permutation).
    pub fn encoder_contracts(case: u64) -> (f64, f64) {
        let mut rng = rng_for(20_000 + case);
        let n = rng.gen_range(2..=40);
        let arg = rng.gen_range(0.05..0.4);
        let g = random_graph(&mut rng, n, arg, case.is_multiple_of(3));
        let params = EncoderParams::init(16, 0.5, &mut rng).unwrap();
        let arg = rng.gen_range(0..=n / 2);
        let seeds = random_subset(&mut rng, n, arg);
        let mut mask = vec![false; n];
        for &s in &seeds {
            mask[s] = true;
        }
        let z = encoder::encode_embeddings(&g, &mask, &params, 3).unwrap();
        let mut norm_dev: f64 = 0.0;
        for row in z.z().rows() {
            let r = row.dot(&row).sqrt();
            if r > 0.0 {
                norm_dev = norm_dev.max((r - 1.0).abs());
            }
        }
        let perm = random_permutation(&mut rng, n);
        let pg = g.permuted(&perm);
        let mut pmask = vec![false; n];
        for (v, &pv) in perm.iter().enumerate() {
            pmask[pv] = mask[v];
        }
        let pz = encoder::encode_embeddings(&pg, &pmask, &params, 3).unwrap();
        let mut equi: f64 = 0.0;
        for (v, &pv) in perm.iter().enumerate() {
            for (a, b) in z.node(v).iter().zip(pz.node(pv).iter()) {
                equi = equi.max((a - b).abs());
            }
        }
        for (a, b) in z.state().iter().zip(pz.state().iter()) {
            equi = equi.max((a - b).abs());
        }
        (norm_dev, equi)
    }

    /// Greedy by full re-evaluation on the same live-edge samples CELF uses.
    pub fn naive_greedy(graph: &Graph, k: usize, simulations: usize, seed: u64) -> Vec<NodeId> {
        let samples = dreim_core::diffusion::sample_live_edges(graph, simulations, seed);
        let n = graph.node_count();
        let reach = |set: &[NodeId]| -> usize {
            samples
                .iter()
                .map(|s| {
                    let mut seen = vec![false; n];
                    let mut stack: Vec<usize> = set.to_vec();
                    for &v in set {
                        seen[v] = true;
                    }
                    while let Some(u) = stack.pop() {
                        for &c in s.children(u) {
                            let c = c as usize;
                            if !seen[c] {
                                seen[c] = true;
                                stack.push(c);
                            }
                        }
                    }
                    seen.iter().filter(|&&b| b).count()
                })
                .sum()
        };
        let mut chosen = Vec::new();
        for _ in 0..k {
            let mut best: Option<(usize, NodeId)> = None;
            for v in (0..n).filter(|v| !chosen.contains(v)) {
                let mut with = chosen.clone();
                with.push(v);
                let value = reach(&with);
                if best.is_none_or(|(b, _)| value > b) {
                    best = Some((value, v));
                }
            }
            chosen.push(best.unwrap().1);
        }
        chosen
    }

    pub fn celf_matches_naive(case: u64) -> bool {
        let mut rng = rng_for(30_000 + case);
        let arg = rng.gen_range(0.08..0.25);
        let g = random_graph(&mut rng, 20, arg, case.is_multiple_of(2));
        let celf = heuristics::select_greedy_celf(&g, 3, 200, case).unwrap();
        celf.seeds.nodes() == naive_greedy(&g, 3, 200, case).as_slice()
    }

    /// `select_seeds` with one step against a single independent ranking.
    pub fn all_at_once_matches_ranking(case: u64) -> bool {
        let mut rng = rng_for(40_000 + case);
        let n = rng.gen_range(5..=60);
        let arg = rng.gen_range(0.02..0.3);
        let g = random_graph(&mut rng, n, arg, case.is_multiple_of(2));
        let net = QNetwork::init(8, 2, 0.5, &mut rng).unwrap();
        let k = rng.gen_range(1..=n);
        let sel = inference::select_seeds(&g, &net, &InferenceConfig::all_at_once(k)).unwrap();
        let (cand, q) = net.q_non_seeds(&g, &vec![false; n]).unwrap();
        let mut order: Vec<usize> = (0..cand.len()).collect();
        order.sort_by(|&a, &b| q[b].partial_cmp(&q[a]).unwrap().then(cand[a].cmp(&cand[b])));
        let expected: Vec<NodeId> = order[..k].iter().map(|&i| cand[i]).collect();
        sel.seeds.nodes() == expected.as_slice() && sel.steps.len() == 1
    }
}
