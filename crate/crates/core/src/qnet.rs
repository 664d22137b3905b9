//! Q-learning machinery: the decoder, the TD + reconstruction loss with its
//! gradients, n-step experiences, the replay buffer, the target network and Adam.
//!
//! The decoder scores an action `a` in state `s` as
//!
//! ```text
//! Q(s, a) = W5ᵀ · ReLU((z_s · W4) · z_a)
//! ```
//!
//! i.e. the scalar gate `z_s · W4` scales the action embedding before the
//! rectifier and the output projection.

use std::collections::VecDeque;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rand::Rng as _;
use rayon::prelude::*;

use crate::diffusion::CascadeState;
use crate::encoder::{self, EmbeddingTable, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::Rng;

/// Default replay capacity.
pub const REPLAY_CAPACITY: usize = 500_000;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    /// `d × 1`
    pub w4: Array2<f64>,
    /// `d × 1`
    pub w5: Array2<f64>,
}

impl DecoderParams {
    pub fn init(dim: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut draw = || Array2::from_shape_fn((dim, 1), |_| rng.gen_range(-scale..scale));
        DecoderParams { w4: draw(), w5: draw() }
    }

    pub fn zeros(dim: usize) -> Self {
        DecoderParams { w4: Array2::zeros((dim, 1)), w5: Array2::zeros((dim, 1)) }
    }

    fn w4(&self) -> ArrayView1<'_, f64> {
        self.w4.column(0)
    }

    fn w5(&self) -> ArrayView1<'_, f64> {
        self.w5.column(0)
    }
}

/// Encoder + decoder weights and the message-passing depth.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub layers: usize,
}

impl QNetwork {
    pub fn init(dim: usize, layers: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        let encoder = EncoderParams::init(dim, scale, rng)?;
        let decoder = DecoderParams::init(dim, scale, rng);
        Ok(QNetwork { encoder, decoder, layers })
    }

    pub fn zeros_like(&self) -> Self {
        let d = self.dim();
        QNetwork { encoder: EncoderParams::zeros(d), decoder: DecoderParams::zeros(d), layers: self.layers }
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    /// W1..W5 in order.
    pub fn tensors(&self) -> [&Array2<f64>; 5] {
        [&self.encoder.w1, &self.encoder.w2, &self.encoder.w3, &self.decoder.w4, &self.decoder.w5]
    }

    pub fn tensors_mut(&mut self) -> [&mut Array2<f64>; 5] {
        [
            &mut self.encoder.w1,
            &mut self.encoder.w2,
            &mut self.encoder.w3,
            &mut self.decoder.w4,
            &mut self.decoder.w5,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let d = self.dim();
        if self.decoder.w4.dim() != (d, 1) || self.decoder.w5.dim() != (d, 1) {
            return Err(Error::Shape(format!(
                "decoder W4 {:?} / W5 {:?} for d = {d}",
                self.decoder.w4.dim(),
                self.decoder.w5.dim()
            )));
        }
        if self.layers == 0 {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        Ok(())
    }

    /// Encodes `(graph, seeds)` without keeping the backward cache.
    pub fn embed(&self, graph: &Graph, seed_mask: &[bool]) -> Result<EmbeddingTable> {
        encoder::encode_embeddings(graph, seed_mask, &self.encoder, self.layers)
    }

    /// Q values of all non-seed nodes, as `(candidates, values)`.
    pub fn q_non_seeds(&self, graph: &Graph, seed_mask: &[bool]) -> Result<(Vec<NodeId>, Vec<f64>)> {
        let table = self.embed(graph, seed_mask)?;
        let candidates: Vec<NodeId> = (0..graph.node_count()).filter(|&v| !seed_mask[v]).collect();
        let q = q_values(&table, &self.decoder, &candidates)?;
        Ok((candidates, q))
    }
}

/// Gradients share the parameter layout.
pub type Gradients = QNetwork;

impl Gradients {
    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.tensors_mut() {
            *a *= factor;
        }
    }
}

/// Online network, its target mirror, and the gradient steps since the last sync.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetParams {
    pub online: QNetwork,
    pub target: QNetwork,
    pub steps_since_sync: usize,
}

impl QNetParams {
    pub fn new(online: QNetwork) -> Self {
        QNetParams { target: online.clone(), online, steps_since_sync: 0 }
    }

    /// Copies the online weights into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
        self.steps_since_sync = 0;
    }
}

/// `Q(s, a)` for each candidate; `s` is the virtual row of `table`.
pub fn q_values(table: &EmbeddingTable, decoder: &DecoderParams, candidates: &[NodeId]) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::Contract("Q values requested for an empty candidate set".into()));
    }
    let gate = table.state().dot(&decoder.w4());
    let w5 = decoder.w5();
    let q: Vec<f64> = candidates
        .iter()
        .map(|&a| {
            table
                .node(a)
                .iter()
                .zip(w5.iter())
                .map(|(&z, &w)| w * relu(gate * z))
                .sum()
        })
        .collect();
    if let Some(bad) = q.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "Q value of node {} (gate {gate})",
            candidates[bad]
        )));
    }
    Ok(q)
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Index of the largest value; ties go to the smaller candidate id.
pub fn argmax(candidates: &[NodeId], values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..candidates.len() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let better = values[i] > values[b] || (values[i] == values[b] && candidates[i] < candidates[b]);
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Negative inactive rate `σ - 1` of a cascade fixed point.
pub fn reward(state: &CascadeState) -> f64 {
    let n = state.node_count();
    if n == 0 {
        return 0.0;
    }
    -((n - state.active_count()) as f64) / n as f64
}

/// An n-step transition: from the seed prefix of length `t`, taking
/// `actions[t]`, accumulating `reward`, and landing on the prefix of length `next`.
#[derive(Debug, Clone)]
pub struct Experience {
    pub graph: Arc<Graph>,
    pub actions: Arc<[NodeId]>,
    pub t: usize,
    pub next: usize,
    pub reward: f64,
    pub terminal: bool,
}

impl Experience {
    pub fn state(&self) -> &[NodeId] {
        &self.actions[..self.t]
    }

    pub fn action(&self) -> NodeId {
        self.actions[self.t]
    }

    pub fn next_state(&self) -> &[NodeId] {
        &self.actions[..self.next]
    }

    fn mask(&self, prefix: usize) -> Vec<bool> {
        let mut mask = vec![false; self.graph.node_count()];
        for &v in &self.actions[..prefix] {
            mask[v] = true;
        }
        mask
    }
}

/// Max over non-seed nodes of the target network's Q in `seed_mask`.
fn max_target_q(target: &QNetwork, graph: &Graph, seed_mask: &[bool]) -> Result<f64> {
    let (_, q) = target.q_non_seeds(graph, seed_mask)?;
    Ok(q.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `y = r + γ · max_a' Q̂(s', a')` with the target network; terminal transitions
/// (and `γ = 0`) use the accumulated reward alone.
pub fn td_target(exp: &Experience, params: &QNetParams, gamma: f64) -> Result<f64> {
    if exp.terminal || gamma == 0.0 {
        return Ok(exp.reward);
    }
    let bootstrap = max_target_q(&params.target, &exp.graph, &exp.mask(exp.next))?;
    Ok(exp.reward + gamma * bootstrap)
}

/// `Σ_{(i,j) ∈ E} w(i,j) ‖z_i - z_j‖²` over real nodes.
pub fn reconstruction(graph: &Graph, table: &EmbeddingTable) -> f64 {
    let z = table.z();
    graph
        .arcs()
        .map(|(i, j, w)| {
            let d: f64 = z.row(i).iter().zip(z.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            w * d
        })
        .sum()
}

/// Loss of one transition against a fixed target, with the gradient of
/// `(y - Q)² + α · reconstruction` accumulated into `grads` after scaling by `weight`.
pub fn transition_loss(
    exp: &Experience,
    online: &QNetwork,
    target_y: f64,
    alpha: f64,
    weight: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    let graph = &*exp.graph;
    let table = encoder::encode(graph, &exp.mask(exp.t), &online.encoder, online.layers)?;
    let z = table.z();
    let s_row = table.virtual_row();
    let a = exp.action();

    let w4 = online.decoder.w4();
    let w5 = online.decoder.w5();
    let z_s = z.row(s_row);
    let z_a = z.row(a);
    let gate = z_s.dot(&w4);

    let mut q = 0.0;
    let mut dq_dgate = 0.0;
    let d = online.dim();
    let mut dq_dza = vec![0.0; d];
    for i in 0..d {
        let pre = gate * z_a[i];
        if pre > 0.0 {
            q += w5[i] * pre;
            dq_dgate += w5[i] * z_a[i];
            dq_dza[i] = w5[i] * gate;
        }
    }
    if !q.is_finite() {
        return Err(Error::NonFinite(format!("Q(s, {a}) with gate {gate}")));
    }
    let td = q - target_y;
    let recon = if alpha != 0.0 { reconstruction(graph, &table) } else { 0.0 };
    let loss = td * td + alpha * recon;

    // dLoss/dQ
    let g_q = weight * 2.0 * td;
    for i in 0..d {
        let pre = gate * z_a[i];
        if pre > 0.0 {
            grads.decoder.w5[[i, 0]] += g_q * pre;
        }
    }
    for i in 0..d {
        grads.decoder.w4[[i, 0]] += g_q * dq_dgate * z_s[i];
    }

    let mut upstream = Array2::<f64>::zeros(z.dim());
    for i in 0..d {
        upstream[[a, i]] += g_q * dq_dza[i];
        upstream[[s_row, i]] += g_q * dq_dgate * w4[i];
    }
    if alpha != 0.0 {
        let scale = weight * alpha * 2.0;
        for (u, v, w) in graph.arcs() {
            for i in 0..d {
                let diff = scale * w * (z[[u, i]] - z[[v, i]]);
                upstream[[u, i]] += diff;
                upstream[[v, i]] -= diff;
            }
        }
    }
    encoder::encode_backward(graph, &table, &online.encoder, &upstream, &mut grads.encoder)?;
    Ok(loss)
}

/// Mean over the batch of `(y - Q(s_t, a_t))² + α · Σ w(i,j)‖z_i - z_j‖²`, and
/// its gradient with respect to the online network. Targets come from the
/// target network and carry no gradient.
pub fn loss_and_gradients(
    batch: &[&Experience],
    params: &QNetParams,
    gamma: f64,
    alpha: f64,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let parts: Vec<Result<(f64, Gradients)>> = batch
        .par_iter()
        .map(|exp| {
            let y = td_target(exp, params, gamma)?;
            let mut g = params.online.zeros_like();
            let loss = transition_loss(exp, &params.online, y, alpha, weight, &mut g)?;
            Ok((loss, g))
        })
        .collect();
    // fixed-order reduction keeps the result independent of scheduling
    let mut total = params.online.zeros_like();
    let mut loss = 0.0;
    for part in parts {
        let (l, g) = part?;
        loss += l;
        total.add_assign(&g);
    }
    let loss = loss * weight;
    if !loss.is_finite() {
        return Err(Error::NonFinite("training loss".into()));
    }
    Ok((loss, total))
}

/// Fixed-capacity FIFO of experiences with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1);
        ReplayBuffer { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(exp);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `batch_size` draws with replacement, or `None` while the buffer holds
    /// fewer than `batch_size` items.
    pub fn sample(&self, batch_size: usize, rng: &mut Rng) -> Option<Vec<&Experience>> {
        if self.items.len() < batch_size || batch_size == 0 {
            return None;
        }
        Some((0..batch_size).map(|_| &self.items[rng.gen_range(0..self.items.len())]).collect())
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Gradients,
    pub v: Gradients,
}

impl Adam {
    pub fn new(like: &QNetwork, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: like.zeros_like(),
            v: like.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut QNetwork, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    fn table_from(z: Array2<f64>) -> EmbeddingTable {
        EmbeddingTable::from_embeddings(z)
    }

    #[test]
    fn decoder_hand_example() {
        // z_a = (0.6, -0.8), z_s = (1, 0), W4 = (1, 0), W5 = (1, 1)
        let t = table_from(array![[0.6, -0.8], [1.0, 0.0]]);
        let dec = DecoderParams { w4: array![[1.0], [0.0]], w5: array![[1.0], [1.0]] };
        let q = q_values(&t, &dec, &[0]).unwrap();
        assert!((q[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn decoder_zero_cases() {
        let t = table_from(array![[0.6, 0.8], [0.0, 1.0], [1.0, 0.0]]);
        let dec = DecoderParams { w4: array![[1.0], [0.5]], w5: array![[0.0], [0.0]] };
        assert_eq!(q_values(&t, &dec, &[0, 1]).unwrap(), vec![0.0, 0.0]);
        // z_s · W4 = 0
        let dec = DecoderParams { w4: array![[0.0], [3.0]], w5: array![[1.0], [-2.0]] };
        assert_eq!(q_values(&t, &dec, &[0, 1]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(q_values(&t, &dec, &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn reward_values() {
        let (g, _) = Graph::from_edges(10, std::iter::empty(), false);
        let th = crate::ThresholdRealization::sample(10, 0);
        let none = crate::simulate(&g, &[], &th);
        assert_eq!(reward(&none), -1.0);
        let four = crate::simulate(&g, &[0, 1, 2, 3], &th);
        assert!((reward(&four) + 0.6).abs() < 1e-15);
        let all = crate::simulate(&g, &(0..10).collect::<Vec<_>>(), &th);
        assert_eq!(reward(&all), 0.0);
    }

    fn exp(graph: Arc<Graph>, actions: Vec<NodeId>, t: usize, next: usize, reward: f64, terminal: bool) -> Experience {
        Experience { graph, actions: actions.into(), t, next, reward, terminal }
    }

    #[test]
    fn td_target_cases() {
        let (g, _) = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)], false);
        let g = Arc::new(g);
        let net = QNetwork::init(8, 2, 0.3, &mut seeded(1)).unwrap();
        let params = QNetParams::new(net);
        let term = exp(g.clone(), vec![0, 1], 0, 2, -0.3, true);
        assert_eq!(td_target(&term, &params, 1.0).unwrap(), -0.3);
        let open = exp(g.clone(), vec![0, 1], 0, 1, -0.5, false);
        assert_eq!(td_target(&open, &params, 0.0).unwrap(), -0.5);
        let max_q = max_target_q(&params.target, &g, &[true, false, false, false]).unwrap();
        let y = td_target(&open, &params, 1.0).unwrap();
        assert!((y - (-0.5 + max_q)).abs() < 1e-15);
    }

    #[test]
    fn td_target_ignores_online_updates() {
        let (g, _) = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], false);
        let g = Arc::new(g);
        let mut params = QNetParams::new(QNetwork::init(8, 2, 0.3, &mut seeded(2)).unwrap());
        let e = exp(g, vec![0, 2, 4], 0, 2, -0.4, false);
        let y0 = td_target(&e, &params, 1.0).unwrap();
        params.online.encoder.w3.fill(0.2);
        params.online.decoder.w4.fill(1.0);
        params.online.decoder.w5.fill(1.0);
        assert_eq!(td_target(&e, &params, 1.0).unwrap(), y0);
        params.sync_target();
        assert_ne!(td_target(&e, &params, 1.0).unwrap(), y0);
    }

    #[test]
    fn sync_semantics() {
        let mut params = QNetParams::new(QNetwork::init(8, 2, 0.3, &mut seeded(3)).unwrap());
        params.online.decoder.w5.fill(0.7);
        params.steps_since_sync = 12;
        params.sync_target();
        assert_eq!(params.target, params.online);
        assert_eq!(params.steps_since_sync, 0);
        let snapshot = params.clone();
        params.sync_target();
        assert_eq!(params, snapshot);
        params.online.decoder.w4.fill(-1.0);
        assert_eq!(params.target, snapshot.target);
    }

    #[test]
    fn zero_residual_zero_decoder_grad() {
        let (g, _) = Graph::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)], false);
        let g = Arc::new(g);
        let params = QNetParams::new(QNetwork::init(8, 2, 0.3, &mut seeded(4)).unwrap());
        let e = exp(g.clone(), vec![1, 3], 0, 1, 0.0, true);
        let table = params.online.embed(&g, &[false; 5]).unwrap();
        let q = q_values(&table, &params.online.decoder, &[1]).unwrap()[0];
        let e = Experience { reward: q, ..e };
        let (loss, grads) = loss_and_gradients(&[&e], &params, 1.0, 0.0).unwrap();
        assert!(loss.abs() < 1e-30);
        assert!(grads.decoder.w4.iter().chain(grads.decoder.w5.iter()).all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn edgeless_reconstruction_zero() {
        let (g, _) = Graph::from_edges(4, std::iter::empty(), false);
        let net = QNetwork::init(8, 2, 0.3, &mut seeded(5)).unwrap();
        let t = net.embed(&g, &[false; 4]).unwrap();
        assert_eq!(reconstruction(&g, &t), 0.0);
    }

    #[test]
    fn buffer_fifo_and_sampling() {
        let (g, _) = Graph::from_edges(3, [(0, 1)], false);
        let g = Arc::new(g);
        let mut buf = ReplayBuffer::new(3);
        for i in 0..4 {
            buf.push(exp(g.clone(), vec![0, 1, 2], 0, 1, -(i as f64), false));
        }
        assert_eq!(buf.len(), 3);
        let rewards: Vec<f64> = buf.iter().map(|e| e.reward).collect();
        assert_eq!(rewards, vec![-1.0, -2.0, -3.0]);
        assert!(buf.sample(4, &mut seeded(0)).is_none());
        let a: Vec<f64> = buf.sample(3, &mut seeded(9)).unwrap().iter().map(|e| e.reward).collect();
        let b: Vec<f64> = buf.sample(3, &mut seeded(9)).unwrap().iter().map(|e| e.reward).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn adam_zero_lr_is_identity() {
        let mut net = QNetwork::init(8, 2, 0.3, &mut seeded(6)).unwrap();
        let before = net.clone();
        let mut grads = net.zeros_like();
        for t in grads.tensors_mut() {
            t.fill(0.25);
        }
        let mut adam = Adam::new(&net, 0.0);
        adam.update(&mut net, &grads);
        assert_eq!(net, before);
        let mut adam = Adam::new(&net, 1e-3);
        adam.update(&mut net, &grads);
        // first bias-corrected step moves every weight by ~lr against the gradient
        let moved = net.encoder.w1[[0, 0]] - before.encoder.w1[[0, 0]];
        assert!((moved + 1e-3).abs() < 1e-9);
    }
}
