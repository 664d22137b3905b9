//! Message-passing node encoder.
//!
//! Every node starts from its two raw attributes `[out-weight, is-seed]`,
//! projected by `W1`, rectified and L2-normalized. Each of the `L` layers then
//! computes, for every node `v`,
//!
//! ```text
//! h_v <- normalize(ReLU([h_v · W2, (Σ_{j ∈ N(v)} h_j) · W3]))
//! ```
//!
//! where `N(v)` are the in-neighbors of `v`. An extra virtual node (row `N` of
//! the table) aggregates all real nodes but sends nothing back, so its final
//! row summarizes the whole graph and serves as the state embedding.
//!
//! The forward cache keeps every layer output, which is all the backward pass
//! needs: the ReLU mask is `h > 0` and neighbor sums are recomputed.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng::Rng;

/// Number of raw node attributes.
pub const FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// `FEATURES × d`
    pub w1: Array2<f64>,
    /// `d × d/2`, applied to the node's own embedding
    pub w2: Array2<f64>,
    /// `d × d/2`, applied to the neighbor sum
    pub w3: Array2<f64>,
}

impl EncoderParams {
    /// Entries drawn uniformly from `(-scale, scale)`.
    pub fn init(dim: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::Shape(format!("embedding dimension {dim} must be even and positive")));
        }
        let mut draw = |r, c| Array2::from_shape_fn((r, c), |_| rng.gen_range(-scale..scale));
        Ok(EncoderParams {
            w1: draw(FEATURES, dim),
            w2: draw(dim, dim / 2),
            w3: draw(dim, dim / 2),
        })
    }

    pub fn zeros(dim: usize) -> Self {
        EncoderParams {
            w1: Array2::zeros((FEATURES, dim)),
            w2: Array2::zeros((dim, dim / 2)),
            w3: Array2::zeros((dim, dim / 2)),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        let half = d / 2;
        if d == 0 || !d.is_multiple_of(2) {
            return Err(Error::Shape(format!("embedding dimension {d} must be even and positive")));
        }
        if self.w1.dim() != (FEATURES, d) || self.w2.dim() != (d, half) || self.w3.dim() != (d, half) {
            return Err(Error::Shape(format!(
                "W1 {:?}, W2 {:?}, W3 {:?} inconsistent with d = {d}",
                self.w1.dim(),
                self.w2.dim(),
                self.w3.dim()
            )));
        }
        if !self.iter().all(|m| m.iter().all(|x| x.is_finite())) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Array2<f64>> {
        [&self.w1, &self.w2, &self.w3].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        [&mut self.w1, &mut self.w2, &mut self.w3].into_iter()
    }

    /// Hash of the exact parameter bits, used to detect stale caches.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for m in self.iter() {
            for x in m.iter() {
                h ^= x.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3).rotate_left(5);
            }
        }
        h
    }

    pub fn add_assign(&mut self, other: &EncoderParams) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.iter_mut() {
            *a *= factor;
        }
    }
}

/// Gradients have the same shape as the parameters.
pub type EncoderGrads = EncoderParams;

#[derive(Debug, Clone)]
struct ForwardCache {
    features: Array2<f64>,
    /// outputs of layer 0..=L (normalized)
    hidden: Vec<Array2<f64>>,
    /// pre-normalization row norms per layer
    norms: Vec<Array1<f64>>,
    fingerprint: u64,
}

/// Embeddings of all real nodes plus the virtual state node (last row).
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    z: Array2<f64>,
    cache: Option<ForwardCache>,
}

impl EmbeddingTable {
    /// Wraps precomputed embeddings (last row is the state) without a cache.
    pub fn from_embeddings(z: Array2<f64>) -> Self {
        assert!(z.nrows() >= 1, "table needs the virtual row");
        EmbeddingTable { z, cache: None }
    }

    /// `(N + 1) × d`; row `N` is the virtual node.
    pub fn z(&self) -> ArrayView2<'_, f64> {
        self.z.view()
    }

    pub fn node_count(&self) -> usize {
        self.z.nrows() - 1
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn state(&self) -> ndarray::ArrayView1<'_, f64> {
        self.z.row(self.z.nrows() - 1)
    }

    pub fn node(&self, v: NodeId) -> ndarray::ArrayView1<'_, f64> {
        self.z.row(v)
    }

    pub fn virtual_row(&self) -> usize {
        self.z.nrows() - 1
    }

    /// Normalized outputs of layer `l` (0 is the input projection), if cached.
    pub fn layer(&self, l: usize) -> Option<ArrayView2<'_, f64>> {
        self.cache.as_ref().and_then(|c| c.hidden.get(l)).map(|h| h.view())
    }

    pub fn has_cache(&self) -> bool {
        self.cache.is_some()
    }

    /// Drops the per-layer cache, keeping only the final embeddings.
    pub fn release_cache(&mut self) {
        self.cache = None;
    }

    pub fn features(&self) -> Option<ArrayView2<'_, f64>> {
        self.cache.as_ref().map(|c| c.features.view())
    }
}

/// `(N + 1) × FEATURES` attribute matrix; the virtual node has no outgoing arcs
/// and is never a seed, so its row is zero.
pub fn feature_matrix(graph: &Graph, seed_mask: &[bool]) -> Array2<f64> {
    let n = graph.node_count();
    let mut x = Array2::zeros((n + 1, FEATURES));
    for v in 0..n {
        let f = crate::graph::node_feature(graph, v, seed_mask);
        x[[v, 0]] = f[0];
        x[[v, 1]] = f[1];
    }
    x
}

/// Runs the encoder and keeps the cache needed by [`encode_backward`].
pub fn encode(graph: &Graph, seed_mask: &[bool], params: &EncoderParams, layers: usize) -> Result<EmbeddingTable> {
    encode_features(graph, feature_matrix(graph, seed_mask), params, layers, true)
}

/// Runs the encoder without keeping intermediate layers.
pub fn encode_embeddings(graph: &Graph, seed_mask: &[bool], params: &EncoderParams, layers: usize) -> Result<EmbeddingTable> {
    encode_features(graph, feature_matrix(graph, seed_mask), params, layers, false)
}

pub fn encode_features(
    graph: &Graph,
    features: Array2<f64>,
    params: &EncoderParams,
    layers: usize,
    keep_cache: bool,
) -> Result<EmbeddingTable> {
    params.validate()?;
    if layers == 0 {
        return Err(Error::Shape("encoder needs at least one layer".into()));
    }
    if seed_rows_mismatch(graph, &features) {
        return Err(Error::Shape(format!(
            "feature matrix {:?} does not match {} nodes + virtual",
            features.dim(),
            graph.node_count()
        )));
    }
    let half = params.dim() / 2;

    let mut h = features.dot(&params.w1);
    relu_inplace(&mut h);
    let norms0 = normalize_rows(&mut h);

    let mut hidden = Vec::with_capacity(if keep_cache { layers + 1 } else { 0 });
    let mut norms = Vec::with_capacity(if keep_cache { layers + 1 } else { 0 });
    if keep_cache {
        norms.push(norms0);
    }

    for _ in 0..layers {
        let agg = aggregate(graph, &h);
        let mut next = Array2::zeros(h.dim());
        next.slice_mut(s![.., ..half]).assign(&h.dot(&params.w2));
        next.slice_mut(s![.., half..]).assign(&agg.dot(&params.w3));
        relu_inplace(&mut next);
        let nn = normalize_rows(&mut next);
        let prev = std::mem::replace(&mut h, next);
        if keep_cache {
            hidden.push(prev);
            norms.push(nn);
        }
    }

    if !h.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("encoder output".into()));
    }

    let cache = keep_cache.then(|| {
        hidden.push(h.clone());
        ForwardCache { features, hidden, norms, fingerprint: params.fingerprint() }
    });
    Ok(EmbeddingTable { z: h, cache })
}

fn seed_rows_mismatch(graph: &Graph, features: &Array2<f64>) -> bool {
    features.dim() != (graph.node_count() + 1, FEATURES)
}

/// Row `v < N` gets the sum of its in-neighbors' rows (in increasing id order);
/// the virtual row gets the sum of all real rows.
fn aggregate(graph: &Graph, h: &Array2<f64>) -> Array2<f64> {
    let n = graph.node_count();
    let d = h.ncols();
    let mut out = Array2::zeros(h.dim());
    let src = h.as_slice().expect("standard layout");
    {
        let dst = out.as_slice_mut().expect("standard layout");
        for v in 0..n {
            let row = &mut dst[v * d..(v + 1) * d];
            for &j in graph.in_neighbors(v) {
                add_row(row, &src[j * d..(j + 1) * d]);
            }
        }
        let virt = &mut dst[n * d..];
        for j in 0..n {
            add_row(virt, &src[j * d..(j + 1) * d]);
        }
    }
    out
}

/// Transpose of [`aggregate`]: every source row collects the gradients of the
/// rows it was summed into.
fn scatter_back(graph: &Graph, grad: &Array2<f64>, into: &mut Array2<f64>) {
    let n = graph.node_count();
    let d = grad.ncols();
    let src = grad.as_slice().expect("standard layout");
    let dst = into.as_slice_mut().expect("standard layout");
    let virt = &src[n * d..(n + 1) * d];
    for j in 0..n {
        let row = &mut dst[j * d..(j + 1) * d];
        for &v in graph.out_neighbors(j) {
            add_row(row, &src[v * d..(v + 1) * d]);
        }
        add_row(row, virt);
    }
}

#[inline]
fn add_row(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += *b;
    }
}

fn relu_inplace(m: &mut Array2<f64>) {
    m.mapv_inplace(|x| if x > 0.0 { x } else { 0.0 });
}

/// Normalizes each row to unit L2 norm in place; zero rows stay zero.
fn normalize_rows(m: &mut Array2<f64>) -> Array1<f64> {
    let mut norms = Array1::zeros(m.nrows());
    for (mut row, norm) in m.axis_iter_mut(Axis(0)).zip(norms.iter_mut()) {
        let r = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        *norm = r;
        if r > 0.0 {
            row.mapv_inplace(|x| x / r);
        }
    }
    norms
}

/// Gradient of `h = u / ‖u‖` with respect to `u`, composed with the ReLU mask
/// (`u > 0` exactly where `h > 0`).
fn normalize_relu_backward(h: &Array2<f64>, norms: &Array1<f64>, upstream: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(h.dim());
    for ((mut o, (hr, gr)), &r) in out
        .axis_iter_mut(Axis(0))
        .zip(h.axis_iter(Axis(0)).zip(upstream.axis_iter(Axis(0))))
        .zip(norms.iter())
    {
        if r == 0.0 {
            continue;
        }
        let dot: f64 = hr.iter().zip(gr.iter()).map(|(a, b)| a * b).sum();
        for ((o, &hv), &gv) in o.iter_mut().zip(hr.iter()).zip(gr.iter()) {
            if hv > 0.0 {
                *o = (gv - hv * dot) / r;
            }
        }
    }
    out
}

/// Reverse pass of [`encode`].
///
/// `upstream` is the gradient of the objective with respect to the final
/// table `z`. Parameter gradients are accumulated into `grads`; the returned
/// matrix is the gradient with respect to the input attributes.
pub fn encode_backward(
    graph: &Graph,
    table: &EmbeddingTable,
    params: &EncoderParams,
    upstream: &Array2<f64>,
    grads: &mut EncoderGrads,
) -> Result<Array2<f64>> {
    let cache = table
        .cache
        .as_ref()
        .ok_or_else(|| Error::StaleCache("embedding table has no forward cache".into()))?;
    if cache.fingerprint != params.fingerprint() {
        return Err(Error::StaleCache("parameters changed since the forward pass".into()));
    }
    if upstream.dim() != table.z.dim() || cache.features.nrows() != graph.node_count() + 1 {
        return Err(Error::Shape(format!(
            "upstream {:?} vs table {:?} for {} nodes",
            upstream.dim(),
            table.z.dim(),
            graph.node_count()
        )));
    }
    let half = params.dim() / 2;
    let layers = cache.hidden.len() - 1;

    let mut g = upstream.to_owned();
    for l in (1..=layers).rev() {
        let h_out = &cache.hidden[l];
        let h_in = &cache.hidden[l - 1];
        let g_pre = normalize_relu_backward(h_out, &cache.norms[l], &g);
        let g_self = g_pre.slice(s![.., ..half]);
        let g_nbr = g_pre.slice(s![.., half..]);

        grads.w2 += &h_in.t().dot(&g_self);
        let agg = aggregate(graph, h_in);
        grads.w3 += &agg.t().dot(&g_nbr);

        let mut g_prev = g_self.dot(&params.w2.t());
        let g_agg = g_nbr.dot(&params.w3.t());
        scatter_back(graph, &g_agg, &mut g_prev);
        g = g_prev;
    }
    let g_pre0 = normalize_relu_backward(&cache.hidden[0], &cache.norms[0], &g);
    grads.w1 += &cache.features.t().dot(&g_pre0);
    Ok(g_pre0.dot(&params.w1.t()))
}
