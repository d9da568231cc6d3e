//! Forward and reverse passes for the document-graph network.
//!
//! The forward pass records everything the hand-written backward pass
//! needs (projections, attention coefficients, pre/post-activation
//! buffers) in a [`ForwardTrace`], which `backward` consumes to fill a
//! [`Gradients`] accumulator laid out parallel to [`Model::params`]. An
//! optional per-arc mask scales messages without touching parameters; its
//! gradient comes back from `backward`, which is all the explainer needs.

// Kernel loops index several arrays by one node/row variable; iterator
// rewrites would obscure the math they mirror.
#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::tensor::{axpy, dot, elu, elu_grad_from_output, leaky_relu, leaky_relu_grad, Mat, Real};
use super::{LayerKind, ModelConfig};
use crate::graph::DocumentGraph;

/// Sentinel edge index for the transient self-loop every node receives.
pub const SELF_EDGE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("document graph has no feature matrix")]
    MissingFeatures,
    #[error("feature dimension {found} does not match model input dimension {expected}")]
    InputDimMismatch { found: usize, expected: usize },
    #[error("edge mask has {found} weights for {expected} stored arcs")]
    MaskLenMismatch { found: usize, expected: usize },
    #[error("target class {target} out of range for {classes} classes")]
    BadTarget { target: usize, classes: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// One in-neighbor entry: the message source and the stored-arc index the
/// message travels along (`SELF_EDGE` for the self-loop).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdjEntry {
    pub src: u32,
    pub edge: u32,
}

/// In-edge adjacency in CSR form, with a self-loop appended to every
/// node's entry list. Built once per graph and shared by all passes.
#[derive(Debug, Clone)]
pub struct Adjacency {
    offsets: Vec<usize>,
    entries: Vec<AdjEntry>,
    /// 1/sqrt(in-degree + 1), for convolution normalization.
    inv_sqrt_deg: Vec<f64>,
    dn: usize,
    n_stored: usize,
}

impl Adjacency {
    pub fn of(graph: &DocumentGraph) -> Adjacency {
        let n = graph.n_nodes();
        let mut counts = vec![0usize; n];
        for &(_, d) in &graph.edges {
            counts[d as usize] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + counts[i] + 1; // +1 for the self-loop
        }
        let mut entries = vec![
            AdjEntry {
                src: 0,
                edge: SELF_EDGE
            };
            offsets[n]
        ];
        let mut cursor: Vec<usize> = offsets[..n].to_vec();
        for (e, &(s, d)) in graph.edges.iter().enumerate() {
            entries[cursor[d as usize]] = AdjEntry {
                src: s,
                edge: e as u32,
            };
            cursor[d as usize] += 1;
        }
        for i in 0..n {
            entries[cursor[i]] = AdjEntry {
                src: i as u32,
                edge: SELF_EDGE,
            };
        }
        let inv_sqrt_deg = counts.iter().map(|&c| 1.0 / ((c + 1) as f64).sqrt()).collect();
        Adjacency {
            offsets,
            entries,
            inv_sqrt_deg,
            dn: graph.document_node(),
            n_stored: graph.edges.len(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_stored_edges(&self) -> usize {
        self.n_stored
    }

    pub fn document_node(&self) -> usize {
        self.dn
    }

    /// Flattened index range of node `i`'s in-entries (self-loop last).
    pub fn entry_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn entries(&self, i: usize) -> &[AdjEntry] {
        &self.entries[self.entry_range(i)]
    }

    pub fn all_entries(&self) -> &[AdjEntry] {
        &self.entries
    }
}

/// Per-layer parameters. Attention kinds keep per-head projections plus a
/// shared output transform over the concatenated heads; the convolution
/// kind is a single projection.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<F: Real> {
    Gatv2 {
        w_src: Vec<Mat<F>>,
        w_dst: Vec<Mat<F>>,
        /// Score vectors, one 1 x head_dim row per head.
        attn: Vec<Mat<F>>,
        w_out: Mat<F>,
        b_out: Mat<F>,
    },
    Gat {
        w: Vec<Mat<F>>,
        attn_src: Vec<Mat<F>>,
        attn_dst: Vec<Mat<F>>,
        w_out: Mat<F>,
        b_out: Mat<F>,
    },
    Gcn {
        w: Mat<F>,
        b: Mat<F>,
    },
}

/// What the forward pass remembers about one layer.
#[derive(Debug, Clone)]
pub enum LayerTrace<F: Real> {
    Attn {
        /// Per-head source projections (n x head_dim).
        s: Vec<Mat<F>>,
        /// Per-head target projections; empty for the static kind, which
        /// shares one projection.
        t: Vec<Mat<F>>,
        /// Per-head per-node score halves (static kind only).
        scal_src: Vec<Vec<F>>,
        scal_dst: Vec<Vec<F>>,
        /// Per-head attention coefficients aligned with the flattened
        /// adjacency entries.
        alpha: Vec<Vec<F>>,
        /// Concatenated head messages before the output transform.
        p: Mat<F>,
        /// Post-activation layer output.
        out: Mat<F>,
    },
    Gcn {
        /// Normalized neighborhood sums before the projection.
        agg: Mat<F>,
        out: Mat<F>,
    },
}

impl<F: Real> LayerTrace<F> {
    pub fn out(&self) -> &Mat<F> {
        match self {
            LayerTrace::Attn { out, .. } => out,
            LayerTrace::Gcn { out, .. } => out,
        }
    }
}

/// Everything recorded by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<F: Real> {
    pub x_in: Mat<F>,
    /// Post-activation input projection (n x hidden).
    pub h0: Mat<F>,
    pub layers: Vec<LayerTrace<F>>,
    /// Document-node row of the last layer, as a 1 x hidden matrix.
    pub h_dn: Mat<F>,
    /// Hidden classifier activations (1 x hidden).
    pub x_mid: Mat<F>,
    pub logits: Vec<F>,
    pub probs: Vec<F>,
}

impl<F: Real> ForwardTrace<F> {
    /// Attention coefficients of one layer and head, aligned with
    /// [`Adjacency::all_entries`]. None for convolution layers.
    pub fn attention(&self, layer: usize, head: usize) -> Option<&[F]> {
        match self.layers.get(layer)? {
            LayerTrace::Attn { alpha, .. } => alpha.get(head).map(|a| a.as_slice()),
            LayerTrace::Gcn { .. } => None,
        }
    }
}

/// Gradient accumulator parallel to [`Model::params`].
#[derive(Debug, Clone)]
pub struct Gradients<F: Real> {
    mats: Vec<Mat<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(model: &Model<F>) -> Self {
        Gradients {
            mats: model
                .params()
                .iter()
                .map(|p| Mat::zeros(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn zero(&mut self) {
        for m in &mut self.mats {
            m.fill(F::zero());
        }
    }

    pub fn mats(&self) -> &[Mat<F>] {
        &self.mats
    }

    pub fn mats_mut(&mut self) -> &mut [Mat<F>] {
        &mut self.mats
    }
}

/// The full classifier: input projection, a stack of graph layers, and a
/// two-stage linear head over the document-node readout.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<F: Real> {
    pub config: ModelConfig,
    pub w_in: Mat<F>,
    pub b_in: Mat<F>,
    pub layers: Vec<LayerParams<F>>,
    pub w1: Mat<F>,
    pub b1: Mat<F>,
    pub w2: Mat<F>,
    pub b2: Mat<F>,
}

fn glorot<F: Real>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<F> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| F::from_f64((2.0 * rng.gen::<f64>() - 1.0) * limit))
        .collect();
    Mat::from_vec(rows, cols, data)
}

impl<F: Real> Model<F> {
    /// Fresh model with uniform Glorot weights and zero biases, drawn in
    /// parameter-declaration order from a stream seeded by `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::BadConfig)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.input_dim;
        let h = config.hidden_dim;
        let dh = config.head_dim();
        let k = config.heads;
        let w_in = glorot(&mut rng, d, h);
        let b_in = Mat::zeros(1, h);
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            layers.push(match config.layer_kind {
                LayerKind::Gatv2 => LayerParams::Gatv2 {
                    w_src: (0..k).map(|_| glorot(&mut rng, h, dh)).collect(),
                    w_dst: (0..k).map(|_| glorot(&mut rng, h, dh)).collect(),
                    attn: (0..k).map(|_| glorot(&mut rng, 1, dh)).collect(),
                    w_out: glorot(&mut rng, h, h),
                    b_out: Mat::zeros(1, h),
                },
                LayerKind::Gat => LayerParams::Gat {
                    w: (0..k).map(|_| glorot(&mut rng, h, dh)).collect(),
                    attn_src: (0..k).map(|_| glorot(&mut rng, 1, dh)).collect(),
                    attn_dst: (0..k).map(|_| glorot(&mut rng, 1, dh)).collect(),
                    w_out: glorot(&mut rng, h, h),
                    b_out: Mat::zeros(1, h),
                },
                LayerKind::Gcn => LayerParams::Gcn {
                    w: glorot(&mut rng, h, h),
                    b: Mat::zeros(1, h),
                },
            });
        }
        let w1 = glorot(&mut rng, h, h);
        let b1 = Mat::zeros(1, h);
        let w2 = glorot(&mut rng, h, config.classes);
        let b2 = Mat::zeros(1, config.classes);
        Ok(Model {
            config,
            w_in,
            b_in,
            layers,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn params(&self) -> Vec<&Mat<F>> {
        let mut out: Vec<&Mat<F>> = vec![&self.w_in, &self.b_in];
        for layer in &self.layers {
            match layer {
                LayerParams::Gatv2 {
                    w_src,
                    w_dst,
                    attn,
                    w_out,
                    b_out,
                } => {
                    out.extend(w_src.iter());
                    out.extend(w_dst.iter());
                    out.extend(attn.iter());
                    out.push(w_out);
                    out.push(b_out);
                }
                LayerParams::Gat {
                    w,
                    attn_src,
                    attn_dst,
                    w_out,
                    b_out,
                } => {
                    out.extend(w.iter());
                    out.extend(attn_src.iter());
                    out.extend(attn_dst.iter());
                    out.push(w_out);
                    out.push(b_out);
                }
                LayerParams::Gcn { w, b } => {
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out.push(&self.w1);
        out.push(&self.b1);
        out.push(&self.w2);
        out.push(&self.b2);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat<F>> {
        let mut out: Vec<&mut Mat<F>> = vec![&mut self.w_in, &mut self.b_in];
        for layer in &mut self.layers {
            match layer {
                LayerParams::Gatv2 {
                    w_src,
                    w_dst,
                    attn,
                    w_out,
                    b_out,
                } => {
                    out.extend(w_src.iter_mut());
                    out.extend(w_dst.iter_mut());
                    out.extend(attn.iter_mut());
                    out.push(w_out);
                    out.push(b_out);
                }
                LayerParams::Gat {
                    w,
                    attn_src,
                    attn_dst,
                    w_out,
                    b_out,
                } => {
                    out.extend(w.iter_mut());
                    out.extend(attn_src.iter_mut());
                    out.extend(attn_dst.iter_mut());
                    out.push(w_out);
                    out.push(b_out);
                }
                LayerParams::Gcn { w, b } => {
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out.push(&mut self.w1);
        out.push(&mut self.b1);
        out.push(&mut self.w2);
        out.push(&mut self.b2);
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = vec!["w_in".to_string(), "b_in".to_string()];
        let k = self.config.heads;
        for (li, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Gatv2 { .. } => {
                    out.extend((0..k).map(|h| format!("layer{li}.head{h}.w_src")));
                    out.extend((0..k).map(|h| format!("layer{li}.head{h}.w_dst")));
                    out.extend((0..k).map(|h| format!("layer{li}.head{h}.attn")));
                    out.push(format!("layer{li}.w_out"));
                    out.push(format!("layer{li}.b_out"));
                }
                LayerParams::Gat { .. } => {
                    out.extend((0..k).map(|h| format!("layer{li}.head{h}.w")));
                    out.extend((0..k).map(|h| format!("layer{li}.head{h}.attn_src")));
                    out.extend((0..k).map(|h| format!("layer{li}.head{h}.attn_dst")));
                    out.push(format!("layer{li}.w_out"));
                    out.push(format!("layer{li}.b_out"));
                }
                LayerParams::Gcn { .. } => {
                    out.push(format!("layer{li}.w"));
                    out.push(format!("layer{li}.b"));
                }
            }
        }
        out.extend(["w1", "b1", "w2", "b2"].map(str::to_string));
        out
    }

    /// Total scalar parameter count.
    pub fn n_scalars(&self) -> usize {
        self.params().iter().map(|p| p.rows() * p.cols()).sum()
    }

    pub fn cast<G: Real>(&self) -> Model<G> {
        let cast_layer = |l: &LayerParams<F>| match l {
            LayerParams::Gatv2 {
                w_src,
                w_dst,
                attn,
                w_out,
                b_out,
            } => LayerParams::Gatv2 {
                w_src: w_src.iter().map(Mat::cast).collect(),
                w_dst: w_dst.iter().map(Mat::cast).collect(),
                attn: attn.iter().map(Mat::cast).collect(),
                w_out: w_out.cast(),
                b_out: b_out.cast(),
            },
            LayerParams::Gat {
                w,
                attn_src,
                attn_dst,
                w_out,
                b_out,
            } => LayerParams::Gat {
                w: w.iter().map(Mat::cast).collect(),
                attn_src: attn_src.iter().map(Mat::cast).collect(),
                attn_dst: attn_dst.iter().map(Mat::cast).collect(),
                w_out: w_out.cast(),
                b_out: b_out.cast(),
            },
            LayerParams::Gcn { w, b } => LayerParams::Gcn {
                w: w.cast(),
                b: b.cast(),
            },
        };
        Model {
            config: self.config,
            w_in: self.w_in.cast(),
            b_in: self.b_in.cast(),
            layers: self.layers.iter().map(cast_layer).collect(),
            w1: self.w1.cast(),
            b1: self.b1.cast(),
            w2: self.w2.cast(),
            b2: self.b2.cast(),
        }
    }

    fn per_layer_param_count(&self) -> usize {
        match self.config.layer_kind {
            LayerKind::Gatv2 | LayerKind::Gat => 3 * self.config.heads + 2,
            LayerKind::Gcn => 2,
        }
    }

    fn layer_param_base(&self, li: usize) -> usize {
        2 + li * self.per_layer_param_count()
    }

    fn classifier_param_base(&self) -> usize {
        2 + self.layers.len() * self.per_layer_param_count()
    }

    /// Runs the network on one graph. `mask` is an optional weight per
    /// stored arc (aligned with the graph's edge list) scaling that arc's
    /// messages; self-loops are never masked.
    pub fn forward(
        &self,
        graph: &DocumentGraph,
        adj: &Adjacency,
        mask: Option<&[F]>,
    ) -> Result<ForwardTrace<F>, ModelError> {
        let feats = graph.features.as_ref().ok_or(ModelError::MissingFeatures)?;
        if feats.dim != self.config.input_dim {
            return Err(ModelError::InputDimMismatch {
                found: feats.dim,
                expected: self.config.input_dim,
            });
        }
        if let Some(m) = mask {
            if m.len() != adj.n_stored_edges() {
                return Err(ModelError::MaskLenMismatch {
                    found: m.len(),
                    expected: adj.n_stored_edges(),
                });
            }
        }
        let n = graph.n_nodes();
        assert_eq!(n, adj.n_nodes(), "adjacency built for a different graph");

        let mut x_in = Mat::zeros(n, feats.dim);
        for i in 0..n {
            for (dst, &src) in x_in.row_mut(i).iter_mut().zip(feats.row(i)) {
                *dst = F::from_f32(src);
            }
        }
        let mut h0 = x_in.matmul(&self.w_in);
        h0.add_row_broadcast(&self.b_in);
        for v in h0.data_mut() {
            *v = elu(*v);
        }

        let mut layers: Vec<LayerTrace<F>> = Vec::with_capacity(self.layers.len());
        for (li, layer) in self.layers.iter().enumerate() {
            let h_prev = if li == 0 { &h0 } else { layers[li - 1].out() };
            let trace = match layer {
                LayerParams::Gatv2 {
                    w_src,
                    w_dst,
                    attn,
                    w_out,
                    b_out,
                } => self.attention_forward(
                    h_prev,
                    adj,
                    mask,
                    AttnKind::TwoProjection { w_src, w_dst },
                    attn,
                    w_out,
                    b_out,
                ),
                LayerParams::Gat {
                    w,
                    attn_src,
                    attn_dst,
                    w_out,
                    b_out,
                } => self.attention_forward(
                    h_prev,
                    adj,
                    mask,
                    AttnKind::OneProjection {
                        w,
                        attn_src,
                        attn_dst,
                    },
                    &[],
                    w_out,
                    b_out,
                ),
                LayerParams::Gcn { w, b } => Self::gcn_forward(h_prev, adj, mask, w, b),
            };
            layers.push(trace);
        }

        let h_last = layers.last().map(LayerTrace::out).unwrap_or(&h0);
        let dn = adj.document_node();
        let h_dn = Mat::from_vec(1, self.config.hidden_dim, h_last.row(dn).to_vec());
        let mut x_mid = h_dn.matmul(&self.w1);
        x_mid.add_row_broadcast(&self.b1);
        let mut logits_m = x_mid.matmul(&self.w2);
        logits_m.add_row_broadcast(&self.b2);
        let logits = logits_m.row(0).to_vec();
        let probs = softmax(&logits);
        Ok(ForwardTrace {
            x_in,
            h0,
            layers,
            h_dn,
            x_mid,
            logits,
            probs,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_forward(
        &self,
        h: &Mat<F>,
        adj: &Adjacency,
        mask: Option<&[F]>,
        kind: AttnKind<'_, F>,
        attn: &[Mat<F>],
        w_out: &Mat<F>,
        b_out: &Mat<F>,
    ) -> LayerTrace<F> {
        let n = h.rows();
        let hidden = self.config.hidden_dim;
        let dh = self.config.head_dim();
        let k_heads = self.config.heads;
        let slope = F::from_f64(self.config.negative_slope);

        let mut s_list = Vec::with_capacity(k_heads);
        let mut t_list = Vec::new();
        let mut scal_src = Vec::new();
        let mut scal_dst = Vec::new();
        let mut alpha_list = Vec::with_capacity(k_heads);
        let mut p = Mat::zeros(n, hidden);

        for k in 0..k_heads {
            // per-head projections and raw scores
            let (s, t_opt, ssc, tsc) = match kind {
                AttnKind::TwoProjection { w_src, w_dst } => {
                    (h.matmul(&w_src[k]), Some(h.matmul(&w_dst[k])), Vec::new(), Vec::new())
                }
                AttnKind::OneProjection {
                    w,
                    attn_src,
                    attn_dst,
                } => {
                    let s = h.matmul(&w[k]);
                    let ssc: Vec<F> = (0..n).map(|j| dot(attn_src[k].row(0), s.row(j))).collect();
                    let tsc: Vec<F> = (0..n).map(|i| dot(attn_dst[k].row(0), s.row(i))).collect();
                    (s, None, ssc, tsc)
                }
            };
            let mut alpha = vec![F::zero(); adj.all_entries().len()];
            for i in 0..n {
                let range = adj.entry_range(i);
                let mut max = F::neg_infinity();
                for idx in range.clone() {
                    let e = adj.all_entries()[idx];
                    let score = match &kind {
                        AttnKind::TwoProjection { .. } => {
                            let a = attn[k].row(0);
                            let srow = s.row(e.src as usize);
                            let trow = t_opt.as_ref().unwrap().row(i);
                            let mut acc = F::zero();
                            for d in 0..dh {
                                acc = acc + a[d] * leaky_relu(srow[d] + trow[d], slope);
                            }
                            acc
                        }
                        AttnKind::OneProjection { .. } => {
                            leaky_relu(ssc[e.src as usize] + tsc[i], slope)
                        }
                    };
                    alpha[idx] = score;
                    if score > max {
                        max = score;
                    }
                }
                let mut sum = F::zero();
                for idx in range.clone() {
                    let v = (alpha[idx] - max).exp();
                    alpha[idx] = v;
                    sum = sum + v;
                }
                for idx in range.clone() {
                    alpha[idx] = alpha[idx] / sum;
                }
                let p_row = &mut p.row_mut(i)[k * dh..(k + 1) * dh];
                for idx in range {
                    let e = adj.all_entries()[idx];
                    let coef = alpha[idx] * mask_weight(mask, e);
                    axpy(coef, s.row(e.src as usize), p_row);
                }
            }
            s_list.push(s);
            if let Some(t) = t_opt {
                t_list.push(t);
            }
            if !ssc.is_empty() {
                scal_src.push(ssc);
                scal_dst.push(tsc);
            }
            alpha_list.push(alpha);
        }

        let mut out = p.matmul(w_out);
        out.add_row_broadcast(b_out);
        for v in out.data_mut() {
            *v = elu(*v);
        }
        LayerTrace::Attn {
            s: s_list,
            t: t_list,
            scal_src,
            scal_dst,
            alpha: alpha_list,
            p,
            out,
        }
    }

    fn gcn_forward(
        h: &Mat<F>,
        adj: &Adjacency,
        mask: Option<&[F]>,
        w: &Mat<F>,
        b: &Mat<F>,
    ) -> LayerTrace<F> {
        let n = h.rows();
        let mut agg = Mat::zeros(n, h.cols());
        for i in 0..n {
            let range = adj.entry_range(i);
            let agg_row = agg.row_mut(i);
            for idx in range {
                let e = adj.all_entries()[idx];
                let norm = F::from_f64(
                    adj.inv_sqrt_deg[e.src as usize] * adj.inv_sqrt_deg[i],
                );
                let coef = norm * mask_weight(mask, e);
                axpy(coef, h.row(e.src as usize), agg_row);
            }
        }
        let mut out = agg.matmul(w);
        out.add_row_broadcast(b);
        for v in out.data_mut() {
            *v = elu(*v);
        }
        LayerTrace::Gcn { agg, out }
    }

    /// Accumulates the loss gradient for `CE(logits, target)` into `grads`
    /// and, when a mask was used, returns the per-arc mask gradient. The
    /// mask must be the one the trace was produced with.
    pub fn backward(
        &self,
        adj: &Adjacency,
        mask: Option<&[F]>,
        trace: ForwardTrace<F>,
        target: usize,
        grads: &mut Gradients<F>,
    ) -> Result<Option<Vec<F>>, ModelError> {
        let c = self.config.classes;
        if target >= c {
            return Err(ModelError::BadTarget { target, classes: c });
        }
        let hidden = self.config.hidden_dim;
        let n = adj.n_nodes();
        let dn = adj.document_node();
        let cb = self.classifier_param_base();

        // classifier head: logits = (h_dn W1 + b1) W2 + b2
        let mut dlogits = Mat::from_vec(1, c, trace.probs.clone());
        let cur = dlogits.get(0, target);
        dlogits.set(0, target, cur - F::one());

        grads.mats[cb + 2].add_matmul_tn(&trace.x_mid, &dlogits);
        dlogits.add_col_sums_into(&mut grads.mats[cb + 3]);
        let mut dx_mid = Mat::zeros(1, hidden);
        dx_mid.add_matmul_nt(&dlogits, &self.w2);

        grads.mats[cb].add_matmul_tn(&trace.h_dn, &dx_mid);
        dx_mid.add_col_sums_into(&mut grads.mats[cb + 1]);
        let mut dh_dn = Mat::zeros(1, hidden);
        dh_dn.add_matmul_nt(&dx_mid, &self.w1);

        let mut dh = Mat::zeros(n, hidden);
        dh.row_mut(dn).copy_from_slice(dh_dn.row(0));

        let mut dmask = mask.map(|_| vec![F::zero(); adj.n_stored_edges()]);

        for li in (0..self.layers.len()).rev() {
            let h_prev = if li == 0 {
                &trace.h0
            } else {
                trace.layers[li - 1].out()
            };
            dh = self.layer_backward(
                li,
                h_prev,
                &trace.layers[li],
                adj,
                mask,
                dh,
                grads,
                dmask.as_mut(),
            );
        }

        // input projection: h0 = ELU(x_in W_in + b_in)
        let mut dz = dh;
        for (v, &o) in dz.data_mut().iter_mut().zip(trace.h0.data()) {
            *v = *v * elu_grad_from_output(o);
        }
        grads.mats[0].add_matmul_tn(&trace.x_in, &dz);
        dz.add_col_sums_into(&mut grads.mats[1]);

        Ok(dmask)
    }

    #[allow(clippy::too_many_arguments)]
    fn layer_backward(
        &self,
        li: usize,
        h_prev: &Mat<F>,
        trace: &LayerTrace<F>,
        adj: &Adjacency,
        mask: Option<&[F]>,
        dh_out: Mat<F>,
        grads: &mut Gradients<F>,
        dmask: Option<&mut Vec<F>>,
    ) -> Mat<F> {
        let base = self.layer_param_base(li);
        match (&self.layers[li], trace) {
            (LayerParams::Gcn { w, .. }, LayerTrace::Gcn { agg, out }) => {
                let n = adj.n_nodes();
                let mut d_o = dh_out;
                for (v, &o) in d_o.data_mut().iter_mut().zip(out.data()) {
                    *v = *v * elu_grad_from_output(o);
                }
                grads.mats[base].add_matmul_tn(agg, &d_o);
                d_o.add_col_sums_into(&mut grads.mats[base + 1]);
                let mut d_agg = Mat::zeros(n, agg.cols());
                d_agg.add_matmul_nt(&d_o, w);
                let mut dh_in = Mat::zeros(n, h_prev.cols());
                let mut dmask = dmask;
                for i in 0..n {
                    let d_row = d_agg.row(i);
                    if d_row.iter().all(|v| *v == F::zero()) {
                        continue;
                    }
                    for idx in adj.entry_range(i) {
                        let e = adj.all_entries()[idx];
                        let norm = F::from_f64(
                            adj.inv_sqrt_deg[e.src as usize] * adj.inv_sqrt_deg[i],
                        );
                        let coef = norm * mask_weight(mask, e);
                        axpy(coef, d_row, dh_in.row_mut(e.src as usize));
                        if e.edge != SELF_EDGE {
                            if let Some(dm) = &mut dmask {
                                dm[e.edge as usize] = dm[e.edge as usize]
                                    + norm * dot(h_prev.row(e.src as usize), d_row);
                            }
                        }
                    }
                }
                dh_in
            }
            (
                layer @ (LayerParams::Gatv2 { .. } | LayerParams::Gat { .. }),
                LayerTrace::Attn {
                    s,
                    t,
                    scal_src,
                    scal_dst,
                    alpha,
                    p,
                    out,
                },
            ) => {
                let n = adj.n_nodes();
                let hidden = self.config.hidden_dim;
                let dh_width = self.config.head_dim();
                let k_heads = self.config.heads;
                let slope = F::from_f64(self.config.negative_slope);

                let w_out = match layer {
                    LayerParams::Gatv2 { w_out, .. } => w_out,
                    LayerParams::Gat { w_out, .. } => w_out,
                    LayerParams::Gcn { .. } => unreachable!(),
                };

                // output transform: out = ELU(P W_out + b_out)
                let mut d_o = dh_out;
                for (v, &o) in d_o.data_mut().iter_mut().zip(out.data()) {
                    *v = *v * elu_grad_from_output(o);
                }
                let i_wout = base + 3 * k_heads;
                grads.mats[i_wout].add_matmul_tn(p, &d_o);
                d_o.add_col_sums_into(&mut grads.mats[i_wout + 1]);
                let mut d_p = Mat::zeros(n, hidden);
                d_p.add_matmul_nt(&d_o, w_out);

                let mut dh_in = Mat::zeros(n, h_prev.cols());
                let mut dmask = dmask;
                for k in 0..k_heads {
                    let s_k = &s[k];
                    let alpha_k = &alpha[k];
                    let mut ds = Mat::zeros(n, dh_width);
                    // two-projection state
                    let mut dt = Mat::zeros(n, dh_width);
                    let mut da = vec![F::zero(); dh_width];
                    // one-projection state
                    let mut d_ssc = vec![F::zero(); n];
                    let mut d_tsc = vec![F::zero(); n];

                    let mut dalpha: Vec<F> = Vec::new();
                    for i in 0..n {
                        let range = adj.entry_range(i);
                        let dpi = &d_p.row(i)[k * dh_width..(k + 1) * dh_width];
                        if dpi.iter().all(|v| *v == F::zero()) {
                            continue;
                        }
                        dalpha.clear();
                        dalpha.resize(range.len(), F::zero());
                        // message aggregation: p_i += alpha * m * s_j
                        for (local, idx) in range.clone().enumerate() {
                            let e = adj.all_entries()[idx];
                            let g = dot(s_k.row(e.src as usize), dpi);
                            let m = mask_weight(mask, e);
                            dalpha[local] = m * g;
                            if e.edge != SELF_EDGE {
                                if let Some(dm) = &mut dmask {
                                    dm[e.edge as usize] =
                                        dm[e.edge as usize] + alpha_k[idx] * g;
                                }
                            }
                            axpy(alpha_k[idx] * m, dpi, ds.row_mut(e.src as usize));
                        }
                        // softmax over the in-entries of node i
                        let mut dot_sum = F::zero();
                        for (local, idx) in range.clone().enumerate() {
                            dot_sum = dot_sum + alpha_k[idx] * dalpha[local];
                        }
                        for (local, idx) in range.clone().enumerate() {
                            let de = alpha_k[idx] * (dalpha[local] - dot_sum);
                            if de == F::zero() {
                                continue;
                            }
                            let e = adj.all_entries()[idx];
                            let j = e.src as usize;
                            match layer {
                                LayerParams::Gatv2 { attn, .. } => {
                                    // score = a . LeakyReLU(s_j + t_i)
                                    let a = attn[k].row(0);
                                    let t_k = &t[k];
                                    for d in 0..dh_width {
                                        let z = s_k.get(j, d) + t_k.get(i, d);
                                        let dz = de * a[d] * leaky_relu_grad(z, slope);
                                        ds.set(j, d, ds.get(j, d) + dz);
                                        dt.set(i, d, dt.get(i, d) + dz);
                                        da[d] = da[d] + de * leaky_relu(z, slope);
                                    }
                                }
                                LayerParams::Gat { .. } => {
                                    // score = LeakyReLU(ssc_j + tsc_i)
                                    let z = scal_src[k][j] + scal_dst[k][i];
                                    let dz = de * leaky_relu_grad(z, slope);
                                    d_ssc[j] = d_ssc[j] + dz;
                                    d_tsc[i] = d_tsc[i] + dz;
                                }
                                LayerParams::Gcn { .. } => unreachable!(),
                            }
                        }
                    }

                    match layer {
                        LayerParams::Gatv2 { w_src, w_dst, .. } => {
                            let g_attn = &mut grads.mats[base + 2 * k_heads + k];
                            for (gd, &v) in g_attn.row_mut(0).iter_mut().zip(da.iter()) {
                                *gd = *gd + v;
                            }
                            grads.mats[base + k].add_matmul_tn(h_prev, &ds);
                            grads.mats[base + k_heads + k].add_matmul_tn(h_prev, &dt);
                            dh_in.add_matmul_nt(&ds, &w_src[k]);
                            dh_in.add_matmul_nt(&dt, &w_dst[k]);
                        }
                        LayerParams::Gat {
                            w,
                            attn_src,
                            attn_dst,
                            ..
                        } => {
                            // fold the scalar score gradients into ds and
                            // the score-vector gradients
                            let a_src = attn_src[k].row(0);
                            let a_dst = attn_dst[k].row(0);
                            let mut da_src = vec![F::zero(); dh_width];
                            let mut da_dst = vec![F::zero(); dh_width];
                            for j in 0..n {
                                if d_ssc[j] != F::zero() {
                                    axpy(d_ssc[j], a_src, ds.row_mut(j));
                                    axpy(d_ssc[j], s_k.row(j), &mut da_src);
                                }
                                if d_tsc[j] != F::zero() {
                                    axpy(d_tsc[j], a_dst, ds.row_mut(j));
                                    axpy(d_tsc[j], s_k.row(j), &mut da_dst);
                                }
                            }
                            {
                                let g = &mut grads.mats[base + k_heads + k];
                                for (gd, &v) in g.row_mut(0).iter_mut().zip(da_src.iter()) {
                                    *gd = *gd + v;
                                }
                            }
                            {
                                let g = &mut grads.mats[base + 2 * k_heads + k];
                                for (gd, &v) in g.row_mut(0).iter_mut().zip(da_dst.iter()) {
                                    *gd = *gd + v;
                                }
                            }
                            grads.mats[base + k].add_matmul_tn(h_prev, &ds);
                            dh_in.add_matmul_nt(&ds, &w[k]);
                        }
                        LayerParams::Gcn { .. } => unreachable!(),
                    }
                }
                dh_in
            }
            _ => unreachable!("trace kind does not match layer kind"),
        }
    }
}

enum AttnKind<'a, F: Real> {
    TwoProjection {
        w_src: &'a [Mat<F>],
        w_dst: &'a [Mat<F>],
    },
    OneProjection {
        w: &'a [Mat<F>],
        attn_src: &'a [Mat<F>],
        attn_dst: &'a [Mat<F>],
    },
}

#[inline]
fn mask_weight<F: Real>(mask: Option<&[F]>, e: AdjEntry) -> F {
    match mask {
        Some(m) if e.edge != SELF_EDGE => m[e.edge as usize],
        _ => F::one(),
    }
}

/// Numerically stable softmax.
pub fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<F> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum = exps.iter().fold(F::zero(), |a, &b| a + b);
    exps.into_iter().map(|x| x / sum).collect()
}

/// Cross-entropy of a target class against raw logits, via log-sum-exp.
pub fn cross_entropy<F: Real>(logits: &[F], target: usize) -> F {
    assert!(target < logits.len(), "target class out of range");
    let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let sum = logits
        .iter()
        .fold(F::zero(), |a, &b| a + (b - max).exp());
    max + sum.ln() - logits[target]
}
