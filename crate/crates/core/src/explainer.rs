//! Post-hoc edge-mask explanations of a single prediction.
//!
//! A sigmoid mask over the stored arcs is optimized so the masked forward
//! pass still predicts the model's own class while the mask is pushed to be
//! sparse and near-binary. Arcs outside a hop-limited neighborhood of the
//! document node stay frozen at weight 1. Sentences are ranked by the mask
//! weight of their sentence→document arc.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{cross_entropy, Adam, Adjacency, Gradients, Mat, Model, ModelError, Real};
use crate::graph::{DocumentGraph, NodeKind};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite explanation objective at epoch {epoch}")]
    NonFiniteObjective { epoch: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which class the mask is trained to preserve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainTarget {
    /// The model's own argmax prediction on the unmasked graph.
    Predicted,
    /// A fixed class index.
    Class(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    /// Arcs with both endpoints within this many hops of the document node
    /// are trainable; everything further stays at weight 1.
    pub hops: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Sparsity coefficient on the sum of trainable weights.
    pub sparsity: f64,
    /// Coefficient on the binary entropy of trainable weights, pushing them
    /// toward 0 or 1.
    pub entropy: f64,
    pub seed: u64,
    pub target: ExplainTarget,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            hops: 3,
            epochs: 1000,
            lr: 1e-2,
            sparsity: 0.005,
            entropy: 0.1,
            seed: 17,
            target: ExplainTarget::Predicted,
        }
    }
}

/// Optimized mask state, one entry per stored arc in graph edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask<F: Real> {
    pub logits: Vec<F>,
    /// `sigmoid(logit)` where trainable, exactly 1 where frozen.
    pub weights: Vec<F>,
    pub trainable: Vec<bool>,
    pub hops: usize,
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation<F: Real> {
    pub mask: EdgeMask<F>,
    /// The class the mask was optimized to preserve.
    pub target_class: usize,
    /// Final value of the full objective (loss + penalties).
    pub objective: f64,
}

fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Undirected BFS hop counts from the document node over the stored arcs.
fn hop_distances(graph: &DocumentGraph) -> Vec<usize> {
    let n = graph.n_nodes();
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); n];
    for &(src, dst) in &graph.edges {
        neighbors[src as usize].push(dst);
    }
    let mut dist = vec![usize::MAX; n];
    let dn = graph.document_node();
    dist[dn] = 0;
    let mut queue = VecDeque::from([dn]);
    while let Some(u) = queue.pop_front() {
        for &v in &neighbors[u] {
            let v = v as usize;
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Optimizes an edge mask so the masked graph keeps producing the target
/// class, under sparsity and binary-entropy penalties. Frozen arcs (outside
/// the hop neighborhood) contribute neither penalty nor gradient.
pub fn explain<F: Real>(
    graph: &DocumentGraph,
    model: &Model<F>,
    config: &ExplainConfig,
) -> Result<Explanation<F>, ExplainError> {
    let adj = Adjacency::of(graph);
    let unmasked = model.forward(graph, &adj, None)?;
    let target_class = match config.target {
        ExplainTarget::Predicted => argmax(&unmasked.probs),
        ExplainTarget::Class(c) => c,
    };

    let dist = hop_distances(graph);
    let trainable: Vec<bool> = graph
        .edges
        .iter()
        .map(|&(src, dst)| {
            dist[src as usize] <= config.hops && dist[dst as usize] <= config.hops
        })
        .collect();

    let n_arcs = graph.n_edges();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut logits: Mat<F> = Mat::zeros(1, n_arcs.max(1));
    for v in logits.data_mut() {
        *v = F::from_f64(rng.gen::<f64>() - 0.5);
    }
    let mut adam = Adam::new(config.lr, &[&logits]);
    let names = vec!["mask_logits".to_string()];
    let mut param_grads = Gradients::zeros_like(model);
    let mut weights = vec![F::one(); n_arcs];
    let mut objective = 0.0;

    for epoch in 1..=config.epochs {
        for e in 0..n_arcs {
            weights[e] = if trainable[e] {
                sigmoid(logits.data()[e])
            } else {
                F::one()
            };
        }
        let trace = model.forward(graph, &adj, Some(&weights))?;
        let loss = cross_entropy(&trace.logits, target_class).to_f64();
        let mut penalty = 0.0;
        for e in 0..n_arcs {
            if !trainable[e] {
                continue;
            }
            let w = weights[e].to_f64();
            penalty += config.sparsity * w;
            penalty += config.entropy * -(w * w.ln() + (1.0 - w) * (1.0 - w).ln());
        }
        objective = loss + penalty;
        if !objective.is_finite() {
            return Err(ExplainError::NonFiniteObjective { epoch });
        }
        param_grads.zero();
        let dmask = model
            .backward(&adj, Some(&weights), trace, target_class, &mut param_grads)?
            .expect("backward returns mask gradients when a mask is given");
        let mut dlogits: Mat<F> = Mat::zeros(1, n_arcs.max(1));
        for e in 0..n_arcs {
            if !trainable[e] {
                continue;
            }
            let w = weights[e].to_f64();
            let logit = logits.data()[e].to_f64();
            // d(entropy)/dw = ln((1-w)/w) = -logit; dw/dlogit = w(1-w).
            let dobj_dw = dmask[e].to_f64() + config.sparsity - config.entropy * logit;
            dlogits.data_mut()[e] = F::from_f64(dobj_dw * w * (1.0 - w));
        }
        adam.step(&mut [&mut logits], std::slice::from_ref(&dlogits), &names)?;
    }

    for e in 0..n_arcs {
        weights[e] = if trainable[e] {
            sigmoid(logits.data()[e])
        } else {
            F::one()
        };
    }
    Ok(Explanation {
        mask: EdgeMask {
            logits: logits.data()[..n_arcs].to_vec(),
            weights,
            trainable,
            hops: config.hops,
            epochs: config.epochs,
        },
        target_class,
        objective,
    })
}

fn argmax<F: Real>(xs: &[F]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub sentence: usize,
    /// Mask weight of the sentence→document arc.
    pub importance: f64,
}

/// One entry per sentence, descending importance; ties keep sentence order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRanking {
    pub entries: Vec<RankEntry>,
}

/// Ranks sentences by the mask weight of their sentence→document arc.
pub fn rank_sentences<F: Real>(mask: &EdgeMask<F>, graph: &DocumentGraph) -> SentenceRanking {
    let dn = graph.document_node() as u32;
    let mut entries = Vec::with_capacity(graph.n_sentences);
    for (e, &(src, dst)) in graph.edges.iter().enumerate() {
        if dst == dn && graph.origins[src as usize].kind == NodeKind::Sentence {
            entries.push(RankEntry {
                sentence: graph.origins[src as usize].sentence,
                importance: mask.weights[e].to_f64(),
            });
        }
    }
    entries.sort_by(|a, b| {
        b.importance
            .partial_cmp(&a.importance)
            .expect("mask weights are finite")
            .then(a.sentence.cmp(&b.sentence))
    });
    SentenceRanking { entries }
}

/// Writes the top-`k` sentences (clamped to the sentence count) as JSON and
/// as an aligned-text table. `texts[j]` is the display text of sentence `j`;
/// a placeholder is used when empty.
pub fn emit_explanation(
    ranking: &SentenceRanking,
    texts: &[String],
    k: usize,
    json_path: &Path,
    text_path: &Path,
) -> Result<(), ExplainError> {
    assert!(k >= 1, "top-k must be at least 1");
    #[derive(Serialize)]
    struct Row<'a> {
        rank: usize,
        sentence: usize,
        importance: f64,
        text: &'a str,
    }
    let top = ranking.entries.iter().take(k);
    let rows: Vec<Row> = top
        .enumerate()
        .map(|(i, e)| Row {
            rank: i + 1,
            sentence: e.sentence,
            importance: e.importance,
            text: texts.get(e.sentence).map_or("", |t| t.as_str()),
        })
        .collect();
    let mut json = serde_json::to_string_pretty(&rows)?;
    json.push('\n');
    std::fs::write(json_path, json)?;
    let mut out = String::from("rank sentence importance text\n");
    for r in &rows {
        let text = if r.text.is_empty() { "(no text)" } else { r.text };
        out.push_str(&format!(
            "{:>4} {:>8} {:>10.3} {}\n",
            r.rank, r.sentence, r.importance, text
        ));
    }
    std::fs::write(text_path, out)?;
    Ok(())
}
