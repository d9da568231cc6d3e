//! Dataset splitting, the training loop, and metric reporting.
//!
//! Documents are whole graphs, so training steps one document at a time.
//! After every epoch the validation set is scored and the parameters from
//! the best epoch (lowest validation loss by default) are the ones returned.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{cross_entropy, Adam, Adjacency, Gradients, Model, ModelConfig, ModelError, Real};
use crate::graph::{read_graph_file, DocumentGraph, GraphError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no labeled documents to split")]
    EmptyDataset,
    #[error("{part} set is empty after splitting")]
    EmptySplit { part: &'static str },
    #[error("graph '{path}': {source}")]
    Graph {
        path: PathBuf,
        source: GraphError,
    },
    #[error("non-finite loss on document '{doc_id}' at epoch {epoch}")]
    NonFiniteLoss { doc_id: String, epoch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which per-epoch metric picks the returned parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[derive(Default)]
pub enum Selection {
    /// Lowest mean validation cross-entropy.
    #[default]
    ValLoss,
    /// Lowest validation error rate (1 − accuracy).
    ValError,
}


impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Selection::ValLoss => "val_loss",
            Selection::ValError => "val_error",
        })
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "val_loss" => Ok(Selection::ValLoss),
            "val_error" => Ok(Selection::ValError),
            other => Err(format!("unknown selection '{other}' (expected val_loss or val_error)")),
        }
    }
}

/// One labeled document: where its graph lives and what it should predict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitItem {
    pub doc_id: String,
    pub graph_path: PathBuf,
    pub label: u8,
    pub call_date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    /// Events dated in or after this calendar year form the test set.
    pub test_year_start: i32,
    /// Fraction of the remaining events held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<SplitItem>,
    pub validation: Vec<SplitItem>,
    pub test: Vec<SplitItem>,
}

/// Splits labeled events chronologically: the test set is everything dated
/// in or after the cutoff year; the rest is shuffled with the seed and the
/// tail `val_fraction` becomes validation.
pub fn make_split(items: &[SplitItem], spec: &SplitSpec) -> Result<DatasetSplit, TrainError> {
    if items.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rest = Vec::new();
    let mut test = Vec::new();
    for item in items {
        if item.call_date.year() >= spec.test_year_start {
            test.push(item.clone());
        } else {
            rest.push(item.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rest.shuffle(&mut rng);
    let val_count = (rest.len() as f64 * spec.val_fraction).round() as usize;
    let validation = rest.split_off(rest.len() - val_count.min(rest.len()));
    if rest.is_empty() {
        return Err(TrainError::EmptySplit { part: "train" });
    }
    Ok(DatasetSplit {
        train: rest,
        validation,
        test,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub lr: f64,
    pub seed: u64,
    pub model: ModelConfig,
    pub selection: Selection,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_max: 20,
            lr: 1e-5,
            seed: 17,
            model: ModelConfig::default(),
            selection: Selection::ValLoss,
        }
    }
}

/// A document graph ready to train on: adjacency prebuilt, label attached.
#[derive(Debug, Clone)]
pub struct LoadedDoc {
    pub doc_id: String,
    pub graph: DocumentGraph,
    pub adjacency: Adjacency,
    pub label: usize,
}

impl LoadedDoc {
    pub fn new(doc_id: impl Into<String>, graph: DocumentGraph, label: usize) -> LoadedDoc {
        let adjacency = Adjacency::of(&graph);
        LoadedDoc {
            doc_id: doc_id.into(),
            graph,
            adjacency,
            label,
        }
    }

    pub fn load(item: &SplitItem) -> Result<LoadedDoc, TrainError> {
        let graph = read_graph_file(&item.graph_path).map_err(|source| TrainError::Graph {
            path: item.graph_path.clone(),
            source,
        })?;
        Ok(LoadedDoc::new(item.doc_id.clone(), graph, item.label as usize))
    }
}

pub fn load_docs(items: &[SplitItem]) -> Result<Vec<LoadedDoc>, TrainError> {
    items.iter().map(LoadedDoc::load).collect()
}

/// One epoch's scores, in the order they were computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_error: f64,
}

pub struct TrainOutcome<F: Real> {
    /// Parameters from the best epoch, not the last one.
    pub model: Model<F>,
    /// 1-based index of the selected epoch.
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Trains on graphs loaded from the split's paths. See [`train_loaded`].
pub fn train<F: Real>(split: &DatasetSplit, config: &TrainConfig) -> Result<TrainOutcome<F>, TrainError> {
    let train_docs = load_docs(&split.train)?;
    let val_docs = load_docs(&split.validation)?;
    train_loaded(&train_docs, &val_docs, config)
}

/// The training loop: batch size 1, iteration order reshuffled every epoch
/// from a single seeded stream, Adam updates, and per-epoch validation.
/// Returns the parameters of the epoch where the selection metric was
/// strictly lowest (ties keep the earlier epoch).
pub fn train_loaded<F: Real>(
    train: &[LoadedDoc],
    validation: &[LoadedDoc],
    config: &TrainConfig,
) -> Result<TrainOutcome<F>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptySplit { part: "train" });
    }
    if validation.is_empty() {
        return Err(TrainError::EmptySplit { part: "validation" });
    }
    let mut model: Model<F> = Model::new(config.model, config.seed)?;
    let names = model.param_names();
    let mut adam = Adam::new(config.lr, &model.params());
    let mut grads = Gradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.epochs_max);
    let mut best: Option<(f64, usize, Model<F>)> = None;
    for epoch in 1..=config.epochs_max {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for &i in &order {
            let doc = &train[i];
            let trace = model.forward(&doc.graph, &doc.adjacency, None)?;
            let loss = cross_entropy(&trace.logits, doc.label).to_f64();
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    doc_id: doc.doc_id.clone(),
                    epoch,
                });
            }
            loss_sum += loss;
            grads.zero();
            model.backward(&doc.adjacency, None, trace, doc.label, &mut grads)?;
            adam.step(&mut model.params_mut(), grads.mats(), &names)?;
        }
        let (val_loss, val_error) = validation_scores(&model, validation, epoch)?;
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_error,
        });
        let metric = match config.selection {
            Selection::ValLoss => val_loss,
            Selection::ValError => val_error,
        };
        if best.as_ref().is_none_or(|(m, _, _)| metric < *m) {
            best = Some((metric, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.expect("epochs_max >= 1 yields at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
    })
}

fn validation_scores<F: Real>(
    model: &Model<F>,
    docs: &[LoadedDoc],
    epoch: usize,
) -> Result<(f64, f64), TrainError> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for doc in docs {
        let trace = model.forward(&doc.graph, &doc.adjacency, None)?;
        let loss = cross_entropy(&trace.logits, doc.label).to_f64();
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                doc_id: doc.doc_id.clone(),
                epoch,
            });
        }
        loss_sum += loss;
        if argmax(&trace.probs) == doc.label {
            correct += 1;
        }
    }
    let n = docs.len() as f64;
    Ok((loss_sum / n, 1.0 - correct as f64 / n))
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

/// Confusion counts and the macro-averaged scores derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: usize,
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl EvalReport {
    /// Builds the report from `(actual, predicted)` class pairs.
    ///
    /// Per-class precision and recall fall back to 0 when their denominator
    /// is 0; macro F1 is the mean of per-class F1 scores, not the harmonic
    /// mean of the macro precision and recall.
    pub fn from_pairs(classes: usize, pairs: &[(usize, usize)]) -> EvalReport {
        assert!(classes >= 2, "need at least two classes");
        assert!(!pairs.is_empty(), "cannot score an empty dataset");
        let mut confusion = vec![vec![0usize; classes]; classes];
        for &(actual, predicted) in pairs {
            assert!(actual < classes && predicted < classes, "class out of range");
            confusion[actual][predicted] += 1;
        }
        let total: usize = pairs.len();
        let diag: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let mut p_sum = 0.0;
        let mut r_sum = 0.0;
        let mut f_sum = 0.0;
        for (c, row) in confusion.iter().enumerate() {
            let tp = row[c] as f64;
            let predicted_c: usize = (0..classes).map(|t| confusion[t][c]).sum();
            let actual_c: usize = row.iter().sum();
            let p = if predicted_c == 0 { 0.0 } else { tp / predicted_c as f64 };
            let r = if actual_c == 0 { 0.0 } else { tp / actual_c as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            p_sum += p;
            r_sum += r;
            f_sum += f;
        }
        EvalReport {
            classes,
            confusion,
            accuracy: diag as f64 / total as f64,
            macro_precision: p_sum / classes as f64,
            macro_recall: r_sum / classes as f64,
            macro_f1: f_sum / classes as f64,
        }
    }

    /// Aligned-text rendering with three decimals per metric.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("accuracy          {:.3}\n", self.accuracy));
        out.push_str(&format!("precision (macro) {:.3}\n", self.macro_precision));
        out.push_str(&format!("recall (macro)    {:.3}\n", self.macro_recall));
        out.push_str(&format!("f1 (macro)        {:.3}\n", self.macro_f1));
        out.push('\n');
        out.push_str("confusion (rows = actual, cols = predicted)\n");
        out.push_str("      ");
        for c in 0..self.classes {
            out.push_str(&format!(" pred {c:>2}"));
        }
        out.push('\n');
        for (a, row) in self.confusion.iter().enumerate() {
            out.push_str(&format!("true {a}"));
            for &n in row {
                out.push_str(&format!(" {n:>7}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Argmax predictions over every document, reduced to an [`EvalReport`].
pub fn evaluate<F: Real>(model: &Model<F>, docs: &[LoadedDoc]) -> Result<EvalReport, TrainError> {
    assert!(!docs.is_empty(), "cannot evaluate an empty dataset");
    let mut pairs = Vec::with_capacity(docs.len());
    for doc in docs {
        let trace = model.forward(&doc.graph, &doc.adjacency, None)?;
        pairs.push((doc.label, argmax(&trace.probs)));
    }
    Ok(EvalReport::from_pairs(model.config.classes, &pairs))
}

/// Writes the report as pretty JSON and as an aligned-text table.
pub fn emit_report(report: &EvalReport, json_path: &Path, text_path: &Path) -> Result<(), TrainError> {
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(json_path, json)?;
    std::fs::write(text_path, report.render_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::PseudoProvider;
    use crate::gnn::LayerKind;
    use crate::graph::{attach_features, build_document_graph};
    use crate::penman::parse_penman_document;

    fn item(doc_id: &str, date: &str, label: u8) -> SplitItem {
        SplitItem {
            doc_id: doc_id.to_string(),
            graph_path: PathBuf::from(format!("{doc_id}.flag")),
            label,
            call_date: date.parse().unwrap(),
        }
    }

    #[test]
    fn selection_text_roundtrip() {
        assert_eq!(Selection::ValLoss.to_string(), "val_loss");
        assert_eq!(Selection::ValError.to_string(), "val_error");
        assert_eq!("val_loss".parse::<Selection>().unwrap(), Selection::ValLoss);
        assert_eq!("val_error".parse::<Selection>().unwrap(), Selection::ValError);
        assert!("accuracy".parse::<Selection>().is_err());
        assert_eq!(Selection::default(), Selection::ValLoss);
    }

    #[test]
    fn split_sizes_and_temporal_boundary() {
        let mut items = Vec::new();
        for i in 0..8 {
            items.push(item(&format!("d{i}"), "2019-03-01", (i % 2) as u8));
        }
        items.push(item("t0", "2020-01-15", 0));
        items.push(item("t1", "2021-06-30", 1));
        let spec = SplitSpec {
            test_year_start: 2020,
            val_fraction: 0.2,
            seed: 7,
        };
        let split = make_split(&items, &spec).unwrap();
        assert_eq!(split.train.len(), 6);
        assert_eq!(split.validation.len(), 2);
        assert_eq!(split.test.len(), 2);
        assert!(split.test.iter().all(|i| i.call_date.year() >= 2020));
        assert!(split.train.iter().all(|i| i.call_date.year() < 2020));
        assert!(split.validation.iter().all(|i| i.call_date.year() < 2020));
        let again = make_split(&items, &spec).unwrap();
        assert_eq!(split, again);
    }

    #[test]
    fn split_partitions_the_input() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..50 {
            let n = rng.gen_range(2..40);
            let items: Vec<SplitItem> = (0..n)
                .map(|i| {
                    let year = rng.gen_range(2015..2022);
                    item(&format!("d{i}"), &format!("{year}-05-0{}", 1 + i % 9), 0)
                })
                .collect();
            let spec = SplitSpec {
                test_year_start: 2020,
                val_fraction: rng.gen_range(0.0..0.5),
                seed: trial,
            };
            match make_split(&items, &spec) {
                Ok(split) => {
                    let mut ids: Vec<&str> = split
                        .train
                        .iter()
                        .chain(&split.validation)
                        .chain(&split.test)
                        .map(|i| i.doc_id.as_str())
                        .collect();
                    ids.sort_unstable();
                    let mut expect: Vec<&str> = items.iter().map(|i| i.doc_id.as_str()).collect();
                    expect.sort_unstable();
                    assert_eq!(ids, expect, "trial {trial}: parts must partition the input");
                    let unique: std::collections::HashSet<&&str> = ids.iter().collect();
                    assert_eq!(unique.len(), ids.len());
                }
                Err(TrainError::EmptySplit { .. }) => {} // everything in the test year is legal input
                Err(other) => panic!("trial {trial}: unexpected error {other}"),
            }
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let spec = SplitSpec {
            test_year_start: 2020,
            val_fraction: 0.2,
            seed: 0,
        };
        assert!(matches!(make_split(&[], &spec), Err(TrainError::EmptyDataset)));
        let only_test = vec![item("a", "2021-01-05", 0)];
        assert!(matches!(
            make_split(&only_test, &spec),
            Err(TrainError::EmptySplit { part: "train" })
        ));
    }

    fn tiny_doc(doc_id: &str, text: &str, label: usize, dim: usize) -> LoadedDoc {
        let sentences = parse_penman_document(text).unwrap();
        let mut graph = build_document_graph(doc_id, &sentences).unwrap();
        attach_features(&mut graph, &sentences, &PseudoProvider::new(5, dim)).unwrap();
        LoadedDoc::new(doc_id, graph, label)
    }

    fn tiny_config(seed: u64, lr: f64, epochs_max: usize) -> TrainConfig {
        TrainConfig {
            epochs_max,
            lr,
            seed,
            // Two layers minimum: concept features are two hops from the
            // document node, so a one-layer model cannot see them at all.
            model: ModelConfig {
                input_dim: 8,
                hidden_dim: 8,
                layers: 2,
                heads: 2,
                classes: 2,
                layer_kind: LayerKind::Gatv2,
                negative_slope: 0.2,
            },
            selection: Selection::ValLoss,
        }
    }

    #[test]
    fn single_document_is_memorized() {
        let doc = tiny_doc(
            "d0",
            "# ::tok profit grows\n# ::alignments p-0-1 g-1-2\n(g / grow-01 :ARG1 (p / profit))\n",
            1,
            8,
        );
        let docs = vec![doc];
        let out = train_loaded::<f64>(&docs, &docs, &tiny_config(3, 1e-2, 200)).unwrap();
        let last = out.log.last().unwrap();
        assert!(
            last.train_loss < 1e-2,
            "expected memorization, final loss {}",
            last.train_loss
        );
    }

    #[test]
    fn zero_learning_rate_freezes_validation_loss() {
        let a = tiny_doc(
            "a",
            "# ::tok strong quarter\n# ::alignments s-0-1 q-1-2\n(q / quarter :mod (s / strong))\n",
            1,
            8,
        );
        let b = tiny_doc(
            "b",
            "# ::tok weak quarter\n# ::alignments w-0-1 q-1-2\n(q / quarter :mod (w / weak))\n",
            0,
            8,
        );
        let docs = vec![a, b];
        let out = train_loaded::<f64>(&docs, &docs, &tiny_config(9, 0.0, 5)).unwrap();
        let first = out.log[0].val_loss;
        for e in &out.log {
            assert_eq!(e.val_loss, first, "epoch {}: loss moved with lr = 0", e.epoch);
        }
        assert_eq!(out.best_epoch, 1, "ties must keep the earliest epoch");
    }

    #[test]
    fn same_seed_reproduces_the_log() {
        let a = tiny_doc(
            "a",
            "# ::tok strong quarter\n# ::alignments s-0-1 q-1-2\n(q / quarter :mod (s / strong))\n",
            1,
            8,
        );
        let b = tiny_doc(
            "b",
            "# ::tok weak quarter\n# ::alignments w-0-1 q-1-2\n(q / quarter :mod (w / weak))\n",
            0,
            8,
        );
        let docs = vec![a, b];
        let cfg = tiny_config(11, 1e-3, 6);
        let one = train_loaded::<f64>(&docs, &docs, &cfg).unwrap();
        let two = train_loaded::<f64>(&docs, &docs, &cfg).unwrap();
        assert_eq!(one.log, two.log);
        assert_eq!(one.best_epoch, two.best_epoch);
        assert_eq!(one.model, two.model);
    }

    #[test]
    fn best_epoch_has_minimal_validation_loss() {
        let a = tiny_doc(
            "a",
            "# ::tok strong quarter\n# ::alignments s-0-1 q-1-2\n(q / quarter :mod (s / strong))\n",
            1,
            8,
        );
        let b = tiny_doc(
            "b",
            "# ::tok weak quarter\n# ::alignments w-0-1 q-1-2\n(q / quarter :mod (w / weak))\n",
            0,
            8,
        );
        let docs = vec![a, b];
        let out = train_loaded::<f64>(&docs, &docs, &tiny_config(13, 5e-3, 10)).unwrap();
        let best = out.log[out.best_epoch - 1].val_loss;
        for e in &out.log {
            assert!(best <= e.val_loss, "epoch {} beats the selected one", e.epoch);
        }
        // The returned parameters really are that epoch's parameters.
        let (loss, _) = validation_scores(&out.model, &docs, 0).unwrap();
        assert!((loss - best).abs() < 1e-12);
    }

    #[test]
    fn empty_train_or_validation_rejected() {
        let doc = tiny_doc(
            "a",
            "# ::tok strong quarter\n# ::alignments s-0-1 q-1-2\n(q / quarter :mod (s / strong))\n",
            1,
            8,
        );
        let docs = vec![doc];
        let cfg = tiny_config(1, 1e-3, 1);
        assert!(matches!(
            train_loaded::<f64>(&[], &docs, &cfg),
            Err(TrainError::EmptySplit { part: "train" })
        ));
        assert!(matches!(
            train_loaded::<f64>(&docs, &[], &cfg),
            Err(TrainError::EmptySplit { part: "validation" })
        ));
    }

    #[test]
    fn hand_computed_confusion_metrics() {
        // Binary confusion with TP = 3, FN = 1, FP = 2, TN = 4 (class 1 positive).
        let mut pairs = Vec::new();
        pairs.extend(std::iter::repeat_n((1, 1), 3));
        pairs.push((1, 0));
        pairs.extend(std::iter::repeat_n((0, 1), 2));
        pairs.extend(std::iter::repeat_n((0, 0), 4));
        let r = EvalReport::from_pairs(2, &pairs);
        assert_eq!(r.confusion, vec![vec![4, 2], vec![1, 3]]);
        assert!((r.accuracy - 0.7).abs() < 1e-12);
        assert!((r.macro_precision - 0.7).abs() < 1e-12);
        assert!((r.macro_recall - (0.75 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert!((r.macro_f1 - 23.0 / 33.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_single_class_predictions() {
        let perfect = EvalReport::from_pairs(2, &[(0, 0), (1, 1), (0, 0), (1, 1)]);
        assert_eq!(perfect.accuracy, 1.0);
        assert_eq!(perfect.macro_precision, 1.0);
        assert_eq!(perfect.macro_recall, 1.0);
        assert_eq!(perfect.macro_f1, 1.0);

        // Balanced data, everything predicted class 0.
        let onesided = EvalReport::from_pairs(2, &[(0, 0), (0, 0), (1, 0), (1, 0)]);
        assert!((onesided.accuracy - 0.5).abs() < 1e-12);
        assert!((onesided.macro_recall - 0.5).abs() < 1e-12);
        assert!((onesided.macro_precision - 0.25).abs() < 1e-12);
        assert!((onesided.macro_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn macro_metrics_survive_class_relabeling() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pairs: Vec<(usize, usize)> = (0..60)
            .map(|_| (rng.gen_range(0..2), rng.gen_range(0..2)))
            .collect();
        let swapped: Vec<(usize, usize)> = pairs.iter().map(|&(a, p)| (1 - a, 1 - p)).collect();
        let r1 = EvalReport::from_pairs(2, &pairs);
        let r2 = EvalReport::from_pairs(2, &swapped);
        assert_eq!(r1.accuracy, r2.accuracy);
        assert!((r1.macro_precision - r2.macro_precision).abs() < 1e-12);
        assert!((r1.macro_recall - r2.macro_recall).abs() < 1e-12);
        assert!((r1.macro_f1 - r2.macro_f1).abs() < 1e-12);
        let diag: usize = (0..2).map(|c| r1.confusion[c][c]).sum();
        let total: usize = r1.confusion.iter().flatten().sum();
        assert!((r1.accuracy - diag as f64 / total as f64).abs() < 1e-12);
    }

    #[test]
    fn report_files_roundtrip() {
        let r = EvalReport::from_pairs(2, &[(0, 0), (1, 1), (1, 0), (0, 0)]);
        let dir = tempfile::tempdir().unwrap();
        let json_path = dir.path().join("report.json");
        let text_path = dir.path().join("report.txt");
        emit_report(&r, &json_path, &text_path).unwrap();
        let back: EvalReport =
            serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
        assert_eq!(back, r);
        let text = std::fs::read_to_string(&text_path).unwrap();
        assert!(text.contains("accuracy          0.750"));
        assert!(text.contains("f1 (macro)"));
        assert!(text.contains("true 0"));
    }

    #[test]
    fn evaluate_scores_loaded_docs() {
        let a = tiny_doc(
            "a",
            "# ::tok strong quarter\n# ::alignments s-0-1 q-1-2\n(q / quarter :mod (s / strong))\n",
            1,
            8,
        );
        let b = tiny_doc(
            "b",
            "# ::tok weak quarter\n# ::alignments w-0-1 q-1-2\n(q / quarter :mod (w / weak))\n",
            0,
            8,
        );
        let docs = vec![a, b];
        let cfg = tiny_config(29, 1e-2, 60);
        let out = train_loaded::<f64>(&docs, &docs, &cfg).unwrap();
        let report = evaluate(&out.model, &docs).unwrap();
        assert_eq!(report.classes, 2);
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, 2);
        assert_eq!(report.accuracy, 1.0, "two separable docs should be learned");
    }
}
