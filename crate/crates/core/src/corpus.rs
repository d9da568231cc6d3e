//! Corpus manifests and a synthetic corpus generator with a planted signal.
//!
//! The manifest is one JSON object per line: `{doc_id, amr_path, ticker,
//! call_date}`, with `amr_path` resolved against the manifest's directory.
//! The generator produces AMR documents, a price history that encodes an
//! alternating up/down label for each document, and — for label-1 documents
//! only — a designated marker token planted in one recorded sentence, so
//! learning and explanation can be checked against ground truth.

use std::path::{Path, PathBuf};

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{EmbeddingArchive, EmbeddingProvider, PseudoProvider};
use crate::penman::{generate_random_amr, serialize_penman_document, SentenceAmr};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest line {line}: {source}")]
    ManifestLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error("truth line {line}: {source}")]
    TruthLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error("record serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// One corpus document: where its AMR lives and which call it transcribes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub doc_id: String,
    pub amr_path: PathBuf,
    pub ticker: String,
    pub call_date: NaiveDate,
}

/// Reads a JSONL manifest; relative `amr_path`s are resolved against the
/// manifest's own directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_text = line.trim();
        if line_text.is_empty() {
            continue;
        }
        let mut rec: ManifestRecord = serde_json::from_str(line_text)
            .map_err(|source| CorpusError::ManifestLine { line: i + 1, source })?;
        if rec.amr_path.is_relative() {
            rec.amr_path = base.join(&rec.amr_path);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest(records: &[ManifestRecord], path: &Path) -> Result<(), CorpusError> {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Ground truth for one generated document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub doc_id: String,
    pub label: u8,
    /// Which sentence carries the marker token; `None` for label-0 docs.
    pub marker_sentence: Option<usize>,
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRecord>, CorpusError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_text = line.trim();
        if line_text.is_empty() {
            continue;
        }
        let rec: TruthRecord = serde_json::from_str(line_text)
            .map_err(|source| CorpusError::TruthLine { line: i + 1, source })?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusSpec {
    /// Documents dated the year before `test_year`.
    pub n_train: usize,
    /// Documents dated in `test_year`.
    pub n_test: usize,
    pub test_year: i32,
    pub sentences_min: usize,
    pub sentences_max: usize,
    pub nodes_min: usize,
    pub nodes_max: usize,
    pub reentrancy_prob: f64,
    /// Token substituted into one sentence of every label-1 document. Must
    /// not collide with the random generator's vocabulary.
    pub marker: String,
    pub seed: u64,
    /// When set, also writes `embeddings.flage` with pseudo-provider rows of
    /// this dimension, so the archive ingestion path can be exercised.
    pub archive_dim: Option<usize>,
    /// Seed for the pseudo provider used to fill the archive.
    pub pseudo_seed: u64,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            n_train: 64,
            n_test: 32,
            test_year: 2020,
            sentences_min: 3,
            sentences_max: 6,
            nodes_min: 2,
            nodes_max: 6,
            reentrancy_prob: 0.15,
            marker: "surge-marker".to_string(),
            seed: 17,
            archive_dim: None,
            pseudo_seed: 5,
        }
    }
}

/// Everything `generate_corpus` wrote, by absolute path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub root: PathBuf,
    pub amr_dir: PathBuf,
    pub manifest: PathBuf,
    pub prices: PathBuf,
    pub truth: PathBuf,
    pub archive: Option<PathBuf>,
}

/// Writes a synthetic corpus under `out_dir`: `amr/<doc_id>.amr` files,
/// `manifest.jsonl`, `prices.csv`, `truth.jsonl`, and optionally
/// `embeddings.flage`.
///
/// Labels alternate 1, 0, 1, … within the train pool and within the test
/// pool. The price history encodes the label for both the daily and the
/// weekly horizon: six trading dates on each side of the call, closes near
/// 10 before, near 11 (label 1) or 9.5 (label 0) after, with jitter small
/// enough to preserve the inequalities.
pub fn generate_corpus(
    out_dir: &Path,
    spec: &SyntheticCorpusSpec,
) -> Result<CorpusPaths, CorpusError> {
    assert!(spec.n_train + spec.n_test > 0, "corpus must have documents");
    assert!(spec.sentences_min >= 1 && spec.sentences_min <= spec.sentences_max);
    assert!(spec.nodes_min >= 1 && spec.nodes_min <= spec.nodes_max);
    let amr_dir = out_dir.join("amr");
    std::fs::create_dir_all(&amr_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut manifest = Vec::new();
    let mut truth = Vec::new();
    let mut prices = String::from("ticker,date,close\n");
    let mut archive = spec.archive_dim.map(EmbeddingArchive::new);
    let provider = PseudoProvider::new(spec.pseudo_seed, spec.archive_dim.unwrap_or(1));

    for i in 0..spec.n_train + spec.n_test {
        let in_test = i >= spec.n_train;
        let pool_index = if in_test { i - spec.n_train } else { i };
        let year = if in_test { spec.test_year } else { spec.test_year - 1 };
        let label = u8::from(pool_index % 2 == 0);
        let doc_id = format!("doc{i:04}");
        let ticker = format!("T{i:04}");

        let m = rng.gen_range(spec.sentences_min..=spec.sentences_max);
        let mut sentences: Vec<SentenceAmr> = (0..m)
            .map(|_| {
                generate_random_amr(
                    rng.gen::<u64>(),
                    rng.gen_range(spec.nodes_min..=spec.nodes_max),
                    spec.reentrancy_prob,
                )
            })
            .collect();
        let marker_sentence = if label == 1 {
            let j = rng.gen_range(0..m);
            let s = &mut sentences[j];
            let node = rng.gen_range(0..s.nodes.len());
            let span = s.nodes[node]
                .alignment
                .expect("generated nodes are always aligned");
            s.tokens[span.start] = spec.marker.clone();
            Some(j)
        } else {
            None
        };
        std::fs::write(
            amr_dir.join(format!("{doc_id}.amr")),
            serialize_penman_document(&sentences),
        )?;

        if let Some(archive) = &mut archive {
            for (j, s) in sentences.iter().enumerate() {
                let mut rows = Vec::with_capacity(s.tokens.len() * provider.dimension());
                for t in 0..s.tokens.len() {
                    rows.extend(provider.token_embedding(j, &s.tokens, t)?);
                }
                archive.insert(&doc_id, j, rows)?;
            }
        }

        let call_date = NaiveDate::from_ymd_opt(year, 1, 10)
            .expect("jan 10 exists in every year")
            + Days::new((pool_index * 3 % 340) as u64);
        let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(-0.2..=0.2);
        let after_base = if label == 1 { 11.0 } else { 9.5 };
        for k in 1..=6u64 {
            let before = call_date - Days::new(k);
            let after = call_date + Days::new(k);
            prices.push_str(&format!(
                "{ticker},{before},{:.4}\n",
                10.0 + jitter(&mut rng)
            ));
            prices.push_str(&format!(
                "{ticker},{after},{:.4}\n",
                after_base + jitter(&mut rng)
            ));
        }

        manifest.push(ManifestRecord {
            doc_id: doc_id.clone(),
            amr_path: PathBuf::from("amr").join(format!("{doc_id}.amr")),
            ticker,
            call_date,
        });
        truth.push(TruthRecord {
            doc_id,
            label,
            marker_sentence,
        });
    }

    let manifest_path = out_dir.join("manifest.jsonl");
    write_manifest(&manifest, &manifest_path)?;
    let prices_path = out_dir.join("prices.csv");
    std::fs::write(&prices_path, prices)?;
    let truth_path = out_dir.join("truth.jsonl");
    let mut truth_text = String::new();
    for rec in &truth {
        truth_text.push_str(&serde_json::to_string(rec)?);
        truth_text.push('\n');
    }
    std::fs::write(&truth_path, truth_text)?;
    let archive_path = match archive {
        Some(a) => {
            let p = out_dir.join("embeddings.flage");
            a.write_file(&p)?;
            Some(p)
        }
        None => None,
    };

    Ok(CorpusPaths {
        root: out_dir.to_path_buf(),
        amr_dir,
        manifest: manifest_path,
        prices: prices_path,
        truth: truth_path,
        archive: archive_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{label_event, load_prices_file, CallEvent, Horizon};
    use crate::penman::parse_penman_document;

    fn small_spec() -> SyntheticCorpusSpec {
        SyntheticCorpusSpec {
            n_train: 6,
            n_test: 4,
            seed: 3,
            ..SyntheticCorpusSpec::default()
        }
    }

    #[test]
    fn manifest_roundtrip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            ManifestRecord {
                doc_id: "a".to_string(),
                amr_path: PathBuf::from("amr/a.amr"),
                ticker: "T0001".to_string(),
                call_date: "2019-04-05".parse().unwrap(),
            },
            ManifestRecord {
                doc_id: "b".to_string(),
                amr_path: PathBuf::from("/abs/b.amr"),
                ticker: "T0002".to_string(),
                call_date: "2020-06-07".parse().unwrap(),
            },
        ];
        let path = dir.path().join("manifest.jsonl");
        write_manifest(&records, &path).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].amr_path, dir.path().join("amr/a.amr"));
        assert_eq!(back[1].amr_path, PathBuf::from("/abs/b.amr"));
        assert_eq!(back[0].call_date, records[0].call_date);
    }

    #[test]
    fn manifest_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.jsonl");
        std::fs::write(
            &path,
            "{\"doc_id\":\"a\",\"amr_path\":\"a.amr\",\"ticker\":\"T\",\"call_date\":\"2019-01-02\"}\nnot json\n",
        )
        .unwrap();
        match read_manifest(&path).unwrap_err() {
            CorpusError::ManifestLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected: {other}"),
        }
    }

    #[test]
    fn generated_corpus_has_consistent_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let paths = generate_corpus(dir.path(), &spec).unwrap();
        let manifest = read_manifest(&paths.manifest).unwrap();
        let truth = read_truth(&paths.truth).unwrap();
        assert_eq!(manifest.len(), 10);
        assert_eq!(truth.len(), 10);
        // Labels alternate within each pool, starting at 1.
        let labels: Vec<u8> = truth.iter().map(|t| t.label).collect();
        assert_eq!(labels[..6], [1, 0, 1, 0, 1, 0]);
        assert_eq!(labels[6..], [1, 0, 1, 0]);
        for (rec, tr) in manifest.iter().zip(&truth) {
            assert_eq!(rec.doc_id, tr.doc_id);
            let text = std::fs::read_to_string(&rec.amr_path).unwrap();
            let sentences = parse_penman_document(&text).unwrap();
            let marked: Vec<usize> = sentences
                .iter()
                .enumerate()
                .filter(|(_, s)| s.tokens.iter().any(|t| t == &spec.marker))
                .map(|(j, _)| j)
                .collect();
            match tr.marker_sentence {
                Some(j) => {
                    assert_eq!(tr.label, 1);
                    assert_eq!(marked, vec![j], "{}: marker must sit in the recorded sentence", rec.doc_id);
                }
                None => {
                    assert_eq!(tr.label, 0);
                    assert!(marked.is_empty(), "{}: label-0 doc must not carry the marker", rec.doc_id);
                }
            }
        }
        // Temporal pools: first 6 the year before, last 4 in the test year.
        use chrono::Datelike;
        assert!(manifest[..6].iter().all(|r| r.call_date.year() == 2019));
        assert!(manifest[6..].iter().all(|r| r.call_date.year() == 2020));
    }

    #[test]
    fn price_history_encodes_the_labels_for_both_horizons() {
        let dir = tempfile::tempdir().unwrap();
        let paths = generate_corpus(dir.path(), &small_spec()).unwrap();
        let manifest = read_manifest(&paths.manifest).unwrap();
        let truth = read_truth(&paths.truth).unwrap();
        let store = load_prices_file(&paths.prices).unwrap();
        for (rec, tr) in manifest.iter().zip(&truth) {
            let event = CallEvent {
                doc_id: rec.doc_id.clone(),
                ticker: rec.ticker.clone(),
                call_date: rec.call_date,
            };
            for horizon in [Horizon::Daily, Horizon::Weekly] {
                let got = label_event(&store, &event, horizon).unwrap();
                assert_eq!(got, tr.label, "{} {horizon}", rec.doc_id);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = small_spec();
        let pa = generate_corpus(a.path(), &spec).unwrap();
        let pb = generate_corpus(b.path(), &spec).unwrap();
        for (x, y) in [
            (&pa.manifest, &pb.manifest),
            (&pa.prices, &pb.prices),
            (&pa.truth, &pb.truth),
        ] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let ma = read_manifest(&pa.manifest).unwrap();
        let mb = read_manifest(&pb.manifest).unwrap();
        for (x, y) in ma.iter().zip(&mb) {
            assert_eq!(
                std::fs::read(&x.amr_path).unwrap(),
                std::fs::read(&y.amr_path).unwrap()
            );
        }
    }

    #[test]
    fn archive_rows_match_the_pseudo_provider() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticCorpusSpec {
            archive_dim: Some(8),
            ..small_spec()
        };
        let paths = generate_corpus(dir.path(), &spec).unwrap();
        let archive = EmbeddingArchive::read_file(paths.archive.as_ref().unwrap()).unwrap();
        let manifest = read_manifest(&paths.manifest).unwrap();
        let text = std::fs::read_to_string(&manifest[0].amr_path).unwrap();
        let sentences = parse_penman_document(&text).unwrap();
        let from_archive = archive.provider_for(&manifest[0].doc_id);
        let pseudo = PseudoProvider::new(spec.pseudo_seed, 8);
        for (j, s) in sentences.iter().enumerate() {
            for t in 0..s.tokens.len() {
                assert_eq!(
                    from_archive.token_embedding(j, &s.tokens, t).unwrap(),
                    pseudo.token_embedding(j, &s.tokens, t).unwrap()
                );
            }
        }
    }
}
