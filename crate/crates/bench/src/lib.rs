//! Benchmark-only crate; see `benches/pipeline.rs`. Run with `cargo bench`.

use flag_core::embed::PseudoProvider;
use flag_core::graph::{attach_features, build_document_graph, DocumentGraph};
use flag_core::penman::{generate_random_amr, SentenceAmr};

/// A reproducible mid-sized document: `m` sentences of up to twelve
/// concepts each.
pub fn sample_sentences(m: usize) -> Vec<SentenceAmr> {
    (0..m)
        .map(|j| generate_random_amr(900 + j as u64, 2 + (j * 5) % 11, 0.2))
        .collect()
}

/// Assembles the document graph for `sentences` and attaches pseudo-random
/// features of width `dim`.
pub fn sample_graph(sentences: &[SentenceAmr], dim: usize) -> DocumentGraph {
    let mut graph = build_document_graph("bench", sentences).unwrap();
    attach_features(&mut graph, sentences, &PseudoProvider::new(9, dim)).unwrap();
    graph
}
