use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use flag_bench::{sample_graph, sample_sentences};
use flag_core::gnn::{Adjacency, Gradients, LayerKind, Model, ModelConfig};
use flag_core::graph::build_document_graph;
use flag_core::penman::{parse_penman_document, serialize_penman};

fn bench_config(kind: LayerKind) -> ModelConfig {
    ModelConfig {
        input_dim: 32,
        hidden_dim: 64,
        layers: 4,
        heads: 4,
        classes: 2,
        layer_kind: kind,
        negative_slope: 0.2,
    }
}

fn parse_document(c: &mut Criterion) {
    let text = sample_sentences(8)
        .iter()
        .map(serialize_penman)
        .collect::<Vec<_>>()
        .join("\n\n");
    c.bench_function("parse_document_8_sentences", |b| {
        b.iter(|| parse_penman_document(black_box(&text)).unwrap())
    });
}

fn assemble_graph(c: &mut Criterion) {
    let sentences = sample_sentences(8);
    c.bench_function("assemble_graph_8_sentences", |b| {
        b.iter(|| build_document_graph("bench", black_box(&sentences)).unwrap())
    });
}

fn forward_pass(c: &mut Criterion) {
    let graph = sample_graph(&sample_sentences(8), 32);
    let adj = Adjacency::of(&graph);
    let mut group = c.benchmark_group("forward");
    for kind in [LayerKind::Gatv2, LayerKind::Gat, LayerKind::Gcn] {
        let model: Model<f32> = Model::new(bench_config(kind), 9).unwrap();
        group.bench_function(kind.to_string(), |b| {
            b.iter(|| model.forward(black_box(&graph), &adj, None).unwrap())
        });
    }
    group.finish();
}

fn forward_backward_pass(c: &mut Criterion) {
    let graph = sample_graph(&sample_sentences(8), 32);
    let adj = Adjacency::of(&graph);
    let model: Model<f32> = Model::new(bench_config(LayerKind::Gatv2), 9).unwrap();
    let mut grads = Gradients::zeros_like(&model);
    c.bench_function("forward_backward_gatv2", |b| {
        b.iter(|| {
            grads.zero();
            let trace = model.forward(black_box(&graph), &adj, None).unwrap();
            model.backward(&adj, None, trace, 1, &mut grads).unwrap()
        })
    });
}

criterion_group!(
    benches,
    parse_document,
    assemble_graph,
    forward_pass,
    forward_backward_pass
);
criterion_main!(benches);
