//! Document graphs assembled from per-sentence AMR graphs.
//!
//! Each sentence contributes its concept nodes and (bidirectional) edges,
//! plus one virtual sentence node connected to every concept in that
//! sentence. Sentence nodes are chained in narrative order, and a single
//! virtual document node is connected to every sentence node, so document
//! state can be read off one row. All relations are stored as two directed
//! arcs; self-loops are not stored (layers add them transiently).

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::embed::EmbeddingProvider;
use crate::penman::{SentenceAmr, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Concept,
    Sentence,
    Document,
}

/// Where a node came from: which sentence, and which AMR node within it
/// (concepts only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeOrigin {
    pub kind: NodeKind,
    /// Sentence ordinal for Concept and Sentence nodes; 0 for Document.
    pub sentence: usize,
    /// AMR node id for Concept nodes; empty otherwise.
    pub amr_id: String,
}

/// Dense per-node feature rows, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dim: usize,
    pub data: Vec<f32>,
}

impl Features {
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentGraph {
    pub doc_id: String,
    /// Number of sentences.
    pub n_sentences: usize,
    pub origins: Vec<NodeOrigin>,
    /// Directed arcs (src, dst); every relation appears in both directions.
    pub edges: Vec<(u32, u32)>,
    pub features: Option<Features>,
}

impl DocumentGraph {
    pub fn n_nodes(&self) -> usize {
        self.origins.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Index of the virtual document node.
    pub fn document_node(&self) -> usize {
        self.origins
            .iter()
            .position(|o| o.kind == NodeKind::Document)
            .expect("document graph always has a document node")
    }

    /// Index of the virtual node for sentence `j`.
    pub fn sentence_node(&self, j: usize) -> Option<usize> {
        self.origins
            .iter()
            .position(|o| o.kind == NodeKind::Sentence && o.sentence == j)
    }

    /// Checks structural invariants: symmetric edge multiset, no self-loops,
    /// in-range endpoints, exactly one document node, one sentence node per
    /// sentence, and feature dimensions consistent with the node count.
    pub fn validate(&self) -> Result<(), GraphError> {
        let n = self.n_nodes() as u32;
        let mut doc_nodes = 0usize;
        let mut sent_nodes = 0usize;
        for o in &self.origins {
            match o.kind {
                NodeKind::Document => doc_nodes += 1,
                NodeKind::Sentence => sent_nodes += 1,
                NodeKind::Concept => {}
            }
        }
        if doc_nodes != 1 {
            return Err(GraphError::Invariant(format!(
                "expected exactly one document node, found {doc_nodes}"
            )));
        }
        if sent_nodes != self.n_sentences {
            return Err(GraphError::Invariant(format!(
                "{} sentence nodes for {} sentences",
                sent_nodes, self.n_sentences
            )));
        }
        let mut fwd = std::collections::HashMap::new();
        for &(s, d) in &self.edges {
            if s >= n || d >= n {
                return Err(GraphError::Invariant(format!(
                    "edge ({s}, {d}) out of range for {n} nodes"
                )));
            }
            if s == d {
                return Err(GraphError::Invariant(format!("self-loop stored at node {s}")));
            }
            *fwd.entry((s, d)).or_insert(0i64) += 1;
        }
        for (&(s, d), &c) in &fwd {
            if fwd.get(&(d, s)).copied().unwrap_or(0) != c {
                return Err(GraphError::Invariant(format!(
                    "asymmetric edge multiset at ({s}, {d})"
                )));
            }
        }
        if let Some(f) = &self.features {
            if f.data.len() != f.dim * self.n_nodes() {
                return Err(GraphError::Invariant(format!(
                    "feature buffer holds {} values for {} nodes of dim {}",
                    f.data.len(),
                    self.n_nodes(),
                    f.dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("document has no sentences")]
    EmptyDocument,
    #[error("sentence {index} has no nodes")]
    EmptySentence { index: usize },
    #[error("sentence {index}: {message}")]
    BadSentence { index: usize, message: String },
    #[error("graph invariant violated: {0}")]
    Invariant(String),
    #[error("feature dimension mismatch: provider yields {provider}, expected {expected}")]
    DimensionMismatch { provider: usize, expected: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad graph file: {0}")]
    Format(String),
    #[error(transparent)]
    Embedding(#[from] crate::embed::EmbedError),
}

/// Builds the hierarchical document graph. Node layout: all concept nodes
/// sentence by sentence (AMR node order within a sentence), then one node
/// per sentence, then the document node last.
pub fn build_document_graph(doc_id: &str, sentences: &[SentenceAmr]) -> Result<DocumentGraph, GraphError> {
    if sentences.is_empty() {
        return Err(GraphError::EmptyDocument);
    }
    let m = sentences.len();
    let mut origins = Vec::new();
    // (sentence, amr node id) -> global index
    let mut concept_index = std::collections::HashMap::new();
    for (j, s) in sentences.iter().enumerate() {
        if s.nodes.is_empty() {
            return Err(GraphError::EmptySentence { index: j });
        }
        for n in &s.nodes {
            let idx = origins.len() as u32;
            if concept_index.insert((j, n.id.clone()), idx).is_some() {
                return Err(GraphError::BadSentence {
                    index: j,
                    message: format!("duplicate node id '{}'", n.id),
                });
            }
            origins.push(NodeOrigin {
                kind: NodeKind::Concept,
                sentence: j,
                amr_id: n.id.clone(),
            });
        }
    }
    let sent_base = origins.len() as u32;
    for j in 0..m {
        origins.push(NodeOrigin {
            kind: NodeKind::Sentence,
            sentence: j,
            amr_id: String::new(),
        });
    }
    let doc_idx = origins.len() as u32;
    origins.push(NodeOrigin {
        kind: NodeKind::Document,
        sentence: 0,
        amr_id: String::new(),
    });

    let mut edges = Vec::new();
    let push_pair = |edges: &mut Vec<(u32, u32)>, a: u32, b: u32| {
        edges.push((a, b));
        edges.push((b, a));
    };
    for (j, s) in sentences.iter().enumerate() {
        for e in &s.edges {
            let src = *concept_index.get(&(j, e.src.clone())).ok_or_else(|| {
                GraphError::BadSentence {
                    index: j,
                    message: format!("edge references unknown node '{}'", e.src),
                }
            })?;
            let dst = *concept_index.get(&(j, e.dst.clone())).ok_or_else(|| {
                GraphError::BadSentence {
                    index: j,
                    message: format!("edge references unknown node '{}'", e.dst),
                }
            })?;
            if src == dst {
                return Err(GraphError::BadSentence {
                    index: j,
                    message: format!("self-edge on node '{}'", e.src),
                });
            }
            push_pair(&mut edges, src, dst);
        }
        let sn = sent_base + j as u32;
        for n in &s.nodes {
            let c = concept_index[&(j, n.id.clone())];
            push_pair(&mut edges, c, sn);
        }
    }
    for j in 0..m.saturating_sub(1) {
        push_pair(&mut edges, sent_base + j as u32, sent_base + j as u32 + 1);
    }
    for j in 0..m {
        push_pair(&mut edges, sent_base + j as u32, doc_idx);
    }

    let g = DocumentGraph {
        doc_id: doc_id.to_string(),
        n_sentences: m,
        origins,
        edges,
        features: None,
    };
    debug_assert!(g.validate().is_ok());
    Ok(g)
}

/// Fills in node features: concept nodes get their aligned token span's
/// embedding (or a zero row when unaligned); virtual nodes start at zero.
/// The sentence list must be the one the graph was built from, since token
/// text and alignments live there.
pub fn attach_features(
    graph: &mut DocumentGraph,
    sentences: &[SentenceAmr],
    provider: &dyn EmbeddingProvider,
) -> Result<(), GraphError> {
    let dim = provider.dimension();
    if dim == 0 {
        return Err(GraphError::DimensionMismatch {
            provider: 0,
            expected: 1,
        });
    }
    let mut data = vec![0.0f32; dim * graph.n_nodes()];
    for (i, o) in graph.origins.iter().enumerate() {
        if o.kind != NodeKind::Concept {
            continue;
        }
        let s = sentences.get(o.sentence).ok_or_else(|| {
            GraphError::Invariant(format!(
                "node {} cites sentence {} but only {} sentences were given",
                i,
                o.sentence,
                sentences.len()
            ))
        })?;
        let node = s.node(&o.amr_id).ok_or_else(|| {
            GraphError::Invariant(format!(
                "node {} cites AMR node '{}' missing from sentence {}",
                i, o.amr_id, o.sentence
            ))
        })?;
        if let Some(Span { start, end }) = node.alignment {
            let row = provider.span_embedding(o.sentence, &s.tokens, start, end)?;
            if row.len() != dim {
                return Err(GraphError::DimensionMismatch {
                    provider: row.len(),
                    expected: dim,
                });
            }
            data[i * dim..(i + 1) * dim].copy_from_slice(&row);
        }
    }
    graph.features = Some(Features { dim, data });
    Ok(())
}

/// Applies a node permutation: `perm[i]` is the new index of old node `i`.
/// Used to check that model outputs do not depend on node order.
pub fn permute_graph(graph: &DocumentGraph, perm: &[usize]) -> DocumentGraph {
    assert_eq!(perm.len(), graph.n_nodes());
    let n = graph.n_nodes();
    let mut origins = vec![
        NodeOrigin {
            kind: NodeKind::Document,
            sentence: 0,
            amr_id: String::new(),
        };
        n
    ];
    for (old, &new) in perm.iter().enumerate() {
        origins[new] = graph.origins[old].clone();
    }
    let edges = graph
        .edges
        .iter()
        .map(|&(s, d)| (perm[s as usize] as u32, perm[d as usize] as u32))
        .collect();
    let features = graph.features.as_ref().map(|f| {
        let mut data = vec![0.0f32; f.data.len()];
        for (old, &new) in perm.iter().enumerate() {
            data[new * f.dim..(new + 1) * f.dim].copy_from_slice(f.row(old));
        }
        Features { dim: f.dim, data }
    });
    DocumentGraph {
        doc_id: graph.doc_id.clone(),
        n_sentences: graph.n_sentences,
        origins,
        edges,
        features,
    }
}

/// Size statistics for one graph or averaged over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GraphStats {
    pub n_nodes: f64,
    pub n_edges: f64,
    /// Directed edges per node.
    pub avg_degree: f64,
}

impl GraphStats {
    pub fn of(graph: &DocumentGraph) -> GraphStats {
        let n = graph.n_nodes() as f64;
        let e = graph.n_edges() as f64;
        GraphStats {
            n_nodes: n,
            n_edges: e,
            avg_degree: e / n,
        }
    }

    /// Field-wise mean over per-graph statistics.
    pub fn mean(stats: &[GraphStats]) -> Option<GraphStats> {
        if stats.is_empty() {
            return None;
        }
        let k = stats.len() as f64;
        Some(GraphStats {
            n_nodes: stats.iter().map(|s| s.n_nodes).sum::<f64>() / k,
            n_edges: stats.iter().map(|s| s.n_edges).sum::<f64>() / k,
            avg_degree: stats.iter().map(|s| s.avg_degree).sum::<f64>() / k,
        })
    }
}

const GRAPH_MAGIC: &[u8; 6] = b"FLAGG1";

/// Writes the graph in its little-endian binary layout.
pub fn write_graph(graph: &DocumentGraph, w: &mut dyn Write) -> Result<(), GraphError> {
    w.write_all(GRAPH_MAGIC)?;
    let id = graph.doc_id.as_bytes();
    w.write_all(&(id.len() as u32).to_le_bytes())?;
    w.write_all(id)?;
    w.write_all(&(graph.n_nodes() as u32).to_le_bytes())?;
    w.write_all(&(graph.n_edges() as u32).to_le_bytes())?;
    w.write_all(&(graph.n_sentences as u32).to_le_bytes())?;
    let dim = graph.features.as_ref().map(|f| f.dim).unwrap_or(0);
    w.write_all(&(dim as u32).to_le_bytes())?;
    for o in &graph.origins {
        let kind = match o.kind {
            NodeKind::Concept => 0u8,
            NodeKind::Sentence => 1,
            NodeKind::Document => 2,
        };
        w.write_all(&[kind])?;
        w.write_all(&(o.sentence as u32).to_le_bytes())?;
        let id = o.amr_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
    }
    for &(s, d) in &graph.edges {
        w.write_all(&s.to_le_bytes())?;
        w.write_all(&d.to_le_bytes())?;
    }
    if let Some(f) = &graph.features {
        for &x in &f.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn write_graph_file(graph: &DocumentGraph, path: &Path) -> Result<(), GraphError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_graph(graph, &mut f)?;
    f.flush()?;
    Ok(())
}

struct Reader<'a> {
    r: &'a mut dyn Read,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, GraphError> {
        let mut buf = vec![0u8; n];
        self.r
            .read_exact(&mut buf)
            .map_err(|_| GraphError::Format("unexpected end of file".to_string()))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, GraphError> {
        let b = self.bytes(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8, GraphError> {
        Ok(self.bytes(1)?[0])
    }

    fn f32(&mut self) -> Result<f32, GraphError> {
        let b = self.bytes(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, GraphError> {
        let n = self.u32()? as usize;
        if n > 1 << 20 {
            return Err(GraphError::Format(format!("string length {n} implausibly large")));
        }
        String::from_utf8(self.bytes(n)?).map_err(|_| GraphError::Format("invalid utf-8".to_string()))
    }
}

pub fn read_graph(r: &mut dyn Read) -> Result<DocumentGraph, GraphError> {
    let mut rd = Reader { r };
    let magic = rd.bytes(6)?;
    if magic != GRAPH_MAGIC {
        return Err(GraphError::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, GRAPH_MAGIC
        )));
    }
    let doc_id = rd.string()?;
    let n_nodes = rd.u32()? as usize;
    let n_edges = rd.u32()? as usize;
    let n_sentences = rd.u32()? as usize;
    let dim = rd.u32()? as usize;
    if n_nodes == 0 {
        return Err(GraphError::Format("graph with zero nodes".to_string()));
    }
    let mut origins = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let kind = match rd.u8()? {
            0 => NodeKind::Concept,
            1 => NodeKind::Sentence,
            2 => NodeKind::Document,
            k => return Err(GraphError::Format(format!("unknown node kind {k}"))),
        };
        let sentence = rd.u32()? as usize;
        let amr_id = rd.string()?;
        origins.push(NodeOrigin {
            kind,
            sentence,
            amr_id,
        });
    }
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let s = rd.u32()?;
        let d = rd.u32()?;
        if s as usize >= n_nodes || d as usize >= n_nodes {
            return Err(GraphError::Format(format!(
                "edge ({s}, {d}) out of range for {n_nodes} nodes"
            )));
        }
        edges.push((s, d));
    }
    let features = if dim > 0 {
        let mut data = vec![0.0f32; dim * n_nodes];
        for x in data.iter_mut() {
            *x = rd.f32()?;
        }
        Some(Features { dim, data })
    } else {
        None
    };
    let g = DocumentGraph {
        doc_id,
        n_sentences,
        origins,
        edges,
        features,
    };
    g.validate()?;
    Ok(g)
}

pub fn read_graph_file(path: &Path) -> Result<DocumentGraph, GraphError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    read_graph(&mut f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penman::{generate_random_amr, parse_penman_document};

    fn sent(text: &str, index: usize) -> SentenceAmr {
        let mut s = parse_penman_document(text).unwrap().remove(0);
        s.sentence_index = index;
        s
    }

    #[test]
    fn single_sentence_two_concepts() {
        // 2 concepts + 1 sentence node + 1 document node; 1 AMR relation +
        // 2 concept-sentence links + 1 sentence-document link, doubled.
        let s = sent("(a / x :op1 (b / y))", 0);
        let g = build_document_graph("d", &[s]).unwrap();
        assert_eq!(g.n_nodes(), 4);
        assert_eq!(g.n_edges(), 8);
        g.validate().unwrap();
    }

    #[test]
    fn single_concept_sentence_counts() {
        let s = sent("(w / we)", 0);
        let g = build_document_graph("d", &[s]).unwrap();
        // concept, sentence node, document node; concept-sn and sn-dn pairs
        assert_eq!(g.n_nodes(), 3);
        assert_eq!(g.n_edges(), 4);
    }

    #[test]
    fn two_sentence_document_counts() {
        // n = (2 + 2) concepts + 2 sentence nodes + 1 document node = 7
        // directed edges = 2*(1+1 AMR + 2+2 links + 1 chain + 2 doc) = 18
        let s0 = sent("(a / x :op1 (b / y))", 0);
        let s1 = sent("(c / z :op1 (d / w))", 1);
        let g = build_document_graph("d", &[s0, s1]).unwrap();
        assert_eq!(g.n_nodes(), 7);
        assert_eq!(g.n_edges(), 18);
        let dn = g.document_node();
        assert_eq!(dn, 6);
        assert_eq!(g.sentence_node(0), Some(4));
        assert_eq!(g.sentence_node(1), Some(5));
        // chain edge present both ways
        assert!(g.edges.contains(&(4, 5)) && g.edges.contains(&(5, 4)));
        // document links
        assert!(g.edges.contains(&(4, 6)) && g.edges.contains(&(6, 5)));
    }

    #[test]
    fn counts_match_formula_on_random_documents() {
        for seed in 0..30u64 {
            let m = 1 + (seed as usize % 5);
            let mut sentences = Vec::new();
            let mut total_nodes = 0;
            let mut total_edges = 0;
            for j in 0..m {
                let mut s = generate_random_amr(seed * 31 + j as u64, 1 + ((seed as usize + j) % 9), 0.25);
                s.sentence_index = j;
                total_nodes += s.nodes.len();
                total_edges += s.edges.len();
                sentences.push(s);
            }
            let g = build_document_graph("d", &sentences).unwrap();
            assert_eq!(g.n_nodes(), total_nodes + m + 1);
            assert_eq!(g.n_edges(), 2 * (total_edges + total_nodes + (m - 1) + m));
            g.validate().unwrap();
        }
    }

    #[test]
    fn empty_document_rejected() {
        assert!(matches!(
            build_document_graph("d", &[]),
            Err(GraphError::EmptyDocument)
        ));
    }

    #[test]
    fn everything_within_two_hops_of_document_node() {
        let sentences: Vec<SentenceAmr> = (0..4)
            .map(|j| {
                let mut s = generate_random_amr(j as u64 + 100, 6, 0.2);
                s.sentence_index = j;
                s
            })
            .collect();
        let g = build_document_graph("d", &sentences).unwrap();
        let dn = g.document_node() as u32;
        let mut dist = vec![usize::MAX; g.n_nodes()];
        dist[dn as usize] = 0;
        let mut queue = std::collections::VecDeque::from([dn]);
        while let Some(u) = queue.pop_front() {
            for &(s, d) in &g.edges {
                if s == u && dist[d as usize] == usize::MAX {
                    dist[d as usize] = dist[s as usize] + 1;
                    queue.push_back(d);
                }
            }
        }
        assert!(dist.iter().all(|&d| d <= 2));
    }

    #[test]
    fn stats_of_and_mean() {
        let s = sent("(a / x :op1 (b / y))", 0);
        let g = build_document_graph("d", &[s]).unwrap();
        let st = GraphStats::of(&g);
        assert_eq!(st.n_nodes, 4.0);
        assert_eq!(st.n_edges, 8.0);
        assert!((st.avg_degree - 2.0).abs() < 1e-12);
        let mean = GraphStats::mean(&[
            GraphStats {
                n_nodes: 2.0,
                n_edges: 2.0,
                avg_degree: 1.0,
            },
            GraphStats {
                n_nodes: 4.0,
                n_edges: 12.0,
                avg_degree: 3.0,
            },
        ])
        .unwrap();
        assert_eq!(mean.n_nodes, 3.0);
        assert_eq!(mean.n_edges, 7.0);
        assert_eq!(mean.avg_degree, 2.0);
        assert!(GraphStats::mean(&[]).is_none());
    }

    #[test]
    fn graph_file_roundtrip() {
        let s0 = sent("(a / x :op1 (b / y))", 0);
        let s1 = sent("(c / z)", 1);
        let mut g = build_document_graph("doc-7", &[s0.clone(), s1.clone()]).unwrap();
        let provider = crate::embed::PseudoProvider::new(5, 3);
        attach_features(&mut g, &[s0, s1], &provider).unwrap();

        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        let back = read_graph(&mut buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn truncated_graph_file_rejected() {
        let s = sent("(a / x)", 0);
        let g = build_document_graph("d", &[s]).unwrap();
        let mut buf = Vec::new();
        write_graph(&g, &mut buf).unwrap();
        for cut in [3, 10, buf.len() - 1] {
            let err = read_graph(&mut &buf[..cut]).unwrap_err();
            assert!(matches!(err, GraphError::Format(_)), "cut at {cut}: {err}");
        }
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_graph(&mut bad.as_slice()), Err(GraphError::Format(_))));
    }

    #[test]
    fn permutation_preserves_structure() {
        let s = sent("(a / x :op1 (b / y) :op2 (c / z))", 0);
        let mut g = build_document_graph("d", std::slice::from_ref(&s)).unwrap();
        let provider = crate::embed::PseudoProvider::new(11, 4);
        attach_features(&mut g, &[s], &provider).unwrap();
        let n = g.n_nodes();
        let perm: Vec<usize> = (0..n).map(|i| (i + 2) % n).collect();
        let p = permute_graph(&g, &perm);
        p.validate().unwrap();
        assert_eq!(p.n_edges(), g.n_edges());
        assert_eq!(p.origins[perm[g.document_node()]].kind, NodeKind::Document);
        let f = g.features.as_ref().unwrap();
        let pf = p.features.as_ref().unwrap();
        for (i, &target) in perm.iter().enumerate() {
            assert_eq!(pf.row(target), f.row(i));
        }
    }

    #[test]
    fn unaligned_concepts_get_zero_rows() {
        let s = sent("(a / x :op1 (b / y))", 0); // no ::tok metadata, no alignments
        let mut g = build_document_graph("d", std::slice::from_ref(&s)).unwrap();
        let provider = crate::embed::PseudoProvider::new(1, 6);
        attach_features(&mut g, &[s], &provider).unwrap();
        let f = g.features.as_ref().unwrap();
        for i in 0..g.n_nodes() {
            assert!(f.row(i).iter().all(|&x| x == 0.0));
        }
    }
}
