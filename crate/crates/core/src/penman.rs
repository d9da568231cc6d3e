//! PENMAN-notation AMR ingestion and serialization.
//!
//! A document file holds one PENMAN block per sentence, blocks separated by
//! blank lines. Metadata comment lines carry the surface tokens
//! (`# ::tok ...`) and node-to-token-span alignments
//! (`# ::alignments id-start-end ...`). Graphs may be reentrant and cyclic;
//! a variable's parse collapses all of its occurrences onto one node.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Prefix used for the synthetic ids given to constants (quoted strings,
/// numbers, bare symbols). Assigned in parse order within a sentence.
const LITERAL_ID_PREFIX: &str = "_lit";

/// Half-open token-index range a node is aligned to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrNode {
    /// Variable name, or a synthetic `_litN` id for constants.
    pub id: String,
    pub concept: String,
    pub alignment: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AmrEdge {
    pub src: String,
    pub dst: String,
    /// Relation label, always starting with ':'.
    pub role: String,
}

/// One sentence's AMR graph. Nodes are listed in first-occurrence order;
/// the first node is the root of the PENMAN expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceAmr {
    pub sentence_index: usize,
    pub tokens: Vec<String>,
    pub nodes: Vec<AmrNode>,
    pub edges: Vec<AmrEdge>,
}

impl SentenceAmr {
    pub fn node(&self, id: &str) -> Option<&AmrNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Structural equality ignoring the sentence ordinal, for comparing a
    /// graph against its re-parse outside of any document context.
    pub fn same_graph(&self, other: &SentenceAmr) -> bool {
        self.tokens == other.tokens && self.nodes == other.nodes && self.edges == other.edges
    }

    /// Checks the structural invariants parse and the generator guarantee:
    /// unique ids, edges between declared nodes, in-range alignments, and
    /// every node reachable from the root (required for serialization).
    pub fn validate(&self) -> Result<(), String> {
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if n.concept.is_empty() {
                return Err(format!("node '{}' has an empty concept", n.id));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(format!("duplicate node id '{}'", n.id));
            }
            if let Some(a) = n.alignment {
                if a.is_empty() || a.end > self.tokens.len() {
                    return Err(format!(
                        "node '{}' alignment {}..{} outside tokens (len {})",
                        n.id,
                        a.start,
                        a.end,
                        self.tokens.len()
                    ));
                }
            }
        }
        for e in &self.edges {
            if !e.role.starts_with(':') {
                return Err(format!("role '{}' does not start with ':'", e.role));
            }
            if !ids.contains(e.src.as_str()) || !ids.contains(e.dst.as_str()) {
                return Err(format!("edge {} -{}-> {} references unknown node", e.src, e.role, e.dst));
            }
        }
        if self.nodes.is_empty() {
            return Err("graph has no nodes".to_string());
        }
        // reachability from the root
        let mut seen = HashSet::new();
        let mut stack = vec![self.nodes[0].id.as_str()];
        seen.insert(self.nodes[0].id.as_str());
        while let Some(id) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.src == id) {
                if seen.insert(e.dst.as_str()) {
                    stack.push(e.dst.as_str());
                }
            }
        }
        if seen.len() != self.nodes.len() {
            return Err("not every node is reachable from the root".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum PenmanError {
    #[error("line {line}: unbalanced parentheses")]
    UnbalancedParens { line: usize },
    #[error("line {line}: duplicate concept definition for variable '{var}'")]
    DuplicateConcept { line: usize, var: String },
    #[error("line {line}: edge to undeclared variable '{var}'")]
    UndeclaredVariable { line: usize, var: String },
    #[error("line {line}: malformed alignment entry '{entry}'")]
    MalformedAlignment { line: usize, entry: String },
    #[error("line {line}: alignment span {start}..{end} out of range for {n_tokens} tokens")]
    AlignmentOutOfRange {
        line: usize,
        start: usize,
        end: usize,
        n_tokens: usize,
    },
    #[error("line {line}: alignment references unknown node '{id}'")]
    AlignmentUnknownNode { line: usize, id: String },
    #[error("line {line}: duplicate alignment for node '{id}'")]
    DuplicateAlignment { line: usize, id: String },
    #[error("line {line}: expected {expected}, found '{found}'")]
    Unexpected {
        line: usize,
        expected: &'static str,
        found: String,
    },
    #[error("line {line}: unterminated string literal")]
    UnterminatedString { line: usize },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,
    Close,
    Slash,
    Role(String),
    Atom(String),
    /// Raw quoted string, quotes included.
    Str(String),
}

#[derive(Debug, Clone)]
struct Lexed {
    tok: Tok,
    line: usize,
}

fn lex(lines: &[(usize, &str)]) -> Result<Vec<Lexed>, PenmanError> {
    let mut out = Vec::new();
    for &(line_no, line) in lines {
        let bytes: Vec<char> = line.chars().collect();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i];
            match c {
                ' ' | '\t' => i += 1,
                '(' => {
                    out.push(Lexed { tok: Tok::Open, line: line_no });
                    i += 1;
                }
                ')' => {
                    out.push(Lexed { tok: Tok::Close, line: line_no });
                    i += 1;
                }
                '/' => {
                    out.push(Lexed { tok: Tok::Slash, line: line_no });
                    i += 1;
                }
                '"' => {
                    let start = i;
                    i += 1;
                    while i < bytes.len() && bytes[i] != '"' {
                        i += 1;
                    }
                    if i >= bytes.len() {
                        return Err(PenmanError::UnterminatedString { line: line_no });
                    }
                    i += 1; // closing quote
                    let s: String = bytes[start..i].iter().collect();
                    out.push(Lexed { tok: Tok::Str(s), line: line_no });
                }
                ':' => {
                    let start = i;
                    i += 1;
                    while i < bytes.len() && !bytes[i].is_whitespace() && !"()/".contains(bytes[i]) {
                        i += 1;
                    }
                    let s: String = bytes[start..i].iter().collect();
                    out.push(Lexed { tok: Tok::Role(s), line: line_no });
                }
                _ => {
                    let start = i;
                    while i < bytes.len() && !bytes[i].is_whitespace() && !"()/\"".contains(bytes[i]) {
                        i += 1;
                    }
                    let s: String = bytes[start..i].iter().collect();
                    out.push(Lexed { tok: Tok::Atom(s), line: line_no });
                }
            }
        }
    }
    Ok(out)
}

struct BlockParser {
    toks: Vec<Lexed>,
    pos: usize,
    declared: HashSet<String>,
    nodes: Vec<AmrNode>,
    index: HashMap<String, usize>,
    edges: Vec<AmrEdge>,
    literal_count: usize,
    last_line: usize,
}

impl BlockParser {
    fn new(toks: Vec<Lexed>) -> Self {
        let last_line = toks.last().map(|t| t.line).unwrap_or(1);
        // First pass: every "( var /" sequence declares a variable. Bare
        // occurrences of a declared name are reentrant references; anything
        // else is a constant.
        let mut declared = HashSet::new();
        for w in toks.windows(3) {
            if let [a, b, c] = w {
                if a.tok == Tok::Open && c.tok == Tok::Slash {
                    if let Tok::Atom(v) = &b.tok {
                        declared.insert(v.clone());
                    }
                }
            }
        }
        BlockParser {
            toks,
            pos: 0,
            declared,
            nodes: Vec::new(),
            index: HashMap::new(),
            edges: Vec::new(),
            literal_count: 0,
            last_line,
        }
    }

    fn peek(&self) -> Option<&Lexed> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Option<Lexed> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.line)
            .unwrap_or(self.last_line)
    }

    fn touch_variable(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(AmrNode {
            id: id.to_string(),
            concept: String::new(),
            alignment: None,
        });
        self.index.insert(id.to_string(), i);
        i
    }

    fn fresh_literal(&mut self, concept: String) -> String {
        let id = format!("{}{}", LITERAL_ID_PREFIX, self.literal_count);
        self.literal_count += 1;
        self.nodes.push(AmrNode {
            id: id.clone(),
            concept,
            alignment: None,
        });
        self.index.insert(id.clone(), self.nodes.len() - 1);
        id
    }

    /// Parses "( var / concept relation* )" or a parenthesized reentrant
    /// reference "( var )". Returns the node id.
    fn parse_node(&mut self) -> Result<String, PenmanError> {
        let open = self.next().ok_or(PenmanError::UnbalancedParens { line: self.last_line })?;
        if open.tok != Tok::Open {
            return Err(PenmanError::Unexpected {
                line: open.line,
                expected: "'('",
                found: tok_text(&open.tok),
            });
        }
        let var_tok = self.next().ok_or(PenmanError::UnbalancedParens { line: self.last_line })?;
        let var = match var_tok.tok {
            Tok::Atom(v) => v,
            other => {
                return Err(PenmanError::Unexpected {
                    line: var_tok.line,
                    expected: "variable name",
                    found: tok_text(&other),
                })
            }
        };
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Slash) => {
                self.next();
                let c_tok = self.next().ok_or(PenmanError::UnbalancedParens { line: self.last_line })?;
                let concept = match c_tok.tok {
                    Tok::Atom(c) => c,
                    Tok::Str(c) => c,
                    other => {
                        return Err(PenmanError::Unexpected {
                            line: c_tok.line,
                            expected: "concept",
                            found: tok_text(&other),
                        })
                    }
                };
                let idx = self.touch_variable(&var);
                if !self.nodes[idx].concept.is_empty() {
                    return Err(PenmanError::DuplicateConcept {
                        line: c_tok.line,
                        var,
                    });
                }
                self.nodes[idx].concept = concept;
                self.parse_relations(&var)?;
                Ok(var)
            }
            Some(Tok::Close) => {
                // "(var)": reentrant reference
                self.next();
                if !self.declared.contains(&var) {
                    return Err(PenmanError::UndeclaredVariable {
                        line: var_tok.line,
                        var,
                    });
                }
                self.touch_variable(&var);
                Ok(var)
            }
            Some(other) => Err(PenmanError::Unexpected {
                line: self.line(),
                expected: "'/' or ')'",
                found: tok_text(&other),
            }),
            None => Err(PenmanError::UnbalancedParens { line: self.last_line }),
        }
    }

    fn parse_relations(&mut self, src: &str) -> Result<(), PenmanError> {
        loop {
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::Close) => {
                    self.next();
                    return Ok(());
                }
                Some(Tok::Role(role)) => {
                    self.next();
                    // Reserve the edge slot before descending into the target so
                    // edges are recorded in the order their roles appear in the
                    // text, not in subtree-completion order.
                    let at = self.edges.len();
                    self.edges.push(AmrEdge {
                        src: src.to_string(),
                        dst: String::new(),
                        role,
                    });
                    self.edges[at].dst = self.parse_target()?;
                }
                Some(other) => {
                    return Err(PenmanError::Unexpected {
                        line: self.line(),
                        expected: "role or ')'",
                        found: tok_text(&other),
                    })
                }
                None => return Err(PenmanError::UnbalancedParens { line: self.last_line }),
            }
        }
    }

    fn parse_target(&mut self) -> Result<String, PenmanError> {
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::Open) => self.parse_node(),
            Some(Tok::Str(s)) => {
                self.next();
                Ok(self.fresh_literal(s))
            }
            Some(Tok::Atom(a)) => {
                self.next();
                if self.declared.contains(&a) {
                    self.touch_variable(&a);
                    Ok(a)
                } else {
                    Ok(self.fresh_literal(a))
                }
            }
            Some(other) => Err(PenmanError::Unexpected {
                line: self.line(),
                expected: "relation target",
                found: tok_text(&other),
            }),
            None => Err(PenmanError::UnbalancedParens { line: self.last_line }),
        }
    }

    fn finish(mut self, block_first_line: usize) -> Result<(Vec<AmrNode>, Vec<AmrEdge>), PenmanError> {
        if self.toks.is_empty() {
            return Err(PenmanError::Unexpected {
                line: block_first_line,
                expected: "PENMAN graph",
                found: "end of block".to_string(),
            });
        }
        self.parse_node()?;
        if let Some(t) = self.peek() {
            return match t.tok {
                Tok::Close => Err(PenmanError::UnbalancedParens { line: t.line }),
                _ => Err(PenmanError::Unexpected {
                    line: t.line,
                    expected: "end of block",
                    found: tok_text(&t.tok),
                }),
            };
        }
        Ok((std::mem::take(&mut self.nodes), std::mem::take(&mut self.edges)))
    }
}

fn tok_text(t: &Tok) -> String {
    match t {
        Tok::Open => "(".to_string(),
        Tok::Close => ")".to_string(),
        Tok::Slash => "/".to_string(),
        Tok::Role(s) | Tok::Atom(s) | Tok::Str(s) => s.clone(),
    }
}

/// Parses a document of PENMAN blocks into sentence graphs, in file order.
pub fn parse_penman_document(text: &str) -> Result<Vec<SentenceAmr>, PenmanError> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    let mut line_no = 0usize;
    for line in text.lines().chain(std::iter::once("")) {
        line_no += 1;
        if line.trim().is_empty() {
            if !block.is_empty() {
                let idx = sentences.len();
                sentences.push(parse_block(&block, idx)?);
                block.clear();
            }
        } else {
            block.push((line_no, line));
        }
    }
    Ok(sentences)
}

fn parse_block(lines: &[(usize, &str)], sentence_index: usize) -> Result<SentenceAmr, PenmanError> {
    let first_line = lines.first().map(|&(n, _)| n).unwrap_or(1);
    let mut tokens: Vec<String> = Vec::new();
    let mut alignment_lines: Vec<(usize, &str)> = Vec::new();
    let mut graph_lines: Vec<(usize, &str)> = Vec::new();
    for &(n, line) in lines {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("# ::tok") {
            tokens = rest.split_whitespace().map(str::to_string).collect();
        } else if let Some(rest) = trimmed.strip_prefix("# ::alignments") {
            alignment_lines.push((n, rest));
        } else if trimmed.starts_with('#') {
            // other metadata is ignored
        } else {
            graph_lines.push((n, line));
        }
    }

    let toks = lex(&graph_lines)?;
    let parser = BlockParser::new(toks);
    let (mut nodes, edges) = parser.finish(first_line)?;

    let mut aligned: BTreeSet<String> = BTreeSet::new();
    for (n, rest) in alignment_lines {
        for entry in rest.split_whitespace() {
            let mut parts = entry.rsplitn(3, '-');
            let end_s = parts.next();
            let start_s = parts.next();
            let id = parts.next();
            let (id, start, end) = match (id, start_s, end_s) {
                (Some(id), Some(s), Some(e)) => match (s.parse::<usize>(), e.parse::<usize>()) {
                    (Ok(s), Ok(e)) => (id, s, e),
                    _ => {
                        return Err(PenmanError::MalformedAlignment {
                            line: n,
                            entry: entry.to_string(),
                        })
                    }
                },
                _ => {
                    return Err(PenmanError::MalformedAlignment {
                        line: n,
                        entry: entry.to_string(),
                    })
                }
            };
            if start >= end || end > tokens.len() {
                return Err(PenmanError::AlignmentOutOfRange {
                    line: n,
                    start,
                    end,
                    n_tokens: tokens.len(),
                });
            }
            let node = nodes
                .iter_mut()
                .find(|nd| nd.id == id)
                .ok_or_else(|| PenmanError::AlignmentUnknownNode {
                    line: n,
                    id: id.to_string(),
                })?;
            if !aligned.insert(id.to_string()) {
                return Err(PenmanError::DuplicateAlignment {
                    line: n,
                    id: id.to_string(),
                });
            }
            node.alignment = Some(Span::new(start, end));
        }
    }

    Ok(SentenceAmr {
        sentence_index,
        tokens,
        nodes,
        edges,
    })
}

/// Serializes one sentence graph back to a PENMAN block with its metadata
/// lines. `parse_penman_document` on the output recovers the graph with
/// identical ids, concepts, roles and alignments.
pub fn serialize_penman(graph: &SentenceAmr) -> String {
    let mut out = String::new();
    out.push_str("# ::tok");
    for t in &graph.tokens {
        out.push(' ');
        out.push_str(t);
    }
    out.push('\n');
    let aligned: Vec<&AmrNode> = graph.nodes.iter().filter(|n| n.alignment.is_some()).collect();
    if !aligned.is_empty() {
        out.push_str("# ::alignments");
        for n in aligned {
            let a = n.alignment.unwrap();
            let _ = write!(out, " {}-{}-{}", n.id, a.start, a.end);
        }
        out.push('\n');
    }

    let index: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let ids: HashSet<&str> = graph.nodes.iter().map(|n| n.id.as_str()).collect();
    let mut in_deg = vec![0usize; graph.nodes.len()];
    let mut out_deg = vec![0usize; graph.nodes.len()];
    let mut out_edges: Vec<Vec<&AmrEdge>> = vec![Vec::new(); graph.nodes.len()];
    for e in &graph.edges {
        let s = index[e.src.as_str()];
        let d = index[e.dst.as_str()];
        out_deg[s] += 1;
        in_deg[d] += 1;
        out_edges[s].push(e);
    }

    let mut visited = vec![false; graph.nodes.len()];
    let mut literal_counter = 0usize;
    emit_node(
        graph,
        0,
        0,
        &index,
        &ids,
        &in_deg,
        &out_deg,
        &out_edges,
        &mut visited,
        &mut literal_counter,
        &mut out,
    );
    out.push('\n');
    out
}

#[allow(clippy::too_many_arguments)]
fn emit_node(
    graph: &SentenceAmr,
    idx: usize,
    depth: usize,
    index: &HashMap<&str, usize>,
    ids: &HashSet<&str>,
    in_deg: &[usize],
    out_deg: &[usize],
    out_edges: &[Vec<&AmrEdge>],
    visited: &mut Vec<bool>,
    literal_counter: &mut usize,
    out: &mut String,
) {
    let node = &graph.nodes[idx];
    if visited[idx] {
        // reentrant reference
        out.push_str(&node.id);
        return;
    }
    visited[idx] = true;

    // A constant re-parses to the same synthetic id only if it is emitted in
    // assignment order, so bare-literal form is used exactly when the id
    // matches the next counter value; anything else falls back to the full
    // "(id / concept)" form, which is always exact.
    let expected_lit = format!("{}{}", LITERAL_ID_PREFIX, *literal_counter);
    if node.id == expected_lit
        && in_deg[idx] == 1
        && out_deg[idx] == 0
        && !ids.contains(node.concept.as_str())
        && depth > 0
    {
        *literal_counter += 1;
        out.push_str(&node.concept);
        return;
    }

    let _ = write!(out, "({} / {}", node.id, node.concept);
    for e in &out_edges[idx] {
        out.push('\n');
        for _ in 0..=depth {
            out.push_str("    ");
        }
        let _ = write!(out, "{} ", e.role);
        let child = index[e.dst.as_str()];
        emit_node(
            graph,
            child,
            depth + 1,
            index,
            ids,
            in_deg,
            out_deg,
            out_edges,
            visited,
            literal_counter,
            out,
        );
    }
    out.push(')');
}

/// Serializes a whole document, one blank-line-separated block per sentence.
pub fn serialize_penman_document(sentences: &[SentenceAmr]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&serialize_penman(s));
    }
    out
}

const GEN_CONCEPTS: &[&str] = &[
    "invest-01", "risk", "company", "grow-01", "market", "report-01", "plan", "stock",
    "we", "business", "revenue", "expect-01", "quarter", "increase-01", "decline-01",
    "strong", "guidance", "margin", "expand-01", "forecast-01", "demand", "segment",
    "capital", "improve-01", "cost",
];

const GEN_ROLES: &[&str] = &[
    ":ARG0", ":ARG1", ":ARG2", ":mod", ":poss", ":op1", ":op2", ":time", ":location", ":manner",
];

/// Deterministic random sentence graph for fixtures: a rooted tree over
/// `n_nodes` nodes plus extra reentrant edges drawn with probability
/// `reentrancy_prob` per node, one synthesized token per node.
pub fn generate_random_amr(seed: u64, n_nodes: usize, reentrancy_prob: f64) -> SentenceAmr {
    assert!(n_nodes >= 1, "n_nodes must be at least 1");
    assert!((0.0..=1.0).contains(&reentrancy_prob));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(n_nodes);
    let mut tokens = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let concept = GEN_CONCEPTS[rng.gen_range(0..GEN_CONCEPTS.len())];
        let stem = concept.split('-').next().unwrap_or(concept);
        nodes.push(AmrNode {
            id: format!("n{i}"),
            concept: concept.to_string(),
            alignment: Some(Span::new(i, i + 1)),
        });
        tokens.push(stem.to_string());
    }
    let mut edges = Vec::new();
    for i in 1..n_nodes {
        let parent = rng.gen_range(0..i);
        edges.push(AmrEdge {
            src: format!("n{parent}"),
            dst: format!("n{i}"),
            role: GEN_ROLES[rng.gen_range(0..GEN_ROLES.len())].to_string(),
        });
    }
    for _ in 0..n_nodes {
        if rng.gen::<f64>() < reentrancy_prob {
            let src = rng.gen_range(0..n_nodes);
            let dst = rng.gen_range(0..n_nodes);
            if src != dst {
                edges.push(AmrEdge {
                    src: format!("n{src}"),
                    dst: format!("n{dst}"),
                    role: GEN_ROLES[rng.gen_range(0..GEN_ROLES.len())].to_string(),
                });
            }
        }
    }
    let (nodes, edges) = parse_order(nodes, edges);
    SentenceAmr {
        sentence_index: 0,
        tokens,
        nodes,
        edges,
    }
}

/// Reorders nodes and edges into the order a parse of the serialized form
/// yields: nodes by first DFS visit from the root, edges in DFS emission
/// order. Makes generated graphs round-trip with strict equality.
fn parse_order(nodes: Vec<AmrNode>, edges: Vec<AmrEdge>) -> (Vec<AmrNode>, Vec<AmrEdge>) {
    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id.as_str(), i))
        .collect();
    let mut out_edges: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (e, edge) in edges.iter().enumerate() {
        out_edges[index[edge.src.as_str()]].push(e);
    }
    let mut visited = vec![false; nodes.len()];
    let mut node_order = Vec::new();
    let mut edge_order = Vec::new();
    fn visit(
        u: usize,
        index: &HashMap<&str, usize>,
        edges: &[AmrEdge],
        out_edges: &[Vec<usize>],
        visited: &mut [bool],
        node_order: &mut Vec<usize>,
        edge_order: &mut Vec<usize>,
    ) {
        visited[u] = true;
        node_order.push(u);
        for &e in &out_edges[u] {
            edge_order.push(e);
            let dst = index[edges[e].dst.as_str()];
            if !visited[dst] {
                visit(dst, index, edges, out_edges, visited, node_order, edge_order);
            }
        }
    }
    visit(0, &index, &edges, &out_edges, &mut visited, &mut node_order, &mut edge_order);
    debug_assert_eq!(node_order.len(), nodes.len());
    let new_edges = edge_order.iter().map(|&e| edges[e].clone()).collect();
    let new_nodes = node_order.iter().map(|&i| nodes[i].clone()).collect();
    (new_nodes, new_edges)
}
