//! Token-embedding providers for node features.
//!
//! Real runs read precomputed per-sentence token matrices from a binary
//! archive; tests and synthetic corpora use a seeded hash-based provider so
//! the whole pipeline stays deterministic without any model runtime.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("empty token span {start}..{end}")]
    EmptySpan { start: usize, end: usize },
    #[error("token span {start}..{end} out of range for {n_tokens} tokens")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        n_tokens: usize,
    },
    #[error("no embeddings stored for doc '{doc_id}' sentence {sentence}")]
    MissingSentence { doc_id: String, sentence: usize },
    #[error("sentence has {stored} token rows but token {index} was requested")]
    TokenOutOfRange { stored: usize, index: usize },
    #[error("archive dimension {archive} does not match requested dimension {requested}")]
    DimensionMismatch { archive: usize, requested: usize },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad embedding archive: {0}")]
    Format(String),
}

/// Source of per-token embedding rows. Implementations are deterministic:
/// the same tokens yield the same vectors.
pub trait EmbeddingProvider {
    fn dimension(&self) -> usize;

    /// Embedding of a single token (by sentence context and position).
    fn token_embedding(&self, sentence: usize, tokens: &[String], index: usize)
        -> Result<Vec<f32>, EmbedError>;

    /// Embedding of a half-open token span: the mean of its token rows.
    fn span_embedding(
        &self,
        sentence: usize,
        tokens: &[String],
        start: usize,
        end: usize,
    ) -> Result<Vec<f32>, EmbedError> {
        if start >= end {
            return Err(EmbedError::EmptySpan { start, end });
        }
        if end > tokens.len() {
            return Err(EmbedError::SpanOutOfRange {
                start,
                end,
                n_tokens: tokens.len(),
            });
        }
        let mut acc = vec![0.0f32; self.dimension()];
        for i in start..end {
            let row = self.token_embedding(sentence, tokens, i)?;
            for (a, x) in acc.iter_mut().zip(row) {
                *a += x;
            }
        }
        let k = (end - start) as f32;
        for a in acc.iter_mut() {
            *a /= k;
        }
        Ok(acc)
    }
}

/// 64-bit FNV-1a over a byte stream.
fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic stand-in for a language model: each token's vector is
/// drawn from a stream seeded by a hash of the provider seed and the token
/// text, uniform over [-0.5, 0.5). Identical tokens get identical rows
/// regardless of position or sentence.
pub struct PseudoProvider {
    seed: u64,
    dim: usize,
}

impl PseudoProvider {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        PseudoProvider { seed, dim }
    }
}

impl EmbeddingProvider for PseudoProvider {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn token_embedding(
        &self,
        _sentence: usize,
        tokens: &[String],
        index: usize,
    ) -> Result<Vec<f32>, EmbedError> {
        let token = tokens.get(index).ok_or(EmbedError::TokenOutOfRange {
            stored: tokens.len(),
            index,
        })?;
        let h = fnv1a(
            self.seed
                .to_le_bytes()
                .into_iter()
                .chain(token.bytes()),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        Ok((0..self.dim).map(|_| rng.gen::<f32>() - 0.5).collect())
    }
}

const ARCHIVE_MAGIC: &[u8; 6] = b"FLAGE1";

/// Precomputed token embeddings, keyed by (doc id, sentence index). Each
/// entry stores a T x D matrix, one row per surface token.
pub struct EmbeddingArchive {
    dim: usize,
    sentences: BTreeMap<(String, usize), Vec<f32>>,
}

impl EmbeddingArchive {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0);
        EmbeddingArchive {
            dim,
            sentences: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Stores a T x D row-major matrix for one sentence.
    pub fn insert(&mut self, doc_id: &str, sentence: usize, rows: Vec<f32>) -> Result<(), EmbedError> {
        if !rows.len().is_multiple_of(self.dim) {
            return Err(EmbedError::Format(format!(
                "matrix of {} values is not a multiple of dimension {}",
                rows.len(),
                self.dim
            )));
        }
        self.sentences.insert((doc_id.to_string(), sentence), rows);
        Ok(())
    }

    pub fn write(&self, w: &mut dyn Write) -> Result<(), EmbedError> {
        w.write_all(ARCHIVE_MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.sentences.len() as u32).to_le_bytes())?;
        for ((doc_id, sentence), rows) in &self.sentences {
            let id = doc_id.as_bytes();
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id)?;
            w.write_all(&(*sentence as u32).to_le_bytes())?;
            w.write_all(&((rows.len() / self.dim) as u32).to_le_bytes())?;
            for &x in rows {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn write_file(&self, path: &Path) -> Result<(), EmbedError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn read(r: &mut dyn Read) -> Result<Self, EmbedError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)
            .map_err(|_| EmbedError::Format("unexpected end of file".to_string()))?;
        if &magic != ARCHIVE_MAGIC {
            return Err(EmbedError::Format(format!(
                "bad magic {:?}, expected {:?}",
                magic, ARCHIVE_MAGIC
            )));
        }
        let mut u32buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32, EmbedError> {
            r.read_exact(&mut u32buf)
                .map_err(|_| EmbedError::Format("unexpected end of file".to_string()))?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let dim = read_u32(r)? as usize;
        if dim == 0 {
            return Err(EmbedError::Format("zero dimension".to_string()));
        }
        let count = read_u32(r)? as usize;
        let mut sentences = BTreeMap::new();
        for _ in 0..count {
            let id_len = read_u32(r)? as usize;
            if id_len > 1 << 20 {
                return Err(EmbedError::Format(format!("doc id length {id_len} implausibly large")));
            }
            let mut id = vec![0u8; id_len];
            r.read_exact(&mut id)
                .map_err(|_| EmbedError::Format("unexpected end of file".to_string()))?;
            let doc_id = String::from_utf8(id).map_err(|_| EmbedError::Format("invalid utf-8".to_string()))?;
            let sentence = read_u32(r)? as usize;
            let n_tokens = read_u32(r)? as usize;
            let mut rows = vec![0.0f32; n_tokens * dim];
            let mut fbuf = [0u8; 4];
            for x in rows.iter_mut() {
                r.read_exact(&mut fbuf)
                    .map_err(|_| EmbedError::Format("unexpected end of file".to_string()))?;
                *x = f32::from_le_bytes(fbuf);
            }
            sentences.insert((doc_id, sentence), rows);
        }
        Ok(EmbeddingArchive { dim, sentences })
    }

    pub fn read_file(path: &Path) -> Result<Self, EmbedError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut f)
    }

    /// Provider view of the archive scoped to one document.
    pub fn provider_for<'a>(&'a self, doc_id: &str) -> ArchiveProvider<'a> {
        ArchiveProvider {
            archive: self,
            doc_id: doc_id.to_string(),
        }
    }
}

pub struct ArchiveProvider<'a> {
    archive: &'a EmbeddingArchive,
    doc_id: String,
}

impl EmbeddingProvider for ArchiveProvider<'_> {
    fn dimension(&self) -> usize {
        self.archive.dim
    }

    fn token_embedding(
        &self,
        sentence: usize,
        _tokens: &[String],
        index: usize,
    ) -> Result<Vec<f32>, EmbedError> {
        let rows = self
            .archive
            .sentences
            .get(&(self.doc_id.clone(), sentence))
            .ok_or_else(|| EmbedError::MissingSentence {
                doc_id: self.doc_id.clone(),
                sentence,
            })?;
        let dim = self.archive.dim;
        let stored = rows.len() / dim;
        if index >= stored {
            return Err(EmbedError::TokenOutOfRange { stored, index });
        }
        Ok(rows[index * dim..(index + 1) * dim].to_vec())
    }
}
