//! Word-embedding tables, average-embedding narrative representations and
//! the cosine topic-similarity score used to rank salad difficulty.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::saladgen::{Label, Salad};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding file is empty")]
    EmptyFile,
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse component: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot average zero tokens")]
    EmptyTokenList,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Token-to-vector map with an unknown-token fallback.
///
/// The fallback is all-zeros unless the file carries a row for the literal
/// token `UNK` (or `<unk>`), in which case that row is used.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    unk: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        EmbeddingTable {
            dim,
            vectors: HashMap::new(),
            unk: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) {
        assert_eq!(vector.len(), self.dim, "vector length must equal dim");
        let token = token.into();
        if token == "UNK" || token == "<unk>" {
            self.unk = vector.clone();
        }
        self.vectors.insert(token, vector);
    }

    /// Stored vector for `token`, or the unknown-token fallback.
    pub fn lookup(&self, token: &str) -> &[f64] {
        self.vectors.get(token).map_or(&self.unk, |v| v.as_slice())
    }

    pub fn unk_vector(&self) -> &[f64] {
        &self.unk
    }
}

/// Loads a plain-text embedding file: `token v1 v2 ... vdim`, one per line,
/// whitespace separated. The dimension is inferred from the first line.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, EmbeddingError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EmbeddingError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a first field");
        let components: Vec<&str> = parts.collect();
        let dim = match &table {
            Some(t) => t.dim(),
            None => {
                if components.is_empty() {
                    return Err(EmbeddingError::DimensionMismatch {
                        line: line_no,
                        expected: 1,
                        found: 0,
                    });
                }
                components.len()
            }
        };
        if components.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: components.len(),
            });
        }
        let vector = components
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| EmbeddingError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
        table
            .get_or_insert_with(|| EmbeddingTable::new(dim))
            .insert(token, vector);
    }
    table.ok_or(EmbeddingError::EmptyFile)
}

/// Arithmetic mean of the tokens' vectors; out-of-vocabulary tokens
/// contribute the unknown-token fallback.
pub fn average_embedding(
    tokens: &[String],
    table: &EmbeddingTable,
) -> Result<Vec<f64>, EmbeddingError> {
    if tokens.is_empty() {
        return Err(EmbeddingError::EmptyTokenList);
    }
    let mut mean = vec![0.0; table.dim()];
    for token in tokens {
        for (m, x) in mean.iter_mut().zip(table.lookup(token)) {
            *m += x;
        }
    }
    let n = tokens.len() as f64;
    for m in &mut mean {
        *m /= n;
    }
    Ok(mean)
}

/// Cosine similarity in [-1, 1]. A zero-norm operand yields 0.0: all-OOV
/// narratives under a zero fallback vector carry no similarity evidence.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EmbeddingError> {
    if u.len() != v.len() {
        return Err(EmbeddingError::LengthMismatch(u.len(), v.len()));
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0))
}

/// Cosine similarity between the average embeddings of two token bags.
pub fn narrative_similarity(
    tokens_a: &[String],
    tokens_b: &[String],
    table: &EmbeddingTable,
) -> Result<f64, EmbeddingError> {
    let ga = average_embedding(tokens_a, table)?;
    let gb = average_embedding(tokens_b, table)?;
    cosine(&ga, &gb)
}

/// Topic similarity of a salad: the cosine between the average word
/// embeddings of its two narratives, each narrative taken as the
/// concatenation of all its sentences.
pub fn topic_similarity(salad: &Salad, table: &EmbeddingTable) -> Result<f64, EmbeddingError> {
    let mut bag_a = Vec::new();
    let mut bag_b = Vec::new();
    for item in &salad.items {
        match item.gold {
            Label::A => bag_a.extend(item.tokens.iter().cloned()),
            Label::B => bag_b.extend(item.tokens.iter().cloned()),
        }
    }
    narrative_similarity(&bag_a, &bag_b, table)
}
