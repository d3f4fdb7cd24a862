//! Corpus ingestion, vocabulary construction and token-id encoding.
//!
//! Input documents are expected to be pre-tokenized (and ideally
//! pre-lemmatized) upstream; the only normalization applied here is
//! lowercasing at load time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Token id reserved for out-of-vocabulary tokens.
pub const UNK_ID: u32 = 0;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed document: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate document id {0}")]
    DuplicateId(String),
}

/// A source article: an ordered list of paragraphs, each an ordered list of
/// sentences, each a list of token strings.
///
/// `group_key` carries whatever pairing metadata the corpus provides, e.g. a
/// month-year stamp like `"1994-07"` or a category name. Empty is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub group_key: String,
    pub paragraphs: Vec<Vec<Vec<String>>>,
}

impl Document {
    /// Total sentence count across all paragraphs.
    pub fn sentence_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.len()).sum()
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty document id".into());
        }
        if self.paragraphs.is_empty() {
            return Err(format!("document {} has no paragraphs", self.id));
        }
        for paragraph in &self.paragraphs {
            for sentence in paragraph {
                if sentence.is_empty() {
                    return Err(format!("document {} has an empty sentence", self.id));
                }
                if sentence.iter().any(|t| t.is_empty()) {
                    return Err(format!("document {} has an empty token", self.id));
                }
            }
        }
        Ok(())
    }

    fn lowercase(&mut self) {
        for paragraph in &mut self.paragraphs {
            for sentence in paragraph.iter_mut() {
                for token in sentence.iter_mut() {
                    if token.chars().any(|c| c.is_uppercase()) {
                        *token = token.to_lowercase();
                    }
                }
            }
        }
    }
}

/// Loads a JSONL corpus, one document per line.
///
/// Documents come back in file order with lowercased tokens. Duplicate ids
/// and schema violations are reported with their line number.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut docs = Vec::new();
    let mut seen = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut doc: Document =
            serde_json::from_str(&line).map_err(|e| CorpusError::MalformedLine {
                line: line_no,
                message: e.to_string(),
            })?;
        doc.validate().map_err(|message| CorpusError::MalformedLine {
            line: line_no,
            message,
        })?;
        if seen.insert(doc.id.clone(), line_no).is_some() {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        doc.lowercase();
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes documents as JSONL, one per line.
pub fn write_corpus(docs: &[Document], mut w: impl Write) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Frequency-cut vocabulary mapping tokens to dense ids.
///
/// Id 0 is reserved for the unknown token and is never evicted; real tokens
/// occupy ids `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    size_limit: usize,
    map: HashMap<String, u32>,
    // tokens ordered by id (index 0 = id 1), for serialization
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Number of real (non-UNK) tokens.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn size_limit(&self) -> usize {
        self.size_limit
    }

    /// Number of distinct ids including UNK; the row count an embedding
    /// matrix over this vocabulary needs.
    pub fn id_count(&self) -> usize {
        self.map.len() + 1
    }

    /// Token id, or [`UNK_ID`] when out of vocabulary.
    pub fn lookup(&self, token: &str) -> u32 {
        self.map.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Tokens in id order (id 1 first). UNK is not included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuilds a vocabulary from an id-ordered token list, as stored in
    /// checkpoints.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let map = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), (i + 1) as u32))
            .collect();
        Vocabulary {
            size_limit: tokens.len(),
            map,
            tokens,
        }
    }
}

/// Builds the vocabulary of the `limit` most frequent tokens.
///
/// Frequency ties break lexicographically so two builds over the same corpus
/// produce identical maps. An empty corpus yields an UNK-only vocabulary.
pub fn build_vocabulary(docs: &[Document], limit: usize) -> Vocabulary {
    let tokens = docs
        .iter()
        .flat_map(|d| &d.paragraphs)
        .flatten()
        .flatten()
        .map(String::as_str);
    build_vocabulary_from_tokens(tokens, limit)
}

/// Same as [`build_vocabulary`] but over any token stream.
pub fn build_vocabulary_from_tokens<'a>(
    token_stream: impl IntoIterator<Item = &'a str>,
    limit: usize,
) -> Vocabulary {
    assert!(limit >= 1, "vocabulary limit must be at least 1");
    let mut freq: HashMap<&str, u64> = HashMap::new();
    for token in token_stream {
        *freq.entry(token).or_insert(0) += 1;
    }
    let mut entries: Vec<(&str, u64)> = freq.into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    entries.truncate(limit);

    let tokens: Vec<String> = entries.iter().map(|(t, _)| t.to_string()).collect();
    let map = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), (i + 1) as u32))
        .collect();
    Vocabulary {
        size_limit: limit,
        map,
        tokens,
    }
}

/// Maps a sentence to token ids; out-of-vocabulary tokens become [`UNK_ID`].
pub fn encode_sentence(sentence: &[String], vocab: &Vocabulary) -> Vec<u32> {
    sentence.iter().map(|t| vocab.lookup(t)).collect()
}
