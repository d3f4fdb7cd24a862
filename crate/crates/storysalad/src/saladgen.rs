//! Salad generation: pull content from eligible document pairs, shuffle the
//! mixture with a seeded permutation, and curate hard subsets by topic
//! similarity.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::derive_seed;
use crate::embedding::{topic_similarity, EmbeddingTable, EmbeddingError};

/// Minimum number of sentences each source document must contribute.
pub const MIN_SENTENCES: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum SaladError {
    #[error("ineligible source document {id}: {sentences} sentences, need at least {MIN_SENTENCES}")]
    IneligibleDocument { id: String, sentences: usize },
    #[error("cannot mix document {0} with itself")]
    IdenticalDocuments(String),
    #[error("no eligible document pair under policy {0}")]
    NoEligiblePair(String),
    #[error("category_filter policy requires at least one filter word")]
    EmptyFilterWords,
    #[error("hard-select k={k} exceeds salad count {n}")]
    HardSelectTooLarge { k: usize, n: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed salad: {message}")]
    MalformedLine { line: usize, message: String },
}

/// Which of the two source narratives a salad item came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::A => Label::B,
            Label::B => Label::A,
        }
    }
}

/// One sentence of a salad with its recoverable gold label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaladItem {
    pub tokens: Vec<String>,
    pub gold: Label,
    pub source_id: String,
}

/// A shuffled mixture of sentences pulled from two source documents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Salad {
    pub id: String,
    pub source_a: String,
    pub source_b: String,
    pub seed: u64,
    pub items: Vec<SaladItem>,
}

impl Salad {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Count of items carrying each gold label, as (a, b).
    pub fn label_counts(&self) -> (usize, usize) {
        let a = self.items.iter().filter(|i| i.gold == Label::A).count();
        (a, self.items.len() - a)
    }

    /// Gold label of each item, in mixture order.
    pub fn gold_labels(&self) -> Vec<Label> {
        self.items.iter().map(|i| i.gold).collect()
    }

    /// All tokens of the narrative with the given label, in item order.
    pub fn narrative_tokens(&self, label: Label) -> Vec<String> {
        self.items
            .iter()
            .filter(|i| i.gold == label)
            .flat_map(|i| i.tokens.iter().cloned())
            .collect()
    }
}

/// How candidate document pairs are selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// Any two eligible documents.
    Random,
    /// Both documents must share the same group key.
    GroupKey,
    /// Both documents' group keys must contain a filter word, and the pair
    /// must share the same key.
    CategoryFilter,
}

impl std::fmt::Display for PairingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairingMode::Random => write!(f, "random"),
            PairingMode::GroupKey => write!(f, "group_key"),
            PairingMode::CategoryFilter => write!(f, "category_filter"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairingPolicy {
    pub mode: PairingMode,
    /// Case-insensitive substrings matched against group keys; required
    /// non-empty in category-filter mode.
    pub filter_words: Vec<String>,
}

impl PairingPolicy {
    pub fn random() -> Self {
        PairingPolicy {
            mode: PairingMode::Random,
            filter_words: Vec::new(),
        }
    }

    pub fn group_key() -> Self {
        PairingPolicy {
            mode: PairingMode::GroupKey,
            filter_words: Vec::new(),
        }
    }

    pub fn category_filter(words: Vec<String>) -> Self {
        PairingPolicy {
            mode: PairingMode::CategoryFilter,
            filter_words: words,
        }
    }

    fn document_matches(&self, doc: &Document) -> bool {
        match self.mode {
            PairingMode::Random | PairingMode::GroupKey => true,
            PairingMode::CategoryFilter => {
                let key = doc.group_key.to_lowercase();
                self.filter_words
                    .iter()
                    .any(|w| key.contains(&w.to_lowercase()))
            }
        }
    }

    fn pair_matches(&self, a: &Document, b: &Document) -> bool {
        match self.mode {
            PairingMode::Random => true,
            PairingMode::GroupKey | PairingMode::CategoryFilter => a.group_key == b.group_key,
        }
    }
}

/// Pulls paragraphs from the document, in order, until the cumulative
/// sentence count reaches [`MIN_SENTENCES`]. Paragraphs are never split.
pub fn pull_content(doc: &Document) -> Result<Vec<Vec<String>>, SaladError> {
    let total = doc.sentence_count();
    if total < MIN_SENTENCES {
        return Err(SaladError::IneligibleDocument {
            id: doc.id.clone(),
            sentences: total,
        });
    }
    let mut sentences = Vec::new();
    for paragraph in &doc.paragraphs {
        sentences.extend(paragraph.iter().cloned());
        if sentences.len() >= MIN_SENTENCES {
            break;
        }
    }
    Ok(sentences)
}

/// Mixes the pulled content of two documents and shuffles it with a
/// Fisher-Yates permutation seeded by `seed`.
pub fn make_salad(doc_a: &Document, doc_b: &Document, seed: u64) -> Result<Salad, SaladError> {
    if doc_a.id == doc_b.id {
        return Err(SaladError::IdenticalDocuments(doc_a.id.clone()));
    }
    let mut items: Vec<SaladItem> = Vec::new();
    for tokens in pull_content(doc_a)? {
        items.push(SaladItem {
            tokens,
            gold: Label::A,
            source_id: doc_a.id.clone(),
        });
    }
    for tokens in pull_content(doc_b)? {
        items.push(SaladItem {
            tokens,
            gold: Label::B,
            source_id: doc_b.id.clone(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }

    Ok(Salad {
        id: format!("{}+{}#{}", doc_a.id, doc_b.id, seed),
        source_a: doc_a.id.clone(),
        source_b: doc_b.id.clone(),
        seed,
        items,
    })
}

/// Plans `n` pairings without building the salads: each entry holds the two
/// document indices into `docs` and the shuffle seed for that salad.
///
/// Pairs are sampled without replacement until the eligible pair space is
/// exhausted, then with replacement. Each salad's shuffle seed derives from
/// `(seed, salad index)`, so planned salads can be built in any order.
pub fn plan_dataset(
    docs: &[Document],
    policy: &PairingPolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<(usize, usize, u64)>, SaladError> {
    if policy.mode == PairingMode::CategoryFilter && policy.filter_words.is_empty() {
        return Err(SaladError::EmptyFilterWords);
    }
    let eligible: Vec<usize> = (0..docs.len())
        .filter(|&d| docs[d].sentence_count() >= MIN_SENTENCES && policy.document_matches(&docs[d]))
        .collect();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..eligible.len() {
        for j in (i + 1)..eligible.len() {
            if policy.pair_matches(&docs[eligible[i]], &docs[eligible[j]]) {
                pairs.push((eligible[i], eligible[j]));
            }
        }
    }
    if pairs.is_empty() {
        return Err(SaladError::NoEligiblePair(policy.mode.to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    Ok((0..n)
        .map(|index| {
            let (a, b) = if index < order.len() {
                pairs[order[index]]
            } else {
                pairs[rng.gen_range(0..pairs.len())]
            };
            (a, b, derive_seed(seed, index as u64))
        })
        .collect())
}

/// Generates `n` salads from the corpus under the pairing policy by
/// realizing the plan from [`plan_dataset`] in order.
pub fn generate_dataset(
    docs: &[Document],
    policy: &PairingPolicy,
    n: usize,
    seed: u64,
) -> Result<Vec<Salad>, SaladError> {
    plan_dataset(docs, policy, n, seed)?
        .into_iter()
        .map(|(a, b, salad_seed)| make_salad(&docs[a], &docs[b], salad_seed))
        .collect()
}

/// The `k` salads whose narratives are most topically similar, in descending
/// similarity order; ties break by salad id.
pub fn select_hard(
    salads: &[Salad],
    table: &EmbeddingTable,
    k: usize,
) -> Result<Vec<Salad>, SaladError> {
    if k > salads.len() {
        return Err(SaladError::HardSelectTooLarge {
            k,
            n: salads.len(),
        });
    }
    let mut scored: Vec<(f64, &Salad)> = salads
        .iter()
        .map(|s| Ok((topic_similarity(s, table)?, s)))
        .collect::<Result<_, SaladError>>()?;
    scored.sort_by(|(sa, a), (sb, b)| {
        sb.partial_cmp(sa)
            .expect("topic similarity is never NaN")
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(scored.into_iter().take(k).map(|(_, s)| s.clone()).collect())
}

/// Reads a salad JSONL file, one salad per line.
pub fn load_salads(path: impl AsRef<Path>) -> Result<Vec<Salad>, SaladError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| SaladError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut salads = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| SaladError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let salad: Salad = serde_json::from_str(&line).map_err(|e| SaladError::MalformedLine {
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(salad.id.clone()) {
            return Err(SaladError::MalformedLine {
                line: line_no,
                message: format!("duplicate salad id {}", salad.id),
            });
        }
        salads.push(salad);
    }
    Ok(salads)
}

/// Writes salads as JSONL. Serialization is deterministic, so identical
/// inputs produce byte-identical files.
pub fn write_salads(salads: &[Salad], mut w: impl Write) -> std::io::Result<()> {
    for salad in salads {
        serde_json::to_writer(&mut w, salad)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Builds a token vocabulary over every sentence of the given salads.
pub fn salad_vocabulary(salads: &[Salad], limit: usize) -> crate::corpus::Vocabulary {
    let tokens = salads
        .iter()
        .flat_map(|s| &s.items)
        .flat_map(|i| &i.tokens)
        .map(String::as_str);
    crate::corpus::build_vocabulary_from_tokens(tokens, limit)
}
