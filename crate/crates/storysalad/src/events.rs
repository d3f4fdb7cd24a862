//! Mixtures of event tuples instead of sentences: JSONL ingestion, a
//! feedforward tuple embedder, co-occurrence pretraining of the embedder,
//! and clustering through the shared pairwise pipeline.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{k_medoids, ClusterError, DistanceMatrix, DistanceSource};
use crate::corpus::{build_vocabulary_from_tokens, Vocabulary};
use crate::derive_seed;
use crate::embedding::cosine;
use crate::metrics::Assignment;
use crate::neural::checkpoint::{Checkpoint, KIND_EVENT};
use crate::neural::model::{ModelConfig, PairScorer, PairTrace};
use crate::neural::params::{Param, ParamVisitor};
use crate::neural::tensor::{dot, sigmoid, softplus};
use crate::neural::train::PairTask;
use crate::neural::NeuralError;
use crate::saladgen::Label;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed event salad: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: event tuple is missing its verb")]
    MissingVerb { line: usize },
    #[error("line {line}: item {item} carries no events")]
    EmptyItem { line: usize, item: usize },
    #[error("corpus holds fewer than two narratives")]
    SingleNarrative,
    #[error("no narrative holds two events, so no positive pairs exist")]
    NoPositivePairs,
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// One extracted event: the verb with optional arguments and any number of
/// preposition and prepositional-object pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTuple {
    pub verb: String,
    pub subj: Option<String>,
    pub dobj: Option<String>,
    pub pps: Vec<(String, String)>,
}

/// The events of one original sentence, with its gold narrative label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventItem {
    pub events: Vec<EventTuple>,
    pub gold: Label,
}

/// A shuffled two-narrative mixture of event-tuple sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSalad {
    pub id: String,
    pub items: Vec<EventItem>,
}

impl EventSalad {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn gold_labels(&self) -> Vec<Label> {
        self.items.iter().map(|i| i.gold).collect()
    }
}

pub fn load_event_salads(path: impl AsRef<Path>) -> Result<Vec<EventSalad>, EventError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EventError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut salads = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EventError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let salad: EventSalad =
            serde_json::from_str(&line).map_err(|e| EventError::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        for (item_idx, item) in salad.items.iter().enumerate() {
            if item.events.is_empty() {
                return Err(EventError::EmptyItem {
                    line: idx + 1,
                    item: item_idx,
                });
            }
            for ev in &item.events {
                if ev.verb.is_empty() {
                    return Err(EventError::MissingVerb { line: idx + 1 });
                }
            }
        }
        salads.push(salad);
    }
    Ok(salads)
}

pub fn write_event_salads(salads: &[EventSalad], mut w: impl Write) -> std::io::Result<()> {
    for salad in salads {
        serde_json::to_writer(&mut w, salad)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Token vocabulary over all tuple slots, extended with a dedicated id for
/// absent arguments so absence stays distinct from out-of-vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EventVocab {
    words: Vocabulary,
}

impl EventVocab {
    pub fn build(salads: &[EventSalad], limit: usize) -> Self {
        let mut tokens: Vec<&str> = Vec::new();
        for salad in salads {
            for item in &salad.items {
                for ev in &item.events {
                    tokens.push(&ev.verb);
                    if let Some(s) = &ev.subj {
                        tokens.push(s);
                    }
                    if let Some(d) = &ev.dobj {
                        tokens.push(d);
                    }
                    for (p, o) in &ev.pps {
                        tokens.push(p);
                        tokens.push(o);
                    }
                }
            }
        }
        EventVocab {
            words: build_vocabulary_from_tokens(tokens, limit),
        }
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        EventVocab {
            words: Vocabulary::from_tokens(tokens),
        }
    }

    pub fn word_vocabulary(&self) -> &Vocabulary {
        &self.words
    }

    /// Id of the absent-argument token, one past the word ids.
    pub fn none_id(&self) -> u32 {
        self.words.id_count() as u32
    }

    /// Total id count: UNK, words, and the absent-argument token.
    pub fn id_count(&self) -> usize {
        self.words.id_count() + 1
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.words.lookup(token)
    }

    fn lookup_slot(&self, slot: Option<&String>) -> u32 {
        slot.map_or_else(|| self.none_id(), |t| self.lookup(t))
    }

    pub fn encode(&self, t: &EventTuple) -> EncodedEvent {
        EncodedEvent {
            verb: self.lookup(&t.verb),
            subj: self.lookup_slot(t.subj.as_ref()),
            dobj: self.lookup_slot(t.dobj.as_ref()),
            pps: t
                .pps
                .iter()
                .map(|(p, o)| (self.lookup(p), self.lookup(o)))
                .collect(),
        }
    }

    pub fn encode_sequence(&self, events: &[EventTuple]) -> Vec<EncodedEvent> {
        events.iter().map(|t| self.encode(t)).collect()
    }
}

/// An event tuple resolved to vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedEvent {
    pub verb: u32,
    pub subj: u32,
    pub dobj: u32,
    pub pps: Vec<(u32, u32)>,
}

/// Forward record of one embedded event, kept for the backward pass.
pub struct EmbedCache {
    event: EncodedEvent,
    x: Vec<f64>,
    e: Vec<f64>,
}

/// One affine layer with tanh over the concatenated slot embeddings:
/// verb, subject, direct object, and the mean of the preposition pairs.
pub struct EventEmbedder {
    pub table: Param,
    pub w: Param,
    pub b: Param,
}

impl EventEmbedder {
    pub fn new(id_count: usize, word_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        EventEmbedder {
            table: Param::uniform(id_count, word_dim, 0.1, rng),
            w: Param::xavier(out_dim, 5 * word_dim, rng),
            b: Param::zeros(1, out_dim),
        }
    }

    pub fn word_dim(&self) -> usize {
        self.table.value.cols
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.rows
    }

    pub fn visit(&mut self, prefix: &str, f: ParamVisitor) {
        f(&format!("{prefix}/table"), &mut self.table);
        f(&format!("{prefix}/w"), &mut self.w);
        f(&format!("{prefix}/b"), &mut self.b);
    }

    fn input_vector(&self, ev: &EncodedEvent) -> Vec<f64> {
        let wd = self.word_dim();
        let mut x = vec![0.0; 5 * wd];
        x[..wd].copy_from_slice(self.table.value.row(ev.verb as usize));
        x[wd..2 * wd].copy_from_slice(self.table.value.row(ev.subj as usize));
        x[2 * wd..3 * wd].copy_from_slice(self.table.value.row(ev.dobj as usize));
        if !ev.pps.is_empty() {
            let scale = 1.0 / ev.pps.len() as f64;
            for (p, o) in &ev.pps {
                for (k, v) in self.table.value.row(*p as usize).iter().enumerate() {
                    x[3 * wd + k] += scale * v;
                }
                for (k, v) in self.table.value.row(*o as usize).iter().enumerate() {
                    x[4 * wd + k] += scale * v;
                }
            }
        }
        x
    }

    pub fn forward(&self, ev: &EncodedEvent) -> (Vec<f64>, EmbedCache) {
        let x = self.input_vector(ev);
        let mut e = self.w.value.matvec(&x);
        for (v, bias) in e.iter_mut().zip(&self.b.value.data) {
            *v = (*v + bias).tanh();
        }
        (
            e.clone(),
            EmbedCache {
                event: ev.clone(),
                x,
                e,
            },
        )
    }

    pub fn backward(&mut self, cache: &EmbedCache, d_e: &[f64]) {
        let d_pre: Vec<f64> = d_e
            .iter()
            .zip(&cache.e)
            .map(|(d, e)| d * (1.0 - e * e))
            .collect();
        for (g, d) in self.b.grad.data.iter_mut().zip(&d_pre) {
            *g += d;
        }
        self.w.grad.outer_acc(&d_pre, &cache.x, 1.0);
        let mut dx = vec![0.0; cache.x.len()];
        self.w.value.matvec_transpose_acc(&d_pre, &mut dx);

        let wd = self.word_dim();
        let ev = &cache.event;
        let mut add_row = |id: u32, block: &[f64], scale: f64| {
            let row = self.table.grad.row_mut(id as usize);
            for (r, v) in row.iter_mut().zip(block) {
                *r += scale * v;
            }
        };
        add_row(ev.verb, &dx[..wd], 1.0);
        add_row(ev.subj, &dx[wd..2 * wd], 1.0);
        add_row(ev.dobj, &dx[2 * wd..3 * wd], 1.0);
        if !ev.pps.is_empty() {
            let scale = 1.0 / ev.pps.len() as f64;
            for (p, o) in &ev.pps {
                add_row(*p, &dx[3 * wd..4 * wd], scale);
                add_row(*o, &dx[4 * wd..5 * wd], scale);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit("embedder", &mut |_, p| p.zero_grad());
    }
}

/// The pairwise scorer over event-embedding sequences.
pub struct EventPairModel {
    pub scorer: PairScorer,
    pub embedder: EventEmbedder,
    pub vocab: EventVocab,
}

/// Trace of one scored event pair.
pub struct EventTrace {
    pub trace: PairTrace,
    s1: Vec<EmbedCache>,
    s2: Vec<EmbedCache>,
    ctx: Option<Vec<EmbedCache>>,
}

impl EventPairModel {
    pub fn new(
        config: ModelConfig,
        word_dim: usize,
        vocab: EventVocab,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NeuralError> {
        if word_dim == 0 {
            return Err(NeuralError::BadConfig("word_dim must be positive".into()));
        }
        let embedder = EventEmbedder::new(vocab.id_count(), word_dim, config.embed_dim, rng);
        let scorer = PairScorer::new(config, rng)?;
        Ok(EventPairModel {
            scorer,
            embedder,
            vocab,
        })
    }

    /// Builds the model around an already pretrained embedder.
    pub fn with_embedder(
        config: ModelConfig,
        embedder: EventEmbedder,
        vocab: EventVocab,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NeuralError> {
        if embedder.out_dim() != config.embed_dim {
            return Err(NeuralError::BadConfig(format!(
                "embedder yields {} dimensions but the scorer expects {}",
                embedder.out_dim(),
                config.embed_dim
            )));
        }
        let scorer = PairScorer::new(config, rng)?;
        Ok(EventPairModel {
            scorer,
            embedder,
            vocab,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.scorer.config
    }

    pub fn visit(&mut self, f: ParamVisitor) {
        self.embedder.visit("embedder", f);
        self.scorer.visit(f);
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, p| p.zero_grad());
    }

    fn embed_sequence(&self, events: &[EncodedEvent]) -> (Vec<Vec<f64>>, Vec<EmbedCache>) {
        let mut vectors = Vec::with_capacity(events.len());
        let mut caches = Vec::with_capacity(events.len());
        for ev in events {
            let (e, cache) = self.embedder.forward(ev);
            vectors.push(e);
            caches.push(cache);
        }
        (vectors, caches)
    }

    /// Scores a pair of event sequences, truncated to the configured
    /// maximum length.
    pub fn forward(
        &self,
        s1: &[EncodedEvent],
        s2: &[EncodedEvent],
        ctx: Option<&[EncodedEvent]>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<EventTrace, NeuralError> {
        if s1.is_empty() || s2.is_empty() {
            return Err(NeuralError::BadConfig(
                "cannot score an empty event sequence".into(),
            ));
        }
        let cap = self.config().max_sentence_len;
        let s1 = &s1[..s1.len().min(cap)];
        let s2 = &s2[..s2.len().min(cap)];
        let (e1, c1) = self.embed_sequence(s1);
        let (e2, c2) = self.embed_sequence(s2);
        let (ec, cc) = match ctx {
            Some(ctx) => {
                let (e, c) = self.embed_sequence(ctx);
                (Some(e), Some(c))
            }
            None => (None, None),
        };
        let trace = self.scorer.forward(&e1, &e2, ec.as_deref(), rng)?;
        Ok(EventTrace {
            trace,
            s1: c1,
            s2: c2,
            ctx: cc,
        })
    }

    pub fn backward(&mut self, trace: &EventTrace, d_logit: f64) {
        let grads = self.scorer.backward(&trace.trace, d_logit);
        for (cache, d) in trace.s1.iter().zip(&grads.d_s1) {
            self.embedder.backward(cache, d);
        }
        for (cache, d) in trace.s2.iter().zip(&grads.d_s2) {
            self.embedder.backward(cache, d);
        }
        if let (Some(caches), Some(d_ctx)) = (&trace.ctx, &grads.d_ctx) {
            for (cache, d) in caches.iter().zip(d_ctx) {
                self.embedder.backward(cache, d);
            }
        }
    }

    /// Probability that the two event sequences share a narrative, with
    /// dropout disabled.
    pub fn probability(
        &self,
        s1: &[EncodedEvent],
        s2: &[EncodedEvent],
        ctx: Option<&[EncodedEvent]>,
    ) -> Result<f64, NeuralError> {
        let trace = self.forward(s1, s2, ctx, None)?;
        Ok(sigmoid(trace.trace.logit).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    /// All events of the mixture in item order, capped at the configured
    /// context length. `None` for variants that ignore the context.
    pub fn encode_context(&self, salad: &EventSalad) -> Option<Vec<EncodedEvent>> {
        if !self.config().variant.uses_context() {
            return None;
        }
        let cap = self.config().context_cap;
        let mut events = Vec::new();
        'outer: for item in &salad.items {
            for ev in &item.events {
                if events.len() == cap {
                    break 'outer;
                }
                events.push(self.vocab.encode(ev));
            }
        }
        Some(events)
    }

    pub fn encode_items(&self, salad: &EventSalad) -> Vec<Vec<EncodedEvent>> {
        salad
            .items
            .iter()
            .map(|item| self.vocab.encode_sequence(&item.events))
            .collect()
    }

    /// Same-narrative probabilities for every ordered item pair, with each
    /// item and the context encoded once.
    pub fn pair_probability_matrix(&self, salad: &EventSalad) -> Result<Vec<Vec<f64>>, NeuralError> {
        let cap = self.config().max_sentence_len;
        let mut encoded = Vec::with_capacity(salad.len());
        for events in self.encode_items(salad) {
            if events.is_empty() {
                return Err(NeuralError::BadConfig(
                    "cannot score an empty event sequence".into(),
                ));
            }
            let events = &events[..events.len().min(cap)];
            let (vectors, _) = self.embed_sequence(events);
            let cache = self.scorer.lstm.forward(&vectors, None);
            encoded.push((cache.summary, cache.outputs));
        }
        let c = match self.encode_context(salad) {
            Some(ctx) => {
                let (vectors, _) = self.embed_sequence(&ctx);
                Some(self.scorer.context_vector(&vectors)?)
            }
            None => None,
        };
        let n = encoded.len();
        let mut probs = vec![vec![1.0; n]; n];
        for i in 0..n {
            let (z1, out1) = &encoded[i];
            for (j, (z2, out2)) in encoded.iter().enumerate() {
                if i == j {
                    continue;
                }
                let logit = self.scorer.encoded_logit(z1, out1, z2, out2, c.as_deref())?;
                probs[i][j] = sigmoid(logit).clamp(f64::EPSILON, 1.0 - f64::EPSILON);
            }
        }
        Ok(probs)
    }

    pub fn all_finite(&mut self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, p| ok &= p.value.all_finite());
        ok
    }
}

/// Saves an event pair model as a checkpoint of kind `event`.
pub fn save_event_model(
    model: &mut EventPairModel,
    path: impl AsRef<Path>,
) -> Result<(), NeuralError> {
    let config = model.config().clone();
    let vocab = model.vocab.word_vocabulary().clone();
    Checkpoint::collect(KIND_EVENT, &config, &vocab, |f| model.visit(f)).save(path)
}

/// Rebuilds an event pair model from a checkpoint of kind `event`.
pub fn load_event_model(path: impl AsRef<Path>) -> Result<EventPairModel, NeuralError> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.verify_header(KIND_EVENT)?;
    let word_dim = ckpt
        .tensors
        .get("embedder/table")
        .map(|t| t.cols)
        .ok_or_else(|| NeuralError::Checkpoint("missing tensor \"embedder/table\"".into()))?;
    let vocab = EventVocab::from_tokens(ckpt.vocab.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = EventPairModel::new(ckpt.model_config.clone(), word_dim, vocab, &mut rng)?;
    ckpt.apply(|f| model.visit(f))?;
    Ok(model)
}

/// An event pair model bound to its dataset for training.
pub struct EventTask {
    model: EventPairModel,
    items: Vec<Vec<Vec<EncodedEvent>>>,
    contexts: Vec<Option<Vec<EncodedEvent>>>,
    golds: Vec<Vec<Label>>,
}

impl EventTask {
    pub fn new(model: EventPairModel, salads: &[EventSalad]) -> Self {
        let items = salads.iter().map(|s| model.encode_items(s)).collect();
        let contexts = salads.iter().map(|s| model.encode_context(s)).collect();
        let golds = salads.iter().map(|s| s.gold_labels()).collect();
        EventTask {
            model,
            items,
            contexts,
            golds,
        }
    }

    pub fn model(&self) -> &EventPairModel {
        &self.model
    }

    pub fn into_model(self) -> EventPairModel {
        self.model
    }
}

impl PairTask for EventTask {
    type Trace = EventTrace;

    fn mixture_count(&self) -> usize {
        self.items.len()
    }

    fn gold_labels(&self, mixture: usize) -> &[Label] {
        &self.golds[mixture]
    }

    fn pair_logit(
        &self,
        mixture: usize,
        i: usize,
        j: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, EventTrace), NeuralError> {
        let trace = self.model.forward(
            &self.items[mixture][i],
            &self.items[mixture][j],
            self.contexts[mixture].as_deref(),
            rng,
        )?;
        Ok((trace.trace.logit, trace))
    }

    fn pair_backward(&mut self, trace: &EventTrace, d_logit: f64) {
        self.model.backward(trace, d_logit);
    }

    fn visit_params(&mut self, f: ParamVisitor) {
        self.model.visit(f);
    }
}

/// Pretraining schedule for the event embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub steps: usize,
    pub pairs_per_step: usize,
    pub negatives: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 200,
            pairs_per_step: 8,
            negatives: 4,
            lr: 1e-2,
            seed: 0,
        }
    }
}

fn narratives(salads: &[EventSalad], vocab: &EventVocab) -> Vec<Vec<EncodedEvent>> {
    let mut out = Vec::new();
    for salad in salads {
        for label in [Label::A, Label::B] {
            let events: Vec<EncodedEvent> = salad
                .items
                .iter()
                .filter(|item| item.gold == label)
                .flat_map(|item| item.events.iter().map(|t| vocab.encode(t)))
                .collect();
            if !events.is_empty() {
                out.push(events);
            }
        }
    }
    out
}

/// Pulls embeddings of events that share a narrative together and pushes
/// events of other narratives away, skip-gram style with uniform negative
/// sampling. Returns the per-step mean loss.
pub fn pretrain_event_embeddings(
    salads: &[EventSalad],
    vocab: &EventVocab,
    embedder: &mut EventEmbedder,
    config: &PretrainConfig,
) -> Result<Vec<f64>, EventError> {
    let groups = narratives(salads, vocab);
    if groups.len() < 2 {
        return Err(EventError::SingleNarrative);
    }
    let capable: Vec<usize> = (0..groups.len())
        .filter(|&g| groups[g].len() >= 2)
        .collect();
    if capable.is_empty() {
        return Err(EventError::NoPositivePairs);
    }
    if config.pairs_per_step == 0 {
        return Err(EventError::Neural(NeuralError::BadConfig(
            "pairs_per_step must be positive".into(),
        )));
    }

    let mut adam = crate::neural::train::Adam::new(config.lr, 0.9, 0.999, 1e-8);
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, step as u64));
        embedder.zero_grad();
        let mut loss = 0.0;
        let scale = 1.0 / config.pairs_per_step as f64;
        for _ in 0..config.pairs_per_step {
            let g = capable[rng.gen_range(0..capable.len())];
            let picks = rand::seq::index::sample(&mut rng, groups[g].len(), 2);
            let (ea, cache_a) = embedder.forward(&groups[g][picks.index(0)]);
            let (eb, cache_b) = embedder.forward(&groups[g][picks.index(1)]);
            let d = dot(&ea, &eb);
            loss += softplus(-d);
            let coeff = -sigmoid(-d) * scale;
            let mut d_ea: Vec<f64> = eb.iter().map(|v| coeff * v).collect();
            let d_eb: Vec<f64> = ea.iter().map(|v| coeff * v).collect();
            embedder.backward(&cache_b, &d_eb);

            for _ in 0..config.negatives {
                let mut other = rng.gen_range(0..groups.len() - 1);
                if other >= g {
                    other += 1;
                }
                let neg = &groups[other][rng.gen_range(0..groups[other].len())];
                let (en, cache_n) = embedder.forward(neg);
                let dn = dot(&ea, &en);
                loss += softplus(dn);
                let coeff_n = sigmoid(dn) * scale;
                for (acc, v) in d_ea.iter_mut().zip(&en) {
                    *acc += coeff_n * v;
                }
                let d_en: Vec<f64> = ea.iter().map(|v| coeff_n * v).collect();
                embedder.backward(&cache_n, &d_en);
            }
            embedder.backward(&cache_a, &d_ea);
        }
        let mean = loss * scale;
        if !mean.is_finite() {
            return Err(EventError::Neural(NeuralError::NonFiniteLoss {
                epoch: step,
                batch: 0,
            }));
        }
        losses.push(mean);
        adam.step_visit(|f| embedder.visit("embedder", f));
    }
    Ok(losses)
}

/// Mean cosine between event embeddings that share a narrative and mean
/// cosine across the two narratives of each mixture.
pub fn narrative_cosine_means(
    salads: &[EventSalad],
    vocab: &EventVocab,
    embedder: &EventEmbedder,
) -> Result<(f64, f64), EventError> {
    let mut within = (0.0, 0usize);
    let mut cross = (0.0, 0usize);
    for salad in salads {
        let mut by_label: Vec<(Label, Vec<f64>)> = Vec::new();
        for item in &salad.items {
            for ev in &item.events {
                let (e, _) = embedder.forward(&vocab.encode(ev));
                by_label.push((item.gold, e));
            }
        }
        for i in 0..by_label.len() {
            for j in (i + 1)..by_label.len() {
                let c = cosine(&by_label[i].1, &by_label[j].1).expect("equal dims");
                if by_label[i].0 == by_label[j].0 {
                    within.0 += c;
                    within.1 += 1;
                } else {
                    cross.0 += c;
                    cross.1 += 1;
                }
            }
        }
    }
    if within.1 == 0 || cross.1 == 0 {
        return Err(EventError::SingleNarrative);
    }
    Ok((within.0 / within.1 as f64, cross.0 / cross.1 as f64))
}

/// Distance 1 − cosine between per-item mean event embeddings.
pub fn event_cosine_distance_matrix(
    salad: &EventSalad,
    vocab: &EventVocab,
    embedder: &EventEmbedder,
) -> Result<DistanceMatrix, ClusterError> {
    let vectors: Vec<Vec<f64>> = salad
        .items
        .iter()
        .map(|item| {
            let mut mean = vec![0.0; embedder.out_dim()];
            for ev in &item.events {
                let (e, _) = embedder.forward(&vocab.encode(ev));
                for (m, v) in mean.iter_mut().zip(&e) {
                    *m += v;
                }
            }
            if !item.events.is_empty() {
                let scale = 1.0 / item.events.len() as f64;
                for m in &mut mean {
                    *m *= scale;
                }
            }
            mean
        })
        .collect();
    DistanceMatrix::from_fn(salad.len(), |i, j| {
        let c = cosine(&vectors[i], &vectors[j])?;
        Ok((1.0 - c).clamp(0.0, 2.0))
    })
}

/// Distance 1 − ½(P(same|i,j) + P(same|j,i)) from a trained event model.
pub fn learned_event_distance_matrix(
    salad: &EventSalad,
    model: &EventPairModel,
) -> Result<DistanceMatrix, ClusterError> {
    let probs = model.pair_probability_matrix(salad)?;
    DistanceMatrix::from_fn(salad.len(), |i, j| {
        let p = 0.5 * (probs[i][j] + probs[j][i]);
        Ok((1.0 - p).clamp(0.0, 1.0))
    })
}

/// A distance source for event mixtures bound to the data it needs.
pub enum EventDistancer<'a> {
    Cosine(&'a EventVocab, &'a EventEmbedder),
    Learned(&'a EventPairModel),
}

impl EventDistancer<'_> {
    pub fn source(&self) -> DistanceSource {
        match self {
            EventDistancer::Cosine(..) => DistanceSource::Cosine,
            EventDistancer::Learned(_) => DistanceSource::Learned,
        }
    }

    pub fn matrix(&self, salad: &EventSalad) -> Result<DistanceMatrix, ClusterError> {
        match self {
            EventDistancer::Cosine(vocab, embedder) => {
                event_cosine_distance_matrix(salad, vocab, embedder)
            }
            EventDistancer::Learned(model) => learned_event_distance_matrix(salad, model),
        }
    }
}

/// Clusters one event mixture into two narratives.
pub fn cluster_event_salad(
    salad: &EventSalad,
    distancer: &EventDistancer,
    restarts: usize,
    seed: u64,
) -> Result<Assignment, ClusterError> {
    let dm = distancer.matrix(salad)?;
    k_medoids(&dm, 2, restarts, seed)
}
