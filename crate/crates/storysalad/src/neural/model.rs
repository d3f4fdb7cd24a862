//! Pairwise same-narrative scorer: a shared sentence encoder, optional
//! mutual attention between the two sentences, an optional convolutional
//! summary of the whole mixture, and a bilinear output layer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::saladgen::Salad;

use super::attention::{attend, attend_backward, AttentionCache};
use super::cnn::{CnnCache, ContextCnn};
use super::lstm::{BiLstm, BiLstmCache};
use super::params::{Param, ParamVisitor};
use super::tensor::{dot, sigmoid};
use super::NeuralError;

/// Which optional components the scorer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Sentence encoder and bilinear head only.
    #[serde(rename = "bilstm")]
    Plain,
    /// Adds mutual attention between the pair.
    #[serde(rename = "bilstm-mt")]
    Attention,
    /// Adds the convolutional mixture summary.
    #[serde(rename = "bilstm-ctx")]
    Context,
    /// Adds both.
    #[serde(rename = "bilstm-mt-ctx")]
    AttentionContext,
}

impl Variant {
    pub fn uses_attention(self) -> bool {
        matches!(self, Variant::Attention | Variant::AttentionContext)
    }

    pub fn uses_context(self) -> bool {
        matches!(self, Variant::Context | Variant::AttentionContext)
    }

    pub fn all() -> [Variant; 4] {
        [
            Variant::Plain,
            Variant::Attention,
            Variant::Context,
            Variant::AttentionContext,
        ]
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Plain => "bilstm",
            Variant::Attention => "bilstm-mt",
            Variant::Context => "bilstm-ctx",
            Variant::AttentionContext => "bilstm-mt-ctx",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bilstm" => Ok(Variant::Plain),
            "bilstm-mt" => Ok(Variant::Attention),
            "bilstm-ctx" => Ok(Variant::Context),
            "bilstm-mt-ctx" => Ok(Variant::AttentionContext),
            other => Err(format!(
                "unknown variant {other:?}; expected one of bilstm, bilstm-mt, bilstm-ctx, bilstm-mt-ctx"
            )),
        }
    }
}

/// How the pieces feeding the output layer are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// One bilinear form over the concatenation of all parts.
    Concat,
    /// A separate bilinear form per part, summed.
    Summed,
}

/// Hyperparameters of the scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    /// Sentences longer than this are truncated before encoding.
    pub max_sentence_len: usize,
    pub cnn_widths: Vec<usize>,
    pub cnn_filters: usize,
    /// Maximum number of mixture tokens fed to the convolutional reader.
    pub context_cap: usize,
    pub composition: Composition,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Plain,
            embed_dim: 50,
            hidden: 100,
            layers: 2,
            dropout: 0.3,
            max_sentence_len: 60,
            cnn_widths: vec![3, 4, 5],
            cnn_filters: 32,
            context_cap: 512,
            composition: Composition::Concat,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.embed_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(NeuralError::BadConfig(
                "embed_dim, hidden and layers must be positive".into(),
            ));
        }
        if self.max_sentence_len == 0 {
            return Err(NeuralError::BadConfig(
                "max_sentence_len must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NeuralError::BadConfig("dropout must be in [0, 1)".into()));
        }
        if self.variant.uses_context() {
            if self.cnn_widths.is_empty() || self.cnn_filters == 0 {
                return Err(NeuralError::BadConfig(
                    "context variants need at least one filter width and filter".into(),
                ));
            }
            if self.context_cap == 0 {
                return Err(NeuralError::BadConfig("context_cap must be positive".into()));
            }
        }
        Ok(())
    }
}

enum Head {
    Concat(Param),
    Summed {
        z: Param,
        m: Option<Param>,
        c: Option<Param>,
    },
}

/// The variant-configurable scorer over sequences of input vectors. Token
/// and event frontends share this core.
pub struct PairScorer {
    pub config: ModelConfig,
    pub lstm: BiLstm,
    pub cnn: Option<ContextCnn>,
    head: Head,
}

/// Forward trace of one scored pair, kept for the backward pass.
pub struct PairTrace {
    pub logit: f64,
    lstm1: BiLstmCache,
    lstm2: BiLstmCache,
    att1: Option<AttentionCache>,
    att2: Option<AttentionCache>,
    cnn: Option<CnnCache>,
    m1: Option<Vec<f64>>,
    m2: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
}

impl PairTrace {
    /// Attention weights from sentence 1 over sentence 2's positions, when
    /// the variant computes them.
    pub fn attention_1_over_2(&self) -> Option<&[f64]> {
        self.att1.as_ref().map(|a| a.weights.as_slice())
    }

    pub fn attention_2_over_1(&self) -> Option<&[f64]> {
        self.att2.as_ref().map(|a| a.weights.as_slice())
    }

    /// Summary vector of the first sentence.
    pub fn summary_1(&self) -> &[f64] {
        &self.lstm1.summary
    }

    /// Summary vector of the second sentence.
    pub fn summary_2(&self) -> &[f64] {
        &self.lstm2.summary
    }
}

/// Gradients the scorer hands back to its frontend.
pub struct PairGrads {
    pub d_s1: Vec<Vec<f64>>,
    pub d_s2: Vec<Vec<f64>>,
    pub d_ctx: Option<Vec<Vec<f64>>>,
}

impl PairScorer {
    pub fn new(config: ModelConfig, rng: &mut impl Rng) -> Result<Self, NeuralError> {
        config.validate()?;
        let lstm = BiLstm::new(
            config.embed_dim,
            config.hidden,
            config.layers,
            config.dropout,
            rng,
        );
        let cnn = if config.variant.uses_context() {
            Some(ContextCnn::new(
                config.embed_dim,
                &config.cnn_widths,
                config.cnn_filters,
                rng,
            ))
        } else {
            None
        };
        let zd = 2 * config.hidden;
        let md = if config.variant.uses_attention() { zd } else { 0 };
        let cd = cnn.as_ref().map_or(0, |c| c.output_dim());
        let head = match config.composition {
            Composition::Concat => {
                let ud = zd + md + cd;
                Head::Concat(Param::xavier(ud, ud, rng))
            }
            Composition::Summed => Head::Summed {
                z: Param::xavier(zd, zd, rng),
                m: if md > 0 {
                    Some(Param::xavier(md, md, rng))
                } else {
                    None
                },
                c: if cd > 0 {
                    Some(Param::xavier(cd, cd, rng))
                } else {
                    None
                },
            },
        };
        Ok(PairScorer {
            config,
            lstm,
            cnn,
            head,
        })
    }

    fn z_dim(&self) -> usize {
        2 * self.config.hidden
    }

    pub fn visit(&mut self, f: ParamVisitor) {
        self.lstm.visit("lstm", f);
        if let Some(cnn) = &mut self.cnn {
            cnn.visit("cnn", f);
        }
        match &mut self.head {
            Head::Concat(w) => f("head/concat/w", w),
            Head::Summed { z, m, c } => {
                f("head/summed/z", z);
                if let Some(m) = m {
                    f("head/summed/m", m);
                }
                if let Some(c) = c {
                    f("head/summed/c", c);
                }
            }
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, p| p.zero_grad());
    }

    /// Summarizes the mixture context once so it can be reused for every
    /// pair of the same mixture during inference.
    pub fn context_vector(&self, ctx: &[Vec<f64>]) -> Result<Vec<f64>, NeuralError> {
        let cnn = self
            .cnn
            .as_ref()
            .ok_or_else(|| NeuralError::BadConfig("variant has no context reader".into()))?;
        let (c, _) = cnn.forward(ctx)?;
        Ok(c)
    }

    /// Scores one pair. `ctx` must be given exactly when the variant uses
    /// context. `rng` enables dropout.
    pub fn forward(
        &self,
        s1: &[Vec<f64>],
        s2: &[Vec<f64>],
        ctx: Option<&[Vec<f64>]>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<PairTrace, NeuralError> {
        if self.config.variant.uses_context() != ctx.is_some() {
            return Err(NeuralError::BadConfig(
                "context sequence presence must match the variant".into(),
            ));
        }
        let lstm1 = self.lstm.forward(s1, rng.as_deref_mut());
        let lstm2 = self.lstm.forward(s2, rng.as_deref_mut());

        let (att1, att2, m1, m2) = if self.config.variant.uses_attention() {
            let (m1, a1) = attend(&lstm1.summary, &lstm2.outputs);
            let (m2, a2) = attend(&lstm2.summary, &lstm1.outputs);
            (Some(a1), Some(a2), Some(m1), Some(m2))
        } else {
            (None, None, None, None)
        };

        let (cnn_cache, c) = match (self.cnn.as_ref(), ctx) {
            (Some(cnn), Some(ctx)) => {
                let (c, cache) = cnn.forward(ctx)?;
                (Some(cache), Some(c))
            }
            _ => (None, None),
        };

        let logit = self.head_logit(
            &lstm1.summary,
            &lstm2.summary,
            m1.as_deref(),
            m2.as_deref(),
            c.as_deref(),
        );
        Ok(PairTrace {
            logit,
            lstm1,
            lstm2,
            att1,
            att2,
            cnn: cnn_cache,
            m1,
            m2,
            c,
        })
    }

    /// Scores a pair from pre-encoded sentence summaries and per-token
    /// outputs, reusing a precomputed context vector. The expensive
    /// encoders run once per sentence elsewhere; only attention and the
    /// bilinear head run per pair.
    pub fn encoded_logit(
        &self,
        z1: &[f64],
        out1: &[Vec<f64>],
        z2: &[f64],
        out2: &[Vec<f64>],
        c: Option<&[f64]>,
    ) -> Result<f64, NeuralError> {
        if self.config.variant.uses_context() != c.is_some() {
            return Err(NeuralError::BadConfig(
                "context vector presence must match the variant".into(),
            ));
        }
        let (m1, m2) = if self.config.variant.uses_attention() {
            let (m1, _) = attend(z1, out2);
            let (m2, _) = attend(z2, out1);
            (Some(m1), Some(m2))
        } else {
            (None, None)
        };
        Ok(self.head_logit(z1, z2, m1.as_deref(), m2.as_deref(), c))
    }

    fn head_logit(
        &self,
        z1: &[f64],
        z2: &[f64],
        m1: Option<&[f64]>,
        m2: Option<&[f64]>,
        c: Option<&[f64]>,
    ) -> f64 {
        match &self.head {
            Head::Concat(w) => {
                let u1 = concat_parts(z1, m1, c);
                let u2 = concat_parts(z2, m2, c);
                dot(&u1, &w.value.matvec(&u2))
            }
            Head::Summed { z, m, c: wc } => {
                let mut logit = dot(z1, &z.value.matvec(z2));
                if let (Some(wm), Some(m1), Some(m2)) = (m, m1, m2) {
                    logit += dot(m1, &wm.value.matvec(m2));
                }
                if let (Some(wc), Some(c)) = (wc, c) {
                    logit += dot(c, &wc.value.matvec(c));
                }
                logit
            }
        }
    }

    /// Backpropagates `d_logit` through the whole scorer; parameter
    /// gradients accumulate and frontend gradients are returned.
    pub fn backward(&mut self, trace: &PairTrace, d_logit: f64) -> PairGrads {
        let zd = self.z_dim();
        let md = if self.config.variant.uses_attention() {
            zd
        } else {
            0
        };

        let mut dz1 = vec![0.0; zd];
        let mut dz2 = vec![0.0; zd];
        let mut dm1 = vec![0.0; md];
        let mut dm2 = vec![0.0; md];
        let cd = trace.c.as_ref().map_or(0, |c| c.len());
        let mut dc = vec![0.0; cd];

        match &mut self.head {
            Head::Concat(w) => {
                let u1 = concat_parts(&trace.lstm1.summary, trace.m1.as_deref(), trace.c.as_deref());
                let u2 = concat_parts(&trace.lstm2.summary, trace.m2.as_deref(), trace.c.as_deref());
                w.grad.outer_acc(&u1, &u2, d_logit);
                let mut du1 = w.value.matvec(&u2);
                for v in &mut du1 {
                    *v *= d_logit;
                }
                let mut du2 = vec![0.0; u1.len()];
                w.value.matvec_transpose_acc(&u1, &mut du2);
                for v in &mut du2 {
                    *v *= d_logit;
                }
                dz1.copy_from_slice(&du1[..zd]);
                dz2.copy_from_slice(&du2[..zd]);
                dm1.copy_from_slice(&du1[zd..zd + md]);
                dm2.copy_from_slice(&du2[zd..zd + md]);
                for k in 0..cd {
                    dc[k] = du1[zd + md + k] + du2[zd + md + k];
                }
            }
            Head::Summed { z, m, c: wc } => {
                let z1 = &trace.lstm1.summary;
                let z2 = &trace.lstm2.summary;
                z.grad.outer_acc(z1, z2, d_logit);
                let wz2 = z.value.matvec(z2);
                for (d, v) in dz1.iter_mut().zip(&wz2) {
                    *d += d_logit * v;
                }
                let mut wtz1 = vec![0.0; zd];
                z.value.matvec_transpose_acc(z1, &mut wtz1);
                for (d, v) in dz2.iter_mut().zip(&wtz1) {
                    *d += d_logit * v;
                }
                if let (Some(wm), Some(m1), Some(m2)) = (m, &trace.m1, &trace.m2) {
                    wm.grad.outer_acc(m1, m2, d_logit);
                    let wmm2 = wm.value.matvec(m2);
                    for (d, v) in dm1.iter_mut().zip(&wmm2) {
                        *d += d_logit * v;
                    }
                    let mut wmt1 = vec![0.0; md];
                    wm.value.matvec_transpose_acc(m1, &mut wmt1);
                    for (d, v) in dm2.iter_mut().zip(&wmt1) {
                        *d += d_logit * v;
                    }
                }
                if let (Some(wc), Some(cv)) = (wc, &trace.c) {
                    wc.grad.outer_acc(cv, cv, d_logit);
                    let wcc = wc.value.matvec(cv);
                    let mut wct = vec![0.0; cd];
                    wc.value.matvec_transpose_acc(cv, &mut wct);
                    for k in 0..cd {
                        dc[k] += d_logit * (wcc[k] + wct[k]);
                    }
                }
            }
        }

        let n1 = trace.lstm1.outputs.len();
        let n2 = trace.lstm2.outputs.len();
        let mut d_out1 = vec![vec![0.0; zd]; n1];
        let mut d_out2 = vec![vec![0.0; zd]; n2];

        if let (Some(a1), Some(a2)) = (&trace.att1, &trace.att2) {
            let dq1 = attend_backward(a1, &dm1, &mut d_out2);
            for (d, v) in dz1.iter_mut().zip(&dq1) {
                *d += *v;
            }
            let dq2 = attend_backward(a2, &dm2, &mut d_out1);
            for (d, v) in dz2.iter_mut().zip(&dq2) {
                *d += *v;
            }
        }

        let d_s1 = self.lstm.backward(&trace.lstm1, &d_out1, &dz1);
        let d_s2 = self.lstm.backward(&trace.lstm2, &d_out2, &dz2);

        let d_ctx = match (&mut self.cnn, &trace.cnn) {
            (Some(cnn), Some(cache)) => Some(cnn.backward(cache, &dc)),
            _ => None,
        };

        PairGrads { d_s1, d_s2, d_ctx }
    }

    pub fn all_finite(&mut self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, p| ok &= p.value.all_finite());
        ok
    }
}

fn concat_parts(z: &[f64], m: Option<&[f64]>, c: Option<&[f64]>) -> Vec<f64> {
    let mut u = z.to_vec();
    if let Some(m) = m {
        u.extend_from_slice(m);
    }
    if let Some(c) = c {
        u.extend_from_slice(c);
    }
    u
}

/// The scorer plus a trainable token embedding table. Row 0 embeds unknown
/// tokens.
pub struct TextPairModel {
    pub scorer: PairScorer,
    pub embedding: Param,
    pub vocab: Vocabulary,
}

/// Trace of one scored token pair, with the ids needed to route embedding
/// gradients.
pub struct TextTrace {
    pub trace: PairTrace,
    s1: Vec<u32>,
    s2: Vec<u32>,
    ctx: Option<Vec<u32>>,
}

impl TextPairModel {
    pub fn new(
        config: ModelConfig,
        vocab: Vocabulary,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, NeuralError> {
        let embedding = Param::uniform(vocab.id_count() as usize, config.embed_dim, 0.1, rng);
        let scorer = PairScorer::new(config, rng)?;
        Ok(TextPairModel {
            scorer,
            embedding,
            vocab,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.scorer.config
    }

    pub fn visit(&mut self, f: ParamVisitor) {
        f("embedding", &mut self.embedding);
        self.scorer.visit(f);
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, p| p.zero_grad());
    }

    fn embed(&self, ids: &[u32]) -> Vec<Vec<f64>> {
        ids.iter()
            .map(|id| self.embedding.value.row(*id as usize).to_vec())
            .collect()
    }

    /// Scores a pair of encoded sentences; `ctx` is the encoded mixture
    /// context for context variants. Sentences are truncated to the
    /// configured maximum length.
    pub fn forward(
        &self,
        s1: &[u32],
        s2: &[u32],
        ctx: Option<&[u32]>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<TextTrace, NeuralError> {
        if s1.is_empty() || s2.is_empty() {
            return Err(NeuralError::BadConfig("cannot score an empty sentence".into()));
        }
        let cap = self.config().max_sentence_len;
        let s1 = &s1[..s1.len().min(cap)];
        let s2 = &s2[..s2.len().min(cap)];
        let e1 = self.embed(s1);
        let e2 = self.embed(s2);
        let ec = ctx.map(|c| self.embed(c));
        let trace = self.scorer.forward(&e1, &e2, ec.as_deref(), rng)?;
        Ok(TextTrace {
            trace,
            s1: s1.to_vec(),
            s2: s2.to_vec(),
            ctx: ctx.map(|c| c.to_vec()),
        })
    }

    /// Encodes one sentence: the summary vector and the per-token top-layer
    /// outputs, truncated to the configured maximum length.
    pub fn encode_sentence(
        &self,
        ids: &[u32],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>), NeuralError> {
        if ids.is_empty() {
            return Err(NeuralError::BadConfig("cannot encode an empty sentence".into()));
        }
        let cap = self.config().max_sentence_len;
        let ids = &ids[..ids.len().min(cap)];
        let cache = self.scorer.lstm.forward(&self.embed(ids), rng);
        Ok((cache.summary, cache.outputs))
    }

    /// Backpropagates `d_logit`, accumulating scorer and embedding
    /// gradients.
    pub fn backward(&mut self, trace: &TextTrace, d_logit: f64) {
        let grads = self.scorer.backward(&trace.trace, d_logit);
        for (id, d) in trace.s1.iter().zip(&grads.d_s1) {
            let row = self.embedding.grad.row_mut(*id as usize);
            for (r, v) in row.iter_mut().zip(d) {
                *r += v;
            }
        }
        for (id, d) in trace.s2.iter().zip(&grads.d_s2) {
            let row = self.embedding.grad.row_mut(*id as usize);
            for (r, v) in row.iter_mut().zip(d) {
                *r += v;
            }
        }
        if let (Some(ctx), Some(d_ctx)) = (&trace.ctx, &grads.d_ctx) {
            for (id, d) in ctx.iter().zip(d_ctx) {
                let row = self.embedding.grad.row_mut(*id as usize);
                for (r, v) in row.iter_mut().zip(d) {
                    *r += v;
                }
            }
        }
    }

    /// Probability that the two encoded sentences share a narrative, with
    /// dropout disabled. Clamped into the open interval (0, 1) so extreme
    /// logits never round to an exact 0 or 1.
    pub fn probability(
        &self,
        s1: &[u32],
        s2: &[u32],
        ctx: Option<&[u32]>,
    ) -> Result<f64, NeuralError> {
        let trace = self.forward(s1, s2, ctx, None)?;
        Ok(sigmoid(trace.trace.logit).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    /// Same-narrative probabilities for every ordered sentence pair of one
    /// mixture, with dropout disabled. Each sentence and the context are
    /// encoded once; only attention and the head run per pair. The diagonal
    /// is fixed at 1.0.
    pub fn pair_probability_matrix(&self, salad: &Salad) -> Result<Vec<Vec<f64>>, NeuralError> {
        let mut encoded = Vec::with_capacity(salad.len());
        for ids in self.encode_items(salad) {
            encoded.push(self.encode_sentence(&ids, None)?);
        }
        let c = match self.encode_context(salad) {
            Some(ids) => Some(self.scorer.context_vector(&self.embed(&ids))?),
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

    /// Encodes the concatenated mixture tokens, truncated to the configured
    /// context cap. Returns `None` for variants that ignore the context.
    pub fn encode_context(&self, salad: &Salad) -> Option<Vec<u32>> {
        if !self.config().variant.uses_context() {
            return None;
        }
        let cap = self.config().context_cap;
        let mut ids = Vec::new();
        'outer: for item in &salad.items {
            for tok in &item.tokens {
                if ids.len() == cap {
                    break 'outer;
                }
                ids.push(self.vocab.lookup(tok));
            }
        }
        Some(ids)
    }

    /// Encodes each sentence of the salad.
    pub fn encode_items(&self, salad: &Salad) -> Vec<Vec<u32>> {
        salad
            .items
            .iter()
            .map(|item| crate::corpus::encode_sentence(&item.tokens, &self.vocab))
            .collect()
    }

    pub fn all_finite(&mut self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, p| ok &= p.value.all_finite());
        ok
    }
}

/// Per-pair training example: indices into a salad plus the same-narrative
/// label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairExample {
    pub salad: usize,
    pub i: usize,
    pub j: usize,
    pub same: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocabulary;
    use crate::corpus::Document;
    use rand::SeedableRng;

    fn tiny_vocab() -> Vocabulary {
        let doc = Document {
            id: "d".into(),
            group_key: String::new(),
            paragraphs: vec![vec![vec![
                "a".into(),
                "b".into(),
                "c".into(),
                "d".into(),
                "e".into(),
            ]]],
        };
        build_vocabulary(&[doc], 10)
    }

    fn tiny_config(variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            embed_dim: 4,
            hidden: 3,
            layers: 2,
            dropout: 0.0,
            max_sentence_len: 8,
            cnn_widths: vec![2],
            cnn_filters: 3,
            context_cap: 16,
            composition: Composition::Concat,
        }
    }

    #[test]
    fn all_variants_produce_finite_logits() {
        for variant in Variant::all() {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let model = TextPairModel::new(tiny_config(variant), tiny_vocab(), &mut rng).unwrap();
            let s1 = vec![1, 2, 3];
            let s2 = vec![4, 5];
            let ctx: Vec<u32> = vec![1, 2, 3, 4, 5, 1];
            let ctx = variant.uses_context().then_some(ctx.as_slice());
            let trace = model.forward(&s1, &s2, ctx, None).unwrap();
            assert!(trace.trace.logit.is_finite(), "{variant}");
            let p = model.probability(&s1, &s2, ctx).unwrap();
            assert!((0.0..=1.0).contains(&p), "{variant}");
        }
    }

    #[test]
    fn context_presence_must_match_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        assert!(model.forward(&[1], &[2], Some(&[1, 2]), None).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let model =
            TextPairModel::new(tiny_config(Variant::Context), tiny_vocab(), &mut rng).unwrap();
        assert!(model.forward(&[1], &[2], None, None).is_err());
    }

    #[test]
    fn attention_weights_exposed_for_attention_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model =
            TextPairModel::new(tiny_config(Variant::Attention), tiny_vocab(), &mut rng).unwrap();
        let trace = model.forward(&[1, 2], &[3, 4, 5], None, None).unwrap();
        let w = trace.trace.attention_1_over_2().unwrap();
        assert_eq!(w.len(), 3);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        let trace = model.forward(&[1, 2], &[3, 4, 5], None, None).unwrap();
        assert!(trace.trace.attention_1_over_2().is_none());
    }

    #[test]
    fn variant_names_round_trip() {
        for variant in Variant::all() {
            let s = variant.to_string();
            let back: Variant = s.parse().unwrap();
            assert_eq!(back, variant);
        }
        assert!("bilstm-xyz".parse::<Variant>().is_err());
    }

    #[test]
    fn deterministic_construction_and_scoring() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            TextPairModel::new(
                tiny_config(Variant::AttentionContext),
                tiny_vocab(),
                &mut rng,
            )
            .unwrap()
        };
        let m1 = build();
        let m2 = build();
        let ctx = vec![1, 2, 3, 4];
        let p1 = m1.probability(&[1, 2], &[3], Some(&ctx)).unwrap();
        let p2 = m2.probability(&[1, 2], &[3], Some(&ctx)).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn probability_matrix_matches_per_pair_scoring() {
        use crate::saladgen::{Label, SaladItem};
        let words = ["a b", "b c d", "c", "d e a", "e b"];
        let salad = Salad {
            id: "s".into(),
            source_a: "x".into(),
            source_b: "y".into(),
            seed: 0,
            items: words
                .iter()
                .enumerate()
                .map(|(i, w)| SaladItem {
                    tokens: w.split(' ').map(String::from).collect(),
                    gold: if i % 2 == 0 { Label::A } else { Label::B },
                    source_id: "x".into(),
                })
                .collect(),
        };
        for variant in Variant::all() {
            let mut rng = ChaCha8Rng::seed_from_u64(23);
            let model = TextPairModel::new(tiny_config(variant), tiny_vocab(), &mut rng).unwrap();
            let probs = model.pair_probability_matrix(&salad).unwrap();
            let items = model.encode_items(&salad);
            let ctx = model.encode_context(&salad);
            for i in 0..items.len() {
                for j in 0..items.len() {
                    if i == j {
                        assert_eq!(probs[i][j], 1.0);
                        continue;
                    }
                    let slow = model
                        .probability(&items[i], &items[j], ctx.as_deref())
                        .unwrap();
                    assert!(
                        (probs[i][j] - slow).abs() < 1e-12,
                        "{variant}: ({i},{j}) fast {} vs slow {slow}",
                        probs[i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn summed_composition_scores_and_backprops() {
        let mut config = tiny_config(Variant::AttentionContext);
        config.composition = Composition::Summed;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = TextPairModel::new(config, tiny_vocab(), &mut rng).unwrap();
        let ctx = vec![1, 2, 3, 4];
        let trace = model.forward(&[1, 2], &[3, 4], Some(&ctx), None).unwrap();
        assert!(trace.trace.logit.is_finite());
        model.backward(&trace, 1.0);
        let mut any_nonzero = false;
        model.visit(&mut |_, p| {
            any_nonzero |= p.grad.data.iter().any(|g| *g != 0.0);
        });
        assert!(any_nonzero);
    }

    #[test]
    fn unknown_tokens_use_the_fallback_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        // Id 0 is the unknown-token row; scoring it must work.
        let p = model.probability(&[0, 1], &[2], None).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn zero_output_weights_give_probability_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        model.visit(&mut |name, p| {
            if name.starts_with("head/") {
                p.value.fill(0.0);
            }
        });
        let p = model.probability(&[1, 2], &[3, 4], None).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn probability_stays_in_open_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        // Inflate the head to push the logit far past sigmoid saturation.
        model.visit(&mut |name, p| {
            if name.starts_with("head/") {
                for v in &mut p.value.data {
                    *v = 500.0;
                }
            }
        });
        let p = model.probability(&[1, 2, 3], &[1, 2, 3], None).unwrap();
        assert!(p > 0.0 && p < 1.0, "probability {p} left the open interval");
    }

    #[test]
    fn symmetric_output_matrix_makes_scoring_symmetric() {
        // With attention and context off the score is sigmoid of the
        // bilinear form z1' W z2; a symmetric W makes it order-invariant.
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        model.visit(&mut |name, p| {
            if name == "head/concat/w" {
                let n = p.value.rows;
                for r in 0..n {
                    for c in 0..r {
                        let avg = 0.5 * (p.value.get(r, c) + p.value.get(c, r));
                        p.value.set(r, c, avg);
                        p.value.set(c, r, avg);
                    }
                }
            }
        });
        let p12 = model.probability(&[1, 2], &[3, 4, 5], None).unwrap();
        let p21 = model.probability(&[3, 4, 5], &[1, 2], None).unwrap();
        assert!((p12 - p21).abs() < 1e-12);

        // Cross-check the bilinear form against a direct double loop.
        let (z1, _) = model.encode_sentence(&[1, 2], None).unwrap();
        let (z2, _) = model.encode_sentence(&[3, 4, 5], None).unwrap();
        let mut w = Vec::new();
        model.visit(&mut |name, p| {
            if name == "head/concat/w" {
                w = p.value.data.clone();
            }
        });
        let n = z1.len();
        let mut logit = 0.0;
        for r in 0..n {
            for c in 0..n {
                logit += z1[r] * w[r * n + c] * z2[c];
            }
        }
        assert!((sigmoid(logit) - p12).abs() < 1e-12);
    }

    #[test]
    fn sentences_are_truncated_to_the_configured_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut config = tiny_config(Variant::Plain);
        config.max_sentence_len = 3;
        let model = TextPairModel::new(config, tiny_vocab(), &mut rng).unwrap();
        let long: Vec<u32> = vec![1, 2, 3, 4, 5, 1, 2];
        let (_, e) = model.encode_sentence(&long, None).unwrap();
        assert_eq!(e.len(), 3);
        let p_long = model.probability(&long, &[1], None).unwrap();
        let p_trunc = model.probability(&long[..3], &[1], None).unwrap();
        assert_eq!(p_long, p_trunc);
    }

    #[test]
    fn encoding_is_deterministic_at_inference() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model =
            TextPairModel::new(tiny_config(Variant::Plain), tiny_vocab(), &mut rng).unwrap();
        let (z1, e1) = model.encode_sentence(&[1, 2, 3], None).unwrap();
        let (z2, e2) = model.encode_sentence(&[1, 2, 3], None).unwrap();
        assert_eq!(z1, z2);
        assert_eq!(e1, e2);
        assert!(model.encode_sentence(&[], None).is_err());
    }

    #[test]
    fn zero_parameters_match_a_hand_rolled_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut config = tiny_config(Variant::Plain);
        config.layers = 1;
        config.hidden = 2;
        let mut model = TextPairModel::new(config, tiny_vocab(), &mut rng).unwrap();
        model.visit(&mut |_, p| p.value.fill(0.0));

        // Reference recurrence with every weight and bias at zero, computed
        // step by step for a 2-token sentence.
        let hid = 2;
        let mut h = vec![0.0f64; hid];
        let mut c = vec![0.0f64; hid];
        for _ in 0..2 {
            let mut h_next = vec![0.0; hid];
            let mut c_next = vec![0.0; hid];
            for k in 0..hid {
                let i = sigmoid(0.0);
                let f = sigmoid(0.0);
                let g = 0.0f64.tanh();
                let o = sigmoid(0.0);
                c_next[k] = f * c[k] + i * g;
                h_next[k] = o * c_next[k].tanh();
            }
            h = h_next;
            c = c_next;
        }

        let (z, e) = model.encode_sentence(&[1, 2], None).unwrap();
        assert_eq!(e.len(), 2);
        for k in 0..hid {
            assert!((z[k] - h[k]).abs() < 1e-15);
            assert!((z[hid + k] - h[k]).abs() < 1e-15);
        }
    }
}
