//! Binds a token-level pair model to a set of encoded mixtures for
//! training.

use rand_chacha::ChaCha8Rng;

use crate::saladgen::{Label, Salad};

use super::model::{TextPairModel, TextTrace};
use super::params::ParamVisitor;
use super::train::PairTask;
use super::NeuralError;

struct EncodedSalad {
    items: Vec<Vec<u32>>,
    ctx: Option<Vec<u32>>,
    golds: Vec<Label>,
}

/// A [`TextPairModel`] plus the encoded dataset it trains on.
pub struct TextTask {
    model: TextPairModel,
    salads: Vec<EncodedSalad>,
}

impl TextTask {
    pub fn new(model: TextPairModel, salads: &[Salad]) -> Self {
        let encoded = salads
            .iter()
            .map(|s| EncodedSalad {
                items: model.encode_items(s),
                ctx: model.encode_context(s),
                golds: s.items.iter().map(|i| i.gold).collect(),
            })
            .collect();
        TextTask {
            model,
            salads: encoded,
        }
    }

    pub fn model(&self) -> &TextPairModel {
        &self.model
    }

    pub fn into_model(self) -> TextPairModel {
        self.model
    }
}

impl PairTask for TextTask {
    type Trace = TextTrace;

    fn mixture_count(&self) -> usize {
        self.salads.len()
    }

    fn gold_labels(&self, mixture: usize) -> &[Label] {
        &self.salads[mixture].golds
    }

    fn pair_logit(
        &self,
        mixture: usize,
        i: usize,
        j: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Self::Trace), NeuralError> {
        let s = &self.salads[mixture];
        let trace = self
            .model
            .forward(&s.items[i], &s.items[j], s.ctx.as_deref(), rng)?;
        Ok((trace.trace.logit, trace))
    }

    fn pair_backward(&mut self, trace: &Self::Trace, d_logit: f64) {
        self.model.backward(trace, d_logit);
    }

    fn visit_params(&mut self, f: ParamVisitor) {
        self.model.visit(f);
    }
}
