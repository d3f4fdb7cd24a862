//! Minibatch training of a pairwise scorer on labelled mixtures: balanced
//! same/different pair sampling per mixture, Adam updates, a mixture-level
//! validation split, and early stopping on validation accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::saladgen::Label;

use super::params::ParamVisitor;
use super::tensor::{sigmoid, softplus};
use super::NeuralError;

/// A model bound to its encoded dataset. Items are addressed as
/// (mixture index, item index).
pub trait PairTask {
    type Trace;

    fn mixture_count(&self) -> usize;
    fn gold_labels(&self, mixture: usize) -> &[Label];
    fn pair_logit(
        &self,
        mixture: usize,
        i: usize,
        j: usize,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Self::Trace), NeuralError>;
    fn pair_backward(&mut self, trace: &Self::Trace, d_logit: f64);
    fn visit_params(&mut self, f: ParamVisitor);

    fn zero_grads(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs that always run before early stopping is considered.
    pub min_epochs: usize,
    /// Stop when an epoch fails to beat the best validation accuracy by at
    /// least this much.
    pub min_improvement: f64,
    /// Fraction of mixtures held out for validation.
    pub val_fraction: f64,
    /// Pairs sampled per mixture per epoch, split evenly between
    /// same-narrative and different-narrative pairs.
    pub pairs_per_salad: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 32,
            max_epochs: 50,
            min_epochs: 0,
            min_improvement: 1e-5,
            val_fraction: 0.05,
            pairs_per_salad: 20,
            seed: 0,
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: f64,
}

/// Result of a training run. The model is left at the parameters of the
/// best validation epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub best_val_acc: f64,
    pub best_epoch: usize,
    pub val_pair_count: usize,
    pub skipped_mixtures: usize,
}

/// Adam with bias correction. Moment buffers are matched to parameters by
/// visit order.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Adam::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    }

    pub fn step(&mut self, task: &mut impl PairTask) {
        self.step_visit(|f| task.visit_params(f));
    }

    /// One update over any parameter collection exposed through a visitor.
    pub fn step_visit(&mut self, visit: impl FnOnce(ParamVisitor)) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (beta1, beta2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0usize;
        visit(&mut |_, p| {
            if ms.len() == idx {
                ms.push(vec![0.0; p.len()]);
                vs.push(vec![0.0; p.len()]);
            }
            let m = &mut ms[idx];
            let v = &mut vs[idx];
            for k in 0..p.len() {
                let g = p.grad.data[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p.value.data[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
            idx += 1;
        });
    }
}

fn snapshot(task: &mut impl PairTask) -> Vec<Vec<f64>> {
    let mut snap = Vec::new();
    task.visit_params(&mut |_, p| snap.push(p.value.data.clone()));
    snap
}

fn restore(task: &mut impl PairTask, snap: &[Vec<f64>]) {
    let mut idx = 0usize;
    task.visit_params(&mut |_, p| {
        p.value.data.copy_from_slice(&snap[idx]);
        idx += 1;
    });
}

/// A sampled training pair: two sentence indices within one mixture and
/// whether they share a narrative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampledPair {
    pub mixture: usize,
    pub i: usize,
    pub j: usize,
    pub same: bool,
}

fn candidate_pairs(golds: &[Label]) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let mut same = Vec::new();
    let mut diff = Vec::new();
    for i in 0..golds.len() {
        for j in (i + 1)..golds.len() {
            if golds[i] == golds[j] {
                same.push((i, j));
            } else {
                diff.push((i, j));
            }
        }
    }
    (same, diff)
}

/// Samples up to `per_side` same and `per_side` different pairs from one
/// mixture, without replacement within the epoch.
fn sample_mixture_pairs(
    mixture: usize,
    golds: &[Label],
    per_side: usize,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<SampledPair>,
) -> bool {
    let (mut same, mut diff) = candidate_pairs(golds);
    if same.is_empty() || diff.is_empty() {
        return false;
    }
    let take = per_side.min(same.len()).min(diff.len()).max(1);
    same.shuffle(rng);
    diff.shuffle(rng);
    for &(i, j) in same.iter().take(take) {
        out.push(SampledPair {
            mixture,
            i,
            j,
            same: true,
        });
    }
    for &(i, j) in diff.iter().take(take) {
        out.push(SampledPair {
            mixture,
            i,
            j,
            same: false,
        });
    }
    true
}

/// Samples a balanced pair list over all mixtures: per mixture, an equal
/// number of same-narrative and different-narrative pairs, at most
/// `n_per_salad` in total and never pairing a sentence with itself.
/// Mixtures whose labels cannot support both sides are skipped with a
/// warning.
pub fn sample_training_pairs(
    golds: &[&[Label]],
    n_per_salad: usize,
    seed: u64,
) -> Vec<SampledPair> {
    let per_side = (n_per_salad / 2).max(1);
    let mut out = Vec::new();
    for (mixture, labels) in golds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, mixture as u64));
        if !sample_mixture_pairs(mixture, labels, per_side, &mut rng, &mut out) {
            log::warn!("mixture {mixture} cannot yield balanced pairs; skipping");
        }
    }
    out
}

/// Fraction of validation pairs classified correctly at threshold 1/2.
fn pair_accuracy(task: &impl PairTask, pairs: &[SampledPair]) -> Result<f64, NeuralError> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for p in pairs {
        let (logit, _) = task.pair_logit(p.mixture, p.i, p.j, None)?;
        if (logit > 0.0) == p.same {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

const SPLIT_STREAM: u64 = 1 << 40;
const VAL_STREAM: u64 = (1 << 40) + 1;
const DROPOUT_STREAM: u64 = 1 << 41;

/// Trains the task in place and restores the best-validation parameters.
pub fn train(task: &mut impl PairTask, config: &TrainConfig) -> Result<TrainOutcome, NeuralError> {
    if config.batch_size == 0 || config.max_epochs == 0 || config.pairs_per_salad == 0 {
        return Err(NeuralError::BadConfig(
            "batch_size, max_epochs and pairs_per_salad must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&config.val_fraction) || config.val_fraction == 0.0 {
        return Err(NeuralError::BadConfig(
            "val_fraction must be in (0, 1)".into(),
        ));
    }
    let n = task.mixture_count();
    if n < 2 {
        return Err(NeuralError::BadConfig(
            "need at least two mixtures to split train and validation".into(),
        ));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SPLIT_STREAM));
    order.shuffle(&mut split_rng);
    let val_count = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1);
    let (val_mixtures, train_mixtures) = order.split_at(val_count);

    let per_side = (config.pairs_per_salad / 2).max(1);
    let mut skipped = 0usize;

    let mut val_pairs = Vec::new();
    let mut val_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, VAL_STREAM));
    for &s in val_mixtures {
        if !sample_mixture_pairs(s, task.gold_labels(s), per_side, &mut val_rng, &mut val_pairs) {
            log::warn!("validation mixture {s} has no usable pairs; skipping");
            skipped += 1;
        }
    }
    if val_pairs.is_empty() {
        return Err(NeuralError::BadConfig(
            "no validation pairs could be sampled".into(),
        ));
    }

    let mut adam = Adam::from_config(config);
    let mut history = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = snapshot(task);

    for epoch in 0..config.max_epochs {
        let mut epoch_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64 + 1));
        let mut pairs = Vec::new();
        for &s in train_mixtures {
            if !sample_mixture_pairs(
                s,
                task.gold_labels(s),
                per_side,
                &mut epoch_rng,
                &mut pairs,
            ) && epoch == 0
            {
                log::warn!("training mixture {s} has no usable pairs; skipping");
                skipped += 1;
            }
        }
        if pairs.is_empty() {
            return Err(NeuralError::BadConfig(
                "no training pairs could be sampled".into(),
            ));
        }
        pairs.shuffle(&mut epoch_rng);

        let mut dropout_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(config.seed, DROPOUT_STREAM + epoch as u64));
        let mut total_loss = 0.0;
        let mut total_pairs = 0usize;
        for (batch_idx, batch) in pairs.chunks(config.batch_size).enumerate() {
            task.zero_grads();
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for p in batch {
                let (logit, trace) = task.pair_logit(p.mixture, p.i, p.j, Some(&mut dropout_rng))?;
                let y = if p.same { 1.0 } else { 0.0 };
                batch_loss += softplus(logit) - y * logit;
                task.pair_backward(&trace, (sigmoid(logit) - y) * scale);
            }
            if !batch_loss.is_finite() {
                return Err(NeuralError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            total_loss += batch_loss;
            total_pairs += batch.len();
            adam.step(task);
        }

        let val_acc = pair_accuracy(task, &val_pairs)?;
        let train_loss = total_loss / total_pairs as f64;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_acc,
        });
        log::info!("epoch {epoch}: train_loss {train_loss:.6} val_acc {val_acc:.4}");

        let improvement = val_acc - best_val;
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            best_params = snapshot(task);
        }
        if epoch + 1 >= config.min_epochs && improvement < config.min_improvement {
            break;
        }
    }

    restore(task, &best_params);
    Ok(TrainOutcome {
        history,
        best_val_acc: best_val,
        best_epoch,
        val_pair_count: val_pairs.len(),
        skipped_mixtures: skipped,
    })
}
