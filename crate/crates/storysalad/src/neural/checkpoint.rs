//! Versioned JSON checkpoints: model configuration, vocabulary, and named
//! tensors with explicit shapes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;

use super::model::{ModelConfig, TextPairModel};
use super::params::ParamVisitor;
use super::tensor::Tensor;
use super::train::EpochStats;
use super::NeuralError;

pub const FORMAT: &str = "storysalad-checkpoint";
pub const VERSION: u32 = 1;
pub const KIND_TEXT: &str = "text";
pub const KIND_EVENT: &str = "event";

/// On-disk representation of a trained model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub variant: String,
    pub model_config: ModelConfig,
    pub vocab: Vec<String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    /// Captures every visited parameter under its visit name.
    pub fn collect(
        kind: &str,
        config: &ModelConfig,
        vocab: &Vocabulary,
        visit: impl FnOnce(ParamVisitor),
    ) -> Self {
        let mut tensors = BTreeMap::new();
        visit(&mut |name, p| {
            tensors.insert(name.to_string(), p.value.clone());
        });
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            kind: kind.to_string(),
            variant: config.variant.to_string(),
            model_config: config.clone(),
            vocab: vocab.tokens().to_vec(),
            tensors,
        }
    }

    /// Validates the header against the expected kind.
    pub fn verify_header(&self, kind: &str) -> Result<(), NeuralError> {
        if self.format != FORMAT {
            return Err(NeuralError::Checkpoint(format!(
                "unrecognized format {:?}",
                self.format
            )));
        }
        if self.version != VERSION {
            return Err(NeuralError::Checkpoint(format!(
                "unsupported version {} (expected {VERSION})",
                self.version
            )));
        }
        if self.kind != kind {
            return Err(NeuralError::Checkpoint(format!(
                "checkpoint holds a {:?} model, expected {kind:?}",
                self.kind
            )));
        }
        if self.variant != self.model_config.variant.to_string() {
            return Err(NeuralError::Checkpoint(format!(
                "header variant {:?} disagrees with the configured {}",
                self.variant, self.model_config.variant
            )));
        }
        Ok(())
    }

    /// Copies stored tensors into visited parameters, insisting on an exact
    /// match of names and shapes.
    pub fn apply(&self, visit: impl FnOnce(ParamVisitor)) -> Result<(), NeuralError> {
        let mut problems: Vec<String> = Vec::new();
        let mut seen: Vec<String> = Vec::new();
        visit(&mut |name, p| {
            seen.push(name.to_string());
            match self.tensors.get(name) {
                None => problems.push(format!("missing tensor {name:?}")),
                Some(t) if t.rows != p.value.rows || t.cols != p.value.cols => {
                    problems.push(format!(
                        "tensor {name:?} is {}x{}, expected {}x{}",
                        t.rows, t.cols, p.value.rows, p.value.cols
                    ));
                }
                Some(t) if t.data.len() != t.rows * t.cols => {
                    problems.push(format!(
                        "tensor {name:?} carries {} values for a {}x{} shape",
                        t.data.len(),
                        t.rows,
                        t.cols
                    ));
                }
                Some(t) => p.value.data.copy_from_slice(&t.data),
            }
        });
        for name in self.tensors.keys() {
            if !seen.iter().any(|s| s == name) {
                problems.push(format!("unexpected tensor {name:?}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(NeuralError::Checkpoint(problems.join("; ")))
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}

/// Saves a text pair model.
pub fn save_text_model(model: &mut TextPairModel, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    let config = model.config().clone();
    let vocab = model.vocab.clone();
    Checkpoint::collect(KIND_TEXT, &config, &vocab, |f| model.visit(f)).save(path)
}

/// Rebuilds a text pair model from a checkpoint.
pub fn load_text_model(path: impl AsRef<Path>) -> Result<TextPairModel, NeuralError> {
    let ckpt = Checkpoint::load(path)?;
    ckpt.verify_header(KIND_TEXT)?;
    let vocab = Vocabulary::from_tokens(ckpt.vocab.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = TextPairModel::new(ckpt.model_config.clone(), vocab, &mut rng)?;
    ckpt.apply(|f| model.visit(f))?;
    Ok(model)
}

/// Writes the per-epoch history as `epoch,train_loss,val_acc`.
pub fn write_history_csv(history: &[EpochStats], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_acc")?;
    for e in history {
        writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_acc)?;
    }
    Ok(())
}
