//! Attention-weight heatmaps for one sentence pair: both directions as
//! JSON with token strings and as a greyscale image where lighter means
//! higher weight.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::saladgen::Salad;

use super::model::TextPairModel;
use super::NeuralError;

/// Attention weights of one scored pair, in both directions, with the
/// tokens each weight column refers to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionHeatmap {
    pub salad_id: String,
    pub s1_tokens: Vec<String>,
    pub s2_tokens: Vec<String>,
    /// Rows of weights over `s2_tokens`, one per query.
    pub weights_1_over_2: Vec<Vec<f64>>,
    /// Rows of weights over `s1_tokens`, one per query.
    pub weights_2_over_1: Vec<Vec<f64>>,
}

/// Scores items `i` and `j` of the salad and captures both attention maps.
pub fn export_heatmap(
    model: &TextPairModel,
    salad: &Salad,
    i: usize,
    j: usize,
) -> Result<AttentionHeatmap, NeuralError> {
    if !model.config().variant.uses_attention() {
        return Err(NeuralError::AttentionDisabled);
    }
    if i >= salad.len() || j >= salad.len() {
        return Err(NeuralError::BadConfig(format!(
            "sentence indices ({i}, {j}) exceed the mixture size {}",
            salad.len()
        )));
    }
    let items = model.encode_items(salad);
    let ctx = model.encode_context(salad);
    let trace = model.forward(&items[i], &items[j], ctx.as_deref(), None)?;
    let cap = model.config().max_sentence_len;
    let clip = |tokens: &[String]| -> Vec<String> {
        tokens[..tokens.len().min(cap)].to_vec()
    };
    let w12 = trace
        .trace
        .attention_1_over_2()
        .expect("attention variant exposes weights");
    let w21 = trace
        .trace
        .attention_2_over_1()
        .expect("attention variant exposes weights");
    Ok(AttentionHeatmap {
        salad_id: salad.id.clone(),
        s1_tokens: clip(&salad.items[i].tokens),
        s2_tokens: clip(&salad.items[j].tokens),
        weights_1_over_2: vec![w12.to_vec()],
        weights_2_over_1: vec![w21.to_vec()],
    })
}

impl AttentionHeatmap {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }

    /// Renders both maps side by side, separated by a black column. Each
    /// map is normalized to its own maximum, so its brightest cell is
    /// white.
    pub fn render_png(&self, path: impl AsRef<Path>, cell: u32) -> Result<(), NeuralError> {
        if cell == 0 {
            return Err(NeuralError::BadConfig("cell size must be positive".into()));
        }
        let left = &self.weights_1_over_2;
        let right = &self.weights_2_over_1;
        let rows = left.len().max(right.len());
        let left_cols = left.first().map_or(0, |r| r.len());
        let right_cols = right.first().map_or(0, |r| r.len());
        let cols = left_cols + 1 + right_cols;
        let shade = |map: &[Vec<f64>], r: usize, c: usize| -> u8 {
            let Some(row) = map.get(r) else { return 0 };
            let max = row.iter().cloned().fold(0.0_f64, f64::max);
            if max <= 0.0 {
                return 0;
            }
            (row[c] / max * 255.0).round() as u8
        };
        let mut img = GrayImage::new(cols as u32 * cell, rows as u32 * cell);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let r = (y / cell) as usize;
            let c = (x / cell) as usize;
            let v = if c < left_cols {
                shade(left, r, c)
            } else if c == left_cols {
                0
            } else {
                shade(right, r, c - left_cols - 1)
            };
            *px = image::Luma([v]);
        }
        img.save(path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::{ModelConfig, Variant};
    use crate::saladgen::{salad_vocabulary, Label, SaladItem};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fixture(variant: Variant, sentences: &[&str]) -> (TextPairModel, Salad) {
        let salad = Salad {
            id: "mix".into(),
            source_a: "a".into(),
            source_b: "b".into(),
            seed: 0,
            items: sentences
                .iter()
                .enumerate()
                .map(|(k, s)| SaladItem {
                    tokens: s.split(' ').map(String::from).collect(),
                    gold: if k % 2 == 0 { Label::A } else { Label::B },
                    source_id: "a".into(),
                })
                .collect(),
        };
        let vocab = salad_vocabulary(std::slice::from_ref(&salad), 100);
        let config = ModelConfig {
            variant,
            embed_dim: 3,
            hidden: 2,
            layers: 1,
            dropout: 0.0,
            cnn_widths: vec![2],
            cnn_filters: 2,
            context_cap: 32,
            ..ModelConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = TextPairModel::new(config, vocab, &mut rng).unwrap();
        (model, salad)
    }

    #[test]
    fn rows_sum_to_one_and_tokens_align() {
        let (model, salad) =
            fixture(Variant::Attention, &["the cat sat", "a dog ran away", "it left"]);
        let hm = export_heatmap(&model, &salad, 0, 1).unwrap();
        assert_eq!(hm.s1_tokens.len(), 3);
        assert_eq!(hm.s2_tokens.len(), 4);
        assert_eq!(hm.weights_1_over_2[0].len(), hm.s2_tokens.len());
        assert_eq!(hm.weights_2_over_1[0].len(), hm.s1_tokens.len());
        for row in hm.weights_1_over_2.iter().chain(&hm.weights_2_over_1) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-6);
            assert!(row.iter().all(|w| *w > 0.0));
        }
    }

    #[test]
    fn single_token_target_gets_full_weight() {
        let (model, salad) = fixture(Variant::Attention, &["the cat sat", "meow"]);
        let hm = export_heatmap(&model, &salad, 0, 1).unwrap();
        assert_eq!(hm.weights_1_over_2, vec![vec![1.0]]);
    }

    #[test]
    fn attention_free_variants_refuse() {
        for variant in [Variant::Plain, Variant::Context] {
            let (model, salad) = fixture(variant, &["the cat sat", "a dog ran"]);
            assert!(matches!(
                export_heatmap(&model, &salad, 0, 1),
                Err(NeuralError::AttentionDisabled)
            ));
        }
    }

    #[test]
    fn out_of_range_indices_refuse() {
        let (model, salad) = fixture(Variant::Attention, &["the cat sat", "a dog ran"]);
        assert!(export_heatmap(&model, &salad, 0, 2).is_err());
    }

    #[test]
    fn json_round_trips_identically() {
        let (model, salad) = fixture(Variant::Attention, &["the cat sat", "a dog ran away"]);
        let hm = export_heatmap(&model, &salad, 0, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hm.json");
        hm.save_json(&path).unwrap();
        let loaded = AttentionHeatmap::load_json(&path).unwrap();
        assert_eq!(loaded, hm);
    }

    #[test]
    fn png_renders_with_lighter_meaning_higher() {
        let hm = AttentionHeatmap {
            salad_id: "mix".into(),
            s1_tokens: vec!["u".into(), "v".into()],
            s2_tokens: vec!["x".into(), "y".into(), "z".into()],
            weights_1_over_2: vec![vec![0.2, 0.5, 0.3]],
            weights_2_over_1: vec![vec![0.9, 0.1]],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hm.png");
        hm.render_png(&path, 4).unwrap();
        let img = image::open(&path).unwrap().into_luma8();
        assert_eq!(img.dimensions(), ((3 + 1 + 2) * 4, 4));
        let cell = |c: u32| img.get_pixel(c * 4 + 2, 2).0[0];
        assert_eq!(cell(1), 255);
        assert!(cell(0) < cell(2) && cell(2) < cell(1));
        assert_eq!(cell(3), 0);
        assert_eq!(cell(4), 255);
        assert!(cell(5) < cell(4));
    }
}
