//! Clustering accuracy, the uniform baseline and Spearman's rho.

use serde::{Deserialize, Serialize};

use crate::saladgen::{Label, Salad};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("assignment length {pred} does not match salad size {salad}")]
    LengthMismatch { pred: usize, salad: usize },
    #[error("cannot average an empty result set")]
    EmptyInput,
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
}

/// Per-item cluster labels in {0, 1}, aligned with a salad's item order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment(pub Vec<u8>);

impl Assignment {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The same partition with cluster labels 0 and 1 exchanged.
    pub fn flipped(&self) -> Assignment {
        Assignment(self.0.iter().map(|&c| 1 - c).collect())
    }
}

/// The ratio of correctly clustered sentences, maximized over the two
/// cluster-to-narrative mappings (0=A,1=B and 0=B,1=A).
pub fn clustering_accuracy(salad: &Salad, pred: &Assignment) -> Result<f64, MetricsError> {
    let golds: Vec<Label> = salad.items.iter().map(|i| i.gold).collect();
    clustering_accuracy_from_labels(&golds, pred)
}

/// Same metric over bare gold labels, for mixtures that are not token
/// salads.
pub fn clustering_accuracy_from_labels(
    golds: &[Label],
    pred: &Assignment,
) -> Result<f64, MetricsError> {
    if pred.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            salad: golds.len(),
        });
    }
    let n = golds.len() as f64;
    let mut hits_ab = 0usize;
    for (&gold, &cluster) in golds.iter().zip(&pred.0) {
        let mapped = if cluster == 0 { Label::A } else { Label::B };
        if mapped == gold {
            hits_ab += 1;
        }
    }
    let hits_ba = golds.len() - hits_ab;
    Ok(hits_ab.max(hits_ba) as f64 / n)
}

/// Assigns every sentence to a single cluster; scores the majority fraction.
pub fn unif_baseline(salad: &Salad) -> Assignment {
    Assignment(vec![0; salad.len()])
}

/// Macro-average of per-salad clustering accuracy.
pub fn mean_ca(salads: &[Salad], preds: &[Assignment]) -> Result<f64, MetricsError> {
    if salads.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if salads.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            pred: preds.len(),
            salad: salads.len(),
        });
    }
    let mut sum = 0.0;
    for (salad, pred) in salads.iter().zip(preds) {
        sum += clustering_accuracy(salad, pred)?;
    }
    Ok(sum / salads.len() as f64)
}

/// Average fractional ranks; ties receive the mean of their rank range.
/// Ranks are 1-based.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j hold equal values; mean of ranks i+1 ..= j+1
        let avg = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rank correlation: the Pearson correlation of average
/// fractional ranks. Requires at least 3 pairs and non-constant series.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::UndefinedCorrelation(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(MetricsError::UndefinedCorrelation(format!(
            "need at least 3 pairs, got {}",
            x.len()
        )));
    }
    let rx = fractional_ranks(x);
    let ry = fractional_ranks(y);
    pearson(&rx, &ry)
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::UndefinedCorrelation(
            "constant series".into(),
        ));
    }
    Ok(sxy / (sxx.sqrt() * syy.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saladgen::SaladItem;
    use proptest::prelude::*;

    pub(crate) fn salad_with_golds(golds: &[Label]) -> Salad {
        Salad {
            id: "s".into(),
            source_a: "a".into(),
            source_b: "b".into(),
            seed: 0,
            items: golds
                .iter()
                .map(|&gold| SaladItem {
                    tokens: vec!["tok".into()],
                    gold,
                    source_id: if gold == Label::A { "a" } else { "b" }.into(),
                })
                .collect(),
        }
    }

    fn gold_assignment(salad: &Salad) -> Assignment {
        Assignment(
            salad
                .items
                .iter()
                .map(|i| if i.gold == Label::A { 0 } else { 1 })
                .collect(),
        )
    }

    #[test]
    fn ca_perfect_and_flipped() {
        let salad = salad_with_golds(&[Label::A, Label::B, Label::A, Label::B]);
        let pred = gold_assignment(&salad);
        assert_eq!(clustering_accuracy(&salad, &pred).unwrap(), 1.0);
        assert_eq!(clustering_accuracy(&salad, &pred.flipped()).unwrap(), 1.0);
    }

    #[test]
    fn ca_constant_prediction_is_majority_fraction() {
        // 7 from one narrative, 3 from the other -> 0.7
        let mut golds = vec![Label::A; 7];
        golds.extend(vec![Label::B; 3]);
        let salad = salad_with_golds(&golds);
        let ca = clustering_accuracy(&salad, &unif_baseline(&salad)).unwrap();
        assert!((ca - 0.7).abs() < 1e-15);
    }

    #[test]
    fn ca_length_mismatch() {
        let salad = salad_with_golds(&[Label::A, Label::B]);
        assert!(clustering_accuracy(&salad, &Assignment(vec![0])).is_err());
    }

    #[test]
    fn unif_on_balanced_salad_is_half() {
        let salad = salad_with_golds(&[Label::A, Label::B, Label::A, Label::B]);
        assert_eq!(
            clustering_accuracy(&salad, &unif_baseline(&salad)).unwrap(),
            0.5
        );
    }

    #[test]
    fn mean_ca_cases() {
        let s1 = salad_with_golds(&[Label::A, Label::A, Label::B, Label::B, Label::B]);
        let s2 = salad_with_golds(&[Label::A, Label::B]);
        let p1 = Assignment(vec![0, 0, 0, 1, 1]); // ca 0.8
        let p2 = gold_assignment(&s2); // ca 1.0
        let mean = mean_ca(&[s1.clone(), s2.clone()], &[p1.clone(), p2.clone()]).unwrap();
        assert!((mean - 0.9).abs() < 1e-15);
        let swapped = mean_ca(&[s2, s1], &[p2, p1]).unwrap();
        assert!((swapped - mean).abs() < 1e-15);
        assert!(mean_ca(&[], &[]).is_err());
    }

    // Brute-force rank oracle: rank = (# smaller) + (# equal + 1) / 2.
    fn brute_force_ranks(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|&v| {
                let lt = values.iter().filter(|&&w| w < v).count() as f64;
                let eq = values.iter().filter(|&&w| w == v).count() as f64;
                lt + (eq + 1.0) / 2.0
            })
            .collect()
    }

    fn brute_force_spearman(x: &[f64], y: &[f64]) -> f64 {
        let rx = brute_force_ranks(x);
        let ry = brute_force_ranks(y);
        pearson(&rx, &ry).unwrap()
    }

    #[test]
    fn spearman_identity_and_reverse() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman_rho(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let rev = [4.0, 3.0, 2.0, 1.0];
        assert!((spearman_rho(&x, &rev).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_matches_brute_force_on_swapped_pairs() {
        // frozen from the rank-difference identity: y=[2,1,4,3] against
        // x=[1,2,3,4] has squared rank differences summing to 4, so
        // rho = 1 - 6*4/(4*15) = 0.6
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 1.0, 4.0, 3.0];
        let expected = brute_force_spearman(&x, &y);
        assert!((expected - 0.6).abs() < 1e-12);
        assert!((spearman_rho(&x, &y).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn spearman_errors() {
        assert!(spearman_rho(&[1.0, 2.0], &[1.0, 2.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0, 3.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn ca_is_flip_invariant(golds in prop::collection::vec(prop::bool::ANY, 2..20),
                                preds in prop::collection::vec(0u8..2, 20)) {
            let golds: Vec<Label> = golds.iter().map(|&g| if g { Label::A } else { Label::B }).collect();
            let salad = salad_with_golds(&golds);
            let pred = Assignment(preds[..salad.len()].to_vec());
            let ca = clustering_accuracy(&salad, &pred).unwrap();
            let ca_flipped = clustering_accuracy(&salad, &pred.flipped()).unwrap();
            prop_assert!((ca - ca_flipped).abs() < 1e-15);
            // constant assignment attains exactly the majority fraction
            let (a, b) = salad.label_counts();
            let majority = a.max(b) as f64 / salad.len() as f64;
            let const_ca = clustering_accuracy(&salad, &unif_baseline(&salad)).unwrap();
            prop_assert!((const_ca - majority).abs() < 1e-15);
            prop_assert!(ca >= 1.0 - majority - 1e-15);
        }

        #[test]
        fn spearman_matches_oracle_with_ties(
            pairs in prop::collection::vec((0i8..6, 0i8..6), 3..40)
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let fast = spearman_rho(&x, &y);
            let constant = x.iter().all(|&v| v == x[0]) || y.iter().all(|&v| v == y[0]);
            if constant {
                prop_assert!(fast.is_err());
            } else {
                prop_assert!((fast.unwrap() - brute_force_spearman(&x, &y)).abs() < 1e-12);
            }
        }

        #[test]
        fn spearman_invariant_under_monotone_transform(
            xs in prop::collection::vec(-100.0f64..100.0, 3..30)
        ) {
            let ys: Vec<f64> = xs.iter().map(|&v| v * 0.5 + 3.0).collect();
            let transformed: Vec<f64> = xs.iter().map(|&v| (v / 20.0).exp()).collect();
            let constant = xs.iter().all(|&v| v == xs[0]);
            if !constant {
                let a = spearman_rho(&xs, &ys).unwrap();
                let b = spearman_rho(&transformed, &ys).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
                prop_assert!((a - 1.0).abs() < 1e-12);
            }
        }
    }
}
