//! K-medoids partitioning over pairwise distances, with a cosine baseline
//! distance and a learned-classifier distance.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derive_seed;
use crate::embedding::{average_embedding, cosine, EmbeddingTable};
use crate::metrics::Assignment;
use crate::neural::model::TextPairModel;
use crate::saladgen::Salad;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cannot place {k} medoids among {n} points")]
    TooFewPoints { k: usize, n: usize },
    #[error("need at least one restart")]
    NoRestarts,
    #[error("invalid distance matrix: {0}")]
    BadMatrix(String),
    #[error("unknown distance source {0:?}; expected cosine or learned")]
    UnknownSource(String),
    #[error(transparent)]
    Embedding(#[from] crate::embedding::EmbeddingError),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: malformed prediction: {message}")]
    MalformedLine { line: usize, message: String },
}

/// Symmetric non-negative pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates and stores a full matrix.
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        let n = entries.len();
        let mut flat = vec![0.0; n * n];
        for (i, row) in entries.iter().enumerate() {
            if row.len() != n {
                return Err(ClusterError::BadMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                flat[i * n + j] = v;
            }
        }
        let dm = DistanceMatrix { n, entries: flat };
        dm.validate()?;
        Ok(dm)
    }

    /// Builds a symmetric matrix by evaluating `f` on every unordered pair.
    pub fn from_fn(
        n: usize,
        mut f: impl FnMut(usize, usize) -> Result<f64, ClusterError>,
    ) -> Result<Self, ClusterError> {
        let mut flat = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j)?;
                flat[i * n + j] = v;
                flat[j * n + i] = v;
            }
        }
        let dm = DistanceMatrix { n, entries: flat };
        dm.validate()?;
        Ok(dm)
    }

    fn validate(&self) -> Result<(), ClusterError> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(ClusterError::BadMatrix(format!(
                    "nonzero diagonal at {i}: {}",
                    self.get(i, i)
                )));
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(ClusterError::BadMatrix(format!(
                        "entry ({i},{j}) = {v} is not a finite non-negative value"
                    )));
                }
                if (v - self.get(j, i)).abs() != 0.0 {
                    return Err(ClusterError::BadMatrix(format!(
                        "asymmetry at ({i},{j}): {v} vs {}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }
}

/// Distance 1 − cosine between per-sentence average embeddings, clamped to
/// [0, 2].
pub fn cosine_distance_matrix(
    salad: &Salad,
    table: &EmbeddingTable,
) -> Result<DistanceMatrix, ClusterError> {
    let vectors: Vec<Vec<f64>> = salad
        .items
        .iter()
        .map(|item| average_embedding(&item.tokens, table))
        .collect::<Result<_, _>>()?;
    DistanceMatrix::from_fn(salad.len(), |i, j| {
        let c = cosine(&vectors[i], &vectors[j])?;
        Ok((1.0 - c).clamp(0.0, 2.0))
    })
}

/// Distance 1 − ½(P(same|i,j) + P(same|j,i)) from a trained pair model;
/// the diagonal is zero by construction.
pub fn learned_distance_matrix(
    salad: &Salad,
    model: &TextPairModel,
) -> Result<DistanceMatrix, ClusterError> {
    let probs = model.pair_probability_matrix(salad)?;
    DistanceMatrix::from_fn(salad.len(), |i, j| {
        let p = 0.5 * (probs[i][j] + probs[j][i]);
        Ok((1.0 - p).clamp(0.0, 1.0))
    })
}

fn assign_to_medoids(dm: &DistanceMatrix, medoids: &[usize]) -> Assignment {
    let mut labels = vec![0u8; dm.len()];
    for p in 0..dm.len() {
        let mut best_cluster = 0usize;
        let mut best_dist = dm.get(p, medoids[0]);
        for (c, &m) in medoids.iter().enumerate().skip(1) {
            let d = dm.get(p, m);
            if d < best_dist {
                best_dist = d;
                best_cluster = c;
            }
        }
        labels[p] = best_cluster as u8;
    }
    Assignment(labels)
}

fn assignment_cost(dm: &DistanceMatrix, medoids: &[usize], assignment: &Assignment) -> f64 {
    assignment
        .0
        .iter()
        .enumerate()
        .map(|(p, &c)| dm.get(p, medoids[c as usize]))
        .sum()
}

/// One PAM run from fixed starting medoids: alternate nearest-medoid
/// assignment and per-cluster re-election until the medoid set is stable.
fn pam(dm: &DistanceMatrix, mut medoids: Vec<usize>, max_iter: usize) -> (Assignment, f64) {
    let mut assignment = assign_to_medoids(dm, &medoids);
    for _ in 0..max_iter {
        let mut changed = false;
        for c in 0..medoids.len() {
            let members: Vec<usize> = assignment
                .0
                .iter()
                .enumerate()
                .filter(|(_, &l)| l as usize == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            let total = |m: usize| members.iter().map(|&q| dm.get(m, q)).sum::<f64>();
            let mut best = medoids[c];
            let mut best_total = total(best);
            for &candidate in &members {
                let t = total(candidate);
                if t < best_total {
                    best_total = t;
                    best = candidate;
                }
            }
            if best != medoids[c] {
                medoids[c] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        assignment = assign_to_medoids(dm, &medoids);
    }
    let cost = assignment_cost(dm, &medoids, &assignment);
    (assignment, cost)
}

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 100;

/// PAM k-medoids with seeded random restarts; returns the best assignment
/// by total point-to-medoid cost. Point-to-medoid ties go to the
/// lower-indexed medoid.
pub fn k_medoids(
    dm: &DistanceMatrix,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Assignment, ClusterError> {
    if k == 0 || k > dm.len() {
        return Err(ClusterError::TooFewPoints { k, n: dm.len() });
    }
    if restarts == 0 {
        return Err(ClusterError::NoRestarts);
    }
    let mut best: Option<(f64, Assignment)> = None;
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, restart as u64));
        let mut points: Vec<usize> = (0..dm.len()).collect();
        points.shuffle(&mut rng);
        points.truncate(k);
        let (assignment, cost) = pam(dm, points, DEFAULT_MAX_ITER);
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, assignment));
        }
    }
    Ok(best.expect("at least one restart ran").1)
}

/// Two-cluster PAM started from every medoid pair; returns the best final
/// assignment and its cost. Deterministic and restart-free.
pub fn k_medoids_exhaustive(dm: &DistanceMatrix) -> Result<(Assignment, f64), ClusterError> {
    let n = dm.len();
    if n < 2 {
        return Err(ClusterError::TooFewPoints { k: 2, n });
    }
    let mut best: Option<(f64, Assignment)> = None;
    for a in 0..n {
        for b in (a + 1)..n {
            let (assignment, cost) = pam(dm, vec![a, b], DEFAULT_MAX_ITER);
            if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                best = Some((cost, assignment));
            }
        }
    }
    let (cost, assignment) = best.expect("n >= 2");
    Ok((assignment, cost))
}

/// How pairwise distances are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSource {
    Cosine,
    Learned,
}

impl std::fmt::Display for DistanceSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistanceSource::Cosine => f.write_str("cosine"),
            DistanceSource::Learned => f.write_str("learned"),
        }
    }
}

impl std::str::FromStr for DistanceSource {
    type Err = ClusterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(DistanceSource::Cosine),
            "learned" => Ok(DistanceSource::Learned),
            other => Err(ClusterError::UnknownSource(other.to_string())),
        }
    }
}

/// A distance source bound to the data it needs.
pub enum Distancer<'a> {
    Cosine(&'a EmbeddingTable),
    Learned(&'a TextPairModel),
}

impl Distancer<'_> {
    pub fn source(&self) -> DistanceSource {
        match self {
            Distancer::Cosine(_) => DistanceSource::Cosine,
            Distancer::Learned(_) => DistanceSource::Learned,
        }
    }

    pub fn matrix(&self, salad: &Salad) -> Result<DistanceMatrix, ClusterError> {
        match self {
            Distancer::Cosine(table) => cosine_distance_matrix(salad, table),
            Distancer::Learned(model) => learned_distance_matrix(salad, model),
        }
    }
}

/// Builds the distance matrix for one salad and clusters it into two
/// narratives.
pub fn cluster_salad(
    salad: &Salad,
    distancer: &Distancer,
    restarts: usize,
    seed: u64,
) -> Result<Assignment, ClusterError> {
    let dm = distancer.matrix(salad)?;
    k_medoids(&dm, 2, restarts, seed)
}

/// One clustered salad as written to predictions JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub salad_id: String,
    pub assignment: Vec<u8>,
    pub distance_source: String,
    pub ca: f64,
}

pub fn write_predictions(preds: &[Prediction], mut w: impl Write) -> std::io::Result<()> {
    for pred in preds {
        serde_json::to_writer(&mut w, pred)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<Prediction>, ClusterError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ClusterError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut preds = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ClusterError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let pred: Prediction =
            serde_json::from_str(&line).map_err(|e| ClusterError::MalformedLine {
                line: idx + 1,
                message: e.to_string(),
            })?;
        preds.push(pred);
    }
    Ok(preds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn matrix(rows: &[&[f64]]) -> DistanceMatrix {
        DistanceMatrix::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    /// Exact minimum of the k=2 medoid objective by brute force over all
    /// medoid pairs, without any PAM iteration.
    fn brute_force_best_cost(dm: &DistanceMatrix) -> f64 {
        let n = dm.len();
        let mut best = f64::INFINITY;
        for a in 0..n {
            for b in (a + 1)..n {
                let cost: f64 = (0..n).map(|p| dm.get(p, a).min(dm.get(p, b))).sum();
                if cost < best {
                    best = cost;
                }
            }
        }
        best
    }

    fn random_matrix(rng: &mut impl Rng, n: usize) -> DistanceMatrix {
        DistanceMatrix::from_fn(n, |_, _| Ok(rng.gen::<f64>())).unwrap()
    }

    #[test]
    fn rejects_malformed_matrices() {
        assert!(DistanceMatrix::new(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.5]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, f64::NAN], vec![f64::NAN, 0.0]]).is_err());
        assert!(DistanceMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn block_diagonal_matrix_recovers_groups() {
        let dm = matrix(&[
            &[0.0, 0.0, 1.0, 1.0],
            &[0.0, 0.0, 1.0, 1.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
        ]);
        let a = k_medoids(&dm, 2, 5, 7).unwrap();
        assert_eq!(a.0[0], a.0[1]);
        assert_eq!(a.0[2], a.0[3]);
        assert_ne!(a.0[0], a.0[2]);
    }

    #[test]
    fn two_points_get_two_clusters() {
        let dm = matrix(&[&[0.0, 0.3], &[0.3, 0.0]]);
        let a = k_medoids(&dm, 2, 3, 1).unwrap();
        assert_ne!(a.0[0], a.0[1]);
    }

    #[test]
    fn k_larger_than_n_errors() {
        let dm = matrix(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(
            k_medoids(&dm, 3, 1, 0),
            Err(ClusterError::TooFewPoints { k: 3, n: 2 })
        ));
        assert!(matches!(
            k_medoids(&dm, 2, 0, 0),
            Err(ClusterError::NoRestarts)
        ));
    }

    #[test]
    fn exhaustive_start_matches_brute_force_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..25 {
            let dm = random_matrix(&mut rng, 10);
            let (_, cost) = k_medoids_exhaustive(&dm).unwrap();
            let oracle = brute_force_best_cost(&dm);
            assert_eq!(cost, oracle, "PAM from exhaustive starts must hit the optimum");
        }
    }

    #[test]
    fn deterministic_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dm = random_matrix(&mut rng, 8);
        let a = k_medoids(&dm, 2, 10, 99).unwrap();
        let b = k_medoids(&dm, 2, 10, 99).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn relabeling_points_permutes_the_assignment() {
        // Swapping two points in the matrix swaps their labels, up to the
        // global cluster-name flip.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = 7;
            let dm = random_matrix(&mut rng, n);
            let (i, j) = (1, 4);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.swap(i, j);
            let swapped =
                DistanceMatrix::from_fn(n, |a, b| Ok(dm.get(perm[a], perm[b]))).unwrap();

            let (base, _) = k_medoids_exhaustive(&dm).unwrap();
            let (moved, _) = k_medoids_exhaustive(&swapped).unwrap();
            let expect: Vec<u8> = (0..n).map(|p| base.0[perm[p]]).collect();
            let flipped: Vec<u8> = expect.iter().map(|&v| 1 - v).collect();
            assert!(moved.0 == expect || moved.0 == flipped);
        }
    }

    #[test]
    fn cosine_distance_identity_orthogonal_antipodal() {
        let mut table = EmbeddingTable::new(2);
        table.insert("right", vec![1.0, 0.0]);
        table.insert("up", vec![0.0, 1.0]);
        table.insert("left", vec![-1.0, 0.0]);
        let salad = crate::saladgen::Salad {
            id: "s".into(),
            source_a: "a".into(),
            source_b: "b".into(),
            seed: 0,
            items: vec![
                crate::saladgen::SaladItem {
                    tokens: vec!["right".into()],
                    gold: crate::saladgen::Label::A,
                    source_id: "a".into(),
                },
                crate::saladgen::SaladItem {
                    tokens: vec!["right".into()],
                    gold: crate::saladgen::Label::A,
                    source_id: "a".into(),
                },
                crate::saladgen::SaladItem {
                    tokens: vec!["up".into()],
                    gold: crate::saladgen::Label::B,
                    source_id: "b".into(),
                },
                crate::saladgen::SaladItem {
                    tokens: vec!["left".into()],
                    gold: crate::saladgen::Label::B,
                    source_id: "b".into(),
                },
            ],
        };
        let dm = cosine_distance_matrix(&salad, &table).unwrap();
        assert!(dm.get(0, 1).abs() < 1e-12);
        assert!((dm.get(0, 2) - 1.0).abs() < 1e-12);
        assert!((dm.get(0, 3) - 2.0).abs() < 1e-12);
        // Degenerate all-equal distances still cluster without panicking.
        let a = cluster_salad(&salad, &Distancer::Cosine(&table), 3, 5).unwrap();
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn predictions_round_trip() {
        let preds = vec![
            Prediction {
                salad_id: "x+y#1".into(),
                assignment: vec![0, 1, 1, 0],
                distance_source: "cosine".into(),
                ca: 0.75,
            },
            Prediction {
                salad_id: "y+z#2".into(),
                assignment: vec![1, 1],
                distance_source: "learned".into(),
                ca: 1.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preds.jsonl");
        let mut buf = Vec::new();
        write_predictions(&preds, &mut buf).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let loaded = load_predictions(&path).unwrap();
        assert_eq!(loaded, preds);

        std::fs::write(&path, b"{not json}\n").unwrap();
        assert!(matches!(
            load_predictions(&path),
            Err(ClusterError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn distance_source_names_round_trip() {
        for s in [DistanceSource::Cosine, DistanceSource::Learned] {
            let t: DistanceSource = s.to_string().parse().unwrap();
            assert_eq!(t, s);
        }
        assert!("euclid".parse::<DistanceSource>().is_err());
    }
}
