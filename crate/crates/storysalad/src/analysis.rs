//! Post-hoc analyses over per-mixture results: accuracy brackets, bracket
//! movement between two runs, and accuracy-similarity correlation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{spearman_rho, MetricsError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("bracket boundaries must satisfy 0.5 < medium_from < good_from <= 1.0")]
    BadScheme,
    #[error("runs cover different mixtures; ids in only one run: {0:?}")]
    IdMismatch(Vec<String>),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Accuracy bracket of one mixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bracket {
    Bad,
    Medium,
    Good,
}

impl Bracket {
    pub fn all() -> [Bracket; 3] {
        [Bracket::Bad, Bracket::Medium, Bracket::Good]
    }

    pub fn label(self) -> &'static str {
        match self {
            Bracket::Bad => "b",
            Bracket::Medium => "m",
            Bracket::Good => "g",
        }
    }

    fn index(self) -> usize {
        match self {
            Bracket::Bad => 0,
            Bracket::Medium => 1,
            Bracket::Good => 2,
        }
    }
}

/// Half-open accuracy brackets: bad below `medium_from`, medium below
/// `good_from`, good from there up to 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketScheme {
    pub medium_from: f64,
    pub good_from: f64,
}

impl Default for BracketScheme {
    fn default() -> Self {
        BracketScheme {
            medium_from: 0.65,
            good_from: 0.8,
        }
    }
}

impl BracketScheme {
    pub fn new(medium_from: f64, good_from: f64) -> Result<Self, AnalysisError> {
        let scheme = BracketScheme {
            medium_from,
            good_from,
        };
        if 0.5 < medium_from && medium_from < good_from && good_from <= 1.0 {
            Ok(scheme)
        } else {
            Err(AnalysisError::BadScheme)
        }
    }

    /// Bracket of an accuracy value. Values below 0.5 cannot arise from
    /// two-way clustering against a majority baseline but clamp into the
    /// lowest bracket anyway.
    pub fn bracket(&self, ca: f64) -> Bracket {
        if ca >= self.good_from {
            Bracket::Good
        } else if ca >= self.medium_from {
            Bracket::Medium
        } else {
            Bracket::Bad
        }
    }
}

/// One mixture's evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaladScore {
    pub salad_id: String,
    pub ca: f64,
    pub tsim: f64,
}

/// Rank correlation between accuracy and topic similarity, with the raw
/// pairs kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rho: f64,
    pub n: usize,
    pub p_note: String,
    pub pairs: Vec<SaladScore>,
}

pub fn correlation_report(results: &[SaladScore]) -> Result<CorrelationReport, AnalysisError> {
    let cas: Vec<f64> = results.iter().map(|r| r.ca).collect();
    let tsims: Vec<f64> = results.iter().map(|r| r.tsim).collect();
    let rho = spearman_rho(&cas, &tsims)?;
    Ok(CorrelationReport {
        rho,
        n: results.len(),
        p_note: "p-value not computed; run a permutation test on the audit pairs".into(),
        pairs: results.to_vec(),
    })
}

/// Movement of mixtures between accuracy brackets across two runs. Entry
/// (i, j) is the fraction of run A's bracket-i mixtures that land in
/// bracket j under run B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovementMatrix {
    pub counts: [[usize; 3]; 3],
    pub fractions: [[f64; 3]; 3],
}

impl MovementMatrix {
    /// Renders the fractions as a labelled 3x3 table.
    pub fn render(&self) -> String {
        let mut out = String::from("     b      m      g\n");
        for from in Bracket::all() {
            out.push_str(from.label());
            for to in Bracket::all() {
                out.push_str(&format!(
                    "  {:.3}",
                    self.fractions[from.index()][to.index()]
                ));
            }
            out.push('\n');
        }
        out
    }
}

pub fn bin_movement(
    run_a: &[(String, f64)],
    run_b: &[(String, f64)],
    scheme: &BracketScheme,
) -> Result<MovementMatrix, AnalysisError> {
    let a: BTreeMap<&str, f64> = run_a.iter().map(|(id, ca)| (id.as_str(), *ca)).collect();
    let b: BTreeMap<&str, f64> = run_b.iter().map(|(id, ca)| (id.as_str(), *ca)).collect();
    let only: Vec<String> = a
        .keys()
        .filter(|k| !b.contains_key(*k))
        .chain(b.keys().filter(|k| !a.contains_key(*k)))
        .map(|k| k.to_string())
        .collect();
    if !only.is_empty() {
        let mut only = only;
        only.sort();
        return Err(AnalysisError::IdMismatch(only));
    }

    let mut counts = [[0usize; 3]; 3];
    for (id, ca_a) in &a {
        let from = scheme.bracket(*ca_a).index();
        let to = scheme.bracket(b[id]).index();
        counts[from][to] += 1;
    }
    let mut fractions = [[0.0; 3]; 3];
    for (row_c, row_f) in counts.iter().zip(fractions.iter_mut()) {
        let total: usize = row_c.iter().sum();
        if total > 0 {
            for (c, f) in row_c.iter().zip(row_f.iter_mut()) {
                *f = *c as f64 / total as f64;
            }
        }
    }
    Ok(MovementMatrix { counts, fractions })
}
