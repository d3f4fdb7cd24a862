//! Convolutional reader that summarizes a whole token mixture into a fixed
//! vector: per-width filter banks over sliding windows, ReLU, then max
//! pooling over positions.

use rand::Rng;

use super::params::{Param, ParamVisitor};
use super::NeuralError;

/// Filter banks for a fixed set of window widths.
#[derive(Debug, Clone)]
pub struct ContextCnn {
    /// One (weights, bias) pair per width; weights are
    /// `filters x (width * input_dim)`.
    pub banks: Vec<(Param, Param)>,
    pub widths: Vec<usize>,
    pub filters: usize,
    pub input_dim: usize,
}

/// Forward trace of one CNN application.
#[derive(Debug, Clone)]
pub struct CnnCache {
    inputs: Vec<Vec<f64>>,
    /// Per width, per filter: position of the pooled maximum.
    argmax: Vec<Vec<usize>>,
    /// Per width, per filter: whether the pooled pre-activation was positive.
    active: Vec<Vec<bool>>,
}

impl ContextCnn {
    pub fn new(input_dim: usize, widths: &[usize], filters: usize, rng: &mut impl Rng) -> Self {
        assert!(!widths.is_empty(), "need at least one filter width");
        assert!(filters >= 1, "need at least one filter");
        let banks = widths
            .iter()
            .map(|w| {
                assert!(*w >= 1, "filter width must be positive");
                (
                    Param::xavier(filters, w * input_dim, rng),
                    Param::zeros(1, filters),
                )
            })
            .collect();
        ContextCnn {
            banks,
            widths: widths.to_vec(),
            filters,
            input_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.widths.len() * self.filters
    }

    pub fn visit(&mut self, prefix: &str, f: ParamVisitor) {
        for (i, (w, b)) in self.banks.iter_mut().enumerate() {
            let width = self.widths[i];
            f(&format!("{prefix}/width{width}/w"), w);
            f(&format!("{prefix}/width{width}/b"), b);
        }
    }

    /// Applies every filter bank and pools; fails when the sequence is
    /// shorter than the widest filter.
    pub fn forward(&self, inputs: &[Vec<f64>]) -> Result<(Vec<f64>, CnnCache), NeuralError> {
        let n = inputs.len();
        if let Some(&w) = self.widths.iter().find(|w| **w > n) {
            return Err(NeuralError::ContextTooShort { len: n, width: w });
        }

        let mut out = Vec::with_capacity(self.output_dim());
        let mut argmax = Vec::with_capacity(self.widths.len());
        let mut active = Vec::with_capacity(self.widths.len());

        for (wi, (weights, bias)) in self.banks.iter().enumerate() {
            let width = self.widths[wi];
            let mut best = vec![f64::NEG_INFINITY; self.filters];
            let mut best_pos = vec![0usize; self.filters];
            let mut window = vec![0.0; width * self.input_dim];
            for t in 0..=(n - width) {
                for (k, x) in inputs[t..t + width].iter().enumerate() {
                    window[k * self.input_dim..(k + 1) * self.input_dim].copy_from_slice(x);
                }
                let pre = weights.value.matvec(&window);
                for (fidx, p) in pre.iter().enumerate() {
                    let v = p + bias.value.data[fidx];
                    if v > best[fidx] {
                        best[fidx] = v;
                        best_pos[fidx] = t;
                    }
                }
            }
            let mut act = vec![false; self.filters];
            for fidx in 0..self.filters {
                act[fidx] = best[fidx] > 0.0;
                out.push(best[fidx].max(0.0));
            }
            argmax.push(best_pos);
            active.push(act);
        }

        let cache = CnnCache {
            inputs: inputs.to_vec(),
            argmax,
            active,
        };
        Ok((out, cache))
    }

    /// Backpropagates through pooling and convolution; returns gradients for
    /// the input vectors. Parameter gradients accumulate.
    pub fn backward(&mut self, cache: &CnnCache, d_out: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(d_out.len(), self.output_dim());
        let n = cache.inputs.len();
        let mut d_inputs = vec![vec![0.0; self.input_dim]; n];

        for (wi, (weights, bias)) in self.banks.iter_mut().enumerate() {
            let width = self.widths[wi];
            for fidx in 0..self.filters {
                let g = d_out[wi * self.filters + fidx];
                if g == 0.0 || !cache.active[wi][fidx] {
                    continue;
                }
                let t = cache.argmax[wi][fidx];
                bias.grad.data[fidx] += g;
                let wrow = weights.grad.row_mut(fidx);
                for (k, x) in cache.inputs[t..t + width].iter().enumerate() {
                    for (j, xv) in x.iter().enumerate() {
                        wrow[k * self.input_dim + j] += g * xv;
                    }
                }
                let vrow = weights.value.row(fidx);
                for k in 0..width {
                    let d = &mut d_inputs[t + k];
                    for (j, dv) in d.iter_mut().enumerate() {
                        *dv += g * vrow[k * self.input_dim + j];
                    }
                }
            }
        }
        d_inputs
    }

    pub fn all_finite(&self) -> bool {
        self.banks
            .iter()
            .all(|(w, b)| w.value.all_finite() && b.value.all_finite())
    }
}
