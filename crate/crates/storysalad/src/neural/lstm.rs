//! Stacked bidirectional LSTM with hand-written backpropagation through time.
//!
//! Gate layout inside the packed weight matrices is input, forget, cell,
//! output, each occupying `hidden` consecutive rows.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Param, ParamVisitor};
use super::tensor::{axpy, sigmoid};

/// Parameters for one LSTM direction: `w` maps the input, `u` the previous
/// hidden state, `b` is the packed gate bias.
#[derive(Debug, Clone)]
pub struct LstmCellParams {
    pub w: Param,
    pub u: Param,
    pub b: Param,
    pub hidden: usize,
}

impl LstmCellParams {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut b = Param::zeros(1, 4 * hidden);
        // Standard forget-gate bias initialization; eases gradient flow early
        // in training.
        for v in &mut b.value.data[hidden..2 * hidden] {
            *v = 1.0;
        }
        LstmCellParams {
            w: Param::xavier(4 * hidden, input_dim, rng),
            u: Param::xavier(4 * hidden, hidden, rng),
            b,
            hidden,
        }
    }

    pub fn visit(&mut self, prefix: &str, f: ParamVisitor) {
        f(&format!("{prefix}/w"), &mut self.w);
        f(&format!("{prefix}/u"), &mut self.u);
        f(&format!("{prefix}/b"), &mut self.b);
    }
}

/// Saved activations for one time step, enough to run the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tc: Vec<f64>,
}

/// Forward trace of one direction over one sequence.
#[derive(Debug, Clone)]
pub struct DirCache {
    steps: Vec<StepCache>,
    hidden: usize,
}

impl DirCache {
    /// Hidden states in step order (index 0 is the first step consumed by
    /// this direction).
    pub fn hidden_states(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            let mut h = vec![0.0; self.hidden];
            for k in 0..self.hidden {
                h[k] = step.o[k] * step.tc[k];
            }
            out.push(h);
        }
        out
    }
}

fn step_forward(p: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let hid = p.hidden;
    let mut pre = p.w.value.matvec(x);
    let uh = p.u.value.matvec(h_prev);
    axpy(&mut pre, 1.0, &uh);
    axpy(&mut pre, 1.0, &p.b.value.data);

    let mut i = vec![0.0; hid];
    let mut f = vec![0.0; hid];
    let mut g = vec![0.0; hid];
    let mut o = vec![0.0; hid];
    let mut tc = vec![0.0; hid];
    for k in 0..hid {
        i[k] = sigmoid(pre[k]);
        f[k] = sigmoid(pre[hid + k]);
        g[k] = pre[2 * hid + k].tanh();
        o[k] = sigmoid(pre[3 * hid + k]);
        let c = f[k] * c_prev[k] + i[k] * g[k];
        tc[k] = c.tanh();
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        tc,
    }
}

/// Runs one direction over `inputs` in the given order; returns the cache.
fn dir_forward(p: &LstmCellParams, inputs: &[Vec<f64>]) -> DirCache {
    let hid = p.hidden;
    let mut h = vec![0.0; hid];
    let mut c = vec![0.0; hid];
    let mut steps = Vec::with_capacity(inputs.len());
    for x in inputs {
        let step = step_forward(p, x, &h, &c);
        for k in 0..hid {
            c[k] = step.f[k] * step.c_prev[k] + step.i[k] * step.g[k];
            h[k] = step.o[k] * step.tc[k];
        }
        steps.push(step);
    }
    DirCache { steps, hidden: hid }
}

/// Backpropagates one direction. `d_hidden[t]` is the gradient arriving at
/// the hidden state emitted after step `t`. Returns gradients with respect
/// to the step inputs, in step order. Parameter gradients accumulate.
fn dir_backward(p: &mut LstmCellParams, cache: &DirCache, d_hidden: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hid = p.hidden;
    let steps = &cache.steps;
    let mut dx_all = vec![Vec::new(); steps.len()];
    let mut dh_next = vec![0.0; hid];
    let mut dc_next = vec![0.0; hid];
    for t in (0..steps.len()).rev() {
        let s = &steps[t];
        let mut dh = d_hidden[t].clone();
        axpy(&mut dh, 1.0, &dh_next);

        let mut dpre = vec![0.0; 4 * hid];
        let mut dc_prev = vec![0.0; hid];
        for k in 0..hid {
            let do_ = dh[k] * s.tc[k];
            let dc = dc_next[k] + dh[k] * s.o[k] * (1.0 - s.tc[k] * s.tc[k]);
            let di = dc * s.g[k];
            let df = dc * s.c_prev[k];
            let dg = dc * s.i[k];
            dpre[k] = di * s.i[k] * (1.0 - s.i[k]);
            dpre[hid + k] = df * s.f[k] * (1.0 - s.f[k]);
            dpre[2 * hid + k] = dg * (1.0 - s.g[k] * s.g[k]);
            dpre[3 * hid + k] = do_ * s.o[k] * (1.0 - s.o[k]);
            dc_prev[k] = dc * s.f[k];
        }

        p.w.grad.outer_acc(&dpre, &s.x, 1.0);
        p.u.grad.outer_acc(&dpre, &s.h_prev, 1.0);
        axpy(&mut p.b.grad.data, 1.0, &dpre);

        let mut dx = vec![0.0; p.w.value.cols];
        p.w.value.matvec_transpose_acc(&dpre, &mut dx);
        let mut dh_prev = vec![0.0; hid];
        p.u.value.matvec_transpose_acc(&dpre, &mut dh_prev);

        dx_all[t] = dx;
        dh_next = dh_prev;
        dc_next = dc_prev;
    }
    dx_all
}

/// A stack of bidirectional LSTM layers with inverted dropout applied to the
/// layer inputs during training.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub layers: Vec<(LstmCellParams, LstmCellParams)>,
    pub input_dim: usize,
    pub hidden: usize,
    pub dropout: f64,
}

/// Forward trace of the whole stack over one sequence.
#[derive(Debug, Clone)]
pub struct BiLstmCache {
    /// Per layer: dropout masks (empty when dropout was disabled).
    masks: Vec<Vec<Vec<f64>>>,
    dirs: Vec<(DirCache, DirCache)>,
    /// Top-layer per-position outputs, forward and backward halves
    /// concatenated.
    pub outputs: Vec<Vec<f64>>,
    /// Concatenation of the top layer's final forward and final backward
    /// hidden states.
    pub summary: Vec<f64>,
}

impl BiLstm {
    pub fn new(input_dim: usize, hidden: usize, layers: usize, dropout: f64, rng: &mut impl Rng) -> Self {
        assert!(layers >= 1, "need at least one layer");
        assert!((0.0..1.0).contains(&dropout), "dropout must be in [0, 1)");
        let mut built = Vec::with_capacity(layers);
        for l in 0..layers {
            let in_dim = if l == 0 { input_dim } else { 2 * hidden };
            built.push((
                LstmCellParams::new(in_dim, hidden, rng),
                LstmCellParams::new(in_dim, hidden, rng),
            ));
        }
        BiLstm {
            layers: built,
            input_dim,
            hidden,
            dropout,
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn visit(&mut self, prefix: &str, f: ParamVisitor) {
        for (l, (fwd, bwd)) in self.layers.iter_mut().enumerate() {
            fwd.visit(&format!("{prefix}/layer{l}/fwd"), f);
            bwd.visit(&format!("{prefix}/layer{l}/bwd"), f);
        }
    }

    /// Runs the stack over `inputs`. When `rng` is given, inverted dropout
    /// with the configured rate is applied to every layer input.
    pub fn forward(&self, inputs: &[Vec<f64>], mut rng: Option<&mut ChaCha8Rng>) -> BiLstmCache {
        assert!(!inputs.is_empty(), "empty input sequence");
        let n = inputs.len();
        let mut seq: Vec<Vec<f64>> = inputs.to_vec();
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut dirs = Vec::with_capacity(self.layers.len());

        for (fwd, bwd) in &self.layers {
            let mask_set = match rng.as_deref_mut() {
                Some(r) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    let per_pos: Vec<Vec<f64>> = seq
                        .iter()
                        .map(|x| {
                            x.iter()
                                .map(|_| {
                                    if r.gen::<f64>() < keep {
                                        1.0 / keep
                                    } else {
                                        0.0
                                    }
                                })
                                .collect()
                        })
                        .collect();
                    for (x, m) in seq.iter_mut().zip(&per_pos) {
                        for (xi, mi) in x.iter_mut().zip(m) {
                            *xi *= mi;
                        }
                    }
                    per_pos
                }
                _ => Vec::new(),
            };

            let fc = dir_forward(fwd, &seq);
            let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
            let bc = dir_forward(bwd, &rev);

            let fh = fc.hidden_states();
            let bh = bc.hidden_states();
            let mut next = Vec::with_capacity(n);
            for t in 0..n {
                let mut v = fh[t].clone();
                v.extend_from_slice(&bh[n - 1 - t]);
                next.push(v);
            }

            masks.push(mask_set);
            dirs.push((fc, bc));
            seq = next;
        }

        let mut summary = Vec::with_capacity(2 * self.hidden);
        let top = dirs.last().unwrap();
        let fh = top.0.hidden_states();
        let bh = top.1.hidden_states();
        summary.extend_from_slice(&fh[n - 1]);
        summary.extend_from_slice(&bh[n - 1]);

        BiLstmCache {
            masks,
            dirs,
            outputs: seq,
            summary,
        }
    }

    /// Backpropagates through the stack. `d_outputs[t]` is the gradient at
    /// the top-layer output for position `t`; `d_summary` the gradient at
    /// the final-state concatenation. Returns gradients with respect to the
    /// original input vectors.
    pub fn backward(
        &mut self,
        cache: &BiLstmCache,
        d_outputs: &[Vec<f64>],
        d_summary: &[f64],
    ) -> Vec<Vec<f64>> {
        let n = cache.outputs.len();
        let hid = self.hidden;
        assert_eq!(d_outputs.len(), n);
        assert_eq!(d_summary.len(), 2 * hid);

        // Gradient flowing into each layer's concatenated output.
        let mut d_seq: Vec<Vec<f64>> = d_outputs.to_vec();

        for l in (0..self.layers.len()).rev() {
            let (fc, bc) = &cache.dirs[l];
            let is_top = l == self.layers.len() - 1;

            let mut d_fwd = vec![vec![0.0; hid]; n];
            let mut d_bwd = vec![vec![0.0; hid]; n];
            for t in 0..n {
                d_fwd[t].copy_from_slice(&d_seq[t][..hid]);
                d_bwd[n - 1 - t].copy_from_slice(&d_seq[t][hid..]);
            }
            if is_top {
                for k in 0..hid {
                    d_fwd[n - 1][k] += d_summary[k];
                    d_bwd[n - 1][k] += d_summary[hid + k];
                }
            }

            let (fwd, bwd) = &mut self.layers[l];
            let dx_f = dir_backward(fwd, fc, &d_fwd);
            let dx_b = dir_backward(bwd, bc, &d_bwd);

            let in_dim = if l == 0 { self.input_dim } else { 2 * hid };
            let mut d_in = vec![vec![0.0; in_dim]; n];
            for t in 0..n {
                axpy(&mut d_in[t], 1.0, &dx_f[t]);
                axpy(&mut d_in[t], 1.0, &dx_b[n - 1 - t]);
            }

            if !cache.masks[l].is_empty() {
                for (x, m) in d_in.iter_mut().zip(&cache.masks[l]) {
                    for (xi, mi) in x.iter_mut().zip(m) {
                        *xi *= mi;
                    }
                }
            }
            d_seq = d_in;
        }
        d_seq
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|(f, b)| {
            f.w.value.all_finite()
                && f.u.value.all_finite()
                && f.b.value.all_finite()
                && b.w.value.all_finite()
                && b.u.value.all_finite()
                && b.b.value.all_finite()
        })
    }
}
