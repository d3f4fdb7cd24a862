//! Central finite-difference verification of the analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{sigmoid, softplus};
use super::train::{PairTask, SampledPair};
use super::NeuralError;

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Denominator floor of the relative-error metric. Central differences in
/// f64 carry absolute noise around 1e-10 on a loss of order ten, so
/// coordinates with gradients near zero are effectively compared with an
/// absolute tolerance of `floor * threshold` instead of drowning the
/// report in cancellation noise.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// Verification settings: the nudge size and how many coordinates per
/// parameter are probed.
#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    pub coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: DEFAULT_EPSILON,
            coords_per_param: 24,
            seed: 0,
        }
    }
}

/// Outcome of one verification pass.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Summed cross-entropy of the task over a fixed pair list, with dropout
/// disabled.
pub fn pair_loss(task: &impl PairTask, pairs: &[SampledPair]) -> Result<f64, NeuralError> {
    let mut total = 0.0;
    for p in pairs {
        let (logit, _) = task.pair_logit(p.mixture, p.i, p.j, None)?;
        total += softplus(logit) - if p.same { logit } else { 0.0 };
    }
    Ok(total)
}

/// Accumulates analytic gradients of `pair_loss` and returns them as one
/// vector per parameter, in visit order with names.
pub fn analytic_gradients(
    task: &mut impl PairTask,
    pairs: &[SampledPair],
) -> Result<Vec<(String, Vec<f64>)>, NeuralError> {
    task.zero_grads();
    for p in pairs {
        let (logit, trace) = task.pair_logit(p.mixture, p.i, p.j, None)?;
        let y = if p.same { 1.0 } else { 0.0 };
        task.pair_backward(&trace, sigmoid(logit) - y);
    }
    let mut grads = Vec::new();
    task.visit_params(&mut |name, p| grads.push((name.to_string(), p.grad.data.clone())));
    Ok(grads)
}

fn nudge(task: &mut impl PairTask, target: usize, coord: usize, delta: f64) {
    let mut idx = 0usize;
    task.visit_params(&mut |_, p| {
        if idx == target {
            p.value.data[coord] += delta;
        }
        idx += 1;
    });
}

/// Compares supplied analytic gradients against central finite differences
/// of `pair_loss` on sampled coordinates.
pub fn compare_with_numeric(
    task: &mut impl PairTask,
    pairs: &[SampledPair],
    analytic: &[(String, Vec<f64>)],
    config: &GradCheckConfig,
) -> Result<GradCheckReport, NeuralError> {
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_coord: 0,
        coords_checked: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for (param_idx, (name, grad)) in analytic.iter().enumerate() {
        let coords: Vec<usize> = if grad.len() <= config.coords_per_param {
            (0..grad.len()).collect()
        } else {
            rand::seq::index::sample(&mut rng, grad.len(), config.coords_per_param).into_vec()
        };
        for coord in coords {
            nudge(task, param_idx, coord, config.epsilon);
            let plus = pair_loss(task, pairs)?;
            nudge(task, param_idx, coord, -2.0 * config.epsilon);
            let minus = pair_loss(task, pairs)?;
            nudge(task, param_idx, coord, config.epsilon);

            let numeric = (plus - minus) / (2.0 * config.epsilon);
            let ga = grad[coord];
            let rel = (ga - numeric).abs() / ga.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.coords_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = name.clone();
                report.worst_coord = coord;
            }
        }
    }
    Ok(report)
}

/// Full check: computes analytic gradients over the pair list, then
/// verifies them coordinate by coordinate.
pub fn check_gradients(
    task: &mut impl PairTask,
    pairs: &[SampledPair],
    config: &GradCheckConfig,
) -> Result<GradCheckReport, NeuralError> {
    let analytic = analytic_gradients(task, pairs)?;
    compare_with_numeric(task, pairs, &analytic, config)
}
