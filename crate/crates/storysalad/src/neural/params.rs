//! Named trainable parameters with explicitly managed gradients.

use rand::Rng;

use super::tensor::Tensor;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        Param {
            value: Tensor::xavier(rows, cols, rng),
            grad: Tensor::zeros(rows, cols),
        }
    }

    pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        Param {
            value: Tensor::uniform(rows, cols, bound, rng),
            grad: Tensor::zeros(rows, cols),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param {
            value: Tensor::zeros(rows, cols),
            grad: Tensor::zeros(rows, cols),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Callback used to enumerate every parameter of a model in a stable order.
/// The name is a `/`-separated path unique within the model.
pub type ParamVisitor<'a> = &'a mut dyn FnMut(&str, &mut Param);
