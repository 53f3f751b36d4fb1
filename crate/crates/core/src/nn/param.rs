use ndarray::ArrayD;

use crate::scalar::Scalar;

/// A named tensor owned by a layer. Trainable params get Adam updates;
/// non-trainable ones (normalization running statistics) are only carried
/// through checkpoints.
#[derive(Debug, Clone)]
pub struct Param<S: Scalar> {
    pub name: String,
    pub value: ArrayD<S>,
    pub grad: ArrayD<S>,
    pub trainable: bool,
}

impl<S: Scalar> Param<S> {
    pub fn new(name: impl Into<String>, value: ArrayD<S>, trainable: bool) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        Param {
            name: name.into(),
            value,
            grad,
            trainable,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}
