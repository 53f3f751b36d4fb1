use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::Param;
use crate::scalar::Scalar;

const ADAM_EPS: f64 = 1e-8;

/// First/second moment estimates, keyed by parameter name so checkpoints can
/// restore them independent of iteration order.
#[derive(Debug, Clone, Default)]
pub struct AdamState<S: Scalar> {
    pub step: u64,
    pub moments: BTreeMap<String, (ArrayD<S>, ArrayD<S>)>,
}

pub struct Adam<S: Scalar> {
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub state: AdamState<S>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr: S::from_f64(lr),
            beta1: S::from_f64(beta1),
            beta2: S::from_f64(beta2),
            state: AdamState {
                step: 0,
                moments: BTreeMap::new(),
            },
        }
    }

    /// One update over the given trainable params using their accumulated
    /// grads. Grads are not cleared here.
    pub fn step(&mut self, params: &mut [&mut Param<S>]) {
        self.state.step += 1;
        let t = self.state.step as i32;
        let eps = S::from_f64(ADAM_EPS);
        let one = S::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        for p in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let (m, v) = self
                .state
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| {
                    (
                        ArrayD::zeros(p.value.raw_dim()),
                        ArrayD::zeros(p.value.raw_dim()),
                    )
                });
            ndarray::Zip::from(&mut p.value)
                .and(m)
                .and(v)
                .and(&p.grad)
                .for_each(|w, mi, vi, &g| {
                    *mi = self.beta1 * *mi + (one - self.beta1) * g;
                    *vi = self.beta2 * *vi + (one - self.beta2) * g * g;
                    let mhat = *mi / bc1;
                    let vhat = *vi / bc2;
                    *w = *w - self.lr * mhat / (vhat.sqrt() + eps);
                });
        }
    }
}
