//! Minimal CPU neural-net layer kit: just the pieces the generator and
//! discriminator stacks need, with hand-written backward passes.

mod act;
mod adam;
mod conv;
mod deconv;
mod im2col;
mod init;
mod norm;
mod param;

pub use act::{LeakyRelu, Relu, Tanh};
pub use adam::{Adam, AdamState};
pub use conv::Conv2d;
pub use deconv::ConvTranspose2d;
pub use init::WeightInit;
pub use norm::{BatchNorm2d, InstanceNorm2d};
pub use param::Param;

use ndarray::Array4;

use crate::scalar::Scalar;

/// Forward-pass mode. `Train` caches activations for backward and lets
/// normalization layers use (and update) batch statistics; `Eval` is
/// cache-free and uses frozen statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub trait Layer<S: Scalar>: Send {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S>;

    /// Gradients accumulate into each param's `grad`; returns dL/dx.
    /// Requires a preceding `Train`-mode forward.
    fn backward(&mut self, dy: Array4<S>) -> Array4<S>;

    fn params(&self) -> Vec<&Param<S>> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        Vec::new()
    }

    /// Output shape for a given input shape, both (N, C, H, W).
    fn output_shape(&self, input: [usize; 4]) -> [usize; 4];
}
