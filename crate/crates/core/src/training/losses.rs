//! The four training losses and the adversarial-weight schedule.
//!
//! All norms are reduced as means over every element (batch, channels,
//! pixels / grid cells), so magnitudes are resolution independent.

use ndarray::Array4;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Weight pair applied in the generator loss; `lambda_rec + lambda_adv == 1`
/// by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState<S: Scalar> {
    pub epoch: usize,
    pub lambda_adv: S,
    pub lambda_rec: S,
}

impl<S: Scalar> ScheduleState<S> {
    pub fn with_lambda(epoch: usize, lambda_adv: f64) -> Self {
        ScheduleState {
            epoch,
            lambda_adv: S::from_f64(lambda_adv),
            lambda_rec: S::from_f64(1.0 - lambda_adv),
        }
    }

    /// Reconstruction-only training.
    pub fn off(epoch: usize) -> Self {
        Self::with_lambda(epoch, 0.0)
    }

    /// Staged schedule position for epoch `n` (1-based).
    pub fn scheduled(epoch: usize) -> Self {
        Self::with_lambda(epoch, adv_weight_schedule(epoch))
    }
}

/// Piecewise-constant adversarial weight by epoch (1-based).
pub fn adv_weight_schedule(n: usize) -> f64 {
    if n <= 10 {
        0.001
    } else if n <= 30 {
        0.005
    } else if n <= 60 {
        0.015
    } else {
        0.040
    }
}

fn check_same_shape<S: Scalar>(a: &Array4<S>, b: &Array4<S>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            format!("{:?}", a.dim()),
            format!("{:?}", b.dim()),
        ));
    }
    Ok(())
}

/// L1 reconstruction loss: mean |x - gx|.
pub fn reconstruction_loss<S: Scalar>(x: &Array4<S>, gx: &Array4<S>) -> Result<S> {
    check_same_shape(x, gx)?;
    let count = S::from_f64(x.len() as f64);
    let mut acc = S::zero();
    ndarray::Zip::from(x).and(gx).for_each(|&a, &b| {
        acc += (a - b).abs();
    });
    Ok(acc / count)
}

/// dL_rec / d gx  (mean-reduced L1 subgradient).
pub fn reconstruction_loss_grad<S: Scalar>(x: &Array4<S>, gx: &Array4<S>) -> Array4<S> {
    let scale = S::one() / S::from_f64(x.len() as f64);
    let mut g = Array4::zeros(x.raw_dim());
    ndarray::Zip::from(&mut g).and(x).and(gx).for_each(|d, &a, &b| {
        *d = if b > a {
            scale
        } else if b < a {
            -scale
        } else {
            S::zero()
        };
    });
    g
}

/// Generator-side adversarial loss: mean (score - 1)^2 over fake grids.
pub fn adversarial_loss_g<S: Scalar>(fake_scores: &Array4<S>) -> S {
    let count = S::from_f64(fake_scores.len() as f64);
    let one = S::one();
    fake_scores.iter().map(|&s| (s - one) * (s - one)).sum::<S>() / count
}

/// dL_adv / d scores.
pub fn adversarial_loss_g_grad<S: Scalar>(fake_scores: &Array4<S>) -> Array4<S> {
    let scale = S::from_f64(2.0 / fake_scores.len() as f64);
    fake_scores.mapv(|s| scale * (s - S::one()))
}

/// Joint generator loss: lambda_rec * L_rec + lambda_adv * L_adv.
pub fn generator_loss<S: Scalar>(l_rec: S, l_adv: S, s: &ScheduleState<S>) -> S {
    s.lambda_rec * l_rec + s.lambda_adv * l_adv
}

/// Discriminator loss: mean (real - 1)^2 + mean fake^2.
pub fn discriminator_loss<S: Scalar>(real_scores: &Array4<S>, fake_scores: &Array4<S>) -> S {
    let one = S::one();
    let nr = S::from_f64(real_scores.len() as f64);
    let nf = S::from_f64(fake_scores.len() as f64);
    let real: S = real_scores.iter().map(|&s| (s - one) * (s - one)).sum();
    let fake: S = fake_scores.iter().map(|&s| s * s).sum();
    real / nr + fake / nf
}

/// (dL_D / d real_scores, dL_D / d fake_scores).
pub fn discriminator_loss_grad<S: Scalar>(
    real_scores: &Array4<S>,
    fake_scores: &Array4<S>,
) -> (Array4<S>, Array4<S>) {
    let sr = S::from_f64(2.0 / real_scores.len() as f64);
    let sf = S::from_f64(2.0 / fake_scores.len() as f64);
    (
        real_scores.mapv(|s| sr * (s - S::one())),
        fake_scores.mapv(|s| sf * s),
    )
}
