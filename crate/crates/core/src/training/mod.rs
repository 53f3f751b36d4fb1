//! Alternating adversarial optimization: one discriminator update then one
//! generator update per batch, with the staged adversarial-weight schedule.

mod losses;
mod run;

pub use losses::{
    adv_weight_schedule, adversarial_loss_g, adversarial_loss_g_grad, discriminator_loss,
    discriminator_loss_grad, generator_loss, reconstruction_loss, reconstruction_loss_grad,
    ScheduleState,
};
pub use run::{read_metrics_csv, train, MetricsRow, TrainOutcome};

/// How the adversarial term is weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdvMode {
    /// Reconstruction-only (lambda_adv = 0); adversarial columns log a 0
    /// sentinel and the discriminator is not updated.
    Off,
    /// Staged piecewise schedule by epoch.
    Scheduled,
    /// Constant lambda_adv.
    Fixed(f64),
}

impl AdvMode {
    pub fn lambda(&self, epoch: usize) -> f64 {
        match self {
            AdvMode::Off => 0.0,
            AdvMode::Scheduled => adv_weight_schedule(epoch),
            AdvMode::Fixed(l) => *l,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub adv_mode: AdvMode,
    pub seed: u64,
    /// Relative L1 weight of the hallucinated band vs the kept center;
    /// 1.0 keeps the loss uniform over the full image.
    pub band_weight: f64,
    /// Permanent checkpoint cadence (a rolling `last.ckpt` is always kept).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 3e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 32,
            adv_mode: AdvMode::Scheduled,
            seed: 0,
            band_weight: 1.0,
            checkpoint_every: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.learning_rate < 0.0 {
            return Err(crate::Error::config("learning_rate must be >= 0"));
        }
        if self.batch_size == 0 {
            return Err(crate::Error::config("batch_size must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(crate::Error::config("epochs must be >= 1"));
        }
        Ok(())
    }
}
