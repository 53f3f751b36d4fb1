use ndarray::ArrayD;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

/// Seeded Gaussian weight initializer. Samples are drawn in `f64` and then
/// narrowed, so the same seed yields the same weights at every scalar width.
pub struct WeightInit {
    rng: ChaCha8Rng,
    dist: Normal<f64>,
}

impl WeightInit {
    pub fn new(seed: u64, std_dev: f64) -> Self {
        use rand::SeedableRng;
        WeightInit {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: Normal::new(0.0, std_dev).expect("valid std"),
        }
    }

    pub fn gaussian<S: Scalar>(&mut self, shape: &[usize]) -> ArrayD<S> {
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n)
            .map(|_| S::from_f64(self.dist.sample(&mut self.rng)))
            .collect();
        ArrayD::from_shape_vec(ndarray::IxDyn(shape), data).expect("shape matches len")
    }

    /// Uniform u64, used to derive per-epoch shuffle seeds.
    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }
}
