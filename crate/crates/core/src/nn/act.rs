use ndarray::Array4;

use super::{Layer, Mode};
use crate::scalar::Scalar;

pub struct LeakyRelu<S: Scalar> {
    slope: S,
    cache_x: Option<Array4<S>>,
}

impl<S: Scalar> LeakyRelu<S> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu {
            slope: S::from_f64(slope),
            cache_x: None,
        }
    }
}

impl<S: Scalar> Layer<S> for LeakyRelu<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let slope = self.slope;
        let y = x.mapv(|v| if v > S::zero() { v } else { slope * v });
        self.cache_x = (mode == Mode::Train).then_some(x);
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let x = self.cache_x.take().expect("leaky relu backward without forward");
        let slope = self.slope;
        let mut dx = dy;
        ndarray::Zip::from(&mut dx).and(&x).for_each(|d, &xv| {
            if xv <= S::zero() {
                *d *= slope;
            }
        });
        dx
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        input
    }
}

pub struct Relu<S: Scalar> {
    cache_x: Option<Array4<S>>,
}

impl<S: Scalar> Relu<S> {
    pub fn new() -> Self {
        Relu { cache_x: None }
    }
}

impl<S: Scalar> Default for Relu<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Layer<S> for Relu<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let y = x.mapv(|v| if v > S::zero() { v } else { S::zero() });
        self.cache_x = (mode == Mode::Train).then_some(x);
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let x = self.cache_x.take().expect("relu backward without forward");
        let mut dx = dy;
        ndarray::Zip::from(&mut dx).and(&x).for_each(|d, &xv| {
            if xv <= S::zero() {
                *d = S::zero();
            }
        });
        dx
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        input
    }
}

pub struct Tanh<S: Scalar> {
    cache_y: Option<Array4<S>>,
}

impl<S: Scalar> Tanh<S> {
    pub fn new() -> Self {
        Tanh { cache_y: None }
    }
}

impl<S: Scalar> Default for Tanh<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Layer<S> for Tanh<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let y = x.mapv(|v| v.tanh());
        if mode == Mode::Train {
            self.cache_y = Some(y.clone());
        } else {
            self.cache_y = None;
        }
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let y = self.cache_y.take().expect("tanh backward without forward");
        let mut dx = dy;
        ndarray::Zip::from(&mut dx).and(&y).for_each(|d, &yv| {
            *d *= S::one() - yv * yv;
        });
        dx
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        input
    }
}
