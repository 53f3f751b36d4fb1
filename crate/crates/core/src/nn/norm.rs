use ndarray::{Array1, Array2, Array4, ArrayD, Axis};

use super::{Layer, Mode, Param};
use crate::scalar::Scalar;

const EPS: f64 = 1e-5;
const MOMENTUM: f64 = 0.1;

/// Per-channel batch normalization. Batch statistics during training, running
/// averages at inference.
pub struct BatchNorm2d<S: Scalar> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    pub running_mean: Param<S>,
    pub running_var: Param<S>,
    channels: usize,
    cache: Option<BnCache<S>>,
}

struct BnCache<S: Scalar> {
    xhat: Array4<S>,
    inv_std: Array1<S>,
}

impl<S: Scalar> BatchNorm2d<S> {
    pub fn new(name: &str, channels: usize) -> Self {
        let ones = ArrayD::from_elem(ndarray::IxDyn(&[channels]), S::one());
        let zeros = ArrayD::zeros(ndarray::IxDyn(&[channels]));
        BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), ones.clone(), true),
            beta: Param::new(format!("{name}.beta"), zeros.clone(), true),
            running_mean: Param::new(format!("{name}.running_mean"), zeros, false),
            running_var: Param::new(format!("{name}.running_var"), ones, false),
            channels,
            cache: None,
        }
    }
}

impl<S: Scalar> Layer<S> for BatchNorm2d<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels, "batchnorm channels");
        let eps = S::from_f64(EPS);
        let mut y = Array4::<S>::zeros(x.raw_dim());
        match mode {
            Mode::Train => {
                let count = S::from_f64((n * h * w) as f64);
                let momentum = S::from_f64(MOMENTUM);
                let mut xhat = Array4::<S>::zeros(x.raw_dim());
                let mut inv_std = Array1::<S>::zeros(c);
                for ci in 0..c {
                    let plane = x.index_axis(Axis(1), ci);
                    let mean = plane.sum() / count;
                    let var = plane.mapv(|v| (v - mean) * (v - mean)).sum() / count;
                    let istd = S::one() / (var + eps).sqrt();
                    inv_std[ci] = istd;
                    let g = self.gamma.value[[ci]];
                    let b = self.beta.value[[ci]];
                    let mut xh = xhat.index_axis_mut(Axis(1), ci);
                    xh.assign(&plane.mapv(|v| (v - mean) * istd));
                    y.index_axis_mut(Axis(1), ci)
                        .assign(&xh.mapv(|v| g * v + b));
                    let rm = &mut self.running_mean.value[[ci]];
                    *rm = (S::one() - momentum) * *rm + momentum * mean;
                    let rv = &mut self.running_var.value[[ci]];
                    *rv = (S::one() - momentum) * *rv + momentum * var;
                }
                self.cache = Some(BnCache { xhat, inv_std });
            }
            Mode::Eval => {
                for ci in 0..c {
                    let mean = self.running_mean.value[[ci]];
                    let var = self.running_var.value[[ci]];
                    let istd = S::one() / (var + eps).sqrt();
                    let g = self.gamma.value[[ci]];
                    let b = self.beta.value[[ci]];
                    y.index_axis_mut(Axis(1), ci)
                        .assign(&x.index_axis(Axis(1), ci).mapv(|v| g * (v - mean) * istd + b));
                }
                self.cache = None;
            }
        }
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let BnCache { xhat, inv_std } =
            self.cache.take().expect("batchnorm backward without train forward");
        let (n, c, h, w) = dy.dim();
        let count = S::from_f64((n * h * w) as f64);
        let mut dx = Array4::<S>::zeros(dy.raw_dim());
        for ci in 0..c {
            let dy_c = dy.index_axis(Axis(1), ci);
            let xh_c = xhat.index_axis(Axis(1), ci);
            let g = self.gamma.value[[ci]];
            let sum_dy = dy_c.sum();
            let sum_dy_xhat = (&dy_c * &xh_c).sum();
            self.gamma.grad[[ci]] += sum_dy_xhat;
            self.beta.grad[[ci]] += sum_dy;
            let mean_dy = sum_dy / count;
            let mean_dy_xhat = sum_dy_xhat / count;
            let scale = g * inv_std[ci];
            let mut dx_c = dx.index_axis_mut(Axis(1), ci);
            ndarray::Zip::from(&mut dx_c)
                .and(&dy_c)
                .and(&xh_c)
                .for_each(|d, &dyv, &xhv| {
                    *d = scale * (dyv - mean_dy - xhv * mean_dy_xhat);
                });
        }
        dx
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![
            &mut self.gamma,
            &mut self.beta,
            &mut self.running_mean,
            &mut self.running_var,
        ]
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        input
    }
}

/// Per-instance (per sample, per channel) normalization with a per-channel
/// affine. Uses instance statistics in both modes, so it carries no running
/// state.
pub struct InstanceNorm2d<S: Scalar> {
    pub gamma: Param<S>,
    pub beta: Param<S>,
    channels: usize,
    cache: Option<InCache<S>>,
}

struct InCache<S: Scalar> {
    xhat: Array4<S>,
    inv_std: Array2<S>, // (n, c)
}

impl<S: Scalar> InstanceNorm2d<S> {
    pub fn new(name: &str, channels: usize) -> Self {
        let ones = ArrayD::from_elem(ndarray::IxDyn(&[channels]), S::one());
        let zeros = ArrayD::zeros(ndarray::IxDyn(&[channels]));
        InstanceNorm2d {
            gamma: Param::new(format!("{name}.gamma"), ones, true),
            beta: Param::new(format!("{name}.beta"), zeros, true),
            channels,
            cache: None,
        }
    }
}

impl<S: Scalar> Layer<S> for InstanceNorm2d<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.channels, "instancenorm channels");
        let eps = S::from_f64(EPS);
        let count = S::from_f64((h * w) as f64);
        let mut y = Array4::<S>::zeros(x.raw_dim());
        let mut xhat = Array4::<S>::zeros(x.raw_dim());
        let mut inv_std = Array2::<S>::zeros((n, c));
        for ni in 0..n {
            for ci in 0..c {
                let plane = x.index_axis(Axis(0), ni);
                let plane = plane.index_axis(Axis(0), ci);
                let mean = plane.sum() / count;
                let var = plane.mapv(|v| (v - mean) * (v - mean)).sum() / count;
                let istd = S::one() / (var + eps).sqrt();
                inv_std[[ni, ci]] = istd;
                let g = self.gamma.value[[ci]];
                let b = self.beta.value[[ci]];
                let xh = plane.mapv(|v| (v - mean) * istd);
                let mut y_nc = y.index_axis_mut(Axis(0), ni);
                y_nc.index_axis_mut(Axis(0), ci)
                    .assign(&xh.mapv(|v| g * v + b));
                let mut xh_nc = xhat.index_axis_mut(Axis(0), ni);
                xh_nc.index_axis_mut(Axis(0), ci).assign(&xh);
            }
        }
        if mode == Mode::Train {
            self.cache = Some(InCache { xhat, inv_std });
        } else {
            self.cache = None;
        }
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let InCache { xhat, inv_std } = self
            .cache
            .take()
            .expect("instancenorm backward without train forward");
        let (n, c, h, w) = dy.dim();
        let count = S::from_f64((h * w) as f64);
        let mut dx = Array4::<S>::zeros(dy.raw_dim());
        for ni in 0..n {
            for ci in 0..c {
                let dy_nc = dy.index_axis(Axis(0), ni);
                let dy_nc = dy_nc.index_axis(Axis(0), ci);
                let xh_nc = xhat.index_axis(Axis(0), ni);
                let xh_nc = xh_nc.index_axis(Axis(0), ci);
                let g = self.gamma.value[[ci]];
                let sum_dy = dy_nc.sum();
                let sum_dy_xhat = (&dy_nc * &xh_nc).sum();
                self.gamma.grad[[ci]] += sum_dy_xhat;
                self.beta.grad[[ci]] += sum_dy;
                let mean_dy = sum_dy / count;
                let mean_dy_xhat = sum_dy_xhat / count;
                let scale = g * inv_std[[ni, ci]];
                let mut dx_n = dx.index_axis_mut(Axis(0), ni);
                let mut dx_nc = dx_n.index_axis_mut(Axis(0), ci);
                ndarray::Zip::from(&mut dx_nc)
                    .and(&dy_nc)
                    .and(&xh_nc)
                    .for_each(|d, &dyv, &xhv| {
                        *d = scale * (dyv - mean_dy - xhv * mean_dy_xhat);
                    });
            }
        }
        dx
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        input
    }
}
