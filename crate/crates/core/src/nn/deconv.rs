use ndarray::{Array1, Array2, Array4, ArrayD, Axis};

use super::im2col::{col2im, im2col};
use super::{Layer, Mode, Param, WeightInit};
use crate::scalar::Scalar;

/// Up-convolution (transposed conv): the adjoint of a strided conv with the
/// same geometry, so with kernel 4 / stride 2 / pad 1 it exactly doubles the
/// spatial size.
pub struct ConvTranspose2d<S: Scalar> {
    pub weight: Param<S>, // (c_in, c_out, k, k)
    pub bias: Param<S>,   // (c_out,)
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache_x: Option<Array4<S>>,
}

impl<S: Scalar> ConvTranspose2d<S> {
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init: &mut WeightInit,
    ) -> Self {
        let weight = Param::new(
            format!("{name}.weight"),
            init.gaussian(&[c_in, c_out, kernel, kernel]),
            true,
        );
        let bias = Param::new(
            format!("{name}.bias"),
            ArrayD::zeros(ndarray::IxDyn(&[c_out])),
            true,
        );
        ConvTranspose2d {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
            pad,
            cache_x: None,
        }
    }

    pub fn up_size(&self, input: usize) -> usize {
        (input - 1) * self.stride + self.kernel - 2 * self.pad
    }

    fn weight_mat(&self) -> Array2<S> {
        self.weight
            .value
            .view()
            .into_shape((self.c_in, self.c_out * self.kernel * self.kernel))
            .expect("contiguous weight")
            .to_owned()
    }
}

impl<S: Scalar> Layer<S> for ConvTranspose2d<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.c_in, "deconv input channels");
        let oh = self.up_size(h);
        let ow = self.up_size(w);
        let wmat = self.weight_mat(); // (c_in, c_out*k*k)
        let bias = &self.bias.value;
        let mut y = Array4::<S>::zeros((n, self.c_out, oh, ow));
        for i in 0..n {
            let x_flat = x.index_axis(Axis(0), i).into_shape((c, h * w)).unwrap();
            let cols = wmat.t().dot(&x_flat); // (c_out*k*k, h*w)
            let mut out = col2im(
                &cols.view(),
                self.c_out,
                oh,
                ow,
                self.kernel,
                self.stride,
                self.pad,
            );
            for (co, mut plane) in out.axis_iter_mut(Axis(0)).enumerate() {
                let b = bias[[co]];
                plane.mapv_inplace(|v| v + b);
            }
            y.index_axis_mut(Axis(0), i).assign(&out);
        }
        if mode == Mode::Train {
            self.cache_x = Some(x);
        } else {
            self.cache_x = None;
        }
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let x = self.cache_x.take().expect("deconv backward without forward");
        let (n, c, h, w) = x.dim();
        let wmat = self.weight_mat();
        let mut dw = Array2::<S>::zeros(wmat.raw_dim());
        let mut db = Array1::<S>::zeros(self.c_out);
        let mut dx = Array4::<S>::zeros(x.raw_dim());
        for i in 0..n {
            let dy_i = dy.index_axis(Axis(0), i);
            // (c_out*k*k, h*w): gathers dy patches at the adjoint geometry
            let dcols = im2col(&dy_i, self.kernel, self.stride, self.pad);
            let x_flat = x.index_axis(Axis(0), i).into_shape((c, h * w)).unwrap();
            dw = dw + x_flat.dot(&dcols.t());
            for co in 0..self.c_out {
                db[co] += dy_i.index_axis(Axis(0), co).sum();
            }
            let dx_flat = wmat.dot(&dcols); // (c_in, h*w)
            dx.index_axis_mut(Axis(0), i)
                .assign(&dx_flat.into_shape((c, h, w)).unwrap());
        }
        let dw = dw
            .into_shape(self.weight.value.raw_dim())
            .expect("dw shape");
        self.weight.grad += &dw;
        self.bias.grad += &db.into_dyn();
        dx
    }

    fn params(&self) -> Vec<&Param<S>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn output_shape(&self, input: [usize; 4]) -> [usize; 4] {
        [
            input[0],
            self.c_out,
            self.up_size(input[2]),
            self.up_size(input[3]),
        ]
    }
}
