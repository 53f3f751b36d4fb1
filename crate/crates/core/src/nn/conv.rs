use ndarray::{Array1, Array2, Array4, ArrayD, Axis};

use super::im2col::{col2im, im2col, out_size};
use super::{Layer, Mode, Param, WeightInit};
use crate::scalar::Scalar;

/// Strided 2-D convolution, im2col + GEMM on each sample.
pub struct Conv2d<S: Scalar> {
    pub weight: Param<S>, // (c_out, c_in, k, k)
    pub bias: Param<S>,   // (c_out,)
    c_in: usize,
    c_out: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache_x: Option<Array4<S>>,
}

impl<S: Scalar> Conv2d<S> {
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
            init.gaussian(&[c_out, c_in, kernel, kernel]),
            true,
        );
        let bias = Param::new(
            format!("{name}.bias"),
            ArrayD::zeros(ndarray::IxDyn(&[c_out])),
            true,
        );
        Conv2d {
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

    fn weight_mat(&self) -> Array2<S> {
        self.weight
            .value
            .view()
            .into_shape((self.c_out, self.c_in * self.kernel * self.kernel))
            .expect("contiguous weight")
            .to_owned()
    }
}

impl<S: Scalar> Layer<S> for Conv2d<S> {
    fn forward(&mut self, x: Array4<S>, mode: Mode) -> Array4<S> {
        let (n, c, h, w) = x.dim();
        assert_eq!(c, self.c_in, "conv input channels");
        let oh = out_size(h, self.kernel, self.stride, self.pad);
        let ow = out_size(w, self.kernel, self.stride, self.pad);
        let wmat = self.weight_mat();
        let bias = &self.bias.value;
        let mut y = Array4::<S>::zeros((n, self.c_out, oh, ow));
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i), self.kernel, self.stride, self.pad);
            let mut out = wmat.dot(&cols); // (c_out, oh*ow)
            for (co, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                let b = bias[[co]];
                row.mapv_inplace(|v| v + b);
            }
            y.index_axis_mut(Axis(0), i)
                .assign(&out.into_shape((self.c_out, oh, ow)).unwrap());
        }
        if mode == Mode::Train {
            self.cache_x = Some(x);
        } else {
            self.cache_x = None;
        }
        y
    }

    fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let x = self.cache_x.take().expect("conv backward without forward");
        let (n, _, h, w) = x.dim();
        let (_, c_out, oh, ow) = dy.dim();
        let wmat = self.weight_mat();
        let ckk = self.c_in * self.kernel * self.kernel;
        let mut dw = Array2::<S>::zeros((c_out, ckk));
        let mut db = Array1::<S>::zeros(c_out);
        let mut dx = Array4::<S>::zeros(x.raw_dim());
        for i in 0..n {
            let cols = im2col(&x.index_axis(Axis(0), i), self.kernel, self.stride, self.pad);
            let dy_flat = dy
                .index_axis(Axis(0), i)
                .into_shape((c_out, oh * ow))
                .unwrap();
            dw = dw + dy_flat.dot(&cols.t());
            for co in 0..c_out {
                db[co] += dy_flat.row(co).sum();
            }
            let dcols = wmat.t().dot(&dy_flat);
            dx.index_axis_mut(Axis(0), i).assign(&col2im(
                &dcols.view(),
                self.c_in,
                h,
                w,
                self.kernel,
                self.stride,
                self.pad,
            ));
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
            out_size(input[2], self.kernel, self.stride, self.pad),
            out_size(input[3], self.kernel, self.stride, self.pad),
        ]
    }
}
