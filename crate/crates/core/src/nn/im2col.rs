//! Patch gather/scatter used by both conv directions.
//!
//! Column layout: rows indexed (c, ki, kj) row-major, columns indexed
//! (oh, ow) row-major.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::scalar::Scalar;

pub fn out_size(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

pub fn im2col<S: Scalar>(
    x: &ArrayView3<S>,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Array2<S> {
    let (c, h, w) = x.dim();
    let oh = out_size(h, kernel, stride, pad);
    let ow = out_size(w, kernel, stride, pad);
    let mut cols = Array2::<S>::zeros((c * kernel * kernel, oh * ow));
    for ci in 0..c {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (ci * kernel + ki) * kernel + kj;
                let mut out_row = cols.row_mut(row);
                for ohi in 0..oh {
                    let ih = (ohi * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for owi in 0..ow {
                        let iw = (owi * stride + kj) as isize - pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        out_row[ohi * ow + owi] = x[[ci, ih as usize, iw as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Scatter-add of a column matrix back onto a (c, h, w) image; the adjoint
/// of `im2col` with the same geometry.
pub fn col2im<S: Scalar>(
    cols: &ArrayView2<S>,
    c: usize,
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Array3<S> {
    let oh = out_size(h, kernel, stride, pad);
    let ow = out_size(w, kernel, stride, pad);
    debug_assert_eq!(cols.dim(), (c * kernel * kernel, oh * ow));
    let mut x = Array3::<S>::zeros((c, h, w));
    for ci in 0..c {
        for ki in 0..kernel {
            for kj in 0..kernel {
                let row = (ci * kernel + ki) * kernel + kj;
                let in_row = cols.row(row);
                for ohi in 0..oh {
                    let ih = (ohi * stride + ki) as isize - pad as isize;
                    if ih < 0 || ih >= h as isize {
                        continue;
                    }
                    for owi in 0..ow {
                        let iw = (owi * stride + kj) as isize - pad as isize;
                        if iw < 0 || iw >= w as isize {
                            continue;
                        }
                        x[[ci, ih as usize, iw as usize]] += in_row[ohi * ow + owi];
                    }
                }
            }
        }
    }
    x
}
