//! Inference-time pipeline: embed a photo into the masked canvas, run the
//! generator, paste the input back over the output under a linear alpha ramp,
//! and optionally repeat to zoom out.

use ndarray::{Array2, Array4, Axis};

use crate::data::{resize_bilinear, MaskSpec};
use crate::error::{Error, Result};
use crate::models::Network;
use crate::nn::Mode;
use crate::scalar::Scalar;
use crate::ImageTensor;

/// Alpha-ramp geometry for pasting the input over the raw output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSpec {
    pub band_width: usize,
}

impl Default for BlendSpec {
    fn default() -> Self {
        BlendSpec { band_width: 16 }
    }
}

impl BlendSpec {
    pub fn validate(&self, m: &MaskSpec) -> Result<()> {
        if self.band_width > m.keep_size / 2 {
            return Err(Error::config(format!(
                "blend band {} exceeds half the kept square ({})",
                self.band_width,
                m.keep_size / 2
            )));
        }
        Ok(())
    }
}

/// Alpha map over the full canvas: 1 deep inside the kept square, a linear
/// ramp over the innermost `band_width` pixels of it, 0 outside. The ramp
/// sits entirely inside the kept square so hallucinated pixels are never
/// attenuated.
pub fn alpha_map<S: Scalar>(m: &MaskSpec, b: &BlendSpec) -> Array2<S> {
    let n = m.full_size;
    let band = m.band();
    let lo = band as isize;
    let hi = (band + m.keep_size) as isize;
    let bw = b.band_width as f64;
    let mut alpha = Array2::<S>::zeros((n, n));
    for y in 0..n as isize {
        for x in 0..n as isize {
            let inside = y >= lo && y < hi && x >= lo && x < hi;
            if !inside {
                continue;
            }
            let d = (y - lo).min(hi - 1 - y).min(x - lo).min(hi - 1 - x) as f64;
            let a = if bw == 0.0 { 1.0 } else { (d / bw).min(1.0) };
            alpha[[y as usize, x as usize]] = S::from_f64(a);
        }
    }
    alpha
}

/// Place a keep_size^2 photo at the center of a full_size^2 canvas filled
/// with the per-channel means.
pub fn embed_center<S: Scalar>(
    photo: &ImageTensor<S>,
    m: &MaskSpec,
    means: [f64; 3],
) -> ImageTensor<S> {
    let band = m.band();
    let mut canvas = ndarray::Array3::<S>::zeros((3, m.full_size, m.full_size));
    for c in 0..3 {
        canvas
            .index_axis_mut(Axis(0), c)
            .fill(S::from_f64(means[c]));
    }
    canvas
        .slice_mut(ndarray::s![
            ..,
            band..band + m.keep_size,
            band..band + m.keep_size
        ])
        .assign(photo);
    canvas
}

/// Run the generator on a fresh keep_size^2 photo (embedded first) or an
/// already-masked full_size^2 canvas. Returns the raw full-size output.
pub fn outpaint<S: Scalar>(
    g: &mut Network<S>,
    image: &ImageTensor<S>,
    m: &MaskSpec,
    means: [f64; 3],
) -> Result<ImageTensor<S>> {
    let (c, h, w) = image.dim();
    if c != 3 || h != w {
        return Err(Error::shape(
            "square 3-channel image".to_string(),
            format!("({c}, {h}, {w})"),
        ));
    }
    let canvas = if h == m.keep_size {
        embed_center(image, m, means)
    } else if h == m.full_size {
        image.clone()
    } else {
        return Err(Error::shape(
            format!("side {} or {}", m.keep_size, m.full_size),
            format!("side {h}"),
        ));
    };
    let mut batch = Array4::<S>::zeros((1, 3, m.full_size, m.full_size));
    batch.index_axis_mut(Axis(0), 0).assign(&canvas);
    let out = g.forward(batch, Mode::Eval)?;
    Ok(out.index_axis(Axis(0), 0).to_owned())
}

/// Composite = alpha * input + (1 - alpha) * raw. `input_center` may be the
/// keep_size^2 photo or the full canvas (its center is used).
pub fn blend<S: Scalar>(
    input_center: &ImageTensor<S>,
    raw: &ImageTensor<S>,
    m: &MaskSpec,
    b: &BlendSpec,
) -> Result<ImageTensor<S>> {
    b.validate(m)?;
    let (_, rh, rw) = raw.dim();
    if rh != m.full_size || rw != m.full_size {
        return Err(Error::shape(
            format!("raw side {}", m.full_size),
            format!("({rh}, {rw})"),
        ));
    }
    let (_, ih, _) = input_center.dim();
    let center = if ih == m.keep_size {
        input_center.clone()
    } else if ih == m.full_size {
        let band = m.band();
        input_center
            .slice(ndarray::s![
                ..,
                band..band + m.keep_size,
                band..band + m.keep_size
            ])
            .to_owned()
    } else {
        return Err(Error::shape(
            format!("input side {} or {}", m.keep_size, m.full_size),
            format!("side {ih}"),
        ));
    };
    let alpha = alpha_map::<S>(m, b);
    let band = m.band();
    let mut out = raw.clone();
    for c in 0..3 {
        for y in 0..m.keep_size {
            for x in 0..m.keep_size {
                let fy = band + y;
                let fx = band + x;
                let a = alpha[[fy, fx]];
                if a > S::zero() {
                    let one = S::one();
                    out[[c, fy, fx]] = if a >= one {
                        center[[c, y, x]]
                    } else {
                        a * center[[c, y, x]] + (one - a) * raw[[c, fy, fx]]
                    };
                }
            }
        }
    }
    Ok(out)
}

/// One outpaint + blend step.
pub fn outpaint_blend<S: Scalar>(
    g: &mut Network<S>,
    photo: &ImageTensor<S>,
    m: &MaskSpec,
    b: &BlendSpec,
    means: [f64; 3],
) -> Result<ImageTensor<S>> {
    let raw = outpaint(g, photo, m, means)?;
    blend(photo, &raw, m, b)
}

/// Repeated extrapolation: each composite is downscaled back to the kept
/// size and re-outpainted, widening the field of view by full/keep per step.
pub fn recursive_outpaint<S: Scalar>(
    g: &mut Network<S>,
    photo: &ImageTensor<S>,
    steps: usize,
    m: &MaskSpec,
    b: &BlendSpec,
    means: [f64; 3],
) -> Result<Vec<ImageTensor<S>>> {
    if steps == 0 {
        return Err(Error::config("recursive steps must be >= 1"));
    }
    let mut center = if photo.dim().1 == m.keep_size {
        photo.clone()
    } else {
        resize_bilinear(photo, m.keep_size, m.keep_size)
    };
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let composite = outpaint_blend(g, &center, m, b, means)?;
        center = resize_bilinear(&composite, m.keep_size, m.keep_size);
        out.push(composite);
    }
    Ok(out)
}

/// Field-of-view widening factor after `k` recursion steps.
pub fn effective_zoom(m: &MaskSpec, k: usize) -> f64 {
    (m.full_size as f64 / m.keep_size as f64).powi(k as i32)
}
