//! Aggregate MSE / realism metrics over a test set and extreme-sample
//! selection for qualitative galleries.

use std::io::Write;
use std::path::Path;

use ndarray::{Array4, Axis};

use crate::data::{make_masked_input, DatasetHandle, MaskSpec};
use crate::error::{Error, Result};
use crate::models::Network;
use crate::nn::Mode;
use crate::scalar::Scalar;
use crate::ImageTensor;

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub model_id: String,
    pub image_ids: Vec<String>,
    /// Full-image MSE of the raw generator output, in [0, 1] value scale.
    pub mse: Vec<f64>,
    /// Mean discriminator score per image, clamped to [0, 1]. Empty when no
    /// discriminator was supplied.
    pub realism: Vec<f64>,
    /// MSE restricted to the hallucinated band (secondary diagnostic).
    pub band_mse: Vec<f64>,
}

impl EvalReport {
    pub fn mean_mse(&self) -> f64 {
        mean(&self.mse)
    }

    pub fn mean_realism(&self) -> f64 {
        mean(&self.realism)
    }

    pub fn mean_band_mse(&self) -> f64 {
        mean(&self.band_mse)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// MSE between two [-1, 1] images measured in the [0, 1] value scale.
fn mse_unit_scale<S: Scalar>(a: &ImageTensor<S>, b: &ImageTensor<S>) -> f64 {
    let mut acc = 0.0;
    ndarray::Zip::from(a).and(b).for_each(|&x, &y| {
        let d = (x.as_f64() - y.as_f64()) / 2.0;
        acc += d * d;
    });
    acc / a.len() as f64
}

fn band_mse_unit_scale<S: Scalar>(a: &ImageTensor<S>, b: &ImageTensor<S>, m: &MaskSpec) -> f64 {
    let band = m.band();
    let lo = band;
    let hi = band + m.keep_size;
    let mut acc = 0.0;
    let mut count = 0usize;
    let (c, h, w) = a.dim();
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                if y >= lo && y < hi && x >= lo && x < hi {
                    continue;
                }
                let d = (a[[ci, y, x]].as_f64() - b[[ci, y, x]].as_f64()) / 2.0;
                acc += d * d;
                count += 1;
            }
        }
    }
    acc / count as f64
}

/// Run the generator (and optionally the discriminator) over a dataset in
/// inference mode and collect per-image metrics on the RAW, pre-blend output.
pub fn evaluate<S: Scalar>(
    g: &mut Network<S>,
    d: Option<&mut Network<S>>,
    data: &DatasetHandle,
    mask: &MaskSpec,
    means: [f64; 3],
    model_id: &str,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::config("cannot evaluate on an empty dataset"));
    }
    let mut report = EvalReport {
        model_id: model_id.to_string(),
        image_ids: Vec::new(),
        mse: Vec::new(),
        realism: Vec::new(),
        band_mse: Vec::new(),
    };
    let mut d = d;
    for i in 0..data.size() {
        let x: ImageTensor<S> = data.load_preprocessed(i, mask.full_size)?;
        let (masked, _) = make_masked_input(&x, mask, means);
        let mut batch = Array4::<S>::zeros((1, 3, mask.full_size, mask.full_size));
        batch.index_axis_mut(Axis(0), 0).assign(&masked);
        let gx = g.forward(batch, Mode::Eval)?;
        let gx_img = gx.index_axis(Axis(0), 0).to_owned();
        report.image_ids.push(data.image_id(i));
        report.mse.push(mse_unit_scale(&gx_img, &x));
        report.band_mse.push(band_mse_unit_scale(&gx_img, &x, mask));
        if let Some(disc) = d.as_deref_mut() {
            let scores = disc.forward(gx, Mode::Eval)?;
            let raw_mean = scores.iter().map(|s| s.as_f64()).sum::<f64>() / scores.len() as f64;
            report.realism.push(raw_mean.clamp(0.0, 1.0));
        }
    }
    Ok(report)
}

/// Per-image + mean full-image MSE of the raw generator output.
pub fn eval_mse<S: Scalar>(
    g: &mut Network<S>,
    data: &DatasetHandle,
    mask: &MaskSpec,
    means: [f64; 3],
) -> Result<(Vec<f64>, f64)> {
    let report = evaluate(g, None, data, mask, means, "mse")?;
    let m = report.mean_mse();
    Ok((report.mse, m))
}

/// Per-image + mean discriminator realism on raw generator outputs.
pub fn eval_realism<S: Scalar>(
    g: &mut Network<S>,
    d: &mut Network<S>,
    data: &DatasetHandle,
    mask: &MaskSpec,
    means: [f64; 3],
) -> Result<(Vec<f64>, f64)> {
    let report = evaluate(g, Some(d), data, mask, means, "realism")?;
    let m = report.mean_realism();
    Ok((report.realism, m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremeCriterion {
    LowMse,
    HighMse,
    HighRealism,
}

impl std::str::FromStr for ExtremeCriterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_mse" => Ok(ExtremeCriterion::LowMse),
            "high_mse" => Ok(ExtremeCriterion::HighMse),
            "high_realism" => Ok(ExtremeCriterion::HighRealism),
            other => Err(Error::config(format!("unknown criterion '{other}'"))),
        }
    }
}

/// Exact top/bottom-k image ids under the criterion; ties always break
/// toward the lexicographically smaller id.
pub fn select_extremes(
    report: &EvalReport,
    k: usize,
    criterion: ExtremeCriterion,
) -> Result<Vec<String>> {
    let values = match criterion {
        ExtremeCriterion::LowMse | ExtremeCriterion::HighMse => &report.mse,
        ExtremeCriterion::HighRealism => &report.realism,
    };
    if k > values.len() {
        return Err(Error::config(format!(
            "k = {k} exceeds dataset size {}",
            values.len()
        )));
    }
    let mut pairs: Vec<(f64, &String)> = values
        .iter()
        .copied()
        .zip(report.image_ids.iter())
        .collect();
    match criterion {
        ExtremeCriterion::LowMse => pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(b.1))
        }),
        ExtremeCriterion::HighMse | ExtremeCriterion::HighRealism => pairs.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(b.1))
        }),
    }
    Ok(pairs.into_iter().take(k).map(|(_, id)| id.clone()).collect())
}

/// `image_id,mse,realism,band_mse` rows plus a trailing `mean,...` summary.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "image_id,mse,realism,band_mse").map_err(|e| Error::io(path, e))?;
    for (i, id) in report.image_ids.iter().enumerate() {
        let realism = report.realism.get(i).copied().unwrap_or(f64::NAN);
        writeln!(
            f,
            "{id},{:.6},{:.6},{:.6}",
            report.mse[i], realism, report.band_mse[i]
        )
        .map_err(|e| Error::io(path, e))?;
    }
    writeln!(
        f,
        "mean,{:.6},{:.6},{:.6}",
        report.mean_mse(),
        report.mean_realism(),
        report.mean_band_mse()
    )
    .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Tile images into one horizontal-major grid (row-major, `cols` per row).
pub fn image_grid<S: Scalar>(images: &[ImageTensor<S>], cols: usize) -> ImageTensor<S> {
    assert!(!images.is_empty() && cols > 0);
    let (c, h, w) = images[0].dim();
    let rows = images.len().div_ceil(cols);
    let pad = 2usize;
    let gh = rows * h + (rows + 1) * pad;
    let gw = cols * w + (cols + 1) * pad;
    let mut grid = ndarray::Array3::<S>::from_elem((c, gh, gw), S::one());
    for (i, img) in images.iter().enumerate() {
        let r = i / cols;
        let cc = i % cols;
        let y0 = pad + r * (h + pad);
        let x0 = pad + cc * (w + pad);
        grid.slice_mut(ndarray::s![.., y0..y0 + h, x0..x0 + w])
            .assign(img);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset;
    use crate::models::{
        build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig,
    };
    use ndarray::Array3;
    use std::path::PathBuf;

    fn write_png(dir: &std::path::Path, name: &str, side: u32, value: u8) -> PathBuf {
        let path = dir.join(name);
        let img = image::RgbImage::from_pixel(side, side, image::Rgb([value, value, value]));
        img.save(&path).unwrap();
        path
    }

    fn black_dataset(n: usize) -> (tempfile::TempDir, DatasetHandle) {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..n {
            write_png(dir.path(), &format!("img_{i:02}.png"), 16, 0);
        }
        let data = load_dataset(dir.path(), crate::data::Split::Test, None).unwrap();
        (dir, data)
    }

    fn zeroed_generator() -> crate::models::Network<f64> {
        let cfg = GeneratorConfig::miniature();
        let mut g = build_generator::<f64>(&cfg, 1).unwrap();
        let last = format!("dec{}", cfg.encoder_channels.len());
        for p in g.params_mut() {
            if p.name.starts_with(&last) && !p.name.contains(".bn") {
                p.value.fill(0.0);
            }
        }
        g
    }

    fn biased_discriminator(bias: f64) -> crate::models::Network<f64> {
        let cfg = DiscriminatorConfig::miniature();
        let mut d = build_discriminator::<f64>(&cfg, 1).unwrap();
        let head = format!("d{}", cfg.channels.len() - 1);
        for p in d.params_mut() {
            if p.name.starts_with(&head) {
                if p.name.ends_with("bias") {
                    p.value.fill(bias);
                } else {
                    p.value.fill(0.0);
                }
            }
        }
        d
    }

    #[test]
    fn midgray_stub_against_black_images_scores_quarter_mse() {
        // A generator emitting constant 0 in [-1, 1] (i.e. mid-gray) against
        // all-black targets: per-pixel error 0.5 in value scale -> MSE 0.25.
        let (_tmp, data) = black_dataset(2);
        let mask = MaskSpec::new(16, 8).unwrap();
        let mut g = zeroed_generator();
        let (per_image, mean) = eval_mse(&mut g, &data, &mask, [0.0; 3]).unwrap();
        assert_eq!(per_image.len(), 2);
        for &m in &per_image {
            assert!((m - 0.25).abs() < 1e-6, "{m}");
        }
        assert!((mean - 0.25).abs() < 1e-6);
    }

    #[test]
    fn realism_is_the_clamped_mean_discriminator_score() {
        let (_tmp, data) = black_dataset(2);
        let mask = MaskSpec::new(16, 8).unwrap();
        let mut g = zeroed_generator();
        // Head weights zero, bias 1: every grid cell scores 1 -> realism 1.
        let mut d = biased_discriminator(1.0);
        let (r, mean) = eval_realism(&mut g, &mut d, &data, &mask, [0.0; 3]).unwrap();
        assert!(r.iter().all(|&v| (v - 1.0).abs() < 1e-9));
        assert!((mean - 1.0).abs() < 1e-9);
        // Bias -0.5: raw mean -0.5 clamps to 0.
        let mut d = biased_discriminator(-0.5);
        let (r, mean) = eval_realism(&mut g, &mut d, &data, &mask, [0.0; 3]).unwrap();
        assert!(r.iter().all(|&v| v == 0.0));
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn evaluate_handles_limited_single_image_datasets() {
        let dir = tempfile::tempdir().unwrap();
        write_png(dir.path(), "only.png", 16, 0);
        let data = load_dataset(dir.path(), crate::data::Split::Test, Some(1)).unwrap();
        assert_eq!(data.size(), 1);
        let mask = MaskSpec::new(16, 8).unwrap();
        let mut g = zeroed_generator();
        let report = evaluate(&mut g, None, &data, &mask, [0.0; 3], "m").unwrap();
        assert_eq!(report.image_ids, vec!["only"]);
        assert!(report.realism.is_empty());
    }

    fn toy_report() -> EvalReport {
        EvalReport {
            model_id: "toy".into(),
            image_ids: vec!["b".into(), "a".into(), "c".into(), "d".into()],
            mse: vec![0.3, 0.3, 0.1, 0.5],
            realism: vec![0.9, 0.9, 0.2, 0.4],
            band_mse: vec![0.0; 4],
        }
    }

    #[test]
    fn extremes_break_ties_toward_the_smaller_id() {
        let r = toy_report();
        // 'a' and 'b' tie at 0.3; 'a' must come first.
        let low = select_extremes(&r, 3, ExtremeCriterion::LowMse).unwrap();
        assert_eq!(low, vec!["c", "a", "b"]);
        let high = select_extremes(&r, 3, ExtremeCriterion::HighMse).unwrap();
        assert_eq!(high, vec!["d", "a", "b"]);
        let real = select_extremes(&r, 2, ExtremeCriterion::HighRealism).unwrap();
        assert_eq!(real, vec!["a", "b"]);
    }

    #[test]
    fn extremes_with_oversized_k_is_an_error() {
        let r = toy_report();
        assert!(select_extremes(&r, 5, ExtremeCriterion::LowMse).is_err());
        assert_eq!(
            select_extremes(&r, 4, ExtremeCriterion::LowMse).unwrap().len(),
            4
        );
    }

    #[test]
    fn low_and_high_extremes_are_disjoint_for_distinct_values() {
        let r = EvalReport {
            model_id: "toy".into(),
            image_ids: (0..6).map(|i| format!("i{i}")).collect(),
            mse: vec![0.6, 0.2, 0.9, 0.1, 0.4, 0.3],
            realism: vec![],
            band_mse: vec![0.0; 6],
        };
        let low = select_extremes(&r, 2, ExtremeCriterion::LowMse).unwrap();
        let high = select_extremes(&r, 2, ExtremeCriterion::HighMse).unwrap();
        assert_eq!(low, vec!["i3", "i1"]);
        assert_eq!(high, vec!["i2", "i0"]);
        assert!(low.iter().all(|id| !high.contains(id)));
    }

    #[test]
    fn extreme_selection_is_order_invariant() {
        let r = toy_report();
        let mut shuffled = r.clone();
        shuffled.image_ids.rotate_left(2);
        shuffled.mse.rotate_left(2);
        shuffled.realism.rotate_left(2);
        for crit in [
            ExtremeCriterion::LowMse,
            ExtremeCriterion::HighMse,
            ExtremeCriterion::HighRealism,
        ] {
            assert_eq!(
                select_extremes(&r, 3, crit).unwrap(),
                select_extremes(&shuffled, 3, crit).unwrap()
            );
        }
    }

    #[test]
    fn report_csv_has_header_rows_and_mean_line() {
        let r = toy_report();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_report_csv(&path, &r).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "image_id,mse,realism,band_mse");
        assert!(lines[1].starts_with("b,0.300000,0.900000,"));
        assert!(lines[5].starts_with("mean,0.300000,0.600000,"));
    }

    #[test]
    fn image_grid_tiles_with_white_padding() {
        let imgs: Vec<ImageTensor<f64>> = (0..3)
            .map(|i| Array3::from_elem((3, 4, 4), i as f64 * 0.1))
            .collect();
        let grid = image_grid(&imgs, 2);
        // 2 rows x 2 cols of 4^2 tiles with 2 px padding.
        assert_eq!(grid.dim(), (3, 2 * 4 + 3 * 2, 2 * 4 + 3 * 2));
        assert_eq!(grid[[0, 0, 0]], 1.0); // padding is white
        assert_eq!(grid[[0, 2, 2]], 0.0); // first tile
        assert_eq!(grid[[0, 2, 8]], 0.1); // second tile
        assert_eq!(grid[[0, 8, 2]], 0.2); // third tile
        assert_eq!(grid[[0, 8, 8]], 1.0); // empty slot stays white
    }
}
