use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array4, Axis};

use super::losses::*;
use super::{AdvMode, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::data::{self, DatasetHandle, MaskSpec};
use crate::error::{Error, Result};
use crate::models::{build_discriminator, build_generator, DiscriminatorConfig, GeneratorConfig};
use crate::nn::{Adam, Mode};
use crate::scalar::Scalar;
use crate::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub l_rec: f64,
    pub l_adv: f64,
    pub l_g: f64,
    pub l_d: f64,
    pub lambda_adv: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "epoch,l_rec,l_adv,l_g,l_d,lambda_adv";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.epoch, self.l_rec, self.l_adv, self.l_g, self.l_d, self.lambda_adv
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::config(format!("bad metrics row '{line}'")));
        }
        let f = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::config(format!("bad metrics value '{s}': {e}")))
        };
        Ok(MetricsRow {
            epoch: parts[0]
                .parse()
                .map_err(|e| Error::config(format!("bad epoch '{}': {e}", parts[0])))?,
            l_rec: f(parts[1])?,
            l_adv: f(parts[2])?,
            l_g: f(parts[3])?,
            l_d: f(parts[4])?,
            lambda_adv: f(parts[5])?,
        })
    }
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(MetricsRow::parse_csv_line)
        .collect()
}

pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub final_checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
}

/// Per-batch schedule weights plus band weighting for the L1 term.
fn rec_grad_weighted<S: Scalar>(
    x: &Array4<S>,
    gx: &Array4<S>,
    mask: &MaskSpec,
    band_weight: f64,
) -> (S, Array4<S>) {
    if (band_weight - 1.0).abs() < f64::EPSILON {
        let l = reconstruction_loss(x, gx).expect("shapes match");
        return (l, reconstruction_loss_grad(x, gx));
    }
    let (n, c, h, w) = x.dim();
    let band = mask.band();
    let lo = band;
    let hi = band + mask.keep_size;
    let bw = band_weight;
    let mut wsum = 0.0f64;
    for y in 0..h {
        for xx in 0..w {
            let inside = y >= lo && y < hi && xx >= lo && xx < hi;
            wsum += if inside { 1.0 } else { bw };
        }
    }
    wsum *= (n * c) as f64;
    let mut loss = 0.0f64;
    let mut grad = Array4::<S>::zeros(x.raw_dim());
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let inside = y >= lo && y < hi && xx >= lo && xx < hi;
                    let wgt = if inside { 1.0 } else { bw };
                    let d = gx[[ni, ci, y, xx]].as_f64() - x[[ni, ci, y, xx]].as_f64();
                    loss += wgt * d.abs();
                    grad[[ni, ci, y, xx]] = S::from_f64(wgt * d.signum() / wsum);
                }
            }
        }
    }
    (S::from_f64(loss / wsum), grad)
}

fn check_finite(value: f64, term: &'static str, epoch: usize, step: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { term, epoch, step })
    }
}

fn stack_batch<S: Scalar>(images: &[ImageTensor<S>], idx: &[usize]) -> Array4<S> {
    let (c, h, w) = images[idx[0]].dim();
    let mut out = Array4::<S>::zeros((idx.len(), c, h, w));
    for (bi, &i) in idx.iter().enumerate() {
        out.index_axis_mut(Axis(0), bi).assign(&images[i]);
    }
    out
}

/// Full training entry point. When `resume` is given, networks, optimizer
/// states and the epoch counter come from the checkpoint and `tc` only
/// overrides the run plan (epoch target, schedule mode, ...).
#[allow(clippy::too_many_arguments)]
pub fn train<S: Scalar>(
    tc: &TrainConfig,
    gen_cfg: &GeneratorConfig,
    disc_cfg: &DiscriminatorConfig,
    mask: MaskSpec,
    dataset: &DatasetHandle,
    means: Option<[f64; 3]>,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainOutcome> {
    tc.validate()?;
    mask.validate()?;
    if mask.full_size != gen_cfg.input_size {
        return Err(Error::config(format!(
            "mask full_size {} must match generator input_size {}",
            mask.full_size, gen_cfg.input_size
        )));
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let ckpt_dir = out_dir.join("ckpt");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let metrics_path = out_dir.join("metrics.csv");

    // Restore or build.
    let (mut gen, mut disc, mut adam_g, mut adam_d, start_epoch, means) = match resume {
        Some(ckpt_path) => {
            let ckpt = Checkpoint::<S>::load(ckpt_path)?;
            let (g, d) = ckpt.restore_networks()?;
            let mut ag = Adam::<S>::new(tc.learning_rate, tc.adam_beta1, tc.adam_beta2);
            ag.state = ckpt.g_adam.clone();
            let mut ad = Adam::<S>::new(tc.learning_rate, tc.adam_beta1, tc.adam_beta2);
            ad.state = ckpt.d_adam.clone();
            (g, d, ag, ad, ckpt.epoch as usize, ckpt.means)
        }
        None => {
            let g = build_generator::<S>(gen_cfg, tc.seed)?;
            // Offset so G and D do not share an init stream.
            let d = build_discriminator::<S>(disc_cfg, tc.seed.wrapping_add(1))?;
            let ag = Adam::<S>::new(tc.learning_rate, tc.adam_beta1, tc.adam_beta2);
            let ad = Adam::<S>::new(tc.learning_rate, tc.adam_beta1, tc.adam_beta2);
            let m = match means {
                Some(m) => m,
                None => data::channel_means(dataset, gen_cfg.input_size)?,
            };
            (g, d, ag, ad, 0usize, m)
        }
    };

    // Metrics CSV: keep rows up to the resume point, drop anything newer.
    let mut metrics: Vec<MetricsRow> = if resume.is_some() && metrics_path.exists() {
        read_metrics_csv(&metrics_path)?
            .into_iter()
            .filter(|r| r.epoch <= start_epoch)
            .collect()
    } else {
        Vec::new()
    };
    write_metrics_csv(&metrics_path, &metrics)?;
    if resume.is_some() {
        let restarts = out_dir.join("restarts.txt");
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&restarts)
            .map_err(|e| Error::io(&restarts, e))?;
        writeln!(f, "{}", start_epoch + 1).map_err(|e| Error::io(&restarts, e))?;
    }

    // Preload the whole dataset; desk-scale sets fit in memory comfortably.
    let images: Vec<ImageTensor<S>> = (0..dataset.size())
        .map(|i| dataset.load_preprocessed(i, gen_cfg.input_size))
        .collect::<Result<_>>()?;
    let masked_images: Vec<ImageTensor<S>> = images
        .iter()
        .map(|img| data::make_masked_input(img, &mask, means).0)
        .collect();

    let n_images = images.len();

    for epoch in start_epoch + 1..=tc.epochs {
        let lambda = tc.adv_mode.lambda(epoch);
        let sched = ScheduleState::<S>::with_lambda(epoch, lambda);
        let order = data::epoch_order(n_images, tc.seed, epoch);

        let mut sum_rec = 0.0;
        let mut sum_adv = 0.0;
        let mut sum_g = 0.0;
        let mut sum_d = 0.0;
        let mut batches = 0usize;

        for (step, chunk) in order.chunks(tc.batch_size).enumerate() {
            let x = stack_batch(&images, chunk);
            let masked = stack_batch(&masked_images, chunk);

            gen.zero_grad();
            let gx = gen.forward(masked, Mode::Train)?;

            let (l_rec, rec_grad) = rec_grad_weighted(&x, &gx, &mask, tc.band_weight);
            check_finite(l_rec.as_f64(), "L_rec", epoch, step)?;

            let (l_adv, l_d) = if matches!(tc.adv_mode, AdvMode::Off) {
                // Pure reconstruction: G step only, sentinel zeros elsewhere.
                gen.backward(rec_grad);
                adam_g.step(&mut gen.params_mut());
                (0.0, 0.0)
            } else {
                // Discriminator step (G frozen, fake batch detached). The two
                // L_D terms are separable, so each forward is followed by its
                // own backward before the layer caches are overwritten.
                disc.zero_grad();
                let real_scores = disc.forward(x.clone(), Mode::Train)?;
                let fake_scores = {
                    let (dreal, _) = discriminator_loss_grad(&real_scores, &real_scores);
                    disc.backward(dreal);
                    disc.forward(gx.clone(), Mode::Train)?
                };
                let l_d = discriminator_loss(&real_scores, &fake_scores).as_f64();
                check_finite(l_d, "L_D", epoch, step)?;
                let (_, dfake) = discriminator_loss_grad(&real_scores, &fake_scores);
                disc.backward(dfake);
                adam_d.step(&mut disc.params_mut());

                // Generator step (D frozen; its grads are cleared next batch).
                disc.zero_grad();
                let fake_for_g = disc.forward(gx.clone(), Mode::Train)?;
                let l_adv = adversarial_loss_g(&fake_for_g).as_f64();
                check_finite(l_adv, "L_adv", epoch, step)?;
                let mut dscore = adversarial_loss_g_grad(&fake_for_g);
                dscore.mapv_inplace(|v| v * sched.lambda_adv);
                let dgx_adv = disc.backward(dscore);
                let mut dgx = rec_grad;
                dgx.mapv_inplace(|v| v * sched.lambda_rec);
                dgx += &dgx_adv;
                gen.backward(dgx);
                adam_g.step(&mut gen.params_mut());
                (l_adv, l_d)
            };

            let l_g = generator_loss(l_rec, S::from_f64(l_adv), &sched).as_f64();
            check_finite(l_g, "L_G", epoch, step)?;

            sum_rec += l_rec.as_f64();
            sum_adv += l_adv;
            sum_g += l_g;
            sum_d += l_d;
            batches += 1;
        }

        let row = MetricsRow {
            epoch,
            l_rec: sum_rec / batches as f64,
            l_adv: sum_adv / batches as f64,
            l_g: sum_g / batches as f64,
            l_d: sum_d / batches as f64,
            lambda_adv: if matches!(tc.adv_mode, AdvMode::Off) {
                0.0
            } else {
                lambda
            },
        };
        metrics.push(row);
        append_metrics_row(&metrics_path, &row)?;

        let ckpt = Checkpoint::from_networks(
            &gen,
            &disc,
            mask,
            means,
            epoch as u64,
            adam_g.state.clone(),
            adam_d.state.clone(),
        );
        ckpt.save(&ckpt_dir.join("last.ckpt"))?;
        if epoch % tc.checkpoint_every == 0 {
            ckpt.save(&ckpt_dir.join(format!("epoch_{epoch:03}.ckpt")))?;
        }
    }

    Ok(TrainOutcome {
        metrics,
        final_checkpoint: ckpt_dir.join("last.ckpt"),
        metrics_csv: metrics_path,
    })
}

fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", MetricsRow::CSV_HEADER).map_err(|e| Error::io(path, e))?;
    for r in rows {
        writeln!(f, "{}", r.to_csv_line()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn append_metrics_row(path: &Path, row: &MetricsRow) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{}", row.to_csv_line()).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{DiscriminatorConfig, GeneratorConfig};

    #[test]
    fn metrics_row_round_trips_through_csv() {
        let row = MetricsRow {
            epoch: 17,
            l_rec: 0.123456,
            l_adv: 1.5,
            l_g: 0.25,
            l_d: 2.0,
            lambda_adv: 0.005,
        };
        let line = row.to_csv_line();
        assert_eq!(line, "17,0.123456,1.500000,0.250000,2.000000,0.005000");
        let back = MetricsRow::parse_csv_line(&line).unwrap();
        assert_eq!(back, row);
        assert!(MetricsRow::parse_csv_line("1,2,3").is_err());
        assert!(MetricsRow::parse_csv_line("x,0,0,0,0,0").is_err());
    }

    #[test]
    fn metrics_csv_reader_skips_header_and_blank_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        std::fs::write(
            &path,
            format!(
                "{}\n1,0.5,0.0,0.5,0.0,0.0\n\n2,0.4,0.1,0.39,1.9,0.001\n",
                MetricsRow::CSV_HEADER
            ),
        )
        .unwrap();
        let rows = read_metrics_csv(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].epoch, 1);
        assert_eq!(rows[1].l_d, 1.9);
    }

    #[test]
    fn band_weighting_reduces_to_plain_l1_at_weight_one() {
        let mask = MaskSpec::new(16, 8).unwrap();
        let x = Array4::<f64>::from_shape_fn((1, 3, 16, 16), |(_, c, y, xx)| {
            ((c + y + xx) % 5) as f64 / 2.5 - 1.0
        });
        let gx = x.mapv(|v| v * 0.5);
        let (l1, g1) = rec_grad_weighted(&x, &gx, &mask, 1.0);
        let l_plain = reconstruction_loss(&x, &gx).unwrap();
        let g_plain = reconstruction_loss_grad(&x, &gx);
        assert!((l1 - l_plain).abs() < 1e-12);
        for (&a, &b) in g1.iter().zip(g_plain.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Up-weighting the band changes the normalization but stays finite
        // and keeps signs.
        let (l2, g2) = rec_grad_weighted(&x, &gx, &mask, 2.0);
        assert!(l2.is_finite() && l2 > 0.0);
        for (&a, &b) in g2.iter().zip(g_plain.iter()) {
            assert!(a.signum() == b.signum() || a == 0.0 || b == 0.0);
        }
    }

    fn tiny_dataset(n: usize) -> (tempfile::TempDir, DatasetHandle) {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..n {
            let img = image::RgbImage::from_fn(16, 16, |x, y| {
                image::Rgb([
                    ((x * 16 + i as u32 * 40) % 256) as u8,
                    ((y * 16) % 256) as u8,
                    128,
                ])
            });
            img.save(dir.path().join(format!("t{i}.png"))).unwrap();
        }
        let data = data::load_dataset(dir.path(), data::Split::Train, None).unwrap();
        (dir, data)
    }

    fn miniature_tc(epochs: usize, adv: AdvMode) -> TrainConfig {
        TrainConfig {
            epochs,
            learning_rate: 1e-3,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 2,
            adv_mode: adv,
            seed: 5,
            band_weight: 1.0,
            checkpoint_every: 2,
        }
    }

    #[test]
    fn miniature_training_writes_metrics_and_checkpoints() {
        let (_tmp, data) = tiny_dataset(4);
        let out = tempfile::tempdir().unwrap();
        let tc = miniature_tc(2, AdvMode::Scheduled);
        let mask = MaskSpec::new(16, 8).unwrap();
        let outcome = train::<f64>(
            &tc,
            &GeneratorConfig::miniature(),
            &DiscriminatorConfig::miniature(),
            mask,
            &data,
            None,
            out.path(),
            None,
        )
        .unwrap();
        assert_eq!(outcome.metrics.len(), 2);
        assert_eq!(outcome.metrics[0].epoch, 1);
        assert_eq!(outcome.metrics[0].lambda_adv, 0.001);
        assert!(outcome.metrics_csv.exists());
        assert!(outcome.final_checkpoint.exists());
        assert!(out.path().join("ckpt/epoch_002.ckpt").exists());
        assert!(!out.path().join("ckpt/epoch_001.ckpt").exists());
        // CSV rows are quantized to six decimals.
        let rows = read_metrics_csv(&outcome.metrics_csv).unwrap();
        assert_eq!(rows.len(), outcome.metrics.len());
        for (a, b) in rows.iter().zip(outcome.metrics.iter()) {
            assert_eq!(a.epoch, b.epoch);
            assert!((a.l_rec - b.l_rec).abs() < 1e-6);
            assert!((a.l_g - b.l_g).abs() < 1e-6);
            assert!((a.l_d - b.l_d).abs() < 1e-6);
        }
    }

    #[test]
    fn reconstruction_only_mode_reports_zero_adversarial_terms() {
        let (_tmp, data) = tiny_dataset(2);
        let out = tempfile::tempdir().unwrap();
        let tc = miniature_tc(1, AdvMode::Off);
        let mask = MaskSpec::new(16, 8).unwrap();
        let outcome = train::<f64>(
            &tc,
            &GeneratorConfig::miniature(),
            &DiscriminatorConfig::miniature(),
            mask,
            &data,
            None,
            out.path(),
            None,
        )
        .unwrap();
        let row = outcome.metrics[0];
        assert_eq!(row.l_adv, 0.0);
        assert_eq!(row.l_d, 0.0);
        assert_eq!(row.lambda_adv, 0.0);
        assert!((row.l_g - row.l_rec).abs() < 1e-12);
    }

    #[test]
    fn resume_continues_the_epoch_counter_and_logs_the_restart() {
        let (_tmp, data) = tiny_dataset(2);
        let out = tempfile::tempdir().unwrap();
        let mask = MaskSpec::new(16, 8).unwrap();
        let gcfg = GeneratorConfig::miniature();
        let dcfg = DiscriminatorConfig::miniature();
        let tc2 = miniature_tc(2, AdvMode::Scheduled);
        let first = train::<f64>(&tc2, &gcfg, &dcfg, mask, &data, None, out.path(), None).unwrap();
        let tc4 = miniature_tc(4, AdvMode::Scheduled);
        let second = train::<f64>(
            &tc4,
            &gcfg,
            &dcfg,
            mask,
            &data,
            None,
            out.path(),
            Some(&first.final_checkpoint),
        )
        .unwrap();
        assert_eq!(second.metrics.len(), 4);
        assert_eq!(second.metrics[2].epoch, 3);
        // First two rows are preserved from the original run (re-read from
        // the CSV, so quantized to six decimals).
        for i in 0..2 {
            assert_eq!(second.metrics[i].epoch, first.metrics[i].epoch);
            assert!((second.metrics[i].l_rec - first.metrics[i].l_rec).abs() < 1e-6);
            assert!((second.metrics[i].l_d - first.metrics[i].l_d).abs() < 1e-6);
        }
        let restarts = std::fs::read_to_string(out.path().join("restarts.txt")).unwrap();
        assert_eq!(restarts.trim(), "3");
    }

    #[test]
    fn mask_and_generator_size_mismatch_is_rejected() {
        let (_tmp, data) = tiny_dataset(1);
        let out = tempfile::tempdir().unwrap();
        let tc = miniature_tc(1, AdvMode::Off);
        let mask = MaskSpec::new(24, 16).unwrap(); // generator expects 16
        assert!(train::<f64>(
            &tc,
            &GeneratorConfig::miniature(),
            &DiscriminatorConfig::miniature(),
            mask,
            &data,
            None,
            out.path(),
            None,
        )
        .is_err());
    }
}
