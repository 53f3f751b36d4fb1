//! Learning-curve rendering: all loss columns of a metrics CSV vs epoch,
//! restart epochs marked with vertical lines. Kept deliberately simple (no
//! text labels); colors follow the column order documented on `render`.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::training::MetricsRow;

const WIDTH: u32 = 900;
const HEIGHT: u32 = 540;
const MARGIN: u32 = 40;

const COLORS: [Rgb<u8>; 4] = [
    Rgb([31, 119, 180]),  // l_rec: blue
    Rgb([255, 127, 14]),  // l_adv: orange
    Rgb([44, 160, 44]),   // l_g: green
    Rgb([148, 103, 189]), // l_d: purple
];
const RESTART_COLOR: Rgb<u8> = Rgb([0, 170, 0]);

fn draw_line(img: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (x0 + (x1 - x0) * t).round() as i64;
        let y = (y0 + (y1 - y0) * t).round() as i64;
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Render loss curves (l_rec, l_adv, l_g, l_d in blue/orange/green/purple)
/// to a PNG. `restarts` are epochs where training resumed.
pub fn render(rows: &[MetricsRow], restarts: &[usize], out: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("cannot plot an empty metrics CSV"));
    }
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));

    let min_epoch = rows.iter().map(|r| r.epoch).min().unwrap() as f64;
    let max_epoch = rows.iter().map(|r| r.epoch).max().unwrap() as f64;
    let columns: Vec<Vec<f64>> = vec![
        rows.iter().map(|r| r.l_rec).collect(),
        rows.iter().map(|r| r.l_adv).collect(),
        rows.iter().map(|r| r.l_g).collect(),
        rows.iter().map(|r| r.l_d).collect(),
    ];
    let max_val = columns
        .iter()
        .flatten()
        .copied()
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let plot_w = (WIDTH - 2 * MARGIN) as f64;
    let plot_h = (HEIGHT - 2 * MARGIN) as f64;
    let x_of = |epoch: f64| {
        if max_epoch > min_epoch {
            MARGIN as f64 + (epoch - min_epoch) / (max_epoch - min_epoch) * plot_w
        } else {
            MARGIN as f64 + plot_w / 2.0
        }
    };
    let y_of = |v: f64| MARGIN as f64 + (1.0 - v / max_val) * plot_h;

    // axes
    let axis = Rgb([0, 0, 0]);
    draw_line(
        &mut img,
        MARGIN as f64,
        (HEIGHT - MARGIN) as f64,
        (WIDTH - MARGIN) as f64,
        (HEIGHT - MARGIN) as f64,
        axis,
    );
    draw_line(
        &mut img,
        MARGIN as f64,
        MARGIN as f64,
        MARGIN as f64,
        (HEIGHT - MARGIN) as f64,
        axis,
    );

    for &e in restarts {
        let x = x_of(e as f64);
        draw_line(&mut img, x, MARGIN as f64, x, (HEIGHT - MARGIN) as f64, RESTART_COLOR);
    }

    for (ci, col) in columns.iter().enumerate() {
        for w in rows.windows(2).zip(col.windows(2)) {
            let (rw, vw) = w;
            draw_line(
                &mut img,
                x_of(rw[0].epoch as f64),
                y_of(vw[0]),
                x_of(rw[1].epoch as f64),
                y_of(vw[1]),
                COLORS[ci],
            );
        }
        // single-row CSVs still get a visible marker
        if rows.len() == 1 {
            draw_line(
                &mut img,
                x_of(rows[0].epoch as f64) - 3.0,
                y_of(col[0]),
                x_of(rows[0].epoch as f64) + 3.0,
                y_of(col[0]),
                COLORS[ci],
            );
        }
    }

    img.save(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::MetricsRow;

    fn row(epoch: usize, v: f64) -> MetricsRow {
        MetricsRow {
            epoch,
            l_rec: v,
            l_adv: v * 0.1,
            l_g: v,
            l_d: 2.0 - v,
            lambda_adv: 0.001,
        }
    }

    #[test]
    fn two_row_csv_renders_a_nonempty_png() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("curves.png");
        render(&[row(1, 0.9), row(2, 0.7)], &[], &out).unwrap();
        let meta = std::fs::metadata(&out).unwrap();
        assert!(meta.len() > 0);
        let img = image::open(&out).unwrap();
        assert_eq!(img.width(), 900);
        assert_eq!(img.height(), 540);
    }

    #[test]
    fn single_row_and_restart_markers_still_render() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("one.png");
        render(&[row(5, 0.5)], &[5], &out).unwrap();
        assert!(out.exists());
    }

    #[test]
    fn empty_metrics_is_an_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("none.png");
        assert!(render(&[], &[], &out).is_err());
        assert!(!out.exists());
    }
}
