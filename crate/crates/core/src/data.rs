//! Dataset ingestion and self-supervised pair synthesis: resize, normalize,
//! mask out the outer band, fill it with the train-set channel means.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::ImageTensor;

/// Geometry of the kept center square and the hallucinated band around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSpec {
    pub full_size: usize,
    pub keep_size: usize,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            full_size: 192,
            keep_size: 128,
        }
    }
}

impl MaskSpec {
    pub fn new(full_size: usize, keep_size: usize) -> Result<Self> {
        let m = MaskSpec {
            full_size,
            keep_size,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keep_size >= self.full_size {
            return Err(Error::config(format!(
                "keep_size {} must be smaller than full_size {}",
                self.keep_size, self.full_size
            )));
        }
        if self.keep_size % 2 != 0 || self.full_size % 2 != 0 {
            return Err(Error::config("full_size and keep_size must be even"));
        }
        Ok(())
    }

    /// Width of the hallucinated band on each side.
    pub fn band(&self) -> usize {
        (self.full_size - self.keep_size) / 2
    }

    /// Number of pixels outside the kept square.
    pub fn masked_pixel_count(&self) -> usize {
        self.full_size * self.full_size - self.keep_size * self.keep_size
    }

    /// Fraction of output pixels that are hallucinated.
    pub fn hallucinated_fraction(&self) -> f64 {
        let r = self.keep_size as f64 / self.full_size as f64;
        1.0 - r * r
    }

    /// Output area over input area.
    pub fn area_ratio(&self) -> f64 {
        let r = self.full_size as f64 / self.keep_size as f64;
        r * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::config(format!("unknown split '{other}'"))),
        }
    }
}

/// An ordered list of decodable images under one directory.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub root: PathBuf,
    pub split: Split,
    files: Vec<PathBuf>,
    pub skipped: usize,
}

impl DatasetHandle {
    pub fn size(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn path(&self, index: usize) -> &Path {
        &self.files[index]
    }

    /// Image id used in reports: file stem, or the full file name if the
    /// stem is not unique enough for the caller.
    pub fn image_id(&self, index: usize) -> String {
        self.files[index]
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("img{index}"))
    }

    /// Decode and preprocess one image to `full_size`.
    pub fn load_preprocessed<S: Scalar>(&self, index: usize, full_size: usize) -> Result<ImageTensor<S>> {
        let raw = load_image(&self.files[index])?;
        Ok(preprocess(&raw, full_size))
    }
}

fn has_image_extension(p: &Path) -> bool {
    matches!(
        p.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

/// Scan `root` (or `root/<split>` when that subdirectory exists) for images,
/// in lexicographic path order. Files whose headers do not decode are skipped
/// with a warning on stderr and counted in `skipped`.
pub fn load_dataset(root: &Path, split: Split, limit: Option<usize>) -> Result<DatasetHandle> {
    let dir = {
        let sub = root.join(split.to_string());
        if sub.is_dir() {
            sub
        } else {
            root.to_path_buf()
        }
    };
    if !dir.is_dir() {
        return Err(Error::config(format!(
            "dataset directory {} does not exist",
            dir.display()
        )));
    }
    let mut candidates: Vec<PathBuf> = walkdir::WalkDir::new(&dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| has_image_extension(p))
        .collect();
    candidates.sort();

    let mut files = Vec::new();
    let mut skipped = 0usize;
    for p in candidates {
        if let Some(limit) = limit {
            if files.len() >= limit {
                break;
            }
        }
        match image::image_dimensions(&p) {
            Ok(_) => files.push(p),
            Err(err) => {
                eprintln!("warning: skipping undecodable image {}: {err}", p.display());
                skipped += 1;
            }
        }
    }
    if files.is_empty() {
        return Err(Error::config(format!(
            "no decodable images found under {} ({} skipped)",
            dir.display(),
            skipped
        )));
    }
    Ok(DatasetHandle {
        root: dir,
        split,
        files,
        skipped,
    })
}

/// Decode a file to a (3, H, W) tensor in [-1, 1]. Grayscale images are
/// replicated to 3 channels, alpha is dropped.
pub fn load_image<S: Scalar>(path: &Path) -> Result<ImageTensor<S>> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Array3::<S>::zeros((3, h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[c, y as usize, x as usize]] = u8_to_unit::<S>(p.0[c]);
        }
    }
    Ok(out)
}

/// Write a (3, H, W) tensor in [-1, 1] as an 8-bit PNG/JPEG (by extension).
pub fn save_image<S: Scalar>(path: &Path, img: &ImageTensor<S>) -> Result<()> {
    let (c, h, w) = img.dim();
    assert_eq!(c, 3);
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                unit_to_u8(img[[0, y, x]]),
                unit_to_u8(img[[1, y, x]]),
                unit_to_u8(img[[2, y, x]]),
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)?;
    Ok(())
}

/// 8-bit value to the [-1, 1] convention: 2 * v/255 - 1.
pub fn u8_to_unit<S: Scalar>(v: u8) -> S {
    S::from_f64(2.0 * (v as f64 / 255.0) - 1.0)
}

fn unit_to_u8<S: Scalar>(v: S) -> u8 {
    let x = (v.as_f64() + 1.0) / 2.0 * 255.0;
    x.round().clamp(0.0, 255.0) as u8
}

/// Center-crop to square, then bilinear-resize to `full_size`. Values pass
/// through untouched when the input is already square and the right size,
/// which makes the operation idempotent.
pub fn preprocess<S: Scalar>(raw: &ImageTensor<S>, full_size: usize) -> ImageTensor<S> {
    let (_, h, w) = raw.dim();
    let side = h.min(w);
    let cropped = if h == w {
        raw.clone()
    } else {
        let top = (h - side) / 2;
        let left = (w - side) / 2;
        raw.slice(ndarray::s![.., top..top + side, left..left + side])
            .to_owned()
    };
    resize_bilinear(&cropped, full_size, full_size)
}

/// Bilinear resampling in the continuous value domain (no 8-bit round trip).
/// A same-size call returns the input unchanged.
pub fn resize_bilinear<S: Scalar>(img: &ImageTensor<S>, out_h: usize, out_w: usize) -> ImageTensor<S> {
    let (c, h, w) = img.dim();
    if h == out_h && w == out_w {
        return img.clone();
    }
    let mut out = Array3::<S>::zeros((c, out_h, out_w));
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for oy in 0..out_h {
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = S::from_f64(fy - y0 as f64);
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = S::from_f64(fx - x0 as f64);
            let one = S::one();
            for ci in 0..c {
                let tl = img[[ci, y0, x0]];
                let tr = img[[ci, y0, x1]];
                let bl = img[[ci, y1, x0]];
                let br = img[[ci, y1, x1]];
                let top = tl * (one - wx) + tr * wx;
                let bot = bl * (one - wx) + br * wx;
                out[[ci, oy, ox]] = top * (one - wy) + bot * wy;
            }
        }
    }
    out
}

/// Build the masked generator input: the kept center square is copied from
/// `x` bit-for-bit, everything outside is set to the per-channel train-set
/// mean. The returned mask is 1 on the hallucination band, 0 on the center.
pub fn make_masked_input<S: Scalar>(
    x: &ImageTensor<S>,
    m: &MaskSpec,
    means: [f64; 3],
) -> (ImageTensor<S>, Array2<S>) {
    let (c, h, w) = x.dim();
    debug_assert_eq!((c, h, w), (3, m.full_size, m.full_size));
    let band = m.band();
    let lo = band;
    let hi = band + m.keep_size;
    let mut masked = Array3::<S>::zeros((3, h, w));
    for ci in 0..3 {
        let fill = S::from_f64(means[ci]);
        for y in 0..h {
            for xx in 0..w {
                masked[[ci, y, xx]] = if y >= lo && y < hi && xx >= lo && xx < hi {
                    x[[ci, y, xx]]
                } else {
                    fill
                };
            }
        }
    }
    let mut mask = Array2::<S>::zeros((h, w));
    for y in 0..h {
        for xx in 0..w {
            if !(y >= lo && y < hi && xx >= lo && xx < hi) {
                mask[[y, xx]] = S::one();
            }
        }
    }
    (masked, mask)
}

/// Per-channel mean over all preprocessed images of the dataset, in [-1, 1].
pub fn channel_means(d: &DatasetHandle, full_size: usize) -> Result<[f64; 3]> {
    if d.is_empty() {
        return Err(Error::config("cannot compute channel means of empty dataset"));
    }
    let mut acc = [0.0f64; 3];
    let mut count = 0usize;
    for i in 0..d.size() {
        let img: ImageTensor<f64> = d.load_preprocessed(i, full_size)?;
        for c in 0..3 {
            acc[c] += img.index_axis(ndarray::Axis(0), c).sum();
        }
        count += full_size * full_size;
    }
    Ok([acc[0] / count as f64, acc[1] / count as f64, acc[2] / count as f64])
}

/// `key=value` stats file: size and per-channel means.
pub fn write_stats_file(path: &Path, d: &DatasetHandle, means: [f64; 3]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write!(
        f,
        "size={}\nmean_r={:.6}\nmean_g={:.6}\nmean_b={:.6}\n",
        d.size(),
        means[0],
        means[1],
        means[2]
    )
    .map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read back a stats file written by [`write_stats_file`].
pub fn read_stats_file(path: &Path) -> Result<(usize, [f64; 3])> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut size = None;
    let mut means = [None; 3];
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else {
            continue;
        };
        match k {
            "size" => size = Some(v.parse::<usize>().map_err(|e| Error::config(e.to_string()))?),
            "mean_r" => means[0] = Some(v.parse::<f64>().map_err(|e| Error::config(e.to_string()))?),
            "mean_g" => means[1] = Some(v.parse::<f64>().map_err(|e| Error::config(e.to_string()))?),
            "mean_b" => means[2] = Some(v.parse::<f64>().map_err(|e| Error::config(e.to_string()))?),
            other => return Err(Error::config(format!("unknown stats key '{other}'"))),
        }
    }
    match (size, means) {
        (Some(s), [Some(r), Some(g), Some(b)]) => Ok((s, [r, g, b])),
        _ => Err(Error::config(format!(
            "stats file {} is missing keys",
            path.display()
        ))),
    }
}

/// Deterministic per-epoch shuffle: depends only on (seed, epoch), so a
/// resumed run sees the same order as an uninterrupted one.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64);
    order.shuffle(&mut rng);
    order
}
