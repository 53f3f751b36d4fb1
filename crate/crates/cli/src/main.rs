//! Single entry-point command for the outpainting toolkit.
//!
//! Every run is reproducible: the exact configuration is copied into the
//! output directory, all randomness is seeded, and flags always win over the
//! config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use outpaint_core::checkpoint::Checkpoint;
use outpaint_core::compositing::{outpaint, outpaint_blend, recursive_outpaint, BlendSpec};
use outpaint_core::config::RunConfig;
use outpaint_core::data::{
    load_dataset, load_image, preprocess, read_stats_file, save_image, write_stats_file, Split,
};
use outpaint_core::evaluation::{
    evaluate, image_grid, select_extremes, write_report_csv, ExtremeCriterion,
};
use outpaint_core::harmonization::{
    harmonize, load_pyramid, pyramid_cache_path, save_pyramid, train_refiner, InjectionSpec,
    RefinerRegistry, DEFAULT_MAX_SIDE, DEFAULT_MIN_SIZE, DEFAULT_SCALE_FACTOR,
};
use outpaint_core::training::{read_metrics_csv, train};
use outpaint_core::{Elem, ImageTensor};

/// Self-supervised image outpainting: hallucinate a band of new content
/// beyond all four edges of a photo.
///
/// Training defaults: Adam (learning rate 3e-4, beta1 0.5, beta2 0.999),
/// batch size 32, 200 epochs. The adversarial weight follows a staged
/// schedule: 0.001 for epochs 1-10, 0.005 for 11-30, 0.015 for 31-60 and
/// 0.040 from epoch 61 on; the reconstruction weight is always its
/// complement to one.
#[derive(Parser)]
#[command(name = "outpaint", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan a dataset and write its size and per-channel means to a stats file.
    Prepare(PrepareArgs),
    /// Train the generator (and optionally the discriminator) on a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test split: per-image MSE/realism CSV plus
    /// best/worst galleries.
    Eval(EvalArgs),
    /// Outpaint one image or a directory of images with a trained checkpoint.
    Outpaint(OutpaintArgs),
    /// Harmonize a raw outpainted image with the style of the original via a
    /// multi-scale refiner pyramid.
    Harmonize(HarmonizeArgs),
    /// Render the learning curves of a metrics CSV to a PNG.
    Plot(PlotArgs),
}

#[derive(Args)]
struct ConfigOverrides {
    /// Run configuration file (flat `key = value` lines); flags below win
    /// over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config preset: `default` (192 px inputs) or `small` (96 px inputs).
    #[arg(long)]
    preset: Option<String>,
    /// Number of training epochs [default: 200].
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate [default: 0.0003].
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Adam first-moment decay [default: 0.5].
    #[arg(long)]
    adam_beta1: Option<f64>,
    /// Adam second-moment decay [default: 0.999].
    #[arg(long)]
    adam_beta2: Option<f64>,
    /// Images per batch [default: 32].
    #[arg(long)]
    batch_size: Option<usize>,
    /// Master random seed for init and shuffling [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Adversarial mode: `off`, `scheduled` (0.001 / 0.005 / 0.015 / 0.040
    /// at epochs 1-10 / 11-30 / 31-60 / 61+) or `fixed[:lambda]`.
    #[arg(long)]
    adv_mode: Option<String>,
    /// Full canvas side in pixels; the generator hallucinates the border
    /// band between this and the kept side [default: 192].
    #[arg(long)]
    input_size: Option<usize>,
    /// Side of the kept center square [default: 128].
    #[arg(long)]
    keep_size: Option<usize>,
    /// Width of the alpha ramp used when compositing [default: 16].
    #[arg(long)]
    blend_band: Option<usize>,
    /// Extra `key=value` config overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigOverrides {
    fn build(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let mut c = RunConfig::default();
                c.apply_text(&text)?;
                c
            }
            None => RunConfig::default(),
        };
        if let Some(p) = &self.preset {
            cfg.set("preset", p)?;
        }
        if let Some(v) = self.epochs {
            cfg.set("epochs", &v.to_string())?;
        }
        if let Some(v) = self.learning_rate {
            cfg.set("learning_rate", &v.to_string())?;
        }
        if let Some(v) = self.adam_beta1 {
            cfg.set("adam_beta1", &v.to_string())?;
        }
        if let Some(v) = self.adam_beta2 {
            cfg.set("adam_beta2", &v.to_string())?;
        }
        if let Some(v) = self.batch_size {
            cfg.set("batch_size", &v.to_string())?;
        }
        if let Some(v) = self.seed {
            cfg.set("seed", &v.to_string())?;
        }
        if let Some(v) = &self.adv_mode {
            cfg.set("adv_mode", v)?;
        }
        if let Some(v) = self.input_size {
            cfg.set("input_size", &v.to_string())?;
        }
        if let Some(v) = self.keep_size {
            cfg.set("keep_size", &v.to_string())?;
        }
        if let Some(v) = self.blend_band {
            cfg.set("blend_band", &v.to_string())?;
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set '{kv}': expected KEY=VALUE"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct PrepareArgs {
    /// Dataset root (uses a `<split>` subdirectory when present).
    #[arg(long)]
    data: PathBuf,
    /// Stats file to write.
    #[arg(long)]
    out: PathBuf,
    /// Split to scan [default: train].
    #[arg(long, default_value = "train")]
    split: String,
    /// Canvas side used when averaging [default: 192].
    #[arg(long, default_value_t = 192)]
    size: usize,
    /// Only use the first N images.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Output directory (`config.copy`, `metrics.csv`, `ckpt/`, `samples/`).
    #[arg(long)]
    out: PathBuf,
    /// Resume from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Split to train on [default: train].
    #[arg(long, default_value = "train")]
    split: String,
    /// Only use the first N images.
    #[arg(long)]
    limit: Option<usize>,
    /// Precomputed stats file (from `prepare`); means are computed from the
    /// dataset when absent.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Number of sample composites written to `samples/` after training
    /// [default: 4].
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset root.
    #[arg(long)]
    data: PathBuf,
    /// Output directory (`report.csv`, `samples/`).
    #[arg(long)]
    out: PathBuf,
    /// Split to evaluate [default: test].
    #[arg(long, default_value = "test")]
    split: String,
    /// Only use the first N images.
    #[arg(long)]
    limit: Option<usize>,
    /// Gallery size per criterion [default: 4].
    #[arg(long, default_value_t = 4)]
    k: usize,
    /// Skip the discriminator realism column.
    #[arg(long)]
    no_realism: bool,
}

#[derive(Args)]
struct OutpaintArgs {
    /// Trained checkpoint.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input image or directory of images.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Recursion depth: re-outpaint the downscaled composite k times,
    /// widening the field of view by (full/keep)^k.
    #[arg(long, default_value_t = 1)]
    recursive: usize,
    /// Additionally write the raw pre-blend generator output.
    #[arg(long)]
    keep_raw: bool,
    /// Width of the alpha ramp used when compositing [default: 16].
    #[arg(long)]
    blend_band: Option<usize>,
}

#[derive(Args)]
struct HarmonizeArgs {
    /// The original photo whose style to match.
    #[arg(long)]
    original: PathBuf,
    /// The raw outpainted image to harmonize.
    #[arg(long)]
    raw: PathBuf,
    /// Pyramid level to inject at, 0 = coarsest [default: 2].
    #[arg(long, default_value_t = 2)]
    inject_scale: usize,
    /// Output image file.
    #[arg(long)]
    out: PathBuf,
    /// Refiner plug-in name [default: baseline].
    #[arg(long, default_value = "baseline")]
    refiner: String,
    /// Per-level downscale factor [default: 0.75].
    #[arg(long, default_value_t = DEFAULT_SCALE_FACTOR)]
    scale_factor: f64,
    /// Coarsest admissible level side [default: 25].
    #[arg(long, default_value_t = DEFAULT_MIN_SIZE)]
    min_size: usize,
    /// Cap on the finest pyramid side [default: 512].
    #[arg(long, default_value_t = DEFAULT_MAX_SIDE)]
    max_side: usize,
    /// Directory for content-addressed pyramid caches; no caching when
    /// absent.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Metrics CSV produced by `train`.
    #[arg(long)]
    csv: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Restart-epoch list, one epoch per line; defaults to `restarts.txt`
    /// next to the CSV when present.
    #[arg(long)]
    restarts: Option<PathBuf>,
}

fn parse_split(s: &str) -> anyhow::Result<Split> {
    Ok(s.parse::<Split>()?)
}

fn cmd_prepare(a: &PrepareArgs) -> anyhow::Result<()> {
    let split = parse_split(&a.split)?;
    let data = load_dataset(&a.data, split, a.limit)?;
    let means = outpaint_core::data::channel_means(&data, a.size)?;
    write_stats_file(&a.out, &data, means)?;
    println!(
        "prepared {} images; means = [{:.6}, {:.6}, {:.6}] -> {}",
        data.size(),
        means[0],
        means[1],
        means[2],
        a.out.display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let cfg = a.overrides.build()?;
    let split = parse_split(&a.split)?;
    let data = load_dataset(&a.data, split, a.limit)?;
    let means = match &a.stats {
        Some(path) => Some(read_stats_file(path)?.1),
        None => None,
    };
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    cfg.save(&a.out.join("config.copy"))?;
    let outcome = train::<Elem>(
        &cfg.train,
        &cfg.gen,
        &cfg.disc,
        cfg.mask,
        &data,
        means,
        &a.out,
        a.resume.as_deref(),
    )?;
    write_samples(&outcome.final_checkpoint, &data, &cfg.blend, &a.out, a.samples)?;
    if let Some(last) = outcome.metrics.last() {
        println!(
            "trained to epoch {}; l_rec = {:.6}, l_d = {:.6} -> {}",
            last.epoch,
            last.l_rec,
            last.l_d,
            a.out.display()
        );
    }
    Ok(())
}

/// Composite a few dataset images with the final checkpoint into `samples/`.
fn write_samples(
    ckpt_path: &Path,
    data: &outpaint_core::data::DatasetHandle,
    blend: &BlendSpec,
    out_dir: &Path,
    count: usize,
) -> anyhow::Result<()> {
    let samples_dir = out_dir.join("samples");
    std::fs::create_dir_all(&samples_dir)
        .with_context(|| format!("creating {}", samples_dir.display()))?;
    if count == 0 {
        return Ok(());
    }
    let ckpt = Checkpoint::<Elem>::load(ckpt_path)?;
    let (mut g, _) = ckpt.restore_networks()?;
    for i in 0..count.min(data.size()) {
        let full: ImageTensor<Elem> = data.load_preprocessed(i, ckpt.mask.full_size)?;
        let band = ckpt.mask.band();
        let keep = ckpt.mask.keep_size;
        let photo = full
            .slice(ndarray::s![.., band..band + keep, band..band + keep])
            .to_owned();
        let composite = outpaint_blend(&mut g, &photo, &ckpt.mask, blend, ckpt.means)?;
        save_image(
            &samples_dir.join(format!("{}.png", data.image_id(i))),
            &composite,
        )?;
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let split = parse_split(&a.split)?;
    let data = load_dataset(&a.data, split, a.limit)?;
    let ckpt = Checkpoint::<Elem>::load(&a.ckpt)?;
    let (mut g, mut d) = ckpt.restore_networks()?;
    let model_id = a
        .ckpt
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".to_string());
    let disc = if a.no_realism { None } else { Some(&mut d) };
    let report = evaluate(&mut g, disc, &data, &ckpt.mask, ckpt.means, &model_id)?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;
    write_report_csv(&a.out.join("report.csv"), &report)?;

    let samples_dir = a.out.join("samples");
    std::fs::create_dir_all(&samples_dir)
        .with_context(|| format!("creating {}", samples_dir.display()))?;
    let k = a.k.min(data.size());
    let mut criteria = vec![
        ("low_mse", ExtremeCriterion::LowMse),
        ("high_mse", ExtremeCriterion::HighMse),
    ];
    if !a.no_realism {
        criteria.push(("high_realism", ExtremeCriterion::HighRealism));
    }
    for (name, criterion) in criteria {
        let ids = select_extremes(&report, k, criterion)?;
        let mut tiles = Vec::new();
        for id in &ids {
            let idx = (0..data.size())
                .find(|&i| data.image_id(i) == *id)
                .expect("id came from this dataset");
            let full: ImageTensor<Elem> = data.load_preprocessed(idx, ckpt.mask.full_size)?;
            let raw = outpaint(&mut g, &full, &ckpt.mask, ckpt.means)?;
            tiles.push(full);
            tiles.push(raw);
        }
        let grid = image_grid(&tiles, 2);
        save_image(&samples_dir.join(format!("{name}.png")), &grid)?;
    }
    println!(
        "evaluated {} images; mean mse = {:.6} -> {}",
        data.size(),
        report.mean_mse(),
        a.out.display()
    );
    Ok(())
}

fn cmd_outpaint(a: &OutpaintArgs) -> anyhow::Result<()> {
    if a.recursive == 0 {
        bail!("--recursive must be >= 1");
    }
    let ckpt = Checkpoint::<Elem>::load(&a.ckpt)?;
    let (mut g, _) = ckpt.restore_networks()?;
    let blend = BlendSpec {
        band_width: a.blend_band.unwrap_or(BlendSpec::default().band_width),
    };
    blend.validate(&ckpt.mask)?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))?;

    let inputs: Vec<PathBuf> = if a.input.is_dir() {
        let data = load_dataset(&a.input, Split::Test, None)?;
        data.files().to_vec()
    } else {
        vec![a.input.clone()]
    };

    for path in &inputs {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "image".to_string());
        let raw_img: ImageTensor<Elem> = load_image(path)?;
        let photo = preprocess(&raw_img, ckpt.mask.keep_size);
        if a.keep_raw {
            let raw = outpaint(&mut g, &photo, &ckpt.mask, ckpt.means)?;
            save_image(&a.out.join(format!("{id}_raw.png")), &raw)?;
        }
        let steps = recursive_outpaint(&mut g, &photo, a.recursive, &ckpt.mask, &blend, ckpt.means)?;
        save_image(
            &a.out.join(format!("{id}.png")),
            steps.last().expect("at least one step"),
        )?;
        for (i, step) in steps.iter().enumerate().take(steps.len() - 1) {
            save_image(&a.out.join(format!("{id}_step{}.png", i + 1)), step)?;
        }
        let zoom = outpaint_core::compositing::effective_zoom(&ckpt.mask, a.recursive);
        println!("{id}: {} step(s), effective zoom {zoom}", steps.len());
    }
    Ok(())
}

fn cmd_harmonize(a: &HarmonizeArgs) -> anyhow::Result<()> {
    let original: ImageTensor<Elem> = load_image(&a.original)?;
    let raw: ImageTensor<Elem> = load_image(&a.raw)?;
    let pyramid = match &a.cache {
        Some(cache_dir) => {
            std::fs::create_dir_all(cache_dir)
                .with_context(|| format!("creating {}", cache_dir.display()))?;
            let path = pyramid_cache_path(cache_dir, &original);
            if path.exists() {
                load_pyramid::<Elem>(&path)?
            } else {
                let p =
                    train_refiner(&original, a.scale_factor, a.min_size, Some(a.max_side))?;
                save_pyramid(&path, &p)?;
                p
            }
        }
        None => train_refiner(&original, a.scale_factor, a.min_size, Some(a.max_side))?,
    };
    let registry = RefinerRegistry::<Elem>::with_builtins();
    let refiner = registry.create(&a.refiner)?;
    let inj = InjectionSpec {
        inject_scale: a.inject_scale,
    };
    let refined = harmonize(&pyramid, &raw, inj, refiner.as_ref())?;
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    save_image(&a.out, &refined)?;
    println!(
        "harmonized at {} scales, finest side {} -> {}",
        pyramid.num_scales(),
        pyramid.finest_size(),
        a.out.display()
    );
    Ok(())
}

fn cmd_plot(a: &PlotArgs) -> anyhow::Result<()> {
    let rows = read_metrics_csv(&a.csv)?;
    let restarts_path = a
        .restarts
        .clone()
        .or_else(|| {
            let sibling = a.csv.parent()?.join("restarts.txt");
            sibling.exists().then_some(sibling)
        });
    let restarts: Vec<usize> = match restarts_path {
        Some(path) => std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("parsing restart epochs in {}", path.display()))?,
        None => Vec::new(),
    };
    if let Some(parent) = a.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating {}", parent.display()))?;
        }
    }
    outpaint_core::plot::render(&rows, &restarts, &a.out)?;
    println!("plotted {} epochs -> {}", rows.len(), a.out.display());
    Ok(())
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Outpaint(a) => cmd_outpaint(a),
        Command::Harmonize(a) => cmd_harmonize(a),
        Command::Plot(a) => cmd_plot(a),
    }
}

fn main() {
    if let Err(e) = run() {
        // Single-line error on standard error; the chain is joined so the
        // message stays machine readable.
        let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
        eprintln!("error: {}", chain.join(": "));
        std::process::exit(1);
    }
}
