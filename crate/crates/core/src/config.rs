//! Flat `key = value` run configuration. Every field of the training and
//! model configs is covered; unknown keys are hard errors so typos cannot
//! silently fall back to defaults.

use std::fmt::Write as _;
use std::path::Path;

use crate::compositing::BlendSpec;
use crate::data::MaskSpec;
use crate::error::{Error, Result};
use crate::models::{DiscriminatorConfig, GeneratorConfig};
use crate::training::{AdvMode, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub gen: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub mask: MaskSpec,
    pub blend: BlendSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            gen: GeneratorConfig::default(),
            disc: DiscriminatorConfig::default(),
            mask: MaskSpec::default(),
            blend: BlendSpec::default(),
        }
    }
}

impl RunConfig {
    /// Desk-scale preset: 96 px inputs, halved channel lists.
    pub fn small() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            gen: GeneratorConfig::small(),
            disc: DiscriminatorConfig::small(),
            mask: MaskSpec {
                full_size: 96,
                keep_size: 64,
            },
            blend: BlendSpec { band_width: 8 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.gen.validate()?;
        self.disc.validate()?;
        self.mask.validate()?;
        self.blend.validate(&self.mask)?;
        if self.gen.input_size != self.mask.full_size {
            return Err(Error::config(format!(
                "input_size {} must equal mask full_size {}",
                self.gen.input_size, self.mask.full_size
            )));
        }
        if self.gen.input_size != self.disc.input_size {
            return Err(Error::config(
                "generator and discriminator input sizes must match",
            ));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Apply one key. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>()
                .map_err(|e| Error::config(format!("bad value for {key}: {e}")))
        }
        fn list(key: &str, v: &str) -> Result<Vec<usize>> {
            v.split(',')
                .map(|s| num::<usize>(key, s.trim()))
                .collect()
        }
        match key {
            "preset" => match value {
                "default" => *self = RunConfig::default(),
                "small" => *self = RunConfig::small(),
                other => {
                    return Err(Error::config(format!(
                        "unknown preset '{other}' (expected default|small)"
                    )))
                }
            },
            "epochs" => self.train.epochs = num(key, value)?,
            "learning_rate" => self.train.learning_rate = num(key, value)?,
            "adam_beta1" => self.train.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.train.adam_beta2 = num(key, value)?,
            "batch_size" => self.train.batch_size = num(key, value)?,
            "seed" => self.train.seed = num(key, value)?,
            "band_weight" => self.train.band_weight = num(key, value)?,
            "checkpoint_every" => self.train.checkpoint_every = num(key, value)?,
            "adv_mode" => {
                self.train.adv_mode = match value {
                    "off" => AdvMode::Off,
                    "scheduled" => AdvMode::Scheduled,
                    "fixed" => AdvMode::Fixed(0.040),
                    other => {
                        if let Some(l) = other.strip_prefix("fixed:") {
                            AdvMode::Fixed(num("adv_mode", l)?)
                        } else {
                            return Err(Error::config(format!(
                                "unknown adv_mode '{other}' (expected off|scheduled|fixed[:lambda])"
                            )));
                        }
                    }
                }
            }
            "input_size" => {
                let s: usize = num(key, value)?;
                self.gen.input_size = s;
                self.disc.input_size = s;
                self.mask.full_size = s;
            }
            "keep_size" => self.mask.keep_size = num(key, value)?,
            "blend_band" => self.blend.band_width = num(key, value)?,
            "encoder_channels" => self.gen.encoder_channels = list(key, value)?,
            "bottleneck_channels" => self.gen.bottleneck_channels = num(key, value)?,
            "gen_kernel" => self.gen.kernel = num(key, value)?,
            "leaky_slope" => {
                let s: f64 = num(key, value)?;
                self.gen.leaky_slope = s;
                self.disc.leaky_slope = s;
            }
            "disc_channels" => self.disc.channels = list(key, value)?,
            "disc_strides" => self.disc.strides = list(key, value)?,
            "disc_kernel" => self.disc.kernel = num(key, value)?,
            other => return Err(Error::config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Render in the same `key = value` format `parse` accepts.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let adv = match self.train.adv_mode {
            AdvMode::Off => "off".to_string(),
            AdvMode::Scheduled => "scheduled".to_string(),
            AdvMode::Fixed(l) => format!("fixed:{l}"),
        };
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(s, "input_size = {}", self.gen.input_size);
        let _ = writeln!(s, "keep_size = {}", self.mask.keep_size);
        let _ = writeln!(s, "blend_band = {}", self.blend.band_width);
        let _ = writeln!(s, "encoder_channels = {}", join(&self.gen.encoder_channels));
        let _ = writeln!(s, "bottleneck_channels = {}", self.gen.bottleneck_channels);
        let _ = writeln!(s, "gen_kernel = {}", self.gen.kernel);
        let _ = writeln!(s, "disc_channels = {}", join(&self.disc.channels));
        let _ = writeln!(s, "disc_strides = {}", join(&self.disc.strides));
        let _ = writeln!(s, "disc_kernel = {}", self.disc.kernel);
        let _ = writeln!(s, "leaky_slope = {}", self.gen.leaky_slope);
        let _ = writeln!(s, "epochs = {}", self.train.epochs);
        let _ = writeln!(s, "learning_rate = {}", self.train.learning_rate);
        let _ = writeln!(s, "adam_beta1 = {}", self.train.adam_beta1);
        let _ = writeln!(s, "adam_beta2 = {}", self.train.adam_beta2);
        let _ = writeln!(s, "batch_size = {}", self.train.batch_size);
        let _ = writeln!(s, "adv_mode = {adv}");
        let _ = writeln!(s, "seed = {}", self.train.seed);
        let _ = writeln!(s, "band_weight = {}", self.train.band_weight);
        let _ = writeln!(s, "checkpoint_every = {}", self.train.checkpoint_every);
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
