//! Generator (context encoder) and discriminator construction and forward /
//! backward passes.
//!
//! The generator halves the spatial size through `encoder_channels.len() + 1`
//! strided convs down to a bottleneck, then mirrors itself back up with
//! up-convolutions, ending in Tanh. The discriminator is fully convolutional
//! and emits a score grid (24x24 for a 192 input) with a linear head.

use ndarray::Array4;

use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm2d, Conv2d, ConvTranspose2d, InstanceNorm2d, Layer, LeakyRelu, Mode, Param, Relu,
    Tanh, WeightInit,
};
use crate::scalar::Scalar;

pub const WEIGHT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub input_size: usize,
    pub bottleneck_channels: usize,
    pub encoder_channels: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            input_size: 192,
            bottleneck_channels: 4000,
            encoder_channels: vec![64, 64, 128, 256, 512],
            kernel: 4,
            leaky_slope: 0.2,
        }
    }
}

impl GeneratorConfig {
    /// Desk-scale variant: 96 px input, halved widths. 96 only admits five
    /// halvings, so the encoder list is one layer shorter than the default.
    pub fn small() -> Self {
        GeneratorConfig {
            input_size: 96,
            bottleneck_channels: 1000,
            encoder_channels: vec![32, 32, 64, 128],
            kernel: 4,
            leaky_slope: 0.2,
        }
    }

    /// Tiny config for finite-difference gradient checks.
    pub fn miniature() -> Self {
        GeneratorConfig {
            input_size: 16,
            bottleneck_channels: 16,
            encoder_channels: vec![4, 4, 8],
            kernel: 4,
            leaky_slope: 0.2,
        }
    }

    pub fn halvings(&self) -> usize {
        self.encoder_channels.len() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.is_empty() {
            return Err(Error::config("encoder_channels must be nonempty"));
        }
        let div = 1usize << self.halvings();
        if self.input_size % div != 0 || self.input_size / div == 0 {
            return Err(Error::config(format!(
                "generator input_size {} not divisible by {} (spatial chain requires {} halvings)",
                self.input_size,
                div,
                self.halvings()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorConfig {
    pub input_size: usize,
    pub channels: Vec<usize>,
    pub strides: Vec<usize>,
    pub kernel: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            input_size: 192,
            channels: vec![64, 128, 256, 512, 1],
            strides: vec![2, 2, 2, 1, 1],
            kernel: 3,
            leaky_slope: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    pub fn small() -> Self {
        DiscriminatorConfig {
            input_size: 96,
            channels: vec![32, 64, 128, 256, 1],
            strides: vec![2, 2, 2, 1, 1],
            kernel: 3,
            leaky_slope: 0.2,
        }
    }

    pub fn miniature() -> Self {
        DiscriminatorConfig {
            input_size: 16,
            channels: vec![4, 8, 1],
            strides: vec![2, 2, 1],
            kernel: 3,
            leaky_slope: 0.2,
        }
    }

    pub fn stride_product(&self) -> usize {
        self.strides.iter().product()
    }

    /// Side length of the output score grid.
    pub fn grid_size(&self) -> usize {
        self.input_size / self.stride_product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.strides.len() || self.channels.is_empty() {
            return Err(Error::config(
                "discriminator channels and strides must be nonempty and equal length",
            ));
        }
        if *self.channels.last().unwrap() != 1 {
            return Err(Error::config("discriminator must end in a 1-channel head"));
        }
        if self.input_size % self.stride_product() != 0 {
            return Err(Error::config(format!(
                "discriminator input_size {} not divisible by stride product {}",
                self.input_size,
                self.stride_product()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Generator,
    Discriminator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkConfig {
    Generator(GeneratorConfig),
    Discriminator(DiscriminatorConfig),
}

/// A built network: an ordered layer stack plus the config it came from.
pub struct Network<S: Scalar> {
    pub role: Role,
    pub config: NetworkConfig,
    layers: Vec<Box<dyn Layer<S>>>,
    /// Indices of layers whose outputs correspond to architecture-table rows
    /// (the conv / up-conv stages).
    stage_layers: Vec<usize>,
    input_size: usize,
}

impl<S: Scalar> Network<S> {
    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn forward(&mut self, x: Array4<S>, mode: Mode) -> Result<Array4<S>> {
        let (_, c, h, w) = x.dim();
        if c != 3 || h != self.input_size || w != self.input_size {
            return Err(Error::shape(
                format!("(N, 3, {0}, {0})", self.input_size),
                format!("(N, {c}, {h}, {w})"),
            ));
        }
        let mut cur = x;
        for layer in &mut self.layers {
            cur = layer.forward(cur, mode);
        }
        Ok(cur)
    }

    /// Backward through the whole stack; requires a preceding train-mode
    /// forward. Accumulates parameter grads, returns dL/dinput.
    pub fn backward(&mut self, dy: Array4<S>) -> Array4<S> {
        let mut cur = dy;
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(cur);
        }
        cur
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<&Param<S>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params()
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.len())
            .sum()
    }

    /// (H, W, C) after every conv / up-conv stage for a batch-1 input, in
    /// table-row order.
    pub fn stage_shapes(&self) -> Vec<(usize, usize, usize)> {
        let mut shape = [1usize, 3, self.input_size, self.input_size];
        let mut out = Vec::new();
        for (idx, layer) in self.layers.iter().enumerate() {
            shape = layer.output_shape(shape);
            if self.stage_layers.contains(&idx) {
                out.push((shape[2], shape[3], shape[1]));
            }
        }
        out
    }
}

pub fn build_generator<S: Scalar>(cfg: &GeneratorConfig, seed: u64) -> Result<Network<S>> {
    cfg.validate()?;
    let mut init = WeightInit::new(seed, WEIGHT_STD);
    let mut layers: Vec<Box<dyn Layer<S>>> = Vec::new();
    let mut stages = Vec::new();
    let k = cfg.kernel;

    // Encoder: first conv has no normalization (Table 1 row 1).
    let mut c_in = 3;
    for (i, &c_out) in cfg.encoder_channels.iter().enumerate() {
        let name = format!("enc{i}");
        stages.push(layers.len());
        layers.push(Box::new(Conv2d::new(&name, c_in, c_out, k, 2, 1, &mut init)));
        if i > 0 {
            layers.push(Box::new(BatchNorm2d::new(&format!("{name}.bn"), c_out)));
        }
        layers.push(Box::new(LeakyRelu::new(cfg.leaky_slope)));
        c_in = c_out;
    }
    // Bottleneck conv, bare (no norm, no activation).
    stages.push(layers.len());
    layers.push(Box::new(Conv2d::new(
        "bottleneck",
        c_in,
        cfg.bottleneck_channels,
        k,
        2,
        1,
        &mut init,
    )));
    c_in = cfg.bottleneck_channels;

    // Decoder mirrors the encoder; final up-conv goes to RGB with Tanh.
    let mut dec_out: Vec<usize> = cfg.encoder_channels.iter().rev().copied().collect();
    dec_out.push(3);
    let last = dec_out.len() - 1;
    for (i, &c_out) in dec_out.iter().enumerate() {
        let name = format!("dec{i}");
        stages.push(layers.len());
        layers.push(Box::new(ConvTranspose2d::new(
            &name, c_in, c_out, k, 2, 1, &mut init,
        )));
        layers.push(Box::new(BatchNorm2d::new(&format!("{name}.bn"), c_out)));
        if i == last {
            layers.push(Box::new(Tanh::new()));
        } else {
            layers.push(Box::new(Relu::new()));
        }
        c_in = c_out;
    }

    Ok(Network {
        role: Role::Generator,
        config: NetworkConfig::Generator(cfg.clone()),
        layers,
        stage_layers: stages,
        input_size: cfg.input_size,
    })
}

pub fn build_discriminator<S: Scalar>(cfg: &DiscriminatorConfig, seed: u64) -> Result<Network<S>> {
    cfg.validate()?;
    let mut init = WeightInit::new(seed, WEIGHT_STD);
    let mut layers: Vec<Box<dyn Layer<S>>> = Vec::new();
    let mut stages = Vec::new();
    let k = cfg.kernel;
    let last = cfg.channels.len() - 1;
    let mut c_in = 3;
    for (i, (&c_out, &stride)) in cfg.channels.iter().zip(&cfg.strides).enumerate() {
        let name = format!("d{i}");
        stages.push(layers.len());
        layers.push(Box::new(Conv2d::new(&name, c_in, c_out, k, stride, 1, &mut init)));
        if i == last {
            // linear head: least-squares targets live in score space
            break;
        }
        if i > 0 {
            layers.push(Box::new(InstanceNorm2d::new(&format!("{name}.in"), c_out)));
        }
        layers.push(Box::new(LeakyRelu::new(cfg.leaky_slope)));
        c_in = c_out;
    }

    Ok(Network {
        role: Role::Discriminator,
        config: NetworkConfig::Discriminator(cfg.clone()),
        layers,
        stage_layers: stages,
        input_size: cfg.input_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn generator_stage_shapes_match_the_table() {
        let g = build_generator::<f32>(&GeneratorConfig::default(), 0).unwrap();
        let expected = vec![
            (96, 96, 64),
            (48, 48, 64),
            (24, 24, 128),
            (12, 12, 256),
            (6, 6, 512),
            (3, 3, 4000),
            (6, 6, 512),
            (12, 12, 256),
            (24, 24, 128),
            (48, 48, 64),
            (96, 96, 64),
            (192, 192, 3),
        ];
        assert_eq!(g.stage_shapes(), expected);
    }

    #[test]
    fn discriminator_stage_shapes_match_the_table() {
        let d = build_discriminator::<f32>(&DiscriminatorConfig::default(), 0).unwrap();
        let expected = vec![
            (96, 96, 64),
            (48, 48, 128),
            (24, 24, 256),
            (24, 24, 512),
            (24, 24, 1),
        ];
        assert_eq!(d.stage_shapes(), expected);
        assert_eq!(DiscriminatorConfig::default().grid_size(), 24);
        assert_eq!(DiscriminatorConfig::small().grid_size(), 12);
    }

    /// Independent layer-by-layer hand count: (k*k*Cin + 1)*Cout per conv or
    /// up-conv, plus 2 affine parameters per normalized channel.
    fn hand_count_generator(cfg: &GeneratorConfig) -> usize {
        let k2 = cfg.kernel * cfg.kernel;
        let conv = |cin: usize, cout: usize| (k2 * cin + 1) * cout;
        let mut total = 0;
        let mut c_in = 3;
        for (i, &c) in cfg.encoder_channels.iter().enumerate() {
            total += conv(c_in, c);
            if i > 0 {
                total += 2 * c;
            }
            c_in = c;
        }
        total += conv(c_in, cfg.bottleneck_channels);
        c_in = cfg.bottleneck_channels;
        let mut dec: Vec<usize> = cfg.encoder_channels.iter().rev().copied().collect();
        dec.push(3);
        for &c in &dec {
            total += conv(c_in, c) + 2 * c;
            c_in = c;
        }
        total
    }

    fn hand_count_discriminator(cfg: &DiscriminatorConfig) -> usize {
        let k2 = cfg.kernel * cfg.kernel;
        let mut total = 0;
        let mut c_in = 3;
        let last = cfg.channels.len() - 1;
        for (i, &c) in cfg.channels.iter().enumerate() {
            total += (k2 * c_in + 1) * c;
            if i > 0 && i < last {
                total += 2 * c;
            }
            c_in = c;
        }
        total
    }

    #[test]
    fn parameter_counts_match_hand_count_and_frozen_values() {
        let gcfg = GeneratorConfig::default();
        let g = build_generator::<f32>(&gcfg, 0).unwrap();
        assert_eq!(g.trainable_param_count(), hand_count_generator(&gcfg));
        assert_eq!(g.trainable_param_count(), 71_188_265);

        let dcfg = DiscriminatorConfig::default();
        let d = build_discriminator::<f32>(&dcfg, 0).unwrap();
        assert_eq!(d.trainable_param_count(), hand_count_discriminator(&dcfg));
        assert_eq!(d.trainable_param_count(), 1_557_377);

        let mg = build_generator::<f32>(&GeneratorConfig::miniature(), 0).unwrap();
        assert_eq!(
            mg.trainable_param_count(),
            hand_count_generator(&GeneratorConfig::miniature())
        );
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let cfg = GeneratorConfig::miniature();
        let a = build_generator::<f64>(&cfg, 42).unwrap();
        let b = build_generator::<f64>(&cfg, 42).unwrap();
        let c = build_generator::<f64>(&cfg, 43).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            assert_eq!(pa.name, pb.name);
            assert_eq!(pa.value, pb.value);
        }
        assert!(a
            .params()
            .iter()
            .zip(c.params().iter())
            .any(|(x, y)| x.value != y.value));
    }

    #[test]
    fn same_weights_at_both_scalar_widths() {
        let cfg = DiscriminatorConfig::miniature();
        let a = build_discriminator::<f32>(&cfg, 9).unwrap();
        let b = build_discriminator::<f64>(&cfg, 9).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params().iter()) {
            for (&x, &y) in pa.value.iter().zip(pb.value.iter()) {
                assert_eq!(x, y as f32);
            }
        }
    }

    #[test]
    fn generator_output_stays_inside_tanh_range() {
        let cfg = GeneratorConfig::miniature();
        let mut g = build_generator::<f32>(&cfg, 5).unwrap();
        let x = Array4::from_shape_fn((2, 3, 16, 16), |(n, c, y, xx)| {
            (((n + c + y + xx) % 7) as f32) / 3.5 - 1.0
        });
        let y = g.forward(x, Mode::Eval).unwrap();
        assert_eq!(y.dim(), (2, 3, 16, 16));
        for &v in y.iter() {
            assert!(v.abs() < 1.0);
        }
    }

    #[test]
    fn zeroed_final_layer_outputs_exactly_zero() {
        let cfg = GeneratorConfig::miniature();
        let mut g = build_generator::<f64>(&cfg, 5).unwrap();
        let last = format!("dec{}", cfg.encoder_channels.len());
        for p in g.params_mut() {
            if p.name.starts_with(&last) && !p.name.contains(".bn") {
                p.value.fill(0.0);
            }
        }
        let x = Array4::from_elem((1, 3, 16, 16), 0.3);
        let y = g.forward(x, Mode::Eval).unwrap();
        for &v in y.iter() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn zeroed_discriminator_head_outputs_zero_grid() {
        let cfg = DiscriminatorConfig::miniature();
        let mut d = build_discriminator::<f64>(&cfg, 5).unwrap();
        let head = format!("d{}", cfg.channels.len() - 1);
        for p in d.params_mut() {
            if p.name.starts_with(&head) {
                p.value.fill(0.0);
            }
        }
        let x = Array4::from_elem((1, 3, 16, 16), 0.3);
        let y = d.forward(x, Mode::Eval).unwrap();
        assert_eq!(y.dim(), (1, 1, 4, 4));
        for &v in y.iter() {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn forward_is_deterministic_in_eval_mode() {
        let cfg = DiscriminatorConfig::miniature();
        let mut d = build_discriminator::<f64>(&cfg, 5).unwrap();
        let x = Array4::from_shape_fn((1, 3, 16, 16), |(_, c, y, xx)| {
            ((c * 31 + y * 5 + xx) % 11) as f64 / 5.5 - 1.0
        });
        let a = d.forward(x.clone(), Mode::Eval).unwrap();
        let b = d.forward(x, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_size_is_a_shape_error() {
        let cfg = GeneratorConfig::miniature();
        let mut g = build_generator::<f64>(&cfg, 5).unwrap();
        let x = Array4::zeros((1, 3, 8, 8));
        assert!(g.forward(x, Mode::Eval).is_err());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut g = GeneratorConfig::default();
        g.input_size = 100; // not divisible by 2^6
        assert!(g.validate().is_err());
        let mut d = DiscriminatorConfig::default();
        d.channels = vec![8, 8];
        d.strides = vec![2, 2];
        assert!(d.validate().is_err()); // head must be 1 channel
        d.channels = vec![8, 1];
        assert!(d.validate().is_ok());
    }
}
