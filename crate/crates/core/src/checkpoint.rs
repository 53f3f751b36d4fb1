//! Single-file checkpoint container: configs, mask geometry, fill means,
//! epoch counter, every named parameter array (including normalization
//! running statistics) and both Adam states. Little-endian, bit exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;

use crate::data::MaskSpec;
use crate::error::{Error, Result};
use crate::models::{DiscriminatorConfig, GeneratorConfig, Network};
use crate::nn::AdamState;
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"OUTPCKPT";
const VERSION: u32 = 1;

pub struct Checkpoint<S: Scalar> {
    pub gen_cfg: GeneratorConfig,
    pub disc_cfg: DiscriminatorConfig,
    pub mask: MaskSpec,
    pub means: [f64; 3],
    pub epoch: u64,
    pub g_params: Vec<(String, ArrayD<S>)>,
    pub d_params: Vec<(String, ArrayD<S>)>,
    pub g_adam: AdamState<S>,
    pub d_adam: AdamState<S>,
}

fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_string<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

fn write_array<S: Scalar, W: Write>(w: &mut W, a: &ArrayD<S>) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(a.ndim() as u32)?;
    for &d in a.shape() {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for &v in a.iter() {
        v.write_le(w)?;
    }
    Ok(())
}

fn read_array<S: Scalar, R: Read>(r: &mut R) -> std::io::Result<ArrayD<S>> {
    let ndim = r.read_u32::<LittleEndian>()? as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(S::read_le(r)?);
    }
    Ok(ArrayD::from_shape_vec(ndarray::IxDyn(&shape), data).expect("shape matches"))
}

fn write_named<S: Scalar, W: Write>(
    w: &mut W,
    entries: &[(String, ArrayD<S>)],
) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(entries.len() as u32)?;
    for (name, a) in entries {
        write_string(w, name)?;
        write_array(w, a)?;
    }
    Ok(())
}

fn read_named<S: Scalar, R: Read>(r: &mut R) -> std::io::Result<Vec<(String, ArrayD<S>)>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let name = read_string(r)?;
        let a = read_array(r)?;
        out.push((name, a));
    }
    Ok(out)
}

fn write_adam<S: Scalar, W: Write>(w: &mut W, st: &AdamState<S>) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(st.step)?;
    w.write_u32::<LittleEndian>(st.moments.len() as u32)?;
    for (name, (m, v)) in &st.moments {
        write_string(w, name)?;
        write_array(w, m)?;
        write_array(w, v)?;
    }
    Ok(())
}

fn read_adam<S: Scalar, R: Read>(r: &mut R) -> std::io::Result<AdamState<S>> {
    let step = r.read_u64::<LittleEndian>()?;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut st = AdamState {
        step,
        moments: Default::default(),
    };
    for _ in 0..n {
        let name = read_string(r)?;
        let m = read_array(r)?;
        let v = read_array(r)?;
        st.moments.insert(name, (m, v));
    }
    Ok(st)
}

fn write_gen_cfg<W: Write>(w: &mut W, c: &GeneratorConfig) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(c.input_size as u64)?;
    w.write_u64::<LittleEndian>(c.bottleneck_channels as u64)?;
    w.write_u32::<LittleEndian>(c.encoder_channels.len() as u32)?;
    for &ch in &c.encoder_channels {
        w.write_u64::<LittleEndian>(ch as u64)?;
    }
    w.write_u64::<LittleEndian>(c.kernel as u64)?;
    w.write_f64::<LittleEndian>(c.leaky_slope)
}

fn read_gen_cfg<R: Read>(r: &mut R) -> std::io::Result<GeneratorConfig> {
    let input_size = r.read_u64::<LittleEndian>()? as usize;
    let bottleneck_channels = r.read_u64::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut encoder_channels = Vec::with_capacity(n);
    for _ in 0..n {
        encoder_channels.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let kernel = r.read_u64::<LittleEndian>()? as usize;
    let leaky_slope = r.read_f64::<LittleEndian>()?;
    Ok(GeneratorConfig {
        input_size,
        bottleneck_channels,
        encoder_channels,
        kernel,
        leaky_slope,
    })
}

fn write_disc_cfg<W: Write>(w: &mut W, c: &DiscriminatorConfig) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(c.input_size as u64)?;
    w.write_u32::<LittleEndian>(c.channels.len() as u32)?;
    for &ch in &c.channels {
        w.write_u64::<LittleEndian>(ch as u64)?;
    }
    for &s in &c.strides {
        w.write_u64::<LittleEndian>(s as u64)?;
    }
    w.write_u64::<LittleEndian>(c.kernel as u64)?;
    w.write_f64::<LittleEndian>(c.leaky_slope)
}

fn read_disc_cfg<R: Read>(r: &mut R) -> std::io::Result<DiscriminatorConfig> {
    let input_size = r.read_u64::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut channels = Vec::with_capacity(n);
    for _ in 0..n {
        channels.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let mut strides = Vec::with_capacity(n);
    for _ in 0..n {
        strides.push(r.read_u64::<LittleEndian>()? as usize);
    }
    let kernel = r.read_u64::<LittleEndian>()? as usize;
    let leaky_slope = r.read_f64::<LittleEndian>()?;
    Ok(DiscriminatorConfig {
        input_size,
        channels,
        strides,
        kernel,
        leaky_slope,
    })
}

impl<S: Scalar> Checkpoint<S> {
    pub fn from_networks(
        g: &Network<S>,
        d: &Network<S>,
        mask: MaskSpec,
        means: [f64; 3],
        epoch: u64,
        g_adam: AdamState<S>,
        d_adam: AdamState<S>,
    ) -> Self {
        let gen_cfg = match &g.config {
            crate::models::NetworkConfig::Generator(c) => c.clone(),
            _ => panic!("first network must be the generator"),
        };
        let disc_cfg = match &d.config {
            crate::models::NetworkConfig::Discriminator(c) => c.clone(),
            _ => panic!("second network must be the discriminator"),
        };
        Checkpoint {
            gen_cfg,
            disc_cfg,
            mask,
            means,
            epoch,
            g_params: named_params(g),
            d_params: named_params(d),
            g_adam,
            d_adam,
        }
    }

    /// Atomic save: write a temp file next to `path`, then rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
            let mut w = BufWriter::new(f);
            self.write(&mut w).map_err(|e| Error::io(&tmp, e))?;
            w.flush().map_err(|e| Error::io(&tmp, e))?;
        }
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(S::WIDTH_TAG)?;
        write_gen_cfg(w, &self.gen_cfg)?;
        write_disc_cfg(w, &self.disc_cfg)?;
        w.write_u64::<LittleEndian>(self.mask.full_size as u64)?;
        w.write_u64::<LittleEndian>(self.mask.keep_size as u64)?;
        for &m in &self.means {
            w.write_f64::<LittleEndian>(m)?;
        }
        w.write_u64::<LittleEndian>(self.epoch)?;
        write_named(w, &self.g_params)?;
        write_named(w, &self.d_params)?;
        write_adam(w, &self.g_adam)?;
        write_adam(w, &self.d_adam)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(f);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| Error::io(path, e))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a checkpoint file",
                path.display()
            )));
        }
        let version = r
            .read_u32::<LittleEndian>()
            .map_err(|e| Error::io(path, e))?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version} unsupported (expected {VERSION})"
            )));
        }
        let tag = r.read_u8().map_err(|e| Error::io(path, e))?;
        if tag != S::WIDTH_TAG {
            return Err(Error::Checkpoint(format!(
                "checkpoint scalar width tag {tag} does not match requested width {}",
                S::WIDTH_TAG
            )));
        }
        let inner = |r: &mut BufReader<File>| -> std::io::Result<Checkpoint<S>> {
            let gen_cfg = read_gen_cfg(r)?;
            let disc_cfg = read_disc_cfg(r)?;
            let full_size = r.read_u64::<LittleEndian>()? as usize;
            let keep_size = r.read_u64::<LittleEndian>()? as usize;
            let mut means = [0.0f64; 3];
            for m in &mut means {
                *m = r.read_f64::<LittleEndian>()?;
            }
            let epoch = r.read_u64::<LittleEndian>()?;
            let g_params = read_named(r)?;
            let d_params = read_named(r)?;
            let g_adam = read_adam(r)?;
            let d_adam = read_adam(r)?;
            Ok(Checkpoint {
                gen_cfg,
                disc_cfg,
                mask: MaskSpec {
                    full_size,
                    keep_size,
                },
                means,
                epoch,
                g_params,
                d_params,
                g_adam,
                d_adam,
            })
        };
        inner(&mut r).map_err(|e| Error::io(path, e))
    }

    /// Rebuild both networks with the stored weights and statistics.
    pub fn restore_networks(&self) -> Result<(Network<S>, Network<S>)> {
        let mut g = crate::models::build_generator::<S>(&self.gen_cfg, 0)?;
        let mut d = crate::models::build_discriminator::<S>(&self.disc_cfg, 0)?;
        load_named(&mut g, &self.g_params)?;
        load_named(&mut d, &self.d_params)?;
        Ok((g, d))
    }
}

pub fn named_params<S: Scalar>(net: &Network<S>) -> Vec<(String, ArrayD<S>)> {
    net.params()
        .into_iter()
        .map(|p| (p.name.clone(), p.value.clone()))
        .collect()
}

pub fn load_named<S: Scalar>(net: &mut Network<S>, entries: &[(String, ArrayD<S>)]) -> Result<()> {
    let mut params = net.params_mut();
    if params.len() != entries.len() {
        return Err(Error::Checkpoint(format!(
            "parameter count mismatch: network has {}, checkpoint has {}",
            params.len(),
            entries.len()
        )));
    }
    for p in params.iter_mut() {
        let found = entries
            .iter()
            .find(|(name, _)| *name == p.name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{}'", p.name)))?;
        if found.1.shape() != p.value.shape() {
            return Err(Error::Checkpoint(format!(
                "shape mismatch for '{}': {:?} vs {:?}",
                p.name,
                p.value.shape(),
                found.1.shape()
            )));
        }
        p.value.assign(&found.1);
    }
    Ok(())
}
