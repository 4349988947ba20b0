//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! "LACN" | version: u32
//! input channels, height, width: u32 | num_classes: u32 | init seed: u64
//! layer count: u32, then per layer a u8 tag and its fields
//!   0 conv     filters, kernel, stride, padding: u32
//!   1 relu
//!   2 maxpool  window, stride: u32
//!   3 fc       units: u32
//!   4 dropout  rate: f64
//! per layer: weight count: u32, f32 weights, bias count: u32, f32 biases
//! trait name: u32 length + UTF-8 | epochs: u64 | final loss: f64
//! epoch losses: u32 count + f64s | channel means: u32 count + f64s
//! class names: u32 count, each u32 length + UTF-8
//! ```

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::config::{LayerSpec, NetworkConfig, Shape};
use super::network::{LayerParams, Network, Parameters};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LACN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingMeta {
    pub trait_name: String,
    pub epochs: u64,
    pub final_loss: f64,
    pub epoch_losses: Vec<f64>,
    /// Per-channel means subtracted from inputs before the forward pass.
    pub channel_means: Vec<f64>,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: NetworkConfig,
    pub params: Parameters<f32>,
    pub meta: TrainingMeta,
}

impl ModelCheckpoint {
    pub fn new(network: Network<f32>, meta: TrainingMeta) -> Self {
        let config = network.config().clone();
        Self {
            config,
            params: network.into_params(),
            meta,
        }
    }

    pub fn network(&self) -> Result<Network<f32>> {
        Network::new(self.config.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(FORMAT_VERSION)?;
        let c = &self.config;
        for v in [c.input.channels, c.input.height, c.input.width, c.num_classes] {
            w.write_u32::<LE>(v as u32)?;
        }
        w.write_u64::<LE>(c.seed)?;
        w.write_u32::<LE>(c.layers.len() as u32)?;
        for layer in &c.layers {
            match *layer {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    w.write_u8(0)?;
                    for v in [filters, kernel, stride, padding] {
                        w.write_u32::<LE>(v as u32)?;
                    }
                }
                LayerSpec::Relu => w.write_u8(1)?,
                LayerSpec::MaxPool { window, stride } => {
                    w.write_u8(2)?;
                    w.write_u32::<LE>(window as u32)?;
                    w.write_u32::<LE>(stride as u32)?;
                }
                LayerSpec::Fc { units } => {
                    w.write_u8(3)?;
                    w.write_u32::<LE>(units as u32)?;
                }
                LayerSpec::Dropout { rate } => {
                    w.write_u8(4)?;
                    w.write_f64::<LE>(rate)?;
                }
            }
        }
        for p in &self.params.layers {
            for arr in [&p.weights, &p.bias] {
                w.write_u32::<LE>(arr.len() as u32)?;
                for &v in arr.iter() {
                    w.write_f32::<LE>(v)?;
                }
            }
        }
        let m = &self.meta;
        write_str(w, &m.trait_name)?;
        w.write_u64::<LE>(m.epochs)?;
        w.write_f64::<LE>(m.final_loss)?;
        for arr in [&m.epoch_losses, &m.channel_means] {
            w.write_u32::<LE>(arr.len() as u32)?;
            for &v in arr.iter() {
                w.write_f64::<LE>(v)?;
            }
        }
        w.write_u32::<LE>(m.class_names.len() as u32)?;
        for name in &m.class_names {
            write_str(w, name)?;
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let ck = Self::read_from(&mut r).map_err(|e| match e {
            Error::Io(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                Error::Checkpoint("truncated file".into())
            }
            other => other,
        })?;
        if (r.position() as usize) != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.position() as usize
            )));
        }
        Ok(ck)
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let version = r.read_u32::<LE>()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.read_u32::<LE>()? as usize;
        }
        let seed = r.read_u64::<LE>()?;
        let n_layers = r.read_u32::<LE>()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let tag = r.read_u8()?;
            let mut u = || -> Result<usize> { Ok(r.read_u32::<LE>()? as usize) };
            layers.push(match tag {
                0 => LayerSpec::Conv {
                    filters: u()?,
                    kernel: u()?,
                    stride: u()?,
                    padding: u()?,
                },
                1 => LayerSpec::Relu,
                2 => LayerSpec::MaxPool {
                    window: u()?,
                    stride: u()?,
                },
                3 => LayerSpec::Fc { units: u()? },
                4 => LayerSpec::Dropout {
                    rate: r.read_f64::<LE>()?,
                },
                t => return Err(Error::Checkpoint(format!("unknown layer tag {t}"))),
            });
        }
        let config = NetworkConfig {
            input: Shape::new(dims[0], dims[1], dims[2]),
            layers,
            num_classes: dims[3],
            seed,
        };
        let expected = Parameters::<f32>::zeros(&config)
            .map_err(|e| Error::Checkpoint(format!("stored network config is invalid: {e}")))?;
        let mut params = Parameters {
            layers: Vec::with_capacity(n_layers),
        };
        for (i, shape) in expected.layers.iter().enumerate() {
            let weights = read_f32s(r, shape.weights.len(), i)?;
            let bias = read_f32s(r, shape.bias.len(), i)?;
            params.layers.push(LayerParams { weights, bias });
        }
        let trait_name = read_str(r)?;
        let epochs = r.read_u64::<LE>()?;
        let final_loss = r.read_f64::<LE>()?;
        let epoch_losses = read_f64s(r)?;
        let channel_means = read_f64s(r)?;
        let n_classes = r.read_u32::<LE>()? as usize;
        let class_names = (0..n_classes).map(|_| read_str(r)).collect::<Result<_>>()?;
        Ok(Self {
            config,
            params,
            meta: TrainingMeta {
                trait_name,
                epochs,
                final_loss,
                epoch_losses,
                channel_means,
                class_names,
            },
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = Vec::new();
    r.take(len as u64).read_to_end(&mut buf)?;
    if buf.len() != len {
        return Err(Error::Checkpoint("truncated string".into()));
    }
    String::from_utf8(buf).map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
}

fn read_f32s<R: Read>(r: &mut R, expected: usize, layer: usize) -> Result<Vec<f32>> {
    let n = r.read_u32::<LE>()? as usize;
    if n != expected {
        return Err(Error::Checkpoint(format!(
            "layer {layer}: stored {n} values, config implies {expected}"
        )));
    }
    (0..n).map(|_| Ok(r.read_f32::<LE>()?)).collect()
}

fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let n = r.read_u32::<LE>()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        out.push(r.read_f64::<LE>()?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelCheckpoint {
        let net = Network::<f32>::initialized(NetworkConfig::mini(16, 4, 3, 11)).unwrap();
        ModelCheckpoint::new(
            net,
            TrainingMeta {
                trait_name: "gender".into(),
                epochs: 3,
                final_loss: 0.25,
                epoch_losses: vec![0.9, 0.5, 0.25],
                channel_means: vec![0.1, 0.2, 0.3, 0.4],
                class_names: vec!["Male".into(), "Female".into(), "?".into()],
            },
        )
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"LACN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), FORMAT_VERSION);
        assert_eq!(ModelCheckpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Checkpoint(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ModelCheckpoint::from_bytes(&bad), Err(Error::Checkpoint(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(ModelCheckpoint::from_bytes(&extra), Err(Error::Checkpoint(_))));
        let mut ver = bytes;
        ver[4] = 9;
        assert!(matches!(ModelCheckpoint::from_bytes(&ver), Err(Error::Checkpoint(_))));
    }
}
