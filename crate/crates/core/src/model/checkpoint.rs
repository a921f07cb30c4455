//! Versioned little-endian binary checkpoints.
//!
//! Layout:
//!
//! ```text
//! magic "INCEPSE1" | version u32 | value width u8 (4 or 8)
//! config block (u32 ints, f64 dropout, u8 flag)
//! tensor count u32
//! per tensor: name len u32 | name utf-8 | rank u32 | dims u32 × rank | values
//! ```
//!
//! Values are written as f64 so a save/load round trip is bit-exact; readers
//! also accept f32 payloads.

use std::fs;
use std::path::Path;

use super::config::IncepSEConfig;
use super::params::ModelParams;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"INCEPSE1";
pub const FORMAT_VERSION: u32 = 1;
const VALUE_WIDTH: u8 = 8;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::Truncated)?;
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn write_config(w: &mut Writer, c: &IncepSEConfig) {
    w.u32(c.input_channels);
    w.u32(c.depth);
    w.u32(c.branch_channels);
    w.u32(c.bottleneck_channels);
    w.u32(c.kernel_sizes.len());
    for &k in &c.kernel_sizes {
        w.u32(k);
    }
    w.u32(c.pool_branch_kernel);
    w.u32(c.skip_kernel);
    w.u32(c.se_reduction);
    w.u32(c.last_layer_multiplier);
    w.u32(c.last_layer_stride);
    w.f64(c.dropout_p);
    w.u32(c.num_classes);
    w.u8(c.allow_even_kernels as u8);
}

fn read_config(r: &mut Reader) -> Result<IncepSEConfig> {
    let input_channels = r.u32()?;
    let depth = r.u32()?;
    let branch_channels = r.u32()?;
    let bottleneck_channels = r.u32()?;
    let n_kernels = r.u32()?;
    if n_kernels > 64 {
        return Err(Error::Parse {
            context: "checkpoint config".into(),
            reason: format!("implausible kernel count {n_kernels}"),
        });
    }
    let kernel_sizes = (0..n_kernels).map(|_| r.u32()).collect::<Result<_>>()?;
    Ok(IncepSEConfig {
        input_channels,
        depth,
        branch_channels,
        bottleneck_channels,
        kernel_sizes,
        pool_branch_kernel: r.u32()?,
        skip_kernel: r.u32()?,
        se_reduction: r.u32()?,
        last_layer_multiplier: r.u32()?,
        last_layer_stride: r.u32()?,
        dropout_p: r.f64()?,
        num_classes: r.u32()?,
        allow_even_kernels: r.u8()? != 0,
    })
}

pub fn encode_checkpoint(model: &ModelParams) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(FORMAT_VERSION as usize);
    w.u8(VALUE_WIDTH);
    write_config(&mut w, &model.config);
    let tensors = model.named_tensors();
    w.u32(tensors.len());
    for nt in tensors {
        w.u32(nt.name.len());
        w.0.extend_from_slice(nt.name.as_bytes());
        w.u32(nt.tensor.rank());
        for &d in nt.tensor.shape() {
            w.u32(d);
        }
        for &v in nt.tensor.data() {
            w.f64(v);
        }
    }
    w.0
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| Error::BadMagic)? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let width = r.u8()?;
    if width != 4 && width != 8 {
        return Err(Error::Parse {
            context: "checkpoint header".into(),
            reason: format!("unsupported value width {width}"),
        });
    }
    let config = read_config(&mut r)?;
    let mut model = ModelParams::zeros(&config)?;
    let count = r.u32()?;
    let mut slots = model.named_tensors_mut();
    if count != slots.len() {
        return Err(Error::Parse {
            context: "checkpoint".into(),
            reason: format!("expected {} tensors, found {count}", slots.len()),
        });
    }
    for slot in slots.iter_mut() {
        let name_len = r.u32()?;
        let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| Error::CorruptTensor {
            name: slot.name.clone(),
            reason: "name is not utf-8".into(),
        })?;
        if name != slot.name {
            return Err(Error::CorruptTensor {
                name: slot.name.clone(),
                reason: format!("found {name:?} in its place"),
            });
        }
        let rank = r.u32()?;
        if rank != slot.tensor.rank() {
            return Err(Error::CorruptTensor {
                name: slot.name.clone(),
                reason: format!("rank {rank}, expected {}", slot.tensor.rank()),
            });
        }
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        if dims != slot.tensor.shape() {
            return Err(Error::CorruptTensor {
                name: slot.name.clone(),
                reason: format!("shape {dims:?}, expected {:?}", slot.tensor.shape()),
            });
        }
        for v in slot.tensor.data_mut() {
            *v = if width == 8 { r.f64()? } else { r.f32()? as f64 };
        }
    }
    drop(slots);
    if r.pos != buf.len() {
        return Err(Error::Parse {
            context: "checkpoint".into(),
            reason: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    Ok(model)
}

pub fn save_checkpoint(model: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&buf)
}

/// Loads a checkpoint and checks it against the task's `[leads, classes]`.
pub fn load_checkpoint_for(path: impl AsRef<Path>, input_channels: usize, num_classes: usize) -> Result<ModelParams> {
    let model = load_checkpoint(path)?;
    let have = vec![model.config.input_channels, model.config.num_classes];
    let want = vec![input_channels, num_classes];
    if have != want {
        return Err(Error::ConfigMismatch {
            checkpoint: have,
            requested: want,
        });
    }
    Ok(model)
}
