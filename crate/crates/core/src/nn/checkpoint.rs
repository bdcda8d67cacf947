//! `TPNN` checkpoint format (little-endian):
//! magic `TPNN`, u16 version, config block (u32 in_dim, u32 n_classes,
//! u32 kernel, u32 n_blocks, u32 channels[n_blocks], u64 seed), then every
//! tensor as u32 length + f32 values, then a CRC32 of all preceding bytes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::model::{ClassifierModel, ConvBlock};
use super::{ClassifierConfig, NnError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TPNN";
pub const CHECKPOINT_VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensor<'a>(out: &mut Vec<u8>, values: impl ExactSizeIterator<Item = &'a f32>) {
    put_u32(out, values.len());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(model: &ClassifierModel<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = &model.config;
    put_u32(&mut out, cfg.in_dim);
    put_u32(&mut out, cfg.n_classes);
    put_u32(&mut out, cfg.kernel_size);
    put_u32(&mut out, cfg.conv_channels.len());
    for &c in &cfg.conv_channels {
        put_u32(&mut out, c);
    }
    out.extend_from_slice(&model.seed.to_le_bytes());
    for b in &model.blocks {
        put_tensor(&mut out, b.weight.iter());
        put_tensor(&mut out, b.gamma.iter());
        put_tensor(&mut out, b.beta.iter());
        put_tensor(&mut out, b.running_mean.iter());
        put_tensor(&mut out, b.running_var.iter());
    }
    put_tensor(&mut out, model.head_weight.iter());
    put_tensor(&mut out, model.head_bias.iter());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| NnError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn tensor(&mut self, expected: usize) -> Result<Vec<f32>, NnError> {
        let len = self.u32()?;
        if len != expected {
            return Err(NnError::Checkpoint(format!("tensor length {len}, config implies {expected}")));
        }
        let raw = self.take(len * 4)?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NnError::Checkpoint("non-finite parameter".into()));
        }
        Ok(values)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ClassifierModel<f32>, NnError> {
    if bytes.len() < 10 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(NnError::Checkpoint("CRC32 mismatch".into()));
    }
    let mut cur = Cursor { bytes: body, pos: 4 };
    let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {version}")));
    }
    let in_dim = cur.u32()?;
    let n_classes = cur.u32()?;
    let kernel_size = cur.u32()?;
    let n_blocks = cur.u32()?;
    if n_blocks > 64 {
        return Err(NnError::Checkpoint(format!("implausible block count {n_blocks}")));
    }
    let conv_channels = (0..n_blocks).map(|_| cur.u32()).collect::<Result<Vec<_>, _>>()?;
    let seed = u64::from_le_bytes(cur.take(8)?.try_into().unwrap());
    let config = ClassifierConfig { in_dim, n_classes, conv_channels, kernel_size };
    config.validate()?;

    let mut blocks = Vec::with_capacity(n_blocks);
    let mut in_ch = in_dim;
    for &out_ch in &config.conv_channels {
        let rows = kernel_size * in_ch;
        let weight = Array2::from_shape_vec((rows, out_ch), cur.tensor(rows * out_ch)?).unwrap();
        let mut vec1 = || cur.tensor(out_ch).map(Array1::from);
        blocks.push(ConvBlock {
            weight,
            gamma: vec1()?,
            beta: vec1()?,
            running_mean: vec1()?,
            running_var: vec1()?,
        });
        in_ch = out_ch;
    }
    let head_weight = Array2::from_shape_vec((in_ch, n_classes), cur.tensor(in_ch * n_classes)?).unwrap();
    let head_bias = Array1::from(cur.tensor(n_classes)?);
    if cur.pos != body.len() {
        return Err(NnError::Checkpoint(format!("{} trailing bytes", body.len() - cur.pos)));
    }
    Ok(ClassifierModel { config, blocks, head_weight, head_bias, seed })
}

pub fn save_checkpoint(model: &ClassifierModel<f32>, path: &Path) -> Result<(), NnError> {
    fs::write(path, encode_checkpoint(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierModel<f32>, NnError> {
    decode_checkpoint(&fs::read(path)?)
}
