//! Binary model checkpoints.
//!
//! Layout: magic `FRGT1`, a version byte, a `u32` block count, then per block
//! a `u32` name length, the UTF-8 name, a `u32` rank, `u64` dimensions and
//! `f64` data; everything little-endian. A trailing CRC32 covers every byte
//! after the version byte. Architecture metadata is stored as the first block,
//! `meta.arch`.

use std::fs;
use std::path::Path;

use forgetnet_tensor::{ParamSet, Tensor};
use thiserror::Error;

use crate::model::{ArchSpec, ForgettingModel, TaskArch};
use crate::nn::Activation;

pub const MAGIC: &[u8; 5] = b"FRGT1";
pub const VERSION: u8 = 1;
const ARCH_BLOCK: &str = "meta.arch";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {VERSION})")]
    UnsupportedVersion(u8),
    #[error("checkpoint checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

type Result<T> = std::result::Result<T, CheckpointError>;

fn arch_to_values(arch: &ArchSpec) -> Vec<f64> {
    let mut v = vec![
        arch.input_width,
        arch.latent_dim,
        arch.hidden_width,
        arch.encoder_layers,
        arch.forget_gate_layers,
        arch.predictor_layers,
        arch.decoder_layers,
        arch.discriminator_layers,
        arch.encoder_output.code() as usize,
        arch.decoder_output.code() as usize,
        arch.tasks.len(),
    ];
    for t in &arch.tasks {
        v.push(t.y_classes);
        v.push(t.s_classes);
    }
    v.into_iter().map(|x| x as f64).collect()
}

fn arch_from_values(v: &[f64]) -> Result<ArchSpec> {
    let bad = || CheckpointError::Malformed("invalid architecture block".into());
    let ints: Vec<usize> = v
        .iter()
        .map(|&x| {
            if x >= 0.0 && x.fract() == 0.0 && x < 1e9 {
                Ok(x as usize)
            } else {
                Err(bad())
            }
        })
        .collect::<Result<_>>()?;
    if ints.len() < 11 || ints.len() != 11 + 2 * ints[10] {
        return Err(bad());
    }
    let act = |c: usize| Activation::from_code(c as u8).ok_or_else(bad);
    Ok(ArchSpec {
        input_width: ints[0],
        latent_dim: ints[1],
        hidden_width: ints[2],
        encoder_layers: ints[3],
        forget_gate_layers: ints[4],
        predictor_layers: ints[5],
        decoder_layers: ints[6],
        discriminator_layers: ints[7],
        encoder_output: act(ints[8])?,
        decoder_output: act(ints[9])?,
        tasks: ints[11..]
            .chunks_exact(2)
            .map(|p| TaskArch {
                y_classes: p[0],
                s_classes: p[1],
            })
            .collect(),
    })
}

fn put_block(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &x in t.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Serializes named tensors into the container layout.
pub fn encode_blocks<'a>(blocks: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let mut body = Vec::new();
    let mut count = 0u32;
    for (name, t) in blocks {
        put_block(&mut body, name, t);
        count += 1;
    }
    let mut out = Vec::with_capacity(body.len() + 14);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out[MAGIC.len() + 1..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

/// Serializes `model` to bytes.
pub fn encode(model: &ForgettingModel) -> Vec<u8> {
    let params = model.named_params();
    let arch = arch_to_values(model.arch());
    let arch = Tensor::from_vec(&[arch.len()], arch);
    encode_blocks(std::iter::once((ARCH_BLOCK, &arch)).chain(params.iter()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(CheckpointError::Truncated { offset: self.pos })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn block(&mut self) -> Result<(String, Tensor)> {
        let len = self.u32()? as usize;
        let name = std::str::from_utf8(self.take(len)?)
            .map_err(|_| CheckpointError::Malformed("block name is not UTF-8".into()))?
            .to_string();
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(self.u64()? as usize);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("block `{name}` too large")))?;
        let bytes = self.take(count.checked_mul(8).ok_or(CheckpointError::Truncated {
            offset: self.pos,
        })?)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data)
            .map_err(|e| CheckpointError::Malformed(format!("block `{name}`: {e}")))?;
        Ok((name, t))
    }
}

/// Parses the container layout back into named tensors.
pub fn decode_blocks(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let header = MAGIC.len() + 1;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < header {
        return Err(CheckpointError::Truncated {
            offset: bytes.len(),
        });
    }
    if bytes[MAGIC.len()] != VERSION {
        return Err(CheckpointError::UnsupportedVersion(bytes[MAGIC.len()]));
    }
    if bytes.len() < header + 4 + 4 {
        return Err(CheckpointError::Truncated {
            offset: bytes.len(),
        });
    }
    let (payload, crc) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc.try_into().unwrap());
    let computed = crc32fast::hash(&payload[header..]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    let mut r = Reader {
        buf: payload,
        pos: header,
    };
    let count = r.u32()? as usize;
    let mut blocks = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        blocks.push(r.block()?);
    }
    if r.pos != payload.len() {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    Ok(blocks)
}

/// Parses bytes produced by [`encode`].
pub fn decode(bytes: &[u8]) -> std::result::Result<ForgettingModel, crate::Error> {
    let mut blocks = decode_blocks(bytes)?.into_iter();
    let (name, arch) = blocks
        .next()
        .ok_or_else(|| CheckpointError::Malformed("no blocks".into()))?;
    if name != ARCH_BLOCK {
        return Err(CheckpointError::Malformed(format!("first block is `{name}`")).into());
    }
    let arch = arch_from_values(arch.data())?;
    let mut params = ParamSet::new();
    for (name, t) in blocks {
        params.push(name, t);
    }
    ForgettingModel::from_named_params(arch, &params)
}

pub fn save(model: &ForgettingModel, path: &Path) -> crate::Result<()> {
    fs::write(path, encode(model)).map_err(|e| crate::Error::io(path, e))
}

pub fn load(path: &Path) -> crate::Result<ForgettingModel> {
    let bytes = fs::read(path).map_err(|e| crate::Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn model() -> ForgettingModel {
        let mut arch = ArchSpec::tabular(
            5,
            vec![
                TaskArch {
                    y_classes: 2,
                    s_classes: 2,
                },
                TaskArch {
                    y_classes: 3,
                    s_classes: 4,
                },
            ],
        );
        arch.latent_dim = 3;
        arch.hidden_width = 4;
        ForgettingModel::new(arch, 11).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let m = model();
        let back = decode(&encode(&m)).unwrap();
        assert_eq!(back.arch(), m.arch());
        assert!(back.named_params().bitwise_eq(&m.named_params()));
    }

    #[test]
    fn corruption_errors_are_distinct() {
        let bytes = encode(&model());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode(&bad),
            Err(Error::Checkpoint(CheckpointError::BadMagic))
        ));

        let mut bad = bytes.clone();
        bad[5] = 7;
        assert!(matches!(
            decode(&bad),
            Err(Error::Checkpoint(CheckpointError::UnsupportedVersion(7)))
        ));

        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x40;
        assert!(matches!(
            decode(&bad),
            Err(Error::Checkpoint(CheckpointError::Checksum { .. }))
        ));

        assert!(matches!(
            decode(&bytes[..3]),
            Err(Error::Checkpoint(CheckpointError::BadMagic))
        ));
    }

    #[test]
    fn truncation_with_valid_checksum_reports_truncated() {
        let bytes = encode(&model());
        let mut cut = bytes[..bytes.len() - 4 - 16].to_vec();
        let crc = crc32fast::hash(&cut[6..]);
        cut.extend_from_slice(&crc.to_le_bytes());
        assert!(matches!(
            decode(&cut),
            Err(Error::Checkpoint(CheckpointError::Truncated { .. }))
        ));
    }
}
