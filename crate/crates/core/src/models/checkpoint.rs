//! Weight checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      4 bytes  "TKBW"
//! version    u32      1
//! kind_len   u32      length of the model kind string
//! kind       bytes    UTF-8, e.g. "mlp"
//! blocks     u32      number of parameter blocks
//! per block:
//!   rank     u32
//!   dims     rank x u64
//!   data     product(dims) x f64
//! ```
//!
//! Blocks appear in forward order; for each layer the weight precedes the bias.

use std::io::{Read, Write};

use super::layers::Layer;
use super::network::Network;
use crate::error::{BanditError, Result};

pub const MAGIC: &[u8; 4] = b"TKBW";
pub const VERSION: u32 = 1;

/// One named-by-position parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamBlock {
    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn from_network(net: &Network) -> Vec<ParamBlock> {
        let mut blocks = Vec::new();
        for layer in net.layers() {
            match layer {
                Layer::Dense(d) => {
                    blocks.push(ParamBlock {
                        shape: vec![d.outputs, d.inputs],
                        data: d.weight.clone(),
                    });
                    blocks.push(ParamBlock::vector(d.bias.clone()));
                }
                Layer::Conv2d(c) => {
                    blocks.push(ParamBlock {
                        shape: vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                        data: c.weight.clone(),
                    });
                    blocks.push(ParamBlock::vector(c.bias.clone()));
                }
                _ => {}
            }
        }
        blocks
    }
}

pub(crate) fn restore_network(net: &mut Network, blocks: &[ParamBlock]) -> Result<()> {
    let expected = ParamBlock::from_network(net);
    if expected.len() != blocks.len() {
        return Err(BanditError::Checkpoint(format!(
            "expected {} parameter blocks, found {}",
            expected.len(),
            blocks.len()
        )));
    }
    for (i, (want, got)) in expected.iter().zip(blocks).enumerate() {
        if want.shape != got.shape {
            return Err(BanditError::Checkpoint(format!(
                "block {i}: expected shape {:?}, found {:?}",
                want.shape, got.shape
            )));
        }
    }
    for (dst, src) in net.params_mut().into_iter().zip(blocks) {
        dst.copy_from_slice(&src.data);
    }
    Ok(())
}

pub fn write_checkpoint(w: &mut impl Write, kind: &str, blocks: &[ParamBlock]) -> Result<()> {
    let io = |e| BanditError::Checkpoint(format!("write failed: {e}"));
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(kind.len() as u32).to_le_bytes())
        .map_err(io)?;
    w.write_all(kind.as_bytes()).map_err(io)?;
    w.write_all(&(blocks.len() as u32).to_le_bytes())
        .map_err(io)?;
    for b in blocks {
        w.write_all(&(b.shape.len() as u32).to_le_bytes())
            .map_err(io)?;
        for &d in &b.shape {
            w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
        }
        for v in &b.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| BanditError::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| BanditError::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u64::from_le_bytes(buf))
}

/// Reads a checkpoint, returning the model kind string and the blocks.
pub fn read_checkpoint(r: &mut impl Read) -> Result<(String, Vec<ParamBlock>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| BanditError::Checkpoint(format!("truncated file: {e}")))?;
    if &magic != MAGIC {
        return Err(BanditError::Checkpoint("bad magic".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(BanditError::Checkpoint(format!(
            "unsupported version {version}"
        )));
    }
    let kind_len = read_u32(r)? as usize;
    let mut kind = vec![0u8; kind_len];
    r.read_exact(&mut kind)
        .map_err(|e| BanditError::Checkpoint(format!("truncated file: {e}")))?;
    let kind = String::from_utf8(kind)
        .map_err(|_| BanditError::Checkpoint("model kind is not UTF-8".into()))?;
    let count = read_u32(r)?;
    let mut blocks = Vec::new();
    for _ in 0..count {
        let rank = read_u32(r)? as usize;
        let shape = (0..rank)
            .map(|_| read_u64(r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f64::from_bits(read_u64(r)?));
        }
        blocks.push(ParamBlock { shape, data });
    }
    Ok((kind, blocks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AdamConfig, ModelKind, NeuralModel, RewardModel};
    use crate::rng::stream;

    #[test]
    fn round_trip_restores_network() {
        let a = NeuralModel::new(
            ModelKind::Mlp,
            Network::mlp(3, 4, 0.0, &mut stream(1, 0)),
            AdamConfig::default(),
            8,
        );
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "mlp", &a.parameters()).unwrap();
        let (kind, blocks) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(kind, "mlp");
        let mut b = NeuralModel::new(
            ModelKind::Mlp,
            Network::mlp(3, 4, 0.0, &mut stream(2, 0)),
            AdamConfig::default(),
            8,
        );
        b.load_parameters(&blocks).unwrap();
        assert_eq!(a.network().params(), b.network().params());
    }

    #[test]
    fn rejects_bad_magic_and_shapes() {
        assert!(read_checkpoint(&mut &b"XXXX\x01\0\0\0"[..]).is_err());
        let mut net = Network::mlp(3, 4, 0.0, &mut stream(1, 0));
        let wrong = vec![ParamBlock::vector(vec![0.0; 3])];
        assert!(restore_network(&mut net, &wrong).is_err());
    }
}
