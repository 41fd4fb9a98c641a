//! The portable `CNSTW001` weight file.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic      8 bytes  "CNSTW001"
//! count      u32
//! per layer: u16 name length, UTF-8 name,
//!            u32 out_channels, u32 in_channels, u32 kernel_h, u32 kernel_w,
//!            f32 kernel[out * in * kh * kw], f32 bias[out]
//! crc        u32      CRC-32 of every preceding byte
//! ```

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::numerics::{ConvLayer, KERNEL_SIZE};

pub const MAGIC_PREFIX: &[u8; 5] = b"CNSTW";
pub const FORMAT_VERSION: &[u8; 3] = b"001";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("cannot read weight file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not a CNSTW weight file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported weight format version {found:?}, expected \"001\"")]
    VersionMismatch { found: String },
    #[error("weight file truncated while reading {what}")]
    Truncated { what: String },
    #[error("layer `{layer}` has unsupported shape: {detail}")]
    ShapeMismatch { layer: String, detail: String },
    #[error("layer name is not valid UTF-8")]
    InvalidName,
    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("{0} unexpected bytes after the checksum")]
    TrailingBytes(usize),
}

/// Convolution weights keyed by layer name, in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkWeights {
    layers: Vec<ConvLayer>,
}

impl NetworkWeights {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self, WeightsError> {
        let mut seen = HashSet::new();
        for layer in &layers {
            if !seen.insert(layer.name()) {
                return Err(WeightsError::DuplicateLayer(layer.name().to_owned()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn get(&self, name: &str) -> Option<&ConvLayer> {
        self.layers.iter().find(|l| l.name() == name)
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: impl FnOnce() -> String) -> Result<&'a [u8], WeightsError> {
        if self.bytes.len() - self.pos < n {
            return Err(WeightsError::Truncated { what: what() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, what: &str) -> Result<u16, WeightsError> {
        let b = self.take(2, || what.to_owned())?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        let b = self.take(4, || what.to_owned())?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, count: usize, what: impl FnOnce() -> String) -> Result<Vec<f64>, WeightsError> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| WeightsError::Truncated { what: "tensor size".into() })?;
        let b = self.take(len, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect())
    }
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<NetworkWeights, WeightsError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| WeightsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_weights(&bytes)
}

pub fn decode_weights(bytes: &[u8]) -> Result<NetworkWeights, WeightsError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(8, || "magic".into())?;
    if &magic[..5] != MAGIC_PREFIX {
        return Err(WeightsError::BadMagic);
    }
    if &magic[5..] != FORMAT_VERSION {
        return Err(WeightsError::VersionMismatch {
            found: String::from_utf8_lossy(&magic[5..]).into_owned(),
        });
    }
    let count = r.u32("layer count")?;
    let mut layers = Vec::new();
    for index in 0..count {
        let name_len = r.u16("layer name length")? as usize;
        let name = r.take(name_len, || format!("name of layer {index}"))?;
        let name = std::str::from_utf8(name)
            .map_err(|_| WeightsError::InvalidName)?
            .to_owned();
        let out_channels = r.u32("out_channels")? as usize;
        let in_channels = r.u32("in_channels")? as usize;
        let kh = r.u32("kernel_h")? as usize;
        let kw = r.u32("kernel_w")? as usize;
        if kh != KERNEL_SIZE || kw != KERNEL_SIZE {
            return Err(WeightsError::ShapeMismatch {
                layer: name,
                detail: format!("kernel {kh}x{kw}, only 3x3 is supported"),
            });
        }
        if out_channels == 0 || in_channels == 0 {
            return Err(WeightsError::ShapeMismatch {
                layer: name,
                detail: format!("{out_channels} outputs from {in_channels} inputs"),
            });
        }
        let kernel = r.f32s(out_channels * in_channels * kh * kw, || {
            format!("kernel of `{name}`")
        })?;
        let bias = r.f32s(out_channels, || format!("bias of `{name}`"))?;
        let layer = ConvLayer::new(name.clone(), in_channels, out_channels, kernel, bias)
            .map_err(|e| WeightsError::ShapeMismatch {
                layer: name,
                detail: e.to_string(),
            })?;
        layers.push(layer);
    }
    let body_len = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(WeightsError::TrailingBytes(bytes.len() - r.pos));
    }
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(WeightsError::Checksum { stored, computed });
    }
    NetworkWeights::new(layers)
}

/// Serializes weights (narrowed to `f32`) with a trailing CRC-32.
pub fn encode_weights(weights: &NetworkWeights) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC_PREFIX);
    out.extend_from_slice(FORMAT_VERSION);
    out.extend_from_slice(&(weights.layers.len() as u32).to_le_bytes());
    for layer in &weights.layers {
        let name = layer.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        for dim in [
            layer.out_channels(),
            layer.in_channels(),
            KERNEL_SIZE,
            KERNEL_SIZE,
        ] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for &v in layer.kernel().iter().chain(layer.bias()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn write_weights(weights: &NetworkWeights, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&encode_weights(weights))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> NetworkWeights {
        let a = ConvLayer::new(
            "conv1_1",
            3,
            2,
            (0..54).map(|i| i as f64 * 0.25 - 3.0).collect(),
            vec![0.5, -0.5],
        )
        .unwrap();
        let b = ConvLayer::new("conv1_2", 2, 2, vec![1.0; 36], vec![0.0, 2.0]).unwrap();
        NetworkWeights::new(vec![a, b]).unwrap()
    }

    #[test]
    fn round_trip() {
        let w = sample();
        let bytes = encode_weights(&w);
        assert_eq!(&bytes[..8], b"CNSTW001");
        assert_eq!(decode_weights(&bytes).unwrap(), w);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_weights(&sample());
        bytes[0] ^= 0xff;
        assert!(matches!(decode_weights(&bytes), Err(WeightsError::BadMagic)));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode_weights(&sample());
        bytes[7] = b'2';
        assert!(matches!(
            decode_weights(&bytes),
            Err(WeightsError::VersionMismatch { .. })
        ));
    }

    #[test]
    fn truncated_mid_kernel() {
        let bytes = encode_weights(&sample());
        let cut = 8 + 4 + 2 + 7 + 16 + 40;
        assert!(matches!(
            decode_weights(&bytes[..cut]),
            Err(WeightsError::Truncated { .. })
        ));
        assert!(matches!(
            decode_weights(&bytes[..5]),
            Err(WeightsError::Truncated { .. })
        ));
    }

    #[test]
    fn corrupted_weight_fails_checksum() {
        let mut bytes = encode_weights(&sample());
        let i = 8 + 4 + 2 + 7 + 16 + 10;
        bytes[i] ^= 0x01;
        assert!(matches!(
            decode_weights(&bytes),
            Err(WeightsError::Checksum { .. })
        ));
    }

    #[test]
    fn non_3x3_kernel_rejected() {
        let mut bytes = encode_weights(&sample());
        // kernel_h of the first layer
        let i = 8 + 4 + 2 + 7 + 8;
        bytes[i] = 5;
        assert!(matches!(
            decode_weights(&bytes),
            Err(WeightsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn trailing_garbage() {
        let mut bytes = encode_weights(&sample());
        bytes.push(0);
        assert!(matches!(
            decode_weights(&bytes),
            Err(WeightsError::TrailingBytes(1))
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let l = ConvLayer::new("conv1_1", 3, 1, vec![0.0; 27], vec![0.0]).unwrap();
        assert!(matches!(
            NetworkWeights::new(vec![l.clone(), l]),
            Err(WeightsError::DuplicateLayer(_))
        ));
    }
}
