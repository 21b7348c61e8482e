//! `SFT1` tensor container.
//!
//! Layout (all little-endian):
//!
//! | bytes        | content                          |
//! |--------------|----------------------------------|
//! | 4            | magic `SFT1`                     |
//! | 1            | rank `r`, one of 2, 3, 4         |
//! | 4 · r        | dims, `u32` each                 |
//! | 4 · Π dims   | row-major `f32` payload          |

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::types::{FeatureLayer, ScoreMap};

pub const MAGIC: &[u8; 4] = b"SFT1";

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("bad magic {0:?}, expected \"SFT1\"")]
    BadMagic([u8; 4]),
    #[error("rank {0} out of range (2..=4)")]
    RankOutOfRange(u8),
    #[error("truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("trailing bytes: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },
    #[error("cannot interpret rank-{rank} tensor {dims:?} as {target}")]
    Incompatible {
        rank: usize,
        dims: Vec<usize>,
        target: &'static str,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TensorError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u8 {
        match self {
            TensorError::BadMagic(_) => 10,
            TensorError::RankOutOfRange(_) => 11,
            TensorError::Truncated { .. } => 12,
            TensorError::TrailingBytes { .. } => 13,
            TensorError::Incompatible { .. } => 14,
            TensorError::Io(_) => 15,
        }
    }
}

/// Raw dense tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, TensorError> {
        if !(2..=4).contains(&dims.len()) {
            return Err(TensorError::RankOutOfRange(dims.len() as u8));
        }
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(TensorError::Truncated {
                expected: expected * 4,
                actual: data.len() * 4,
            });
        }
        Ok(Tensor { dims, data })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TensorError> {
        if bytes.len() < 5 {
            if bytes.len() >= 4 && &bytes[..4] != MAGIC {
                let mut m = [0u8; 4];
                m.copy_from_slice(&bytes[..4]);
                return Err(TensorError::BadMagic(m));
            }
            return Err(TensorError::Truncated {
                expected: 5,
                actual: bytes.len(),
            });
        }
        let mut magic = [0u8; 4];
        magic.copy_from_slice(&bytes[..4]);
        if &magic != MAGIC {
            return Err(TensorError::BadMagic(magic));
        }
        let rank = bytes[4];
        if !(2..=4).contains(&rank) {
            return Err(TensorError::RankOutOfRange(rank));
        }
        let header = 5 + 4 * rank as usize;
        if bytes.len() < header {
            return Err(TensorError::Truncated {
                expected: header,
                actual: bytes.len(),
            });
        }
        let dims: Vec<usize> = bytes[5..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let expected = header + 4 * dims.iter().product::<usize>();
        if bytes.len() < expected {
            return Err(TensorError::Truncated {
                expected,
                actual: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(TensorError::TrailingBytes {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes[header..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Tensor { dims, data })
    }

    /// Interprets `C×H×W` (or `H×W` as one class, or `1×C×H×W`) as a score map.
    pub fn into_score_map(self, probabilistic: bool) -> Result<ScoreMap, TensorError> {
        let (c, h, w) = self.chw("score map")?;
        Ok(ScoreMap::new(c, h, w, self.data, probabilistic).expect("dims checked"))
    }

    /// Interprets `U×H×W` (or `H×W`, or `1×U×H×W`) as one feature layer.
    pub fn into_feature_layer(self) -> Result<FeatureLayer, TensorError> {
        let (c, h, w) = self.chw("feature layer")?;
        FeatureLayer::new(c, h, w, self.data).map_err(|_| TensorError::Incompatible {
            rank: 3,
            dims: vec![c, h, w],
            target: "feature layer",
        })
    }

    fn chw(&self, target: &'static str) -> Result<(usize, usize, usize), TensorError> {
        match self.dims.as_slice() {
            [h, w] => Ok((1, *h, *w)),
            [c, h, w] if *c > 0 => Ok((*c, *h, *w)),
            [1, c, h, w] if *c > 0 => Ok((*c, *h, *w)),
            _ => Err(TensorError::Incompatible {
                rank: self.dims.len(),
                dims: self.dims.clone(),
                target,
            }),
        }
    }
}

impl From<&ScoreMap> for Tensor {
    fn from(m: &ScoreMap) -> Self {
        Tensor {
            dims: vec![m.classes(), m.height(), m.width()],
            data: m.as_slice().to_vec(),
        }
    }
}

impl From<&FeatureLayer> for Tensor {
    fn from(l: &FeatureLayer) -> Self {
        Tensor {
            dims: vec![l.channels(), l.height(), l.width()],
            data: l.as_slice().to_vec(),
        }
    }
}

pub fn read_tensor(path: &Path) -> Result<Tensor, TensorError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Tensor::decode(&bytes)
}

pub fn write_tensor(tensor: &Tensor, path: &Path) -> Result<(), TensorError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&tensor.encode())?;
    Ok(())
}
