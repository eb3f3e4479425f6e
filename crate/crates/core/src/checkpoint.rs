//! Decoder checkpoints.
//!
//! Layout: the magic bytes `RGDC`, the JSON header length as `u64` little
//! endian, the UTF-8 JSON header, then every parameter as `f64` little endian
//! in layer order (weight row-major, then bias).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{Activation, Decoder, DecoderError, Dense, LossKind};
use crate::manifold::ManifoldSpec;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RGDC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a decoder checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("parameter block has {got} bytes, header implies {expected}")]
    Truncated { expected: usize, got: usize },
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    /// `[input, output]` of every dense layer.
    pub layers: Vec<[usize; 2]>,
    pub activation: Activation,
    pub loss: LossKind,
    pub manifold: ManifoldSpec,
    pub n_params: usize,
}

/// A decoder with the loss and manifold it was trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub decoder: Decoder,
    pub loss: LossKind,
    pub manifold: ManifoldSpec,
}

impl Checkpoint {
    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            version: CHECKPOINT_VERSION,
            layers: self
                .decoder
                .layers()
                .iter()
                .map(|l| [l.input_dim(), l.output_dim()])
                .collect(),
            activation: self.decoder.activation(),
            loss: self.loss,
            manifold: self.manifold.clone(),
            n_params: self.decoder.n_params(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for v in self.decoder.to_flat() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|_| CheckpointError::BadMagic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        if header.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(header.version));
        }
        let mut block = Vec::new();
        r.read_to_end(&mut block)?;
        let expected = header.n_params * 8;
        if block.len() != expected {
            return Err(CheckpointError::Truncated {
                expected,
                got: block.len(),
            });
        }
        let flat: Vec<f64> = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let layers = header
            .layers
            .iter()
            .map(|&[i, o]| Dense {
                weight: Array2::zeros((o, i)),
                bias: Array1::zeros(o),
            })
            .collect();
        let mut decoder = Decoder::from_layers(layers, header.activation)?;
        decoder.set_flat(&flat)?;
        Ok(Checkpoint {
            decoder,
            loss: header.loss,
            manifold: header.manifold,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        self.write(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::read(BufReader::new(File::open(path)?))
    }
}
