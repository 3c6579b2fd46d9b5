//! Bit-exact checkpoint format.
//!
//! Magic `NTYP`, format version as 16-bit little-endian, architecture id
//! byte (1 or 2), mask byte (bit0=A, bit1=B, bit2=C), hidden and output
//! sizes as 32-bit little-endian, the taxonomy content hash as 64-bit
//! FNV-1a, the layer count, then per layer rows and cols as 32-bit
//! integers followed by the weights and the bias as little-endian 32-bit
//! floats, row-major.
//!
//! Dropout is not stored: inverted scaling makes saved parameters
//! mode-independent. The per-input dimensions are recovered from the layer
//! shapes (A and B share the word-vector dimension; C's equals the output
//! size).

use std::path::Path;

use super::matrix::Matrix;
use super::network::{Activation, Architecture, DenseLayer, ModelParams, NetworkTopology};
use crate::features::InputMask;
use crate::wire::{ByteReader, ByteWriter};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NTYP";
const VERSION: u16 = 1;

pub fn save_checkpoint(params: &ModelParams, taxonomy_hash: u64, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(params, taxonomy_hash);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_bytes(params: &ModelParams, taxonomy_hash: u64) -> Vec<u8> {
    let topology = &params.topology;
    let mut w = ByteWriter::new();
    w.put_bytes(MAGIC);
    w.put_u16(VERSION);
    w.put_u8(topology.architecture.id());
    w.put_u8(topology.mask.to_byte());
    w.put_u32(topology.hidden_size as u32);
    w.put_u32(topology.output_size as u32);
    w.put_u64(taxonomy_hash);
    w.put_u32(params.layers.len() as u32);
    for layer in &params.layers {
        w.put_u32(layer.weights.rows() as u32);
        w.put_u32(layer.weights.cols() as u32);
        for &x in layer.weights.data() {
            w.put_f32(x as f32);
        }
        for &b in &layer.bias {
            w.put_f32(b as f32);
        }
    }
    w.into_inner()
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&bytes);

    let magic = [r.take_u8()?, r.take_u8()?, r.take_u8()?, r.take_u8()?];
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.take_u16()?;
    if version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported checkpoint version {version}",
            path.display()
        )));
    }
    let architecture = Architecture::from_id(r.take_u8()?)?;
    let mask = InputMask::from_byte(r.take_u8()?)?;
    let hidden_size = r.take_u32()? as usize;
    let output_size = r.take_u32()? as usize;
    let taxonomy_hash = r.take_u64()?;
    let layer_count = r.take_u32()? as usize;

    let mut layers = Vec::with_capacity(layer_count);
    for i in 0..layer_count {
        let rows = r.take_u32()? as usize;
        let cols = r.take_u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from(r.take_f32()?));
        }
        let mut bias = Vec::with_capacity(cols);
        for _ in 0..cols {
            bias.push(f64::from(r.take_f32()?));
        }
        layers.push(DenseLayer {
            weights: Matrix::from_vec(rows, cols, data),
            bias,
            activation: if i == layer_count - 1 {
                Activation::None
            } else {
                Activation::Relu
            },
        });
    }
    r.expect_eof()?;

    let input_dims = recover_input_dims(architecture, mask, output_size, &layers)?;
    let expected_layers = match architecture {
        Architecture::NeuType1 => 3,
        Architecture::NeuType2 => 2 * mask.active_count() + 3,
    };
    if layer_count != expected_layers {
        return Err(Error::Data(format!(
            "{}: {architecture} with mask {mask} should have {expected_layers} layers, found {layer_count}",
            path.display()
        )));
    }

    let topology = NetworkTopology {
        architecture,
        mask,
        input_dims,
        hidden_size,
        output_size,
        dropout: Vec::new(),
    };
    topology.validate()?;
    for (i, (layer, (rows, cols))) in layers.iter().zip(topology.layer_shapes()).enumerate() {
        layer.weights.check_shape(rows, cols, i)?;
    }

    Ok((
        ModelParams {
            layers,
            topology,
            seed: 0, // not stored
        },
        taxonomy_hash,
    ))
}

fn recover_input_dims(
    architecture: Architecture,
    mask: InputMask,
    output_size: usize,
    layers: &[DenseLayer],
) -> Result<Vec<usize>> {
    if layers.is_empty() {
        return Err(Error::Data("checkpoint has no layers".into()));
    }
    match architecture {
        Architecture::NeuType2 => Ok((0..mask.active_count())
            .map(|i| layers[2 * i].weights.rows())
            .collect()),
        Architecture::NeuType1 => {
            let total = layers[0].weights.rows();
            let n_word = usize::from(mask.a) + usize::from(mask.b);
            let c_dim = if mask.c { output_size } else { 0 };
            if n_word == 0 {
                return Ok(vec![total]);
            }
            let remainder = total
                .checked_sub(c_dim)
                .filter(|r| r % n_word == 0 && *r > 0)
                .ok_or_else(|| {
                    Error::Data(format!(
                        "cannot split merge input of {total} across mask {mask}"
                    ))
                })?;
            let word_dim = remainder / n_word;
            let mut dims = Vec::new();
            if mask.a {
                dims.push(word_dim);
            }
            if mask.b {
                dims.push(word_dim);
            }
            if mask.c {
                dims.push(c_dim);
            }
            Ok(dims)
        }
    }
}
