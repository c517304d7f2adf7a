//! Versioned binary checkpoints for network parameters.
//!
//! Little-endian layout: magic `MLPK`, u16 version, u32 stack count, then
//! per stack a u32 layer count followed by per-layer records of
//! `rows: u32, cols: u32, activation: u8, f32 weights row-major, f32 bias`.
//! Parameters are stored as f32.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::csconv::CsconvParams;
use crate::error::{Error, Result};
use crate::nn::flatten::FlattenModel;
use crate::nn::{Activation, Layer, MlpStack};

const MAGIC: &[u8; 4] = b"MLPK";
const VERSION: u16 = 1;

pub fn write_stacks(path: &Path, stacks: &[&MlpStack]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(stacks.len() as u32).to_le_bytes());
    for stack in stacks {
        buf.extend_from_slice(&(stack.layers().len() as u32).to_le_bytes());
        for layer in stack.layers() {
            buf.extend_from_slice(&(layer.output_width() as u32).to_le_bytes());
            buf.extend_from_slice(&(layer.input_width() as u32).to_le_bytes());
            buf.push(layer.activation.tag());
            for v in layer.weights.iter() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            for v in layer.bias.iter() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_stacks(path: &Path) -> Result<Vec<MlpStack>> {
    let data = fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > data.len() {
            return Err(Error::format("truncated checkpoint"));
        }
        let s = &data[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    if take(&mut pos, 4)? != MAGIC {
        return Err(Error::format("bad magic, not a checkpoint file"));
    }
    let version = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let stack_count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;

    let mut stacks = Vec::with_capacity(stack_count);
    for _ in 0..stack_count {
        let layer_count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let rows = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let activation = Activation::from_tag(take(&mut pos, 1)?[0])?;
            let mut weights = Array2::zeros((rows, cols));
            for r in 0..rows {
                for c in 0..cols {
                    let v = f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                    weights[[r, c]] = v as f64;
                }
            }
            let mut bias = Array1::zeros(rows);
            for r in 0..rows {
                let v = f32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                bias[r] = v as f64;
            }
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
        }
        stacks.push(MlpStack::from_layers(layers)?);
    }
    if pos != data.len() {
        return Err(Error::format("trailing bytes in checkpoint"));
    }
    Ok(stacks)
}

/// Flattening model checkpoint: encoder, both teacher units, student,
/// context network, in that order.
pub fn save_flatten_model(path: &Path, model: &FlattenModel) -> Result<()> {
    write_stacks(
        path,
        &[
            &model.encoder,
            &model.teacher[0],
            &model.teacher[1],
            &model.student,
            &model.context,
        ],
    )
}

pub fn load_flatten_model(path: &Path) -> Result<FlattenModel> {
    let mut stacks = read_stacks(path)?;
    if stacks.len() != 5 {
        return Err(Error::format(format!(
            "flattening checkpoint needs 5 stacks, found {}",
            stacks.len()
        )));
    }
    let context = stacks.pop().unwrap();
    let student = stacks.pop().unwrap();
    let teacher1 = stacks.pop().unwrap();
    let teacher0 = stacks.pop().unwrap();
    let encoder = stacks.pop().unwrap();
    Ok(FlattenModel {
        encoder,
        teacher: [teacher0, teacher1],
        student,
        context,
    })
}

/// Regional embedding checkpoint: square map, structural fusion, positional
/// map, output fusion, in that order.
pub fn save_csconv_params(path: &Path, params: &CsconvParams) -> Result<()> {
    write_stacks(
        path,
        &[
            &params.square_mlp,
            &params.fuse_fc,
            &params.pos_mlp,
            &params.out_fuse,
        ],
    )
}

pub fn load_csconv_params(path: &Path) -> Result<CsconvParams> {
    let mut stacks = read_stacks(path)?;
    if stacks.len() != 4 {
        return Err(Error::format(format!(
            "embedding checkpoint needs 4 stacks, found {}",
            stacks.len()
        )));
    }
    let out_fuse = stacks.pop().unwrap();
    let pos_mlp = stacks.pop().unwrap();
    let fuse_fc = stacks.pop().unwrap();
    let square_mlp = stacks.pop().unwrap();
    Ok(CsconvParams {
        square_mlp,
        fuse_fc,
        pos_mlp,
        out_fuse,
    })
}

pub fn save_head(path: &Path, head: &MlpStack) -> Result<()> {
    write_stacks(path, &[head])
}

pub fn load_head(path: &Path) -> Result<MlpStack> {
    let mut stacks = read_stacks(path)?;
    if stacks.len() != 1 {
        return Err(Error::format(format!(
            "head checkpoint needs 1 stack, found {}",
            stacks.len()
        )));
    }
    Ok(stacks.pop().unwrap())
}
