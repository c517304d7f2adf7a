//! Binary dump of a regional feature map: magic `PGIV`, u16 embedding
//! width, u16 block grid side, then f32 little-endian values channel-major
//! (`[d_v][n_g][n_g]`, rows inner).

use std::fs;
use std::path::Path;

use ndarray::Array3;

use crate::csconv::RegionalFeatureMap;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PGIV";

pub fn write_feature_map(path: &Path, map: &RegionalFeatureMap) -> Result<()> {
    let d = map.embed_dim();
    let n_g = map.n_g();
    let mut buf = Vec::with_capacity(8 + d * n_g * n_g * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(d as u16).to_le_bytes());
    buf.extend_from_slice(&(n_g as u16).to_le_bytes());
    for v in map.values().iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_feature_map(path: &Path) -> Result<RegionalFeatureMap> {
    let data = fs::read(path)?;
    if data.len() < 8 || &data[..4] != MAGIC {
        return Err(Error::format("not a feature map file"));
    }
    let d = u16::from_le_bytes([data[4], data[5]]) as usize;
    let n_g = u16::from_le_bytes([data[6], data[7]]) as usize;
    let expected = 8 + d * n_g * n_g * 4;
    if data.len() != expected {
        return Err(Error::format(format!(
            "feature map length {} does not match header ({expected} expected)",
            data.len()
        )));
    }
    let mut values = Array3::zeros((d, n_g, n_g));
    let mut pos = 8;
    for c in 0..d {
        for r in 0..n_g {
            for col in 0..n_g {
                let v = f32::from_le_bytes(data[pos..pos + 4].try_into().unwrap());
                values[[c, r, col]] = v as f64;
                pos += 4;
            }
        }
    }
    Ok(RegionalFeatureMap::new(values))
}
