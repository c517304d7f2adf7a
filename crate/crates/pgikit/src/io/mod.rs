//! File formats: xyz / ascii PLY point clouds, the binary image container,
//! 16-bit PNG export, model checkpoints, and feature map dumps.

mod checkpoint;
mod feature_map;
mod pgi_file;
mod png_export;
mod ply;
mod xyz;

pub use checkpoint::{
    load_csconv_params, load_flatten_model, load_head, read_stacks, save_csconv_params,
    save_flatten_model, save_head, write_stacks,
};
pub use feature_map::{read_feature_map, write_feature_map};
pub use pgi_file::{read_pgi, write_pgi};
pub use png_export::export_pgi_png;
pub use ply::{read_ply, write_ply};
pub use xyz::{read_xyz, write_xyz};

use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::PointCloud;

/// Point cloud file formats the toolkit reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFormat {
    Xyz,
    PlyAscii,
}

impl PointFormat {
    /// Chooses a format from a file extension (`.xyz`, `.ply`).
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("xyz") | Some("txt") => Ok(PointFormat::Xyz),
            Some("ply") => Ok(PointFormat::PlyAscii),
            other => Err(Error::format(format!(
                "cannot infer point format from extension {other:?}"
            ))),
        }
    }
}

/// Reads a point cloud in the given format; ids are assigned in file order.
pub fn read_points(path: &Path, format: PointFormat) -> Result<PointCloud> {
    match format {
        PointFormat::Xyz => read_xyz(path),
        PointFormat::PlyAscii => read_ply(path),
    }
}

/// Writes a point cloud in the given format.
pub fn write_points(path: &Path, pc: &PointCloud, format: PointFormat) -> Result<()> {
    match format {
        PointFormat::Xyz => write_xyz(path, pc),
        PointFormat::PlyAscii => write_ply(path, pc),
    }
}
