//! Visualization export: the coordinate image as a 16-bit RGB PNG with a
//! sidecar recording per-channel min/max for dequantization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Rgb};

use crate::error::Result;
use crate::resample::Pgi;

/// Quantizes each channel affinely onto `0..=65535` and writes `path` plus
/// a `<path>.meta` sidecar with the per-channel ranges. A channel with no
/// spread quantizes to all zeros; its sidecar min equals its max.
pub fn export_pgi_png(pgi: &Pgi, path: &Path) -> Result<()> {
    let m = pgi.m() as u32;
    let mut mins = [f32::INFINITY; 3];
    let mut maxs = [f32::NEG_INFINITY; 3];
    for p in pgi.pixels() {
        for c in 0..3 {
            mins[c] = mins[c].min(p[c]);
            maxs[c] = maxs[c].max(p[c]);
        }
    }

    let quantize = |v: f32, c: usize| -> u16 {
        if maxs[c] > mins[c] {
            let t = (v - mins[c]) as f64 / (maxs[c] - mins[c]) as f64;
            (t * 65535.0).round().clamp(0.0, 65535.0) as u16
        } else {
            0
        }
    };

    let mut img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::new(m, m);
    for (i, p) in pgi.pixels().iter().enumerate() {
        let (x, y) = ((i % pgi.m()) as u32, (i / pgi.m()) as u32);
        img.put_pixel(x, y, Rgb([quantize(p[0], 0), quantize(p[1], 1), quantize(p[2], 2)]));
    }
    let mut out = BufWriter::new(File::create(path)?);
    DynamicImage::ImageRgb16(img)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| crate::error::Error::format(format!("png encode failed: {e}")))?;
    out.flush()?;

    let meta_path = sidecar_path(path);
    let mut meta = BufWriter::new(File::create(meta_path)?);
    writeln!(meta, "size={}", pgi.m())?;
    for (c, name) in ["x", "y", "z"].iter().enumerate() {
        writeln!(meta, "{name}_min={}", mins[c])?;
        writeln!(meta, "{name}_max={}", maxs[c])?;
    }
    meta.flush()?;
    Ok(())
}

/// Sidecar path for a PNG export: the image path with `.meta` appended.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta");
    s.into()
}
