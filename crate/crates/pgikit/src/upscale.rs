//! Bicubic upscaling of the coordinate image: the coarse stage of PGI-based
//! point upsampling. Doubling the image side quadruples the encoded point
//! count; no residual refinement is applied.

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};
use crate::resample::Pgi;

/// A plain square three-channel coordinate image. Unlike a [`Pgi`], pixels
/// are interpolated values with no provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordImage {
    size: usize,
    pixels: Vec<Point3>,
}

impl CoordImage {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[Point3] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> Point3 {
        self.pixels[row * self.size + col]
    }
}

/// Catmull-Rom kernel weights for the four taps around fractional offset
/// `t` in `[0, 1)`.
fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// Tap positions and weights for output index `o` of a factor-2 upscale of
/// an `n`-sample signal, centers aligned and borders clamped.
fn taps(o: usize, n: usize) -> ([usize; 4], [f64; 4]) {
    let x = (o as f64 + 0.5) / 2.0 - 0.5;
    let base = x.floor();
    let t = x - base;
    let clamp = |i: i64| -> usize { i.clamp(0, n as i64 - 1) as usize };
    let b = base as i64;
    (
        [clamp(b - 1), clamp(b), clamp(b + 1), clamp(b + 2)],
        catmull_rom_weights(t),
    )
}

/// Separable edge-clamped Catmull-Rom interpolation of the coordinate
/// image to twice its side, plus the corresponding `4*m^2`-point cloud.
/// Only `factor == 2` is supported.
pub fn pgi_bicubic_upscale(pgi: &Pgi, factor: usize) -> Result<(CoordImage, PointCloud)> {
    if factor != 2 {
        return Err(Error::invalid_argument(format!(
            "only factor 2 upscaling is supported, got {factor}"
        )));
    }
    let m = pgi.m();
    let out_m = 2 * m;

    // Horizontal pass: m rows, 2m columns.
    let mut tmp = vec![[0.0f64; 3]; m * out_m];
    for r in 0..m {
        for oc in 0..out_m {
            let (idx, w) = taps(oc, m);
            let mut acc = [0.0f64; 3];
            for tap in 0..4 {
                let p = pgi.pixel(r, idx[tap]);
                for ch in 0..3 {
                    acc[ch] += w[tap] * p[ch] as f64;
                }
            }
            tmp[r * out_m + oc] = acc;
        }
    }

    // Vertical pass: 2m rows.
    let mut pixels = vec![[0.0f64; 3]; out_m * out_m];
    for or in 0..out_m {
        let (idx, w) = taps(or, m);
        for oc in 0..out_m {
            let mut acc = [0.0f64; 3];
            for tap in 0..4 {
                let p = tmp[idx[tap] * out_m + oc];
                for ch in 0..3 {
                    acc[ch] += w[tap] * p[ch];
                }
            }
            pixels[or * out_m + oc] = acc;
        }
    }

    let cloud = PointCloud::from_points(pixels.clone())?;
    Ok((
        CoordImage {
            size: out_m,
            pixels,
        },
        cloud,
    ))
}

/// Packages an upscaled image as a Pgi container (same block grid, doubled
/// block side). Pixels are interpolated rather than copied, so provenance
/// is approximated: each output pixel inherits the id and duplicate flag of
/// the nearest source pixel.
pub fn upscaled_to_pgi(pgi: &Pgi, image: &CoordImage) -> Result<Pgi> {
    let m = pgi.m();
    if image.size() != 2 * m {
        return Err(Error::invalid_argument(
            "image side is not twice the source image side",
        ));
    }
    let out_m = image.size();
    let mut source_ids = vec![0u32; out_m * out_m];
    let mut duplicate = vec![false; out_m * out_m];
    let pixels: Vec<[f32; 3]> = image
        .pixels()
        .iter()
        .map(|p| [p[0] as f32, p[1] as f32, p[2] as f32])
        .collect();
    for or in 0..out_m {
        for oc in 0..out_m {
            let src = (or / 2) * m + (oc / 2);
            source_ids[or * out_m + oc] = pgi.source_ids()[src];
            duplicate[or * out_m + oc] = pgi.duplicate()[src];
        }
    }
    Pgi::from_parts(
        pgi.n_g(),
        2 * pgi.k(),
        pixels,
        source_ids,
        duplicate,
        pgi.block_of().to_vec(),
        pgi.transform(),
    )
}
