//! Seeded uniform-area samplers for simple analytic surfaces.
//!
//! Every shape is scaled to fit inside the unit sphere by construction, so
//! samples need no empirical normalization afterwards.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Plane,
    Sphere,
    Cylinder,
    Cone,
    Torus,
    Cube,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 6] = [
        ShapeKind::Plane,
        ShapeKind::Sphere,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
        ShapeKind::Cube,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ShapeKind::Plane => "plane",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
            ShapeKind::Cube => "cube",
        }
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(ShapeKind::Plane),
            "sphere" => Ok(ShapeKind::Sphere),
            "cylinder" => Ok(ShapeKind::Cylinder),
            "cone" => Ok(ShapeKind::Cone),
            "torus" => Ok(ShapeKind::Torus),
            "cube" => Ok(ShapeKind::Cube),
            other => Err(Error::invalid_argument(format!("unknown shape '{other}'"))),
        }
    }
}

/// Torus radii used by [`gen_shape`]; major + minor = 1.
pub const TORUS_MAJOR: f64 = 0.75;
pub const TORUS_MINOR: f64 = 0.25;

/// Samples `n` points uniformly by area from the analytic surface.
/// Deterministic for a given `(kind, n, seed)`.
pub fn gen_shape(kind: ShapeKind, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::invalid_argument("shape needs n >= 1 points"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Point3> = (0..n).map(|_| sample_point(kind, &mut rng)).collect();
    PointCloud::from_points(points)
}

fn sample_point(kind: ShapeKind, rng: &mut ChaCha8Rng) -> Point3 {
    match kind {
        ShapeKind::Plane => {
            // Square of half-side 1/sqrt(2): corners touch the unit sphere.
            let h = std::f64::consts::FRAC_1_SQRT_2;
            [rng.random_range(-h..h), rng.random_range(-h..h), 0.0]
        }
        ShapeKind::Sphere => {
            // Uniform via uniform z and azimuth.
            let z: f64 = rng.random_range(-1.0..1.0);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            let r = (1.0 - z * z).max(0.0).sqrt();
            [r * phi.cos(), r * phi.sin(), z]
        }
        ShapeKind::Cylinder => {
            // Closed cylinder, radius 0.5, half-height sqrt(3)/2; parts
            // chosen by surface area.
            let r = 0.5;
            let h = (1.0f64 - r * r).sqrt();
            let side_area = std::f64::consts::TAU * r * 2.0 * h;
            let cap_area = std::f64::consts::PI * r * r;
            let pick = rng.random_range(0.0..side_area + 2.0 * cap_area);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            if pick < side_area {
                [r * phi.cos(), r * phi.sin(), rng.random_range(-h..h)]
            } else {
                let rho = r * rng.random_range(0.0f64..1.0).sqrt();
                let z = if pick < side_area + cap_area { h } else { -h };
                [rho * phi.cos(), rho * phi.sin(), z]
            }
        }
        ShapeKind::Cone => {
            // Apex at (0,0,1), base circle radius 0.6 at z = -0.8, closed by
            // its base disk; parts chosen by surface area.
            let r: f64 = 0.6;
            let apex_z = 1.0;
            let base_z = -0.8;
            let height = apex_z - base_z;
            let slant = (r * r + height * height).sqrt();
            let lateral_area = std::f64::consts::PI * r * slant;
            let base_area = std::f64::consts::PI * r * r;
            let pick = rng.random_range(0.0..lateral_area + base_area);
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            if pick < lateral_area {
                // Area density along the axis grows linearly from the apex.
                let t = rng.random_range(0.0f64..1.0).sqrt();
                let rho = t * r;
                let z = apex_z - t * height;
                [rho * phi.cos(), rho * phi.sin(), z]
            } else {
                let rho = r * rng.random_range(0.0f64..1.0).sqrt();
                [rho * phi.cos(), rho * phi.sin(), base_z]
            }
        }
        ShapeKind::Torus => {
            // Uniform area needs the minor angle weighted by R + r*cos;
            // rejection sampling keeps it exact and seeded.
            let theta = rng.random_range(0.0..std::f64::consts::TAU);
            let phi = loop {
                let cand = rng.random_range(0.0..std::f64::consts::TAU);
                let accept = (TORUS_MAJOR + TORUS_MINOR * cand.cos())
                    / (TORUS_MAJOR + TORUS_MINOR);
                if rng.random_range(0.0..1.0) < accept {
                    break cand;
                }
            };
            let ring = TORUS_MAJOR + TORUS_MINOR * phi.cos();
            [
                ring * theta.cos(),
                ring * theta.sin(),
                TORUS_MINOR * phi.sin(),
            ]
        }
        ShapeKind::Cube => {
            // Surface of a cube with half-side 1/sqrt(3).
            let a = 1.0 / 3.0f64.sqrt();
            let face = rng.random_range(0..6usize);
            let u = rng.random_range(-a..a);
            let v = rng.random_range(-a..a);
            match face {
                0 => [a, u, v],
                1 => [-a, u, v],
                2 => [u, a, v],
                3 => [u, -a, v],
                4 => [u, v, a],
                _ => [u, v, -a],
            }
        }
    }
}
