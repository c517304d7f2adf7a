//! Grid resampling: snapping planar embeddings onto lattice cells by
//! assignment and assembling per-patch blocks into one block-structured
//! point geometry image.
//!
//! Resampling copies coordinates, it never interpolates: every pixel holds
//! the verbatim (f32) coordinates of some input point along with that
//! point's id. Cells left over by a redundant local lattice are filled from
//! the nearest embedded point and flagged as duplicates.

use crate::assign::{auction_assign, AssignmentResult, CostMatrix};
use crate::error::{Error, Result};
use crate::geom::{dist2_2d, Lattice, PlanarEmbedding, PointCloud};
use crate::nn::flatten::GRID_ASSIGN_EPS;
use crate::threading;
use rayon::prelude::*;

/// Optional mapping from normalized pixel coordinates back to the source
/// frame: `x * scale + center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgiTransform {
    pub center: [f32; 3],
    pub scale: f32,
}

/// One resampled `k x k` block: pixel coordinates, per-pixel source ids,
/// and the duplicate mask (true where a cell was filled from an
/// already-placed neighbor).
#[derive(Debug, Clone, PartialEq)]
pub struct GridBlock {
    k: usize,
    pixels: Vec<[f32; 3]>,
    source_ids: Vec<u32>,
    duplicate: Vec<bool>,
}

impl GridBlock {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn source_ids(&self) -> &[u32] {
        &self.source_ids
    }

    pub fn duplicate(&self) -> &[bool] {
        &self.duplicate
    }

    pub fn duplicate_count(&self) -> usize {
        self.duplicate.iter().filter(|&&d| d).count()
    }
}

/// A block-structured `m x m` three-channel image of point coordinates,
/// `m = n_g * k`, with per-pixel provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgi {
    n_g: usize,
    k: usize,
    pixels: Vec<[f32; 3]>,
    source_ids: Vec<u32>,
    duplicate: Vec<bool>,
    block_of: Vec<u32>,
    transform: Option<PgiTransform>,
}

impl Pgi {
    /// Assembles a Pgi from raw arrays, validating sizes and that
    /// `block_of` is a permutation of the block grid.
    pub fn from_parts(
        n_g: usize,
        k: usize,
        pixels: Vec<[f32; 3]>,
        source_ids: Vec<u32>,
        duplicate: Vec<bool>,
        block_of: Vec<u32>,
        transform: Option<PgiTransform>,
    ) -> Result<Self> {
        if n_g == 0 || k == 0 {
            return Err(Error::invalid_argument("n_g and k must be >= 1"));
        }
        let m = n_g * k;
        let pixel_count = m * m;
        if pixels.len() != pixel_count
            || source_ids.len() != pixel_count
            || duplicate.len() != pixel_count
        {
            return Err(Error::invalid_argument(format!(
                "pixel arrays must hold {pixel_count} entries"
            )));
        }
        if block_of.len() != n_g * n_g {
            return Err(Error::invalid_argument(format!(
                "block map must hold {} entries",
                n_g * n_g
            )));
        }
        let mut seen = vec![false; n_g * n_g];
        for &b in &block_of {
            let b = b as usize;
            if b >= seen.len() || seen[b] {
                return Err(Error::invalid_input(
                    "block map is not a permutation of the block grid",
                ));
            }
            seen[b] = true;
        }
        if pixels.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid_input("non-finite pixel coordinate"));
        }
        Ok(Self {
            n_g,
            k,
            pixels,
            source_ids,
            duplicate,
            block_of,
            transform,
        })
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Image side `m = n_g * k`.
    pub fn m(&self) -> usize {
        self.n_g * self.k
    }

    pub fn pixel_count(&self) -> usize {
        self.m() * self.m()
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        self.pixels[row * self.m() + col]
    }

    pub fn source_ids(&self) -> &[u32] {
        &self.source_ids
    }

    pub fn duplicate(&self) -> &[bool] {
        &self.duplicate
    }

    /// Patch index resampled into each block-grid cell, row-major.
    pub fn block_of(&self) -> &[u32] {
        &self.block_of
    }

    pub fn transform(&self) -> Option<PgiTransform> {
        self.transform
    }

    pub fn with_transform(mut self, transform: Option<PgiTransform>) -> Self {
        self.transform = transform;
        self
    }

    /// Copies out the block at block-grid cell `(block_row, block_col)`.
    pub fn block(&self, block_row: usize, block_col: usize) -> GridBlock {
        let k = self.k;
        let m = self.m();
        let mut pixels = Vec::with_capacity(k * k);
        let mut source_ids = Vec::with_capacity(k * k);
        let mut duplicate = Vec::with_capacity(k * k);
        for r in 0..k {
            for c in 0..k {
                let idx = (block_row * k + r) * m + (block_col * k + c);
                pixels.push(self.pixels[idx]);
                source_ids.push(self.source_ids[idx]);
                duplicate.push(self.duplicate[idx]);
            }
        }
        GridBlock {
            k,
            pixels,
            source_ids,
            duplicate,
        }
    }
}

/// Square assignment of guidance embeddings onto the lattice cells,
/// minimizing total squared movement. Always a bijection.
pub fn resample_guidance(f_g: &PlanarEmbedding, lattice: &Lattice) -> Result<AssignmentResult> {
    if f_g.len() != lattice.len() {
        return Err(Error::invalid_argument(format!(
            "embedding size {} does not match lattice size {}",
            f_g.len(),
            lattice.len()
        )));
    }
    let grid = lattice.coords();
    let mut max_entry = 0.0f64;
    let cost = CostMatrix::from_fn(f_g.len(), grid.len(), |i, j| {
        let d = dist2_2d(&f_g.coords()[i], &grid[j]);
        max_entry = max_entry.max(d);
        d
    })?;
    auction_assign(&cost, (max_entry * GRID_ASSIGN_EPS).max(1e-15))
}

/// Rectangular assignment of `|f_c|` context embeddings onto the redundant
/// `k x k` local lattice. Matched cells copy their point's coordinates;
/// every unmatched cell is filled from the embedded point nearest to the
/// cell's grid coordinate (ties to the lowest point index) and flagged as a
/// duplicate.
pub fn resample_context(
    f_c: &PlanarEmbedding,
    context: &PointCloud,
    k: usize,
) -> Result<GridBlock> {
    let n_c = f_c.len();
    if n_c != context.len() {
        return Err(Error::invalid_argument(format!(
            "embedding size {} does not match context size {}",
            n_c,
            context.len()
        )));
    }
    if k == 0 || n_c > k * k {
        return Err(Error::invalid_argument(format!(
            "{n_c} context points do not fit a {k}x{k} block"
        )));
    }
    let lattice = Lattice::new(k)?;
    let grid = lattice.coords();

    let mut max_entry = 0.0f64;
    let cost = CostMatrix::from_fn(n_c, grid.len(), |i, j| {
        let d = dist2_2d(&f_c.coords()[i], &grid[j]);
        max_entry = max_entry.max(d);
        d
    })?;
    let assignment = auction_assign(&cost, (max_entry * GRID_ASSIGN_EPS).max(1e-15))?;

    let as_f32 = |p: [f64; 3]| [p[0] as f32, p[1] as f32, p[2] as f32];
    let mut pixels = vec![[0.0f32; 3]; k * k];
    let mut source_ids = vec![0u32; k * k];
    let mut duplicate = vec![true; k * k];
    for (i, &cell) in assignment.matches().iter().enumerate() {
        pixels[cell] = as_f32(context.point(i));
        source_ids[cell] = context.source_ids()[i];
        duplicate[cell] = false;
    }
    for cell in 0..k * k {
        if !duplicate[cell] {
            continue;
        }
        let mut best = f64::INFINITY;
        let mut best_i = 0usize;
        for (i, f) in f_c.coords().iter().enumerate() {
            let d = dist2_2d(f, &grid[cell]);
            if d < best {
                best = d;
                best_i = i;
            }
        }
        pixels[cell] = as_f32(context.point(best_i));
        source_ids[cell] = context.source_ids()[best_i];
    }

    Ok(GridBlock {
        k,
        pixels,
        source_ids,
        duplicate,
    })
}

/// Places block `i` at the block-grid cell its guidance embedding was
/// assigned to and stitches all blocks into the final image.
pub fn assemble_pgi(
    guidance_assign: &AssignmentResult,
    blocks: &[GridBlock],
    n_g: usize,
    k: usize,
) -> Result<Pgi> {
    if blocks.len() != n_g * n_g {
        return Err(Error::invalid_argument(format!(
            "expected {} blocks, got {}",
            n_g * n_g,
            blocks.len()
        )));
    }
    if guidance_assign.len() != blocks.len() {
        return Err(Error::invalid_argument(
            "guidance assignment size does not match block count",
        ));
    }
    if blocks.iter().any(|b| b.k != k) {
        return Err(Error::invalid_argument("block side mismatch"));
    }

    let m = n_g * k;
    let mut pixels = vec![[0.0f32; 3]; m * m];
    let mut source_ids = vec![0u32; m * m];
    let mut duplicate = vec![false; m * m];
    let mut block_of = vec![u32::MAX; n_g * n_g];

    for (i, block) in blocks.iter().enumerate() {
        let cell = guidance_assign.assigned_col(i);
        if block_of[cell] != u32::MAX {
            return Err(Error::invalid_input(
                "guidance assignment maps two blocks to one cell",
            ));
        }
        block_of[cell] = i as u32;
        let (br, bc) = (cell / n_g, cell % n_g);
        for r in 0..k {
            for c in 0..k {
                let src = r * k + c;
                let dst = (br * k + r) * m + (bc * k + c);
                pixels[dst] = block.pixels[src];
                source_ids[dst] = block.source_ids[src];
                duplicate[dst] = block.duplicate[src];
            }
        }
    }

    Pgi::from_parts(n_g, k, pixels, source_ids, duplicate, block_of, None)
}

/// Resamples all context patches in parallel, in input order.
pub fn resample_contexts(
    embeddings: &[PlanarEmbedding],
    contexts: &[PointCloud],
    k: usize,
) -> Result<Vec<GridBlock>> {
    if embeddings.len() != contexts.len() {
        return Err(Error::invalid_argument(
            "embedding and context counts differ",
        ));
    }
    threading::pool().install(|| {
        embeddings
            .par_iter()
            .zip(contexts.par_iter())
            .map(|(f, c)| resample_context(f, c, k))
            .collect()
    })
}

/// Flattens a Pgi back into a point cloud. With `dedupe` every distinct
/// source id appears once (first occurrence in row-major order, keeping its
/// original id); otherwise all `m^2` pixels come back with fresh sequential
/// ids.
pub fn pgi_to_points(pgi: &Pgi, dedupe: bool) -> PointCloud {
    let widen = |p: &[f32; 3]| [p[0] as f64, p[1] as f64, p[2] as f64];
    if !dedupe {
        let points: Vec<[f64; 3]> = pgi.pixels().iter().map(widen).collect();
        return PointCloud::from_points(points).expect("pgi holds at least one pixel");
    }
    let mut seen = std::collections::HashSet::new();
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for (p, &id) in pgi.pixels().iter().zip(pgi.source_ids()) {
        if seen.insert(id) {
            points.push(widen(p));
            ids.push(id);
        }
    }
    PointCloud::new(points, ids).expect("pgi holds at least one pixel")
}
