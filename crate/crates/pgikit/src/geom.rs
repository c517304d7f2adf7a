//! Core geometry types and deterministic primitives.
//!
//! Everything in this module is a pure function of its inputs: normalization,
//! farthest point sampling, exact k-NN, and the guidance/context
//! decomposition used by the flattening pipeline.

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];
pub type Point2 = [f64; 2];

#[inline]
pub fn dist2(a: &Point3, b: &Point3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn dist2_2d(a: &Point2, b: &Point2) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// An ordered set of 3D points with stable per-point identifiers and
/// optional per-point attribute triples (e.g. RGB in `[0,1]`).
///
/// Invariants enforced at construction: at least one point, all coordinates
/// finite, ids unique, and all per-point arrays equally long.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    attrs: Option<Vec<[f64; 3]>>,
    source_ids: Vec<u32>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, source_ids: Vec<u32>) -> Result<Self> {
        Self::with_attrs(points, None, source_ids)
    }

    pub fn with_attrs(
        points: Vec<Point3>,
        attrs: Option<Vec<[f64; 3]>>,
        source_ids: Vec<u32>,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("point cloud has no points".into()));
        }
        if points.len() != source_ids.len() {
            return Err(Error::invalid_input(format!(
                "{} points but {} source ids",
                points.len(),
                source_ids.len()
            )));
        }
        if let Some(a) = &attrs {
            if a.len() != points.len() {
                return Err(Error::invalid_input(format!(
                    "{} points but {} attribute rows",
                    points.len(),
                    a.len()
                )));
            }
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid_input(format!(
                    "non-finite coordinate at point {i}"
                )));
            }
        }
        let mut seen = source_ids.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid_input("duplicate source ids"));
        }
        Ok(Self {
            points,
            attrs,
            source_ids,
        })
    }

    /// Builds a cloud with sequential ids `0..n`.
    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        let n = points.len();
        Self::new(points, (0..n as u32).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the constructor rejects empty clouds
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point3 {
        self.points[i]
    }

    pub fn source_ids(&self) -> &[u32] {
        &self.source_ids
    }

    pub fn attrs(&self) -> Option<&[[f64; 3]]> {
        self.attrs.as_deref()
    }

    /// New cloud holding the rows at `indices`, in that order, with ids and
    /// attributes carried along.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let points = indices.iter().map(|&i| self.points[i]).collect();
        let ids = indices.iter().map(|&i| self.source_ids[i]).collect();
        let attrs = self
            .attrs
            .as_ref()
            .map(|a| indices.iter().map(|&i| a[i]).collect());
        Self::with_attrs(points, attrs, ids)
    }

    /// Rounds every coordinate to the nearest `f32` value (kept in `f64`
    /// storage). Grid resampling copies coordinates verbatim into `f32`
    /// image pixels, so pipelines snap their working cloud first to keep
    /// that copy lossless.
    pub fn snap_to_f32(&self) -> Self {
        let points = self
            .points
            .iter()
            .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64])
            .collect();
        Self {
            points,
            attrs: self.attrs.clone(),
            source_ids: self.source_ids.clone(),
        }
    }
}

/// Per-point 2D coordinates in the unit square, row-aligned with the cloud
/// they were produced from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarEmbedding {
    coords: Vec<Point2>,
    source_ids: Vec<u32>,
}

impl PlanarEmbedding {
    pub fn new(coords: Vec<Point2>, source_ids: Vec<u32>) -> Result<Self> {
        if coords.len() != source_ids.len() {
            return Err(Error::invalid_input(format!(
                "{} coords but {} source ids",
                coords.len(),
                source_ids.len()
            )));
        }
        for (i, c) in coords.iter().enumerate() {
            if !c.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
                return Err(Error::invalid_input(format!(
                    "embedding coordinate {i} outside the unit square: {c:?}"
                )));
            }
        }
        Ok(Self { coords, source_ids })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Point2] {
        &self.coords
    }

    pub fn source_ids(&self) -> &[u32] {
        &self.source_ids
    }
}

/// A uniform `side x side` lattice over the unit square, row-major.
/// `coords[r*side + c] = (c/(side-1), r/(side-1))`; a 1x1 lattice sits at
/// the square's center.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    side: usize,
    coords: Vec<Point2>,
}

impl Lattice {
    pub fn new(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::invalid_argument("lattice side must be >= 1"));
        }
        let coords = if side == 1 {
            vec![[0.5, 0.5]]
        } else {
            let step = 1.0 / (side - 1) as f64;
            let mut coords = Vec::with_capacity(side * side);
            for r in 0..side {
                for c in 0..side {
                    coords.push([c as f64 * step, r as f64 * step]);
                }
            }
            coords
        };
        Ok(Self { side, coords })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coords(&self) -> &[Point2] {
        &self.coords
    }

    /// Grid spacing along each axis (1 for the degenerate 1x1 lattice).
    pub fn spacing(&self) -> f64 {
        if self.side > 1 {
            1.0 / (self.side - 1) as f64
        } else {
            1.0
        }
    }
}

/// FPS centroids plus their k-NN patches, the coarse/fine split that the
/// hierarchical flattening operates on.
#[derive(Debug, Clone)]
pub struct GuidanceDecomposition {
    guidance: PointCloud,
    contexts: Vec<PointCloud>,
    guidance_indices: Vec<usize>,
}

impl GuidanceDecomposition {
    pub fn guidance(&self) -> &PointCloud {
        &self.guidance
    }

    pub fn contexts(&self) -> &[PointCloud] {
        &self.contexts
    }

    /// Index of each centroid in the cloud the decomposition was built from.
    pub fn guidance_indices(&self) -> &[usize] {
        &self.guidance_indices
    }

    pub fn patch_count(&self) -> usize {
        self.contexts.len()
    }
}

/// Centers a cloud on its centroid and scales the farthest point to unit
/// norm. Returns the normalized cloud together with `(center, scale)`;
/// `x * scale + center` recovers the input. A cloud of coincident points
/// keeps scale 1.
pub fn normalize_unit_sphere(pc: &PointCloud) -> Result<(PointCloud, Point3, f64)> {
    let n = pc.len() as f64;
    let mut center = [0.0; 3];
    for p in pc.points() {
        center[0] += p[0];
        center[1] += p[1];
        center[2] += p[2];
    }
    center = [center[0] / n, center[1] / n, center[2] / n];

    let mut scale: f64 = 0.0;
    for p in pc.points() {
        let d = dist2(p, &center).sqrt();
        scale = scale.max(d);
    }
    if scale == 0.0 {
        scale = 1.0;
    }

    let points = pc
        .points()
        .iter()
        .map(|p| {
            [
                (p[0] - center[0]) / scale,
                (p[1] - center[1]) / scale,
                (p[2] - center[2]) / scale,
            ]
        })
        .collect();
    let normalized = PointCloud::with_attrs(
        points,
        pc.attrs().map(|a| a.to_vec()),
        pc.source_ids().to_vec(),
    )?;
    Ok((normalized, center, scale))
}

/// Applies the inverse of [`normalize_unit_sphere`]: `x * scale + center`.
pub fn denormalize(pc: &PointCloud, center: &Point3, scale: f64) -> Result<PointCloud> {
    let points = pc
        .points()
        .iter()
        .map(|p| {
            [
                p[0] * scale + center[0],
                p[1] * scale + center[1],
                p[2] * scale + center[2],
            ]
        })
        .collect();
    PointCloud::with_attrs(
        points,
        pc.attrs().map(|a| a.to_vec()),
        pc.source_ids().to_vec(),
    )
}

/// Farthest point sampling: greedy max-min selection of `count` indices
/// starting from `start_index`. Distance ties break toward the lowest index,
/// so the result is fully deterministic.
pub fn fps(pc: &PointCloud, count: usize, start_index: usize) -> Result<Vec<usize>> {
    let n = pc.len();
    if count == 0 || count > n {
        return Err(Error::invalid_argument(format!(
            "fps count {count} out of range 1..={n}"
        )));
    }
    if start_index >= n {
        return Err(Error::invalid_argument(format!(
            "fps start index {start_index} out of range for {n} points"
        )));
    }

    let pts = pc.points();
    let mut selected = Vec::with_capacity(count);
    selected.push(start_index);
    let mut min_d2: Vec<f64> = pts.iter().map(|p| dist2(p, &pts[start_index])).collect();

    while selected.len() < count {
        let mut best = 0usize;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > best_d2 {
                best_d2 = d;
                best = i;
            }
        }
        selected.push(best);
        for (i, d) in min_d2.iter_mut().enumerate() {
            let nd = dist2(&pts[i], &pts[best]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}

/// Exact k nearest neighbors of `query`, sorted by ascending distance with
/// ties broken toward the lowest index.
pub fn knn(pc: &PointCloud, query: &Point3, k: usize) -> Result<Vec<usize>> {
    let n = pc.len();
    if k == 0 || k > n {
        return Err(Error::invalid_argument(format!(
            "knn k {k} out of range 1..={n}"
        )));
    }
    let mut order: Vec<(f64, usize)> = pc
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (dist2(p, query), i))
        .collect();
    order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(order[..k].iter().map(|&(_, i)| i).collect())
}

/// Splits a cloud into `n_g^2` FPS guidance centroids and their `n_c`-point
/// k-NN context patches. Patches may overlap; each patch contains its own
/// centroid.
pub fn decompose(pc: &PointCloud, n_g: usize, n_c: usize) -> Result<GuidanceDecomposition> {
    if n_g == 0 {
        return Err(Error::invalid_argument("n_g must be >= 1"));
    }
    let n_guidance = n_g * n_g;
    if n_guidance > pc.len() {
        return Err(Error::invalid_argument(format!(
            "n_g^2 = {n_guidance} exceeds cloud size {}",
            pc.len()
        )));
    }
    if n_c == 0 || n_c > pc.len() {
        return Err(Error::invalid_argument(format!(
            "n_c {n_c} out of range 1..={}",
            pc.len()
        )));
    }

    let guidance_indices = fps(pc, n_guidance, 0)?;
    let guidance = pc.subset(&guidance_indices)?;

    let mut contexts = Vec::with_capacity(n_guidance);
    for &gi in &guidance_indices {
        let mut idxs = knn(pc, &pc.point(gi), n_c)?;
        // Exact-duplicate coordinates can push the centroid out of its own
        // k-NN list; swap it back in so every patch contains its centroid.
        if !idxs.contains(&gi) {
            let last = idxs.len() - 1;
            idxs[last] = gi;
        }
        contexts.push(pc.subset(&idxs)?);
    }

    Ok(GuidanceDecomposition {
        guidance,
        contexts,
        guidance_indices,
    })
}
