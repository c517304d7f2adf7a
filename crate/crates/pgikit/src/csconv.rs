//! Concentric-square regional embedding over geometry image blocks.
//!
//! Each `k x k` block splits into three concentric square regions by
//! Chebyshev ring distance from the block center. Every region is pooled as
//! a point set (centered, rescaled, shared MLP, channel-wise max) into a
//! square codeword; the ordered concatenation fuses into a structural
//! codeword, a parallel point map on raw coordinates pools into a
//! positional codeword, and one final fusion yields the regional vector.

use ndarray::{Array1, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{maxpool_columns, Activation, MlpStack, MomentumSgd};
use crate::resample::Pgi;
use crate::threading;

/// Regional embedding width.
pub const EMBED_DIM: usize = 128;

const SQUARE_POOL_DIM: usize = 128;
const STRUCT_DIM: usize = 64;
const POS_DIM: usize = 64;

/// The three concentric square regions of a `k x k` block, as pixel indices
/// into the row-major block. Disjoint whenever the block has at least three
/// rings (`k >= 5`); for `k` of 3 or 4 the outermost region reuses the
/// outermost ring so all three codewords stay defined.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentricPartition {
    squares: [Vec<usize>; 3],
}

impl ConcentricPartition {
    pub fn squares(&self) -> &[Vec<usize>; 3] {
        &self.squares
    }

    pub fn innermost(&self) -> &[usize] {
        &self.squares[0]
    }

    pub fn intermediate(&self) -> &[usize] {
        &self.squares[1]
    }

    pub fn outermost(&self) -> &[usize] {
        &self.squares[2]
    }
}

/// Splits the block's Chebyshev rings into three contiguous bands of
/// near-equal ring counts, extra rings going to the inner bands first.
pub fn partition_concentric(k: usize) -> Result<ConcentricPartition> {
    if k < 3 {
        return Err(Error::invalid_argument(format!(
            "concentric partition needs k >= 3, got {k}"
        )));
    }
    // Ring index of a pixel: scaled Chebyshev distance from the block
    // center. `|2r - (k-1)|` is even for odd k, odd for even k.
    let ring_count = k.div_ceil(2);
    let ring_of = |r: usize, c: usize| -> usize {
        let dr = (2 * r as i64 - (k as i64 - 1)).unsigned_abs() as usize;
        let dc = (2 * c as i64 - (k as i64 - 1)).unsigned_abs() as usize;
        let d = dr.max(dc);
        if k % 2 == 1 {
            d / 2
        } else {
            (d - 1) / 2
        }
    };
    let mut rings: Vec<Vec<usize>> = vec![Vec::new(); ring_count];
    for r in 0..k {
        for c in 0..k {
            rings[ring_of(r, c)].push(r * k + c);
        }
    }

    let squares = if ring_count == 2 {
        [rings[0].clone(), rings[1].clone(), rings[1].clone()]
    } else {
        let base = ring_count / 3;
        let rem = ring_count % 3;
        let counts = [
            base + usize::from(rem >= 1),
            base + usize::from(rem >= 2),
            base,
        ];
        let mut iter = rings.into_iter();
        let mut take = |n: usize| -> Vec<usize> {
            let mut out = Vec::new();
            for _ in 0..n {
                out.extend(iter.next().unwrap());
            }
            out
        };
        [take(counts[0]), take(counts[1]), take(counts[2])]
    };
    Ok(ConcentricPartition { squares })
}

/// Parameters of the regional embedding operator.
#[derive(Debug, Clone)]
pub struct CsconvParams {
    /// Shared point map for the three square regions.
    pub square_mlp: MlpStack,
    /// Fuses the ordered square codewords into the structural codeword.
    pub fuse_fc: MlpStack,
    /// Point map of the positional path, applied to raw coordinates.
    pub pos_mlp: MlpStack,
    /// Fuses structural and positional codewords into the regional vector.
    pub out_fuse: MlpStack,
}

impl CsconvParams {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CsconvParams {
            square_mlp: MlpStack::seeded(
                &[3, 64, SQUARE_POOL_DIM],
                &[Activation::Relu, Activation::Relu],
                &mut rng,
            ),
            fuse_fc: MlpStack::seeded(
                &[3 * SQUARE_POOL_DIM, STRUCT_DIM],
                &[Activation::Identity],
                &mut rng,
            ),
            pos_mlp: MlpStack::seeded(&[3, POS_DIM], &[Activation::Relu], &mut rng),
            out_fuse: MlpStack::seeded(
                &[STRUCT_DIM + POS_DIM, EMBED_DIM],
                &[Activation::Identity],
                &mut rng,
            ),
        }
    }

    pub fn embed_dim(&self) -> usize {
        self.out_fuse.output_width()
    }

    fn validate(&self) -> Result<()> {
        if self.fuse_fc.input_width() != 3 * self.square_mlp.output_width()
            || self.out_fuse.input_width()
                != self.fuse_fc.output_width() + self.pos_mlp.output_width()
        {
            return Err(Error::invalid_argument(
                "csconv parameter widths do not chain",
            ));
        }
        Ok(())
    }
}

/// The `d_v x n_g x n_g` map of regional embeddings of a whole image.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionalFeatureMap {
    values: Array3<f64>,
}

impl RegionalFeatureMap {
    pub fn new(values: Array3<f64>) -> Self {
        Self { values }
    }

    pub fn embed_dim(&self) -> usize {
        self.values.dim().0
    }

    pub fn n_g(&self) -> usize {
        self.values.dim().1
    }

    /// Channel-major `[d_v, n_g, n_g]` values.
    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn cell(&self, block_row: usize, block_col: usize) -> Array1<f64> {
        self.values
            .slice(ndarray::s![.., block_row, block_col])
            .to_owned()
    }

    /// Channel-wise max over all cells.
    pub fn global_max(&self) -> Array1<f64> {
        let d = self.embed_dim();
        let mut out = Array1::from_elem(d, f64::NEG_INFINITY);
        for c in 0..d {
            for v in self.values.slice(ndarray::s![c, .., ..]).iter() {
                if *v > out[c] {
                    out[c] = *v;
                }
            }
        }
        out
    }
}

/// Centers a point set on its centroid and rescales the farthest point to
/// unit norm; a degenerate set collapses to all zeros. Points are sorted
/// first so the centroid sum never depends on pixel order within a square.
fn normalized_square_points(points: &mut Vec<[f64; 3]>) -> Array2<f64> {
    points.sort_unstable_by(|a, b| {
        a[0].total_cmp(&b[0])
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
    });
    let n = points.len() as f64;
    let mut center = [0.0f64; 3];
    for p in points.iter() {
        for c in 0..3 {
            center[c] += p[c];
        }
    }
    for c in &mut center {
        *c /= n;
    }
    let mut scale: f64 = 0.0;
    for p in points.iter() {
        let d = crate::geom::dist2(p, &center).sqrt();
        scale = scale.max(d);
    }
    let mut out = Array2::zeros((points.len(), 3));
    if scale > 0.0 {
        for (i, p) in points.iter().enumerate() {
            for c in 0..3 {
                out[[i, c]] = (p[c] - center[c]) / scale;
            }
        }
    }
    out
}

fn widen_pixels(pixels: &[[f32; 3]], idxs: &[usize]) -> Vec<[f64; 3]> {
    idxs.iter()
        .map(|&i| {
            let p = pixels[i];
            [p[0] as f64, p[1] as f64, p[2] as f64]
        })
        .collect()
}

/// Embeds one `k x k` block (row-major pixels) into a `d_v` vector.
pub fn csconv_block(params: &CsconvParams, pixels: &[[f32; 3]], k: usize) -> Result<Array1<f64>> {
    params.validate()?;
    if pixels.len() != k * k {
        return Err(Error::invalid_argument(format!(
            "expected {} pixels for a {k}x{k} block, got {}",
            k * k,
            pixels.len()
        )));
    }
    let partition = partition_concentric(k)?;

    let pool_dim = params.square_mlp.output_width();
    let mut structural_in = Array1::zeros(3 * pool_dim);
    for (s, square) in partition.squares().iter().enumerate() {
        if square.is_empty() {
            continue; // square codeword stays zero
        }
        let mut pts = widen_pixels(pixels, square);
        let normalized = normalized_square_points(&mut pts);
        let out = params.square_mlp.forward(&normalized)?;
        let (pooled, _) = maxpool_columns(&out);
        for c in 0..pool_dim {
            structural_in[s * pool_dim + c] = pooled[c];
        }
    }
    let v_r = params
        .fuse_fc
        .forward(&structural_in.insert_axis(ndarray::Axis(0)))?;

    let all: Vec<usize> = (0..k * k).collect();
    let raw = widen_pixels(pixels, &all);
    let mut raw_mat = Array2::zeros((raw.len(), 3));
    for (i, p) in raw.iter().enumerate() {
        for c in 0..3 {
            raw_mat[[i, c]] = p[c];
        }
    }
    let pos_out = params.pos_mlp.forward(&raw_mat)?;
    let (v_a, _) = maxpool_columns(&pos_out);

    let mut fused_in = Array1::zeros(params.out_fuse.input_width());
    for c in 0..v_r.ncols() {
        fused_in[c] = v_r[[0, c]];
    }
    for c in 0..v_a.len() {
        fused_in[v_r.ncols() + c] = v_a[c];
    }
    let v = params
        .out_fuse
        .forward(&fused_in.insert_axis(ndarray::Axis(0)))?;
    Ok(v.row(0).to_owned())
}

/// Applies [`csconv_block`] to every block of the image, in parallel,
/// placing each vector at the block's grid cell.
pub fn regional_embedding(params: &CsconvParams, pgi: &Pgi) -> Result<RegionalFeatureMap> {
    params.validate()?;
    let n_g = pgi.n_g();
    let k = pgi.k();
    let cells: Vec<(usize, usize)> = (0..n_g)
        .flat_map(|r| (0..n_g).map(move |c| (r, c)))
        .collect();
    let vectors: Result<Vec<Array1<f64>>> = threading::pool().install(|| {
        cells
            .par_iter()
            .map(|&(r, c)| csconv_block(params, pgi.block(r, c).pixels(), k))
            .collect()
    });
    let vectors = vectors?;

    let d = params.embed_dim();
    let mut values = Array3::zeros((d, n_g, n_g));
    for ((r, c), v) in cells.into_iter().zip(vectors) {
        for ch in 0..d {
            values[[ch, r, c]] = v[ch];
        }
    }
    Ok(RegionalFeatureMap::new(values))
}

/// Class scores: global channel-wise max over the regional map, then the
/// head network.
pub fn toy_classify(params: &CsconvParams, head: &MlpStack, pgi: &Pgi) -> Result<Array1<f64>> {
    let map = regional_embedding(params, pgi)?;
    let pooled = map.global_max();
    if head.input_width() != pooled.len() {
        return Err(Error::invalid_argument(format!(
            "head input width {} does not match feature width {}",
            head.input_width(),
            pooled.len()
        )));
    }
    let scores = head.forward(&pooled.insert_axis(ndarray::Axis(0)))?;
    Ok(scores.row(0).to_owned())
}

/// Trains a small classification head on fixed feature rows with full-batch
/// softmax cross-entropy and momentum descent. Returns the head and its
/// loss trace.
pub fn train_classifier_head(
    features: &Array2<f64>,
    labels: &[usize],
    n_classes: usize,
    learning_rate: f64,
    steps: usize,
    seed: u64,
) -> Result<(MlpStack, Vec<f64>)> {
    if features.nrows() != labels.len() {
        return Err(Error::invalid_argument(
            "feature rows do not match label count",
        ));
    }
    if labels.iter().any(|&l| l >= n_classes) {
        return Err(Error::invalid_argument("label out of class range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut head = MlpStack::seeded(
        &[features.ncols(), 64, n_classes],
        &[Activation::Relu, Activation::Identity],
        &mut rng,
    );
    let mut opt = MomentumSgd::new(&head, learning_rate, 0.9);
    let n = features.nrows() as f64;

    let mut trace = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let (logits, cache) = head.forward_cached(features)?;
        // Row-wise stable softmax; upstream is (softmax - onehot) / n.
        let mut upstream = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (r, row) in logits.rows().into_iter().enumerate() {
            let maxv = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - maxv).exp()).collect();
            let denom: f64 = exps.iter().sum();
            loss += -(exps[labels[r]] / denom).ln() / n;
            for c in 0..exps.len() {
                let p = exps[c] / denom;
                let onehot = if c == labels[r] { 1.0 } else { 0.0 };
                upstream[[r, c]] = (p - onehot) / n;
            }
        }
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        trace.push(loss);
        if step == steps {
            break;
        }
        let (grads, _) = head.backward(features, &cache, &upstream);
        opt.step(&mut head, &grads);
    }
    Ok((head, trace))
}
