//! Hierarchical flattening networks and their training procedure.
//!
//! A grid-to-surface "teacher" deforms a fixed 2D lattice into the guidance
//! points, its matched lattice coordinates become targets for a
//! surface-to-plane "student", and the student is then fine-tuned under a
//! nearest-neighbor repulsion penalty. A separate shared network flattens
//! every context patch under the same repulsion penalty.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::assign::{auction_assign, CostMatrix};
use crate::dist::chamfer_with_argmins;
use crate::error::{Error, Result};
use crate::geom::{normalize_unit_sphere, Lattice, PlanarEmbedding, Point2, PointCloud};
use crate::nn::{
    concat_codeword, encode_codeword, maxpool_columns, points_matrix, Activation, Codeword,
    MlpStack, MomentumSgd,
};

/// Codeword width shared by the encoder and every conditioned network.
pub const CODEWORD_DIM: usize = 128;

/// Assignment tolerance used when snapping embeddings to lattice cells.
pub(crate) const GRID_ASSIGN_EPS: f64 = 1e-9;

/// Gradient-descent hyperparameters for one training stage.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Repulsion threshold; conventionally the target lattice interval
    /// `1/(side-1)`.
    pub epsilon: f64,
    pub momentum: f64,
    /// Stop a stage early once its loss drops to this value.
    pub stop_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 1000,
            seed: 0,
            epsilon: 1.0 / 15.0,
            momentum: 0.9,
            stop_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid_argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid_argument("steps must be >= 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid_argument(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid_argument(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// The full set of flattening networks: one shared point encoder, the
/// two-unit teacher, the guidance student, and the shared context network.
#[derive(Debug, Clone)]
pub struct FlattenModel {
    pub encoder: MlpStack,
    pub teacher: [MlpStack; 2],
    pub student: MlpStack,
    pub context: MlpStack,
}

impl FlattenModel {
    /// Deterministic Xavier-initialized model.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = CODEWORD_DIM;
        let relu3 = [Activation::Relu, Activation::Relu, Activation::Relu];
        let map3 = [Activation::Relu, Activation::Relu, Activation::Identity];
        let flat3 = [Activation::Relu, Activation::Relu, Activation::Sigmoid];
        FlattenModel {
            encoder: MlpStack::seeded(&[3, 64, 128, d], &relu3, &mut rng),
            teacher: [
                MlpStack::seeded(&[2 + d, 256, 128, 3], &map3, &mut rng),
                MlpStack::seeded(&[3 + d, 256, 128, 3], &map3, &mut rng),
            ],
            student: MlpStack::seeded(&[3 + d, 256, 128, 2], &flat3, &mut rng),
            context: MlpStack::seeded(&[3 + d, 256, 128, 2], &flat3, &mut rng),
        }
    }

    pub fn codeword_dim(&self) -> usize {
        self.encoder.output_width()
    }
}

fn lattice_matrix(lattice: &Lattice) -> Array2<f64> {
    let mut m = Array2::zeros((lattice.len(), 2));
    for (i, c) in lattice.coords().iter().enumerate() {
        m[[i, 0]] = c[0];
        m[[i, 1]] = c[1];
    }
    m
}

fn rows_as_points3(m: &Array2<f64>) -> Vec<[f64; 3]> {
    m.rows()
        .into_iter()
        .map(|r| [r[0], r[1], r[2]])
        .collect()
}

fn rows_as_points2(m: &Array2<f64>) -> Vec<Point2> {
    m.rows().into_iter().map(|r| [r[0], r[1]]).collect()
}

/// Deforms the lattice into 3D under the codeword: two stacked units, the
/// second consuming the first's output re-concatenated with the codeword.
/// Output rows align row-major with the lattice cells.
pub fn g2sd_forward(model: &FlattenModel, lattice: &Lattice, z: &Codeword) -> Result<PointCloud> {
    let recon = g2sd_forward_matrix(model, &lattice_matrix(lattice), z)?;
    PointCloud::from_points(rows_as_points3(&recon))
}

fn g2sd_forward_matrix(
    model: &FlattenModel,
    lattice: &Array2<f64>,
    z: &Codeword,
) -> Result<Array2<f64>> {
    let in1 = concat_codeword(lattice, z);
    let h = model.teacher[0].forward(&in1)?;
    let in2 = concat_codeword(&h, z);
    model.teacher[1].forward(&in2)
}

/// Loss and full parameter gradients of the teacher objective: Chamfer
/// distance between the lattice deformation and the guidance points, with
/// gradients flowing through both units, the codeword, and the encoder.
pub fn teacher_loss_and_grads(
    model: &FlattenModel,
    guidance: &Array2<f64>,
    lattice: &Array2<f64>,
) -> Result<(f64, TeacherGrads)> {
    let (enc_out, enc_cache) = model.encoder.forward_cached(guidance)?;
    let (z_values, argmax) = maxpool_columns(&enc_out);
    let z = Codeword::new(z_values);

    let in1 = concat_codeword(lattice, &z);
    let (h, cache1) = model.teacher[0].forward_cached(&in1)?;
    let in2 = concat_codeword(&h, &z);
    let (recon, cache2) = model.teacher[1].forward_cached(&in2)?;

    let recon_pts = rows_as_points3(&recon);
    let guide_pts = rows_as_points3(guidance);
    let (loss, nn_ab, nn_ba) = chamfer_with_argmins(&recon_pts, &guide_pts);

    // Subgradient of the Chamfer distance w.r.t. the reconstruction, with
    // the nearest-neighbor pairings held fixed.
    let n_r = recon_pts.len() as f64;
    let n_g = guide_pts.len() as f64;
    let mut d_recon = Array2::zeros(recon.raw_dim());
    for (i, &j) in nn_ab.iter().enumerate() {
        for c in 0..3 {
            d_recon[[i, c]] += 2.0 * (recon_pts[i][c] - guide_pts[j][c]) / n_r;
        }
    }
    for (j, &i) in nn_ba.iter().enumerate() {
        for c in 0..3 {
            d_recon[[i, c]] += 2.0 * (recon_pts[i][c] - guide_pts[j][c]) / n_g;
        }
    }

    let d = model.codeword_dim();
    let (g_unit2, d_in2) = model.teacher[1].backward(&in2, &cache2, &d_recon);
    let d_h = d_in2.slice(ndarray::s![.., 0..3]).to_owned();
    let mut d_z = d_in2.slice(ndarray::s![.., 3..3 + d]).sum_axis(Axis(0));

    let (g_unit1, d_in1) = model.teacher[0].backward(&in1, &cache1, &d_h);
    d_z += &d_in1.slice(ndarray::s![.., 2..2 + d]).sum_axis(Axis(0));

    // Max pooling routes each channel's gradient to the winning point.
    let mut d_enc = Array2::zeros(enc_out.raw_dim());
    for (c, &r) in argmax.iter().enumerate() {
        d_enc[[r, c]] = d_z[c];
    }
    let (g_encoder, _) = model.encoder.backward(guidance, &enc_cache, &d_enc);

    Ok((
        loss,
        TeacherGrads {
            encoder: g_encoder,
            units: [g_unit1, g_unit2],
        },
    ))
}

pub struct TeacherGrads {
    pub encoder: crate::nn::MlpGradients,
    pub units: [crate::nn::MlpGradients; 2],
}

/// Trains the teacher (encoder plus both units) to reconstruct the guidance
/// points from the lattice. Returns the per-step loss trace; the model keeps
/// the best parameters encountered and the trace ends with their loss.
pub fn train_teacher(
    model: &mut FlattenModel,
    guidance: &PointCloud,
    lattice: &Lattice,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if guidance.len() != lattice.len() {
        return Err(Error::invalid_argument(format!(
            "guidance size {} does not match lattice size {}",
            guidance.len(),
            lattice.len()
        )));
    }
    let guide_mat = points_matrix(guidance);
    let lat_mat = lattice_matrix(lattice);

    let mut opts = [
        MomentumSgd::new(&model.encoder, cfg.learning_rate, cfg.momentum),
        MomentumSgd::new(&model.teacher[0], cfg.learning_rate, cfg.momentum),
        MomentumSgd::new(&model.teacher[1], cfg.learning_rate, cfg.momentum),
    ];

    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut best: Option<(f64, MlpStack, MlpStack, MlpStack)> = None;
    for step in 0..=cfg.steps {
        let (loss, grads) = teacher_loss_and_grads(model, &guide_mat, &lat_mat)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        trace.push(loss);
        if best.as_ref().map_or(true, |(b, ..)| loss < *b) {
            best = Some((
                loss,
                model.encoder.clone(),
                model.teacher[0].clone(),
                model.teacher[1].clone(),
            ));
        }
        if step == cfg.steps || cfg.stop_loss.is_some_and(|t| loss <= t) {
            break;
        }
        opts[0].step(&mut model.encoder, &grads.encoder);
        opts[1].step(&mut model.teacher[0], &grads.units[0]);
        opts[2].step(&mut model.teacher[1], &grads.units[1]);
    }

    let (best_loss, enc, t0, t1) = best.unwrap();
    if *trace.last().unwrap() > best_loss {
        model.encoder = enc;
        model.teacher[0] = t0;
        model.teacher[1] = t1;
        trace.push(best_loss);
    }
    Ok(trace)
}

/// Matches each guidance point to one reconstructed point (minimum total
/// squared distance) and hands it that reconstruction's lattice coordinate.
/// The result is a bijection onto the lattice cells.
pub fn derive_teacher_embedding(
    model: &FlattenModel,
    guidance: &PointCloud,
    lattice: &Lattice,
) -> Result<PlanarEmbedding> {
    if guidance.len() != lattice.len() {
        return Err(Error::invalid_argument(format!(
            "guidance size {} does not match lattice size {}",
            guidance.len(),
            lattice.len()
        )));
    }
    let z = encode_codeword(&model.encoder, guidance)?;
    let recon = g2sd_forward_matrix(model, &lattice_matrix(lattice), &z)?;
    let recon_pts = rows_as_points3(&recon);

    let mut max_entry = 0.0f64;
    let cost = CostMatrix::from_fn(guidance.len(), recon_pts.len(), |i, j| {
        let d = crate::geom::dist2(&guidance.point(i), &recon_pts[j]);
        max_entry = max_entry.max(d);
        d
    })?;
    let eps = (max_entry * GRID_ASSIGN_EPS).max(1e-15);
    let assignment = auction_assign(&cost, eps)?;

    let coords = assignment
        .matches()
        .iter()
        .map(|&j| lattice.coords()[j])
        .collect();
    PlanarEmbedding::new(coords, guidance.source_ids().to_vec())
}

/// Per-axis min-max rescale onto `[0, 1]`; an axis with no spread collapses
/// to 0.5.
pub(crate) fn renormalize_unit(coords: &mut [Point2]) {
    for axis in 0..2 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in coords.iter() {
            lo = lo.min(c[axis]);
            hi = hi.max(c[axis]);
        }
        if hi > lo {
            for c in coords.iter_mut() {
                c[axis] = (c[axis] - lo) / (hi - lo);
            }
        } else {
            for c in coords.iter_mut() {
                c[axis] = 0.5;
            }
        }
    }
}

/// Maps points straight to the plane: sigmoid-headed shared MLP on
/// `[point; codeword]` rows, then per-axis min-max renormalization.
pub fn s2pf_forward(net: &MlpStack, pc: &PointCloud, z: &Codeword) -> Result<PlanarEmbedding> {
    if net.output_width() != 2 || net.last_activation() != Activation::Sigmoid {
        return Err(Error::invalid_argument(
            "flattening network must end in a 2-wide sigmoid layer",
        ));
    }
    if net.input_width() != 3 + z.dim() {
        return Err(Error::invalid_argument(format!(
            "network input width {} does not match 3 + codeword dim {}",
            net.input_width(),
            z.dim()
        )));
    }
    let input = concat_codeword(&points_matrix(pc), z);
    let out = net.forward(&input)?;
    let mut coords = rows_as_points2(&out);
    renormalize_unit(&mut coords);
    PlanarEmbedding::new(coords, pc.source_ids().to_vec())
}

/// Hinge repulsion over nearest-neighbor pairs: each point pays
/// `max(0, eps - d)` against its unique nearest neighbor (ties to the
/// lowest index). Gradients treat the neighbor as fixed and are zero at the
/// hinge and at coincident pairs.
pub fn repulsion_loss(emb: &PlanarEmbedding, epsilon: f64) -> Result<(f64, Vec<Point2>)> {
    if emb.len() < 2 {
        return Err(Error::invalid_argument(
            "repulsion needs at least two points",
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid_argument("epsilon must be positive"));
    }
    Ok(repulsion_core(emb.coords(), epsilon))
}

pub(crate) fn repulsion_core(coords: &[Point2], epsilon: f64) -> (f64, Vec<Point2>) {
    let n = coords.len();
    let mut loss = 0.0;
    let mut grads = vec![[0.0, 0.0]; n];
    for i in 0..n {
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for j in 0..n {
            if j == i {
                continue;
            }
            let d2 = crate::geom::dist2_2d(&coords[i], &coords[j]);
            if d2 < best {
                best = d2;
                best_j = j;
            }
        }
        let d = best.sqrt();
        if d < epsilon {
            loss += epsilon - d;
            if d > 0.0 {
                let j = best_j;
                grads[i][0] -= (coords[i][0] - coords[j][0]) / d;
                grads[i][1] -= (coords[i][1] - coords[j][1]) / d;
            }
        }
    }
    (loss, grads)
}

/// Summed element-wise L1 distance between two aligned embeddings, with
/// sign gradients for the first argument.
pub fn guidance_loss(f: &PlanarEmbedding, f_hat: &PlanarEmbedding) -> Result<(f64, Vec<Point2>)> {
    if f.len() != f_hat.len() {
        return Err(Error::invalid_argument(format!(
            "embedding lengths differ: {} vs {}",
            f.len(),
            f_hat.len()
        )));
    }
    Ok(guidance_core(f.coords(), f_hat.coords()))
}

pub(crate) fn guidance_core(f: &[Point2], f_hat: &[Point2]) -> (f64, Vec<Point2>) {
    let mut loss = 0.0;
    let mut grads = vec![[0.0, 0.0]; f.len()];
    for (i, (a, b)) in f.iter().zip(f_hat).enumerate() {
        for axis in 0..2 {
            let diff = a[axis] - b[axis];
            loss += diff.abs();
            grads[i][axis] = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
        }
    }
    (loss, grads)
}

fn grads_to_matrix(grads: &[Point2]) -> Array2<f64> {
    let mut m = Array2::zeros((grads.len(), 2));
    for (i, g) in grads.iter().enumerate() {
        m[[i, 0]] = g[0];
        m[[i, 1]] = g[1];
    }
    m
}

/// Single-network training driver: evaluates `loss_fn` on the raw forward
/// output, steps with momentum, keeps the best parameters, and returns the
/// loss trace (ending with the restored best loss when that differs).
fn train_net_with(
    net: &mut MlpStack,
    input: &Array2<f64>,
    cfg: &TrainConfig,
    mut loss_fn: impl FnMut(&Array2<f64>) -> (f64, Array2<f64>),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let mut opt = MomentumSgd::new(net, cfg.learning_rate, cfg.momentum);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut best: Option<(f64, MlpStack)> = None;
    for step in 0..=cfg.steps {
        let (out, cache) = net.forward_cached(input)?;
        let (loss, upstream) = loss_fn(&out);
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { step });
        }
        trace.push(loss);
        if best.as_ref().map_or(true, |(b, _)| loss < *b) {
            best = Some((loss, net.clone()));
        }
        if step == cfg.steps || cfg.stop_loss.is_some_and(|t| loss <= t) {
            break;
        }
        let (grads, _) = net.backward(input, &cache, &upstream);
        opt.step(net, &grads);
    }
    let (best_loss, best_net) = best.unwrap();
    if *trace.last().unwrap() > best_loss {
        *net = best_net;
        trace.push(best_loss);
    }
    Ok(trace)
}

/// Outcome of the three-step guidance flattening.
pub struct StudentOutcome {
    /// The student's renormalized embedding of the guidance points.
    pub embedding: PlanarEmbedding,
    /// Lattice coordinates assigned from the teacher reconstruction.
    pub teacher_target: PlanarEmbedding,
    pub teacher_trace: Vec<f64>,
    pub init_trace: Vec<f64>,
    pub refine_trace: Vec<f64>,
}

/// Runs the full guidance-level procedure: teacher training, student
/// initialization against the teacher's lattice targets, and repulsion
/// fine-tuning at `cfg.epsilon` (conventionally the lattice interval).
/// The codeword is frozen after teacher training.
pub fn train_student_pipeline(
    model: &mut FlattenModel,
    guidance: &PointCloud,
    lattice: &Lattice,
    cfg: &TrainConfig,
) -> Result<StudentOutcome> {
    let teacher_trace = train_teacher(model, guidance, lattice, cfg)?;
    let teacher_target = derive_teacher_embedding(model, guidance, lattice)?;

    let z = encode_codeword(&model.encoder, guidance)?;
    let input = concat_codeword(&points_matrix(guidance), &z);

    let targets = teacher_target.coords().to_vec();
    let init_trace = train_net_with(&mut model.student, &input, cfg, |out| {
        let coords = rows_as_points2(out);
        let (loss, grads) = guidance_core(&coords, &targets);
        (loss, grads_to_matrix(&grads))
    })?;

    let eps = cfg.epsilon;
    let refine_trace = train_net_with(&mut model.student, &input, cfg, |out| {
        let coords = rows_as_points2(out);
        let (loss, grads) = repulsion_core(&coords, eps);
        (loss, grads_to_matrix(&grads))
    })?;

    let out = model.student.forward(&input)?;
    let mut coords = rows_as_points2(&out);
    renormalize_unit(&mut coords);
    let embedding = PlanarEmbedding::new(coords, guidance.source_ids().to_vec())?;

    Ok(StudentOutcome {
        embedding,
        teacher_target,
        teacher_trace,
        init_trace,
        refine_trace,
    })
}

/// Outcome of the shared context flattening.
pub struct ContextOutcome {
    /// One renormalized embedding per patch, aligned with the input order.
    pub embeddings: Vec<PlanarEmbedding>,
    /// Summed repulsion loss per step.
    pub trace: Vec<f64>,
}

/// Flattens every context patch with one shared network trained on the
/// summed repulsion loss. Each patch is normalized to its local unit sphere
/// before encoding; patches with fewer than two points pass through
/// untrained. The codeword of each patch is fixed during training, so the
/// stacked input matrix is built once.
pub fn flatten_contexts(
    model: &mut FlattenModel,
    contexts: &[PointCloud],
    cfg: &TrainConfig,
) -> Result<ContextOutcome> {
    cfg.validate()?;
    if contexts.is_empty() {
        return Err(Error::invalid_argument("no context patches"));
    }

    let d = model.codeword_dim();
    let total: usize = contexts.iter().map(|c| c.len()).sum();
    let mut input = Array2::zeros((total, 3 + d));
    let mut spans = Vec::with_capacity(contexts.len());
    let mut row = 0usize;
    for ctx in contexts {
        let (local, _, _) = normalize_unit_sphere(ctx)?;
        let z = encode_codeword(&model.encoder, &local)?;
        for p in local.points() {
            input[[row, 0]] = p[0];
            input[[row, 1]] = p[1];
            input[[row, 2]] = p[2];
            for c in 0..d {
                input[[row, 3 + c]] = z.values()[c];
            }
            row += 1;
        }
        spans.push((row - ctx.len(), ctx.len()));
    }

    let eps = cfg.epsilon;
    let spans_ref = &spans;
    let trace = train_net_with(&mut model.context, &input, cfg, |out| {
        let coords = rows_as_points2(out);
        let mut loss = 0.0;
        let mut upstream = Array2::zeros(out.raw_dim());
        for &(start, len) in spans_ref {
            if len < 2 {
                continue;
            }
            let (l, g) = repulsion_core(&coords[start..start + len], eps);
            loss += l;
            for (i, gi) in g.iter().enumerate() {
                upstream[[start + i, 0]] = gi[0];
                upstream[[start + i, 1]] = gi[1];
            }
        }
        (loss, upstream)
    })?;

    let out = model.context.forward(&input)?;
    let coords = rows_as_points2(&out);
    let mut embeddings = Vec::with_capacity(contexts.len());
    for (ctx, &(start, len)) in contexts.iter().zip(&spans) {
        let mut patch = coords[start..start + len].to_vec();
        renormalize_unit(&mut patch);
        embeddings.push(PlanarEmbedding::new(patch, ctx.source_ids().to_vec())?);
    }

    Ok(ContextOutcome { embeddings, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand::Rng;

    fn seeded_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        PointCloud::from_points(points).unwrap()
    }

    /// Lattice lifted to z = 0: the easy planar target.
    fn planar_guidance(side: usize) -> PointCloud {
        let lattice = Lattice::new(side).unwrap();
        let pts = lattice.coords().iter().map(|c| [c[0], c[1], 0.0]).collect();
        PointCloud::from_points(pts).unwrap()
    }

    #[test]
    fn g2sd_zero_final_layer_gives_bias() {
        let mut model = FlattenModel::seeded(1);
        let last = model.teacher[1].layers_mut().last_mut().unwrap();
        last.weights.fill(0.0);
        last.bias = ndarray::array![0.25, -0.5, 1.5];
        let lattice = Lattice::new(4).unwrap();
        let pc = seeded_cloud(16, 2);
        let z = encode_codeword(&model.encoder, &pc).unwrap();
        let recon = g2sd_forward(&model, &lattice, &z).unwrap();
        assert_eq!(recon.len(), 16);
        for p in recon.points() {
            assert_eq!(*p, [0.25, -0.5, 1.5]);
        }
    }

    #[test]
    fn g2sd_output_count_matches_lattice() {
        let model = FlattenModel::seeded(3);
        let pc = seeded_cloud(256, 4);
        let z = encode_codeword(&model.encoder, &pc).unwrap();
        let lattice = Lattice::new(16).unwrap();
        assert_eq!(g2sd_forward(&model, &lattice, &z).unwrap().len(), 256);
    }

    #[test]
    fn g2sd_matches_two_manual_forwards() {
        let model = FlattenModel::seeded(5);
        let pc = seeded_cloud(9, 6);
        let z = encode_codeword(&model.encoder, &pc).unwrap();
        let lattice = Lattice::new(3).unwrap();
        let recon = g2sd_forward(&model, &lattice, &z).unwrap();

        let in1 = concat_codeword(&lattice_matrix(&lattice), &z);
        let h = model.teacher[0].forward(&in1).unwrap();
        let in2 = concat_codeword(&h, &z);
        let manual = model.teacher[1].forward(&in2).unwrap();
        for (i, p) in recon.points().iter().enumerate() {
            for c in 0..3 {
                assert_eq!(p[c], manual[[i, c]]);
            }
        }
    }

    #[test]
    fn repulsion_separated_pair_is_zero() {
        let emb = PlanarEmbedding::new(vec![[0.0, 0.0], [0.5, 0.0]], vec![0, 1]).unwrap();
        let (loss, grads) = repulsion_loss(&emb, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| *g == [0.0, 0.0]));
    }

    #[test]
    fn repulsion_coincident_pair_pays_epsilon_each() {
        let emb = PlanarEmbedding::new(vec![[0.3, 0.3], [0.3, 0.3]], vec![0, 1]).unwrap();
        let (loss, grads) = repulsion_loss(&emb, 0.1).unwrap();
        assert!((loss - 0.2).abs() < 1e-15);
        assert!(grads.iter().all(|g| *g == [0.0, 0.0]));
    }

    #[test]
    fn repulsion_collinear_hand_value() {
        let emb =
            PlanarEmbedding::new(vec![[0.0, 0.5], [0.05, 0.5], [1.0, 0.5]], vec![0, 1, 2]).unwrap();
        let (loss, _) = repulsion_loss(&emb, 0.1).unwrap();
        assert!((loss - 0.1).abs() < 1e-15);
    }

    #[test]
    fn repulsion_rejects_degenerate_input() {
        let emb = PlanarEmbedding::new(vec![[0.1, 0.1]], vec![0]).unwrap();
        assert!(repulsion_loss(&emb, 0.1).is_err());
    }

    #[test]
    fn repulsion_zero_iff_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let coords: Vec<Point2> = (0..12)
                .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
                .collect();
            let eps = rng.random_range(0.01..0.5);
            let min_nn = (0..coords.len())
                .map(|i| {
                    (0..coords.len())
                        .filter(|&j| j != i)
                        .map(|j| crate::geom::dist2_2d(&coords[i], &coords[j]).sqrt())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(f64::INFINITY, f64::min);
            let (loss, _) = repulsion_core(&coords, eps);
            if min_nn >= eps {
                assert_eq!(loss, 0.0);
            } else {
                assert!(loss > 0.0);
            }
        }
    }

    #[test]
    fn guidance_loss_values_and_grads() {
        let f = PlanarEmbedding::new(vec![[0.5, 0.1]], vec![0]).unwrap();
        let (zero, _) = guidance_loss(&f, &f).unwrap();
        assert_eq!(zero, 0.0);

        let f2 = PlanarEmbedding::new(vec![[0.6, 0.3]], vec![0]).unwrap();
        let (loss, grads) = guidance_loss(&f2, &f).unwrap();
        assert!((loss - 0.3).abs() < 1e-15);
        assert_eq!(grads[0], [1.0, 1.0]);

        let mismatched = PlanarEmbedding::new(vec![[0.0, 0.0], [1.0, 1.0]], vec![0, 1]).unwrap();
        assert!(guidance_loss(&f, &mismatched).is_err());
    }

    #[test]
    fn s2pf_zero_net_collapses_to_center() {
        let d = CODEWORD_DIM;
        let net = MlpStack::zeroed(
            &[3 + d, 8, 2],
            &[Activation::Relu, Activation::Sigmoid],
        );
        let pc = seeded_cloud(10, 7);
        let z = Codeword::new(Array1::zeros(d));
        let emb = s2pf_forward(&net, &pc, &z).unwrap();
        for c in emb.coords() {
            assert_eq!(*c, [0.5, 0.5]);
        }
    }

    #[test]
    fn s2pf_output_in_unit_square_and_matches_oracle() {
        let model = FlattenModel::seeded(9);
        let pc = seeded_cloud(40, 10);
        let z = encode_codeword(&model.encoder, &pc).unwrap();
        let emb = s2pf_forward(&model.student, &pc, &z).unwrap();
        assert_eq!(emb.len(), pc.len());
        assert!(emb
            .coords()
            .iter()
            .all(|c| (0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1])));

        // Oracle: raw forward + explicit min-max rescale.
        let input = concat_codeword(&points_matrix(&pc), &z);
        let raw = model.student.forward(&input).unwrap();
        let mut coords = rows_as_points2(&raw);
        renormalize_unit(&mut coords);
        for (a, b) in emb.coords().iter().zip(&coords) {
            assert_eq!(a, b);
        }
    }

    fn stack_mut(model: &mut FlattenModel, id: usize) -> &mut MlpStack {
        match id {
            0 => &mut model.encoder,
            1 => &mut model.teacher[0],
            _ => &mut model.teacher[1],
        }
    }

    #[test]
    fn teacher_gradients_match_finite_differences() {
        let mut model = FlattenModel::seeded(13);
        let guidance = seeded_cloud(9, 14);
        let lattice = Lattice::new(3).unwrap();
        let guide_mat = points_matrix(&guidance);
        let lat_mat = lattice_matrix(&lattice);
        let (_, grads) = teacher_loss_and_grads(&model, &guide_mat, &lat_mat).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let h = 1e-5;
        // Spot-check a sample of parameters across all three stacks.
        for _ in 0..40 {
            let stack_id = rng.random_range(0..3usize);
            let (layer, o, i) = {
                let stack = &*stack_mut(&mut model, stack_id);
                let l = rng.random_range(0..stack.layers().len());
                let dim = stack.layers()[l].weights.raw_dim();
                (l, rng.random_range(0..dim[0]), rng.random_range(0..dim[1]))
            };
            let analytic = match stack_id {
                0 => grads.encoder.layers[layer].0[[o, i]],
                1 => grads.units[0].layers[layer].0[[o, i]],
                _ => grads.units[1].layers[layer].0[[o, i]],
            };
            let orig = stack_mut(&mut model, stack_id).layers()[layer].weights[[o, i]];
            stack_mut(&mut model, stack_id).layers_mut()[layer].weights[[o, i]] = orig + h;
            let up = teacher_loss_and_grads(&model, &guide_mat, &lat_mat).unwrap().0;
            stack_mut(&mut model, stack_id).layers_mut()[layer].weights[[o, i]] = orig - h;
            let dn = teacher_loss_and_grads(&model, &guide_mat, &lat_mat).unwrap().0;
            stack_mut(&mut model, stack_id).layers_mut()[layer].weights[[o, i]] = orig;
            let fd = (up - dn) / (2.0 * h);
            let denom = fd.abs().max(analytic.abs()).max(1e-7);
            assert!(
                (fd - analytic).abs() / denom < 1e-4,
                "stack {stack_id} layer {layer} [{o},{i}]: fd {fd} vs {analytic}"
            );
        }
    }

    #[test]
    fn teacher_converges_on_planar_target() {
        let mut model = FlattenModel::seeded(0);
        let guidance = planar_guidance(8);
        let lattice = Lattice::new(8).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.02,
            steps: 2000,
            stop_loss: Some(1e-3),
            ..TrainConfig::default()
        };
        let trace = train_teacher(&mut model, &guidance, &lattice, &cfg).unwrap();
        assert!(
            *trace.last().unwrap() < 1e-3,
            "teacher stalled at {}",
            trace.last().unwrap()
        );
        assert!(trace.last().unwrap() <= trace.first().unwrap());
    }

    #[test]
    fn teacher_rejects_zero_steps() {
        let mut model = FlattenModel::seeded(0);
        let guidance = planar_guidance(4);
        let lattice = Lattice::new(4).unwrap();
        let cfg = TrainConfig {
            steps: 0,
            ..TrainConfig::default()
        };
        assert!(train_teacher(&mut model, &guidance, &lattice, &cfg).is_err());
    }

    #[test]
    fn teacher_embedding_is_bijection_onto_lattice() {
        let mut model = FlattenModel::seeded(17);
        let guidance = seeded_cloud(16, 18);
        let lattice = Lattice::new(4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            steps: 60,
            ..TrainConfig::default()
        };
        train_teacher(&mut model, &guidance, &lattice, &cfg).unwrap();
        let emb = derive_teacher_embedding(&model, &guidance, &lattice).unwrap();
        let mut seen: Vec<Point2> = emb.coords().to_vec();
        seen.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        let mut expect: Vec<Point2> = lattice.coords().to_vec();
        expect.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        assert_eq!(seen, expect);
    }

    #[test]
    fn student_pipeline_decreases_losses_and_training_is_deterministic() {
        let run = || {
            let mut model = FlattenModel::seeded(19);
            let guidance = seeded_cloud(16, 20);
            let lattice = Lattice::new(4).unwrap();
            let cfg = TrainConfig {
                learning_rate: 0.01,
                steps: 120,
                epsilon: 1.0 / 3.0,
                ..TrainConfig::default()
            };
            let out = train_student_pipeline(&mut model, &guidance, &lattice, &cfg).unwrap();
            (out, model)
        };
        let (out, model_a) = run();
        assert_eq!(out.embedding.len(), 16);
        assert!(out.init_trace.last().unwrap() < out.init_trace.first().unwrap());

        let (_, model_b) = run();
        for (la, lb) in model_a.student.layers().iter().zip(model_b.student.layers()) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.bias, lb.bias);
        }
    }

    #[test]
    fn context_flattening_shapes_and_loss() {
        let mut model = FlattenModel::seeded(23);
        let contexts: Vec<PointCloud> = (0..4).map(|s| seeded_cloud(12, 40 + s)).collect();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            steps: 80,
            epsilon: 0.25,
            ..TrainConfig::default()
        };
        let out = flatten_contexts(&mut model, &contexts, &cfg).unwrap();
        assert_eq!(out.embeddings.len(), 4);
        assert!(out.embeddings.iter().all(|e| e.len() == 12));
        assert!(out.trace.last().unwrap() <= out.trace.first().unwrap());
    }
}
