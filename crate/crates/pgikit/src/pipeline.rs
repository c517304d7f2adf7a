//! End-to-end conversion of a point cloud into a point geometry image:
//! normalize, decompose, flatten both levels, resample onto lattices, and
//! assemble the blocks.

use crate::error::{Error, Result};
use crate::geom::{decompose, normalize_unit_sphere, GuidanceDecomposition, Lattice, PlanarEmbedding, PointCloud};
use crate::nn::flatten::{
    flatten_contexts, s2pf_forward, train_student_pipeline, FlattenModel, TrainConfig,
};
use crate::nn::encode_codeword;
use crate::resample::{assemble_pgi, resample_contexts, resample_guidance, Pgi, PgiTransform};

/// Named `(input size) -> (n_c, k)` rows mirroring the standard setups.
pub const PRESETS: [(&str, usize, usize, usize); 5] = [
    ("1024", 1024, 12, 5),
    ("2048", 2048, 24, 7),
    ("5000", 5000, 50, 10),
    ("10000", 10000, 100, 15),
    ("2048-part", 2048, 24, 8),
];

/// Pipeline configuration. `steps = 0` skips all training and flattens with
/// the seeded initial networks, which is enough when only the block
/// structure matters (e.g. feature extraction experiments).
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub n_g: usize,
    pub n_c: usize,
    pub k: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Repulsion threshold for guidance fine-tuning; defaults to the
    /// guidance lattice interval `1/(n_g - 1)`.
    pub epsilon_guidance: Option<f64>,
    /// Repulsion threshold for context flattening; defaults to the local
    /// lattice interval `1/(k - 1)`.
    pub epsilon_context: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            n_g: 16,
            n_c: 12,
            k: 5,
            steps: 800,
            learning_rate: 5e-3,
            seed: 0,
            epsilon_guidance: None,
            epsilon_context: None,
        }
    }
}

impl PipelineConfig {
    /// Looks up the preset row for an exact input size.
    pub fn preset_for_points(n: usize) -> Option<(usize, usize)> {
        PRESETS
            .iter()
            .find(|(_, pn, _, _)| *pn == n)
            .map(|&(_, _, n_c, k)| (n_c, k))
    }

    /// Looks up a preset row by label (`"1024"`, ..., `"2048-part"`).
    pub fn preset_by_label(label: &str) -> Option<(usize, usize)> {
        PRESETS
            .iter()
            .find(|(l, ..)| *l == label)
            .map(|&(_, _, n_c, k)| (n_c, k))
    }

    pub fn with_preset(mut self, n_c: usize, k: usize) -> Self {
        self.n_c = n_c;
        self.k = k;
        self
    }

    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.n_g < 2 {
            return Err(Error::invalid_argument("n_g must be >= 2"));
        }
        if self.k == 0 || self.n_c == 0 {
            return Err(Error::invalid_argument("k and n_c must be >= 1"));
        }
        if self.k * self.k < self.n_c {
            return Err(Error::invalid_argument(format!(
                "k^2 = {} cannot hold n_c = {} context points",
                self.k * self.k,
                self.n_c
            )));
        }
        if self.n_g * self.n_g > n_points {
            return Err(Error::invalid_argument(format!(
                "n_g^2 = {} exceeds input size {n_points}",
                self.n_g * self.n_g
            )));
        }
        if self.n_c > n_points {
            return Err(Error::invalid_argument(format!(
                "n_c = {} exceeds input size {n_points}",
                self.n_c
            )));
        }
        Ok(())
    }

}

/// Everything a pipeline run produces besides the image itself.
pub struct FlattenOutcome {
    pub pgi: Pgi,
    pub model: FlattenModel,
    pub guidance_embedding: PlanarEmbedding,
    pub context_embeddings: Vec<PlanarEmbedding>,
    pub decomposition: GuidanceDecomposition,
    /// The normalized, f32-snapped cloud the image was resampled from.
    pub working_cloud: PointCloud,
    pub center: [f64; 3],
    pub scale: f64,
    pub teacher_trace: Vec<f64>,
}

/// Runs the full pipeline. The input is normalized to the unit sphere and
/// snapped to f32 precision first; image pixels are verbatim coordinates of
/// that working cloud and the normalization transform is recorded on the
/// image.
pub fn flatten_cloud(pc: &PointCloud, cfg: &PipelineConfig) -> Result<FlattenOutcome> {
    cfg.validate(pc.len())?;

    let (normalized, center, scale) = normalize_unit_sphere(pc)?;
    let working = normalized.snap_to_f32();
    let decomposition = decompose(&working, cfg.n_g, cfg.n_c)?;
    let lattice = Lattice::new(cfg.n_g)?;
    let mut model = FlattenModel::seeded(cfg.seed);

    let eps_guidance = cfg
        .epsilon_guidance
        .unwrap_or(1.0 / (cfg.n_g - 1) as f64);
    let eps_context = cfg.epsilon_context.unwrap_or_else(|| {
        if cfg.k > 1 {
            1.0 / (cfg.k - 1) as f64
        } else {
            0.5
        }
    });

    let (guidance_embedding, context_embeddings, teacher_trace) = if cfg.steps > 0 {
        let gcfg = TrainConfig {
            learning_rate: cfg.learning_rate,
            steps: cfg.steps,
            seed: cfg.seed,
            epsilon: eps_guidance,
            ..TrainConfig::default()
        };
        let student =
            train_student_pipeline(&mut model, decomposition.guidance(), &lattice, &gcfg)?;
        let ccfg = TrainConfig {
            epsilon: eps_context,
            ..gcfg.clone()
        };
        let contexts = flatten_contexts(&mut model, decomposition.contexts(), &ccfg)?;
        (
            student.embedding,
            contexts.embeddings,
            student.teacher_trace,
        )
    } else {
        // Untrained flattening: forward passes through the seeded networks.
        let z = encode_codeword(&model.encoder, decomposition.guidance())?;
        let guidance_embedding = s2pf_forward(&model.student, decomposition.guidance(), &z)?;
        let mut context_embeddings = Vec::with_capacity(decomposition.patch_count());
        for ctx in decomposition.contexts() {
            let (local, _, _) = normalize_unit_sphere(ctx)?;
            let zc = encode_codeword(&model.encoder, &local)?;
            context_embeddings.push(s2pf_forward(&model.context, &local, &zc)?);
        }
        (guidance_embedding, context_embeddings, Vec::new())
    };

    let guidance_assign = resample_guidance(&guidance_embedding, &lattice)?;
    let blocks = resample_contexts(&context_embeddings, decomposition.contexts(), cfg.k)?;
    let pgi = assemble_pgi(&guidance_assign, &blocks, cfg.n_g, cfg.k)?.with_transform(Some(
        PgiTransform {
            center: [center[0] as f32, center[1] as f32, center[2] as f32],
            scale: scale as f32,
        },
    ));

    Ok(FlattenOutcome {
        pgi,
        model,
        guidance_embedding,
        context_embeddings,
        decomposition,
        working_cloud: working,
        center,
        scale,
        teacher_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::geometry_fidelity;
    use crate::resample::pgi_to_points;
    use crate::shapes::{gen_shape, ShapeKind};

    #[test]
    fn preset_table_is_consistent() {
        for (label, n, n_c, k) in PRESETS {
            assert!(k * k >= n_c, "{label}");
            assert!(16 * 16 <= n);
            assert_eq!(PipelineConfig::preset_by_label(label), Some((n_c, k)));
        }
        assert_eq!(PipelineConfig::preset_for_points(1024), Some((12, 5)));
        assert_eq!(PipelineConfig::preset_for_points(2048), Some((24, 7)));
        assert_eq!(PipelineConfig::preset_for_points(999), None);
    }

    #[test]
    fn untrained_pipeline_produces_consistent_pgi() {
        let pc = gen_shape(ShapeKind::Sphere, 1024, 5).unwrap();
        let cfg = PipelineConfig {
            steps: 0,
            ..PipelineConfig::default()
        };
        let out = flatten_cloud(&pc, &cfg).unwrap();
        assert_eq!(out.pgi.m(), 80);

        // Pixels are verbatim working-cloud coordinates.
        let points = pgi_to_points(&out.pgi, true);
        let working: std::collections::HashMap<u32, [f64; 3]> = out
            .working_cloud
            .source_ids()
            .iter()
            .copied()
            .zip(out.working_cloud.points().iter().copied())
            .collect();
        for (p, id) in points.points().iter().zip(points.source_ids()) {
            assert_eq!(p, &working[id]);
        }

        // Fidelity equals patch union coverage, exactly.
        let report = geometry_fidelity(&out.working_cloud, &out.pgi).unwrap();
        let mut union: Vec<u32> = out
            .decomposition
            .contexts()
            .iter()
            .flat_map(|c| c.source_ids().iter().copied())
            .collect();
        union.sort_unstable();
        union.dedup();
        assert_eq!(report.n_captured, union.len());

        // Per block: non-duplicate count equals patch size.
        for br in 0..16 {
            for bc in 0..16 {
                let b = out.pgi.block(br, bc);
                assert_eq!(b.duplicate().len() - b.duplicate_count(), 12);
            }
        }
    }

    #[test]
    fn pipeline_is_deterministic() {
        let pc = gen_shape(ShapeKind::Torus, 400, 9).unwrap();
        let cfg = PipelineConfig {
            n_g: 4,
            n_c: 6,
            k: 3,
            steps: 30,
            ..PipelineConfig::default()
        };
        let a = flatten_cloud(&pc, &cfg).unwrap();
        let b = flatten_cloud(&pc, &cfg).unwrap();
        assert_eq!(a.pgi, b.pgi);
    }

    #[test]
    fn rejects_incoherent_configs() {
        let pc = gen_shape(ShapeKind::Cube, 100, 1).unwrap();
        let bad_k = PipelineConfig {
            n_g: 2,
            n_c: 10,
            k: 3,
            ..PipelineConfig::default()
        };
        assert!(flatten_cloud(&pc, &bad_k).is_err());
        let too_many_guidance = PipelineConfig {
            n_g: 11,
            n_c: 4,
            k: 2,
            ..PipelineConfig::default()
        };
        assert!(flatten_cloud(&pc, &too_many_guidance).is_err());
    }
}
