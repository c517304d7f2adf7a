//! pgikit converts irregular 3D point clouds into regular 2D
//! point-geometry-image (PGI) grids and back.
//!
//! The pipeline decomposes a cloud into farthest-point-sampled guidance
//! centroids with k-NN context patches, learns a hierarchical flattening of
//! both levels onto the unit square, snaps the planar embeddings onto
//! lattice cells with an auction assignment solver, and assembles the
//! per-patch blocks into one block-structured image whose pixels hold
//! verbatim point coordinates. On top of that sit representation-quality
//! metrics, a concentric-square regional embedding operator, bicubic PGI
//! upscaling, and file formats for clouds, images, and model checkpoints.

pub mod assign;
pub mod csconv;
pub mod dist;
pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod resample;
pub mod shapes;
pub mod upscale;

mod threading;

pub use assign::{auction_assign, AssignmentResult, CostMatrix};
pub use dist::{chamfer, emd_exact, emd_exact_capped};
pub use error::{Error, Result};
pub use geom::{
    decompose, denormalize, fps, knn, normalize_unit_sphere, GuidanceDecomposition, Lattice,
    PlanarEmbedding, Point2, Point3, PointCloud,
};
pub use csconv::{regional_embedding, CsconvParams, RegionalFeatureMap, EMBED_DIM};
pub use metrics::{
    geometry_fidelity, neighborhood_consistency, redundancy, ConsistencyReport, FidelityReport,
};
pub use nn::flatten::{FlattenModel, TrainConfig, CODEWORD_DIM};
pub use nn::{Activation, Codeword, MlpStack};
pub use pipeline::{flatten_cloud, FlattenOutcome, PipelineConfig, PRESETS};
pub use resample::{
    assemble_pgi, pgi_to_points, resample_context, resample_guidance, GridBlock, Pgi,
    PgiTransform,
};
pub use shapes::{gen_shape, ShapeKind};
pub use upscale::{pgi_bicubic_upscale, CoordImage};
