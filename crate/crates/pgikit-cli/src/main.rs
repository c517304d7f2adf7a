//! Command-line pipeline driver.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or parameter
//! combinations), 2 on data or format errors. All randomness is seeded, so
//! identical invocations produce byte-identical output files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use pgikit::geom::denormalize;
use pgikit::io::{
    export_pgi_png, load_csconv_params, read_pgi, read_points, save_csconv_params,
    write_feature_map, write_pgi, write_points, PointFormat,
};
use pgikit::metrics::{geometry_fidelity, neighborhood_consistency};
use pgikit::pipeline::{flatten_cloud, PipelineConfig};
use pgikit::resample::pgi_to_points;
use pgikit::upscale::{pgi_bicubic_upscale, upscaled_to_pgi};
use pgikit::{
    csconv, fps, gen_shape, normalize_unit_sphere, CsconvParams, Lattice, PlanarEmbedding,
    ShapeKind,
};

#[derive(Parser)]
#[command(name = "pgikit", version, about = "Point clouds as regular point-geometry-image grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a point cloud file into a point geometry image.
    Flatten {
        /// Input cloud (.xyz or .ply).
        input: PathBuf,
        /// Output image path.
        #[arg(long)]
        out: PathBuf,
        /// Preset label: 1024, 2048, 5000, 10000, or 2048-part. When no
        /// preset or explicit sizes are given, the preset matching the
        /// input size is used.
        #[arg(long, conflicts_with_all = ["nc", "k"])]
        preset: Option<String>,
        /// Context points per patch (requires --k).
        #[arg(long, requires = "k")]
        nc: Option<usize>,
        /// Block side in pixels (requires --nc).
        #[arg(long, requires = "nc")]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Training steps per stage; 0 skips training entirely.
        #[arg(long)]
        steps: Option<usize>,
        /// Also export a 16-bit PNG visualization (plus .meta sidecar).
        #[arg(long)]
        png: Option<PathBuf>,
    },
    /// Convert a point geometry image back into a point cloud file.
    Reconstruct {
        input: PathBuf,
        /// Output cloud (.xyz or .ply).
        #[arg(long)]
        out: PathBuf,
        /// Emit each captured input point once instead of every pixel.
        #[arg(long)]
        dedupe: bool,
    },
    /// Print representation-quality metrics of an image against its source
    /// cloud as key=value lines.
    Metrics {
        input: PathBuf,
        /// The cloud the image was flattened from.
        #[arg(long)]
        against: PathBuf,
        /// Neighborhood consistency sizes as "J,Jbar".
        #[arg(long)]
        consistency: Option<String>,
    },
    /// Compute the regional embedding feature map of an image.
    Embed {
        input: PathBuf,
        /// Parameter checkpoint. Created from --init-seed when missing.
        #[arg(long)]
        params: PathBuf,
        /// Output binary feature map.
        #[arg(long)]
        out: PathBuf,
        /// Initialize (and save) seeded parameters when the checkpoint
        /// does not exist yet.
        #[arg(long)]
        init_seed: Option<u64>,
    },
    /// Bicubic-upscale an image to twice its side (4x the points).
    Upsample {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic shape sampled uniformly by area.
    Gen {
        /// plane, sphere, cylinder, cone, torus, or cube.
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output cloud (.xyz or .ply).
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    Usage(String),
    Data(String),
}

impl From<pgikit::Error> for CliError {
    fn from(err: pgikit::Error) -> Self {
        match err {
            pgikit::Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if e.kind() == ErrorKind::DisplayHelp || e.kind() == ErrorKind::DisplayVersion =>
        {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Flatten {
            input,
            out,
            preset,
            nc,
            k,
            seed,
            steps,
            png,
        } => flatten(&input, &out, preset.as_deref(), nc, k, seed, steps, png.as_deref()),
        Command::Reconstruct { input, out, dedupe } => reconstruct(&input, &out, dedupe),
        Command::Metrics {
            input,
            against,
            consistency,
        } => metrics(&input, &against, consistency.as_deref()),
        Command::Embed {
            input,
            params,
            out,
            init_seed,
        } => embed(&input, &params, &out, init_seed),
        Command::Upsample { input, out } => upsample(&input, &out),
        Command::Gen { kind, n, seed, out } => gen(&kind, n, seed, &out),
    }
}

fn read_cloud(path: &Path) -> Result<pgikit::PointCloud, CliError> {
    let format = PointFormat::from_path(path)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(read_points(path, format)?)
}

#[allow(clippy::too_many_arguments)]
fn flatten(
    input: &Path,
    out: &Path,
    preset: Option<&str>,
    nc: Option<usize>,
    k: Option<usize>,
    seed: u64,
    steps: Option<usize>,
    png: Option<&Path>,
) -> Result<(), CliError> {
    let cloud = read_cloud(input)?;

    let (n_c, k) = match (preset, nc, k) {
        (Some(label), _, _) => PipelineConfig::preset_by_label(label).ok_or_else(|| {
            CliError::Usage(format!(
                "unknown preset '{label}' (expected 1024, 2048, 5000, 10000, or 2048-part)"
            ))
        })?,
        (None, Some(nc), Some(k)) => (nc, k),
        (None, None, None) => PipelineConfig::preset_for_points(cloud.len()).ok_or_else(|| {
            CliError::Usage(format!(
                "no preset for {} points; pass --preset or --nc/--k",
                cloud.len()
            ))
        })?,
        _ => unreachable!("clap enforces nc/k pairing"),
    };

    let mut cfg = PipelineConfig::default().with_preset(n_c, k);
    cfg.seed = seed;
    if let Some(steps) = steps {
        cfg.steps = steps;
    }
    let outcome = flatten_cloud(&cloud, &cfg)?;
    write_pgi(out, &outcome.pgi)?;
    if let Some(png_path) = png {
        export_pgi_png(&outcome.pgi, png_path)?;
    }
    println!("pgi={} m={}", out.display(), outcome.pgi.m());
    Ok(())
}

fn reconstruct(input: &Path, out: &Path, dedupe: bool) -> Result<(), CliError> {
    let pgi = read_pgi(input)?;
    let mut cloud = pgi_to_points(&pgi, dedupe);
    if let Some(t) = pgi.transform() {
        let center = [t.center[0] as f64, t.center[1] as f64, t.center[2] as f64];
        cloud = denormalize(&cloud, &center, t.scale as f64)?;
    }
    let format = PointFormat::from_path(out).map_err(|e| CliError::Usage(e.to_string()))?;
    write_points(out, &cloud, format)?;
    println!("points={} n={}", out.display(), cloud.len());
    Ok(())
}

fn metrics(input: &Path, against: &Path, consistency: Option<&str>) -> Result<(), CliError> {
    let pgi = read_pgi(input)?;
    let cloud = read_cloud(against)?;
    let report = geometry_fidelity(&cloud, &pgi)?;
    println!("{report}");

    if let Some(spec) = consistency {
        let (j, j_bar) = parse_consistency(spec)?;
        // Reproduce the pipeline's working cloud and guidance split, then
        // read each patch's assigned cell off the block map.
        let (normalized, _, _) = normalize_unit_sphere(&cloud)?;
        let working = normalized.snap_to_f32();
        let n_g = pgi.n_g();
        let guidance_indices = fps(&working, n_g * n_g, 0)?;
        let guidance = working.subset(&guidance_indices)?;

        let lattice = Lattice::new(n_g)?;
        let mut coords = vec![[0.0, 0.0]; n_g * n_g];
        for (cell, &patch) in pgi.block_of().iter().enumerate() {
            coords[patch as usize] = lattice.coords()[cell];
        }
        let embedding = PlanarEmbedding::new(coords, guidance.source_ids().to_vec())?;
        let report = neighborhood_consistency(&guidance, &embedding, j, j_bar)?;
        println!("{report}");
    }
    Ok(())
}

fn parse_consistency(spec: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    let parsed: Option<(usize, usize)> = match parts[..] {
        [a, b] => a.trim().parse().ok().zip(b.trim().parse().ok()),
        _ => None,
    };
    parsed.ok_or_else(|| {
        CliError::Usage(format!(
            "--consistency expects \"J,Jbar\" (got '{spec}')"
        ))
    })
}

fn embed(
    input: &Path,
    params_path: &Path,
    out: &Path,
    init_seed: Option<u64>,
) -> Result<(), CliError> {
    let pgi = read_pgi(input)?;
    let params = if params_path.exists() {
        load_csconv_params(params_path)?
    } else if let Some(seed) = init_seed {
        let params = CsconvParams::seeded(seed);
        save_csconv_params(params_path, &params)?;
        params
    } else {
        return Err(CliError::Usage(format!(
            "checkpoint {} does not exist; pass --init-seed to create one",
            params_path.display()
        )));
    };
    let map = csconv::regional_embedding(&params, &pgi)?;
    write_feature_map(out, &map)?;
    println!("features={} dv={} ng={}", out.display(), map.embed_dim(), map.n_g());
    Ok(())
}

fn upsample(input: &Path, out: &Path) -> Result<(), CliError> {
    let pgi = read_pgi(input)?;
    let (image, _) = pgi_bicubic_upscale(&pgi, 2)?;
    let upscaled = upscaled_to_pgi(&pgi, &image)?;
    write_pgi(out, &upscaled)?;
    println!("pgi={} m={}", out.display(), upscaled.m());
    Ok(())
}

fn gen(kind: &str, n: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let kind: ShapeKind = kind.parse().map_err(|e: pgikit::Error| CliError::Usage(e.to_string()))?;
    let cloud = gen_shape(kind, n, seed)?;
    let format = PointFormat::from_path(out).map_err(|e| CliError::Usage(e.to_string()))?;
    write_points(out, &cloud, format)?;
    println!("points={} n={}", out.display(), cloud.len());
    Ok(())
}
