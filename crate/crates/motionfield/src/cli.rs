//! Command-line front end. Every command validates its inputs before it
//! writes anything and reports failures through a nonzero exit.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use motionfield_core::fit::{fit, FitError};
use motionfield_core::scene::{decompose, inverse_sigmoid, pose_at};
use motionfield_core::splat::render;
use motionfield_core::synth::{bundled_scene, bundled_scenes, exact_rank_model, generate, GeneratorKind};
use motionfield_core::{CoefficientLayout, FourierBasis, GaussianCloud, MotionBasis, TimeDomain};

use crate::camera::load_camera;
use crate::config::{config_hash, FitSettings};
use crate::error::{Error, Result};
use crate::export::ViewerExport;
use crate::report::{evaluate, log_ndjson};
use crate::scene_file::{Losses, Provenance, SceneFile};
use crate::server::StaticServer;
use crate::{dataset, fsio};

#[derive(Debug, Parser)]
#[command(name = "motionfield", version, about = "Fit, edit, render and export motion-basis Gaussian scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a bundled synthetic trajectory dataset.
    Generate {
        /// Bundled scene name; see `list-scenes`.
        #[arg(long)]
        scene: String,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the bundled dataset and preset scene names.
    ListScenes,
    /// Write a built-in scene file.
    Preset {
        /// `empty`, `single-gaussian`, `zero-deformation` or `truth-<exact-rank dataset>`.
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a scene to a trajectory dataset.
    Fit(FitArgs),
    /// Keep only the listed bases (1-based) and zero the rest.
    Decompose {
        scene: PathBuf,
        /// Comma-separated 1-based basis indices, `all`, or empty for none.
        #[arg(long, allow_hyphen_values = true)]
        enable: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a scene at one time to a binary PPM.
    Render {
        scene: PathBuf,
        /// JSON camera file.
        #[arg(long)]
        camera: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Background color as `r,g,b` in [0, 1].
        #[arg(long, default_value = "0,0,0")]
        background: String,
        /// Clamp out-of-range times into the scene's domain instead of failing.
        #[arg(long)]
        clamp: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a scene to a dataset and print a JSON report.
    Eval {
        scene: PathBuf,
        dataset: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a viewer export directory.
    ExportViewer {
        scene: PathBuf,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve a directory (and optionally the viewer assets) over HTTP, read-only.
    Serve {
        dir: PathBuf,
        #[arg(long)]
        assets: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub dataset: PathBuf,
    /// Scene file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training log path; defaults to `<out>.log.ndjson`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// TOML settings file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = ["fourier", "mlp"])]
    pub basis: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub num_basis: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub freqs: Option<u64>,
    #[arg(long)]
    pub mlp_width: Option<usize>,
    #[arg(long)]
    pub mlp_depth: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub lambda_sparse: Option<f64>,
    #[arg(long)]
    pub lambda_rigid: Option<f64>,
    #[arg(long)]
    pub knn: Option<usize>,
    #[arg(long)]
    pub lambda_w: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl FitArgs {
    fn settings(&self) -> FitSettings {
        FitSettings {
            basis: self.basis.clone(),
            num_basis: self.num_basis.map(|v| v as usize),
            freqs: self.freqs.map(|v| v as usize),
            mlp_width: self.mlp_width,
            mlp_depth: self.mlp_depth,
            iterations: self.iters,
            warmup: self.warmup,
            lambda_l1: self.lambda_l1,
            lambda_sparse: self.lambda_sparse,
            lambda_rigid: self.lambda_rigid,
            knn: self.knn,
            lambda_w: self.lambda_w,
            seed: self.seed,
            ..FitSettings::default()
        }
    }
}

/// Runs a parsed command, returning what it prints to stdout.
pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Generate { scene, seed, out } => {
            let mut spec = bundled_scene(&scene).ok_or_else(|| {
                let names: Vec<_> = bundled_scenes().into_iter().map(|(n, _)| n).collect();
                Error::invalid(format!("unknown scene '{scene}'; available: {}", names.join(", ")))
            })?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let ds = generate(&spec)?;
            dataset::save(&ds, &out)?;
            Ok(format!("wrote {} points x {} frames to {}\n", ds.num_points(), ds.num_frames(), out.display()))
        }
        Command::ListScenes => {
            let mut out = String::from("datasets:\n");
            for (name, _) in bundled_scenes() {
                out.push_str(&format!("  {name}\n"));
            }
            out.push_str("presets:\n  empty\n  single-gaussian\n  zero-deformation\n");
            for (name, spec) in bundled_scenes() {
                if matches!(spec.kind, GeneratorKind::ExactRank { .. }) {
                    out.push_str(&format!("  truth-{name}\n"));
                }
            }
            Ok(out)
        }
        Command::Preset { name, out } => {
            preset(&name)?.save(&out)?;
            Ok(format!("wrote {}\n", out.display()))
        }
        Command::Fit(args) => cmd_fit(&args),
        Command::Decompose { scene, enable, out } => {
            let mut scene = SceneFile::load(&scene)?;
            let enabled = parse_enable(&enable, scene.cloud.num_basis())?;
            scene.cloud = decompose(&scene.cloud, &enabled)?;
            scene.save(&out)?;
            Ok(format!("wrote {} with {} of {} bases enabled\n", out.display(), enabled.len(), scene.cloud.num_basis()))
        }
        Command::Render { scene, camera, time, background, clamp, out } => {
            let scene = SceneFile::load(&scene)?;
            let camera = load_camera(&camera)?;
            let background = parse_color(&background)?;
            let t = if clamp { scene.domain.clamp(time) } else { time };
            let posed = pose_at(&scene.cloud, &scene.basis, &scene.domain, t)?;
            fsio::write_atomic(&out, &render(&posed, &camera, background).to_ppm())?;
            Ok(format!("wrote {}\n", out.display()))
        }
        Command::Eval { scene, dataset: ds, out } => {
            let report = evaluate(&SceneFile::load(&scene)?, &dataset::load(&ds)?)?;
            let json = serde_json::to_string_pretty(&report).map_err(|e| Error::invalid(e.to_string()))? + "\n";
            if let Some(out) = out {
                fsio::write_atomic(&out, json.as_bytes())?;
            }
            Ok(json)
        }
        Command::ExportViewer { scene, frames, out } => {
            let export = ViewerExport::build(&SceneFile::load(&scene)?, frames)?;
            export.write(&out)?;
            Ok(format!("wrote {} frames to {}\n", export.num_frames(), out.display()))
        }
        Command::Serve { dir, assets, host, port } => {
            let roots = std::iter::once(dir).chain(assets).collect();
            let server = StaticServer::bind(&host, port, roots)?;
            println!("serving http://{}", server.local_addr());
            server.spawn(4).wait();
            Ok(String::new())
        }
    }
}

fn cmd_fit(args: &FitArgs) -> Result<String> {
    let file = match &args.config {
        Some(path) => FitSettings::load(path)?,
        None => FitSettings::default(),
    };
    let config = file.overlay(args.settings()).resolve()?;
    let ds = dataset::load(&args.dataset)?;
    let outcome = fit(&ds, &config).map_err(|e| match e {
        FitError::Invalid(e) => Error::Core(e),
        FitError::Diverged { iteration, reason, .. } => Error::Diverged { iteration, reason },
    })?;
    let final_losses = Losses::from(&outcome.final_losses);
    let scene = SceneFile {
        cloud: outcome.cloud,
        basis: outcome.basis,
        domain: ds.domain().clone(),
        provenance: Some(Provenance {
            config_hash: config_hash(&config),
            seed: config.seed,
            final_losses,
            final_rmse: outcome.final_rmse,
        }),
    };
    let bytes = scene.to_bytes()?;
    let log_path = args.log.clone().unwrap_or_else(|| with_suffix(&args.out, ".log.ndjson"));
    fsio::write_atomic(&log_path, log_ndjson(&outcome.log, &final_losses, outcome.final_rmse).as_bytes())?;
    fsio::write_atomic(&args.out, &bytes)?;
    Ok(format!("final rmse {:e}\nwrote {} and {}\n", outcome.final_rmse, args.out.display(), log_path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Parses a 1-based, comma-separated basis list into 0-based indices.
pub fn parse_enable(text: &str, num_basis: usize) -> Result<Vec<usize>> {
    let text = text.trim();
    if text == "all" {
        return Ok((0..num_basis).collect());
    }
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let j: usize = part.parse().map_err(|_| Error::invalid(format!("basis index '{part}' is not a number")))?;
        if j == 0 || j > num_basis {
            return Err(Error::invalid(format!("basis index {j} outside 1..={num_basis}")));
        }
        if !out.contains(&(j - 1)) {
            out.push(j - 1);
        }
    }
    out.sort_unstable();
    Ok(out)
}

fn parse_color(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("background '{text}' is not r,g,b")))?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|v| (0.0..=1.0).contains(v)) => Ok([r, g, b]),
        _ => Err(Error::invalid(format!("background '{text}' needs three values in [0, 1]"))),
    }
}

/// Built-in scenes for rendering checks and ground-truth evaluation.
pub fn preset(name: &str) -> Result<SceneFile> {
    let fourier = |b| -> Result<MotionBasis> { Ok(MotionBasis::Fourier(FourierBasis::new(b)?)) };
    let domain = TimeDomain::uniform(1.0, 2)?;
    let scene = match name {
        "empty" => SceneFile {
            cloud: GaussianCloud::from_means(vec![], 1, CoefficientLayout::PerCoordinate),
            basis: fourier(1)?,
            domain,
            provenance: None,
        },
        "single-gaussian" => {
            let mut cloud = GaussianCloud::from_means(vec![[0.0, 0.0, 3.0]], 1, CoefficientLayout::PerCoordinate);
            cloud.log_scales = vec![[0.2f64.ln(), 0.1f64.ln(), 0.15f64.ln()]];
            cloud.opacity_logits = vec![inverse_sigmoid(0.8)];
            cloud.colors = vec![[1.0, 0.5, 0.25]];
            SceneFile { cloud, basis: fourier(1)?, domain, provenance: None }
        }
        "zero-deformation" => {
            let means = vec![[0.0, 0.0, 3.0], [0.3, -0.2, 4.0], [-0.25, 0.1, 2.5]];
            let mut cloud = GaussianCloud::from_means(means, 2, CoefficientLayout::PerCoordinate);
            cloud.log_scales = vec![[0.2f64.ln(); 3], [0.3f64.ln(), 0.1f64.ln(), 0.2f64.ln()], [0.1f64.ln(); 3]];
            cloud.rotations[1] = [0.9, 0.0, 0.0, 0.3];
            cloud.opacity_logits = vec![inverse_sigmoid(0.7), inverse_sigmoid(0.9), inverse_sigmoid(0.5)];
            cloud.colors = vec![[0.9, 0.1, 0.1], [0.1, 0.8, 0.2], [0.2, 0.3, 1.0]];
            SceneFile { cloud, basis: fourier(2)?, domain, provenance: None }
        }
        other => {
            let spec = other
                .strip_prefix("truth-")
                .and_then(bundled_scene)
                .ok_or_else(|| Error::invalid(format!("unknown preset '{other}'")))?;
            let (cloud, basis) = exact_rank_model(&spec)?;
            SceneFile {
                cloud,
                basis: MotionBasis::Fourier(basis),
                domain: generate(&spec)?.domain().clone(),
                provenance: None,
            }
        }
    };
    Ok(scene)
}
