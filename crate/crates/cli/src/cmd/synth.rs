use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cerfuse::synth::{generate, ModalitySpec, SynthConfig};
use clap::Args;

use crate::inputs::SpaceArgs;
use crate::output::RunManifest;
use crate::UsageError;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Full generator config as JSON. Excludes the shape flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Must match the config's seed when --config is given.
    #[arg(long)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, conflicts_with = "config")]
    pub videos: Option<usize>,
    #[arg(long, conflicts_with = "config")]
    pub min_duration: Option<f64>,
    #[arg(long, conflicts_with = "config")]
    pub max_duration: Option<f64>,
    #[arg(long, conflicts_with = "config")]
    pub fps: Option<f64>,
    #[arg(long, conflicts_with = "config")]
    pub window: Option<f64>,
    #[arg(long, conflicts_with = "config")]
    pub hop: Option<f64>,
    #[arg(long, conflicts_with = "config")]
    pub feature_dim: Option<usize>,
    /// Standard deviation of the per-class feature clusters.
    #[arg(long, conflicts_with = "config")]
    pub spread: Option<f64>,
    /// `name=reliability`, repeatable. Defaults to face=0.9, audio=0.5, text=0.3.
    #[arg(long = "modality", value_parser = parse_modality, conflicts_with = "config")]
    pub modalities: Vec<ModalitySpec>,
    /// Modality whose records carry features (default: the first).
    #[arg(long, conflicts_with = "config")]
    pub feature_modality: Option<String>,
    #[command(flatten)]
    pub space: SpaceArgs,
}

fn parse_modality(s: &str) -> Result<ModalitySpec, String> {
    let (name, rel) = s.split_once('=').ok_or("expected name=reliability")?;
    let reliability = rel.parse::<f64>().map_err(|e| format!("reliability {rel:?}: {e}"))?;
    Ok(ModalitySpec {
        name: name.to_string(),
        reliability,
    })
}

fn config_from(args: &SynthArgs) -> Result<SynthConfig> {
    if let Some(path) = &args.config {
        if args.space.space.is_some() || args.space.scheme.is_some() {
            return Err(UsageError("--space/--scheme cannot be combined with --config".into()).into());
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: SynthConfig = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.seed != args.seed {
            return Err(UsageError(format!("--seed {} differs from the config's seed {}", args.seed, cfg.seed)).into());
        }
        return Ok(cfg);
    }
    let mut cfg = SynthConfig::example(args.seed);
    cfg.space = args.space.config()?;
    if let Some(v) = args.videos {
        cfg.n_videos = v;
    }
    if let Some(v) = args.min_duration {
        cfg.duration_range.0 = v;
    }
    if let Some(v) = args.max_duration {
        cfg.duration_range.1 = v;
    }
    if let Some(v) = args.fps {
        cfg.fps = v;
    }
    if let Some(v) = args.window {
        cfg.window_s = v;
    }
    if let Some(v) = args.hop {
        cfg.hop_s = v;
    }
    if let Some(v) = args.feature_dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = args.spread {
        cfg.feature_spread = v;
    }
    if !args.modalities.is_empty() {
        cfg.modalities = args.modalities.clone();
    }
    cfg.feature_modality = args.feature_modality.clone();
    Ok(cfg)
}

pub fn run(args: SynthArgs) -> Result<ExitCode> {
    let cfg = config_from(&args)?;
    let ds = generate(&cfg)?;

    // Generate into a scratch directory inside the target, then move each
    // finished file into place.
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let scratch = tempfile::tempdir_in(&args.out)?;
    ds.write_to(scratch.path())?;
    let mut names: Vec<_> = fs::read_dir(scratch.path())?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut manifest = RunManifest::new("synth")
        .seed("seed", cfg.seed)
        .configs(args.config.iter().chain(args.space.paths()));
    for name in &names {
        let dest = args.out.join(name);
        fs::rename(scratch.path().join(name), &dest)?;
        manifest = manifest.output(&dest);
    }
    manifest.write_to(&args.out.join("manifest.json"))?;

    let segments = ds.labels.len();
    println!(
        "{} videos, {} segments, modalities {:?} -> {}",
        cfg.n_videos,
        segments,
        cfg.modalities.iter().map(|m| m.name.as_str()).collect::<Vec<_>>(),
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}
