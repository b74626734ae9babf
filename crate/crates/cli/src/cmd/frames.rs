use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cerfuse::ingest::{inferred_durations, read_durations};
use cerfuse::temporal::{broadcast_and_average, FrameLine, TimedPrediction};
use clap::Args;

use super::write_lines;
use crate::inputs::{load_streams, single_modality, Level, SpaceArgs};
use crate::output::RunManifest;
use crate::UsageError;

#[derive(Debug, Args)]
pub struct FramesArgs {
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    pub fps: f64,
    /// Per-video durations; inferred from the largest segment end otherwise.
    #[arg(long)]
    pub durations: Option<PathBuf>,
    /// Label space of the stream.
    #[arg(long, value_enum, default_value = "basic")]
    pub level: Level,
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Frame output, one `{"video_id", "frame", "label", "probs"}` per line.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: FramesArgs) -> Result<ExitCode> {
    if !(args.fps > 0.0) || !args.fps.is_finite() {
        return Err(UsageError(format!("--fps must be positive, got {}", args.fps)).into());
    }
    let space = args.space.for_level(args.level)?;
    let records = single_modality(
        load_streams(std::slice::from_ref(&args.stream), &space)?,
        args.modality.as_deref(),
    )?;
    let durations = match &args.durations {
        Some(p) => read_durations(BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?))?,
        None => inferred_durations(&records),
    };

    let mut per_video: BTreeMap<&str, Vec<TimedPrediction>> = BTreeMap::new();
    for r in &records {
        per_video.entry(r.video_id.as_str()).or_default().push(TimedPrediction {
            start_s: r.start_s,
            end_s: r.end_s,
            probs: r.probs.clone(),
        });
    }
    let mut lines: Vec<FrameLine> = Vec::new();
    for (video, segments) in &per_video {
        let duration = *durations
            .get(*video)
            .with_context(|| format!("no duration for video {video:?}"))?;
        let track = broadcast_and_average(video, segments, args.fps, duration)
            .with_context(|| format!("video {video:?}"))?;
        lines.extend(track.to_lines());
    }
    write_lines(&args.out, &lines)?;
    RunManifest::new("frames")
        .input(&args.stream)
        .inputs(args.durations.iter())
        .configs(args.space.paths())
        .output(&args.out)
        .write_beside(&args.out)?;
    println!("{} frames over {} videos at {} fps", lines.len(), per_video.len(), args.fps);
    Ok(ExitCode::SUCCESS)
}
