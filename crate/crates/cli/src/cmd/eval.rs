use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cerfuse::ingest::{parse_labels, LabelTarget};
use cerfuse::metrics::{confusion, evaluate};
use cerfuse::temporal::FrameLine;
use cerfuse::EmotionSpace;
use clap::Args;

use crate::inputs::{load_streams, single_modality, Level, SpaceArgs};
use crate::output::{pretty_json, write_atomic, RunManifest};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Segment stream or frame output; the format is detected.
    #[arg(long)]
    pub preds: PathBuf,
    /// Gold labels keyed by `segment_index` or `frame`, matching the preds.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum, default_value = "basic")]
    pub level: Level,
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// JSON report; a text table is written beside it with extension `.txt`.
    #[arg(long)]
    pub out: PathBuf,
}

fn is_frame_file(path: &Path) -> Result<bool> {
    let reader = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).with_context(|| format!("{}: first record is not JSON", path.display()))?;
        return Ok(value.get("frame").is_some());
    }
    bail!("{} holds no records", path.display())
}

/// Predicted labels keyed by `(video, target)`.
fn frame_predictions(path: &Path, space: &EmotionSpace) -> Result<HashMap<(String, LabelTarget), String>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: FrameLine =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        if !space.contains(&f.label) {
            bail!("{} line {}: label {:?} not in the label space", path.display(), i + 1, f.label);
        }
        if out.insert((f.video_id, LabelTarget::Frame(f.frame)), f.label).is_some() {
            bail!("{} line {}: duplicate frame", path.display(), i + 1);
        }
    }
    Ok(out)
}

pub fn run(args: EvalArgs) -> Result<ExitCode> {
    if args.out.extension().is_some_and(|e| e == "txt") {
        return Err(UsageError("--out names the JSON report; the .txt table is written beside it".into()).into());
    }
    let space = args.space.for_level(args.level)?;
    let predictions = if is_frame_file(&args.preds)? {
        frame_predictions(&args.preds, &space)?
    } else {
        single_modality(load_streams(std::slice::from_ref(&args.preds), &space)?, args.modality.as_deref())?
            .into_iter()
            .map(|r| {
                let label = r.probs.argmax_label().to_string();
                ((r.video_id, LabelTarget::Segment(r.segment_index)), label)
            })
            .collect()
    };

    let labels = parse_labels(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    let mut golds = Vec::new();
    let mut preds = Vec::new();
    let mut unmatched = 0usize;
    let mut first_unmatched = None;
    for l in &labels {
        match predictions.get(&(l.video_id.clone(), l.target.clone())) {
            Some(p) => {
                golds.push(l.label.as_str());
                preds.push(p.as_str());
            }
            None => {
                unmatched += 1;
                first_unmatched.get_or_insert((l.video_id.clone(), l.target.clone()));
            }
        }
    }
    if let Some((video, target)) = first_unmatched {
        bail!("{unmatched} labels have no prediction (first: video {video:?} {target:?})");
    }
    let cm = confusion(&golds, &preds, &space)?;
    let report = evaluate(&cm)?;

    let text = report.to_string();
    let txt_path = args.out.with_extension("txt");
    write_atomic(&args.out, &pretty_json(&report))?;
    write_atomic(&txt_path, text.as_bytes())?;
    RunManifest::new("eval")
        .input(&args.preds)
        .input(&args.labels)
        .configs(args.space.paths())
        .output(&args.out)
        .output(&txt_path)
        .write_beside(&args.out)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}
