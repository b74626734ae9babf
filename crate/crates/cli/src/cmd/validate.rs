use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cerfuse::ingest::{align, check_grid, parse_labels, parse_stream, read_durations, GridSpec, SegmentRecord};
use clap::Args;
use serde::Serialize;

use crate::inputs::{Level, Policy, SpaceArgs};
use crate::output::{pretty_json, write_atomic, RunManifest};

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Prediction stream files.
    #[arg(long = "stream", required = true)]
    pub streams: Vec<PathBuf>,
    /// Gold label file.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Per-video durations; inferred from the largest segment end otherwise.
    #[arg(long)]
    pub durations: Option<PathBuf>,
    /// Modalities every segment must carry (default: all that appear).
    #[arg(long, value_delimiter = ',')]
    pub require: Vec<String>,
    #[arg(long, value_enum, default_value = "drop")]
    pub missing_policy: Policy,
    #[arg(long, value_enum, default_value = "basic")]
    pub level: Level,
    #[arg(long, default_value_t = 4.0)]
    pub window: f64,
    #[arg(long, default_value_t = 2.0)]
    pub hop: f64,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Optional JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct FileReport {
    path: String,
    records: usize,
    modalities: Vec<String>,
    errors: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Report {
    files: Vec<FileReport>,
    segments: usize,
    labelled: usize,
    dropped: usize,
    imputed: usize,
    errors: usize,
}

pub fn run(args: ValidateArgs) -> Result<ExitCode> {
    let space = args.space.for_level(args.level)?;
    let grid = GridSpec {
        window_s: args.window,
        hop_s: args.hop,
    };
    if !(args.hop > 0.0) || !(args.hop <= args.window) {
        return Err(crate::UsageError(format!("need 0 < --hop <= --window, got {} / {}", args.hop, args.window)).into());
    }
    let durations = match &args.durations {
        Some(p) => Some(read_durations(std::io::BufReader::new(std::fs::File::open(p)?))?),
        None => None,
    };

    let mut files = Vec::new();
    let mut all: Vec<SegmentRecord> = Vec::new();
    let mut seen = HashSet::new();
    for path in &args.streams {
        let mut report = FileReport {
            path: path.display().to_string(),
            records: 0,
            modalities: Vec::new(),
            errors: Vec::new(),
        };
        match parse_stream::<f64>(path, &space) {
            Err(e) => report.errors.push(e.to_string()),
            Ok(records) => {
                report.records = records.len();
                report.modalities = records
                    .iter()
                    .map(|r| r.modality.clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                match check_grid(&records, grid, durations.as_ref()) {
                    Ok(violations) => report
                        .errors
                        .extend(violations.iter().map(|v| format!("{} ({}): {}", v.key, v.modality, v.reason))),
                    Err(e) => report.errors.push(e.to_string()),
                }
                for r in records {
                    if !seen.insert((r.video_id.clone(), r.segment_index, r.modality.clone())) {
                        report
                            .errors
                            .push(format!("{} ({}) repeats a record from an earlier file", r.key(), r.modality));
                    } else {
                        all.push(r);
                    }
                }
            }
        }
        files.push(report);
    }

    let mut errors: usize = files.iter().map(|f| f.errors.len()).sum();
    let mut report = Report {
        files,
        segments: 0,
        labelled: 0,
        dropped: 0,
        imputed: 0,
        errors: 0,
    };
    let labels = match &args.labels {
        None => None,
        Some(p) => match parse_labels(p) {
            Ok(l) => Some(l),
            Err(e) => {
                println!("{}: error: {e}", p.display());
                errors += 1;
                None
            }
        },
    };
    if errors == 0 {
        match align(&all, labels.as_deref(), &args.require, args.missing_policy.into(), &[&space]) {
            Ok(a) => {
                report.segments = a.samples.len();
                report.labelled = a.samples.iter().filter(|s| s.gold.is_some()).count();
                report.dropped = a.dropped;
                report.imputed = a.imputed;
            }
            Err(e) => {
                println!("alignment error: {e}");
                errors += 1;
            }
        }
    }
    report.errors = errors;

    for f in &report.files {
        println!("{}: {} records, modalities {:?}, {} errors", f.path, f.records, f.modalities, f.errors.len());
        for e in &f.errors {
            println!("  error: {e}");
        }
    }
    println!(
        "aligned segments {}, labelled {}, dropped {}, imputed {}",
        report.segments, report.labelled, report.dropped, report.imputed
    );
    println!("{} errors", report.errors);

    if let Some(out) = &args.out {
        write_atomic(out, &pretty_json(&report))?;
        RunManifest::new("validate")
            .inputs(&args.streams)
            .inputs(args.labels.iter().chain(args.durations.iter()))
            .configs(args.space.paths())
            .output(out)
            .write_beside(out)?;
    }
    Ok(if errors == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
