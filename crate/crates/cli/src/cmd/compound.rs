use std::collections::HashMap;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cerfuse::ingest::{parse_labels, LabelTarget, SegmentRecord};
use cerfuse::{build_prototypes, pfsa as pfsa_map, ppa as ppa_map, PrototypeBank, PrototypeSample, Temperature};
use clap::Args;

use super::write_records;
use crate::inputs::{load_streams, single_modality, SpaceArgs};
use crate::output::{write_atomic, RunManifest};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct PpaArgs {
    /// Basic-emotion prediction stream(s).
    #[arg(long = "stream", required = true)]
    pub streams: Vec<PathBuf>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Compound prediction stream.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn ppa(args: PpaArgs) -> Result<ExitCode> {
    let scheme = args.space.scheme()?;
    let records = load_streams(&args.streams, scheme.source())?;
    let out = records
        .into_iter()
        .map(|r| {
            let probs = ppa_map(&r.probs, &scheme).with_context(|| format!("{} ({})", r.key(), r.modality))?;
            Ok(SegmentRecord { probs, features: None, ..r })
        })
        .collect::<Result<Vec<_>>>()?;
    write_records(&args.out, &out)?;
    RunManifest::new("ppa")
        .inputs(&args.streams)
        .configs(args.space.paths())
        .output(&args.out)
        .write_beside(&args.out)?;
    println!("mapped {} records onto {} compounds", out.len(), scheme.len());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct PfsaBuildArgs {
    /// Stream whose records carry `features`.
    #[arg(long)]
    pub features: PathBuf,
    /// Stream whose argmax is the predicted basic label; defaults to the
    /// features stream.
    #[arg(long)]
    pub preds: Option<PathBuf>,
    /// Segment-level gold labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Modality to take from the streams when they hold several.
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Prototype bank file.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn pfsa_build(args: PfsaBuildArgs) -> Result<ExitCode> {
    let scheme = args.space.scheme()?;
    let basic = scheme.source().clone();
    let feats = single_modality(load_streams(std::slice::from_ref(&args.features), &basic)?, args.modality.as_deref())?;
    let preds = match &args.preds {
        Some(p) => single_modality(load_streams(std::slice::from_ref(p), &basic)?, args.modality.as_deref())?,
        None => feats.clone(),
    };
    let predicted: HashMap<(&str, u64), usize> = preds
        .iter()
        .map(|r| ((r.video_id.as_str(), r.segment_index), r.probs.argmax_index()))
        .collect();
    let labels = parse_labels(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    let mut gold: HashMap<(&str, u64), usize> = HashMap::new();
    for l in &labels {
        if let LabelTarget::Segment(s) = l.target {
            let idx = basic
                .index_of(&l.label)
                .with_context(|| format!("label {:?} is not a basic label", l.label))?;
            gold.insert((l.video_id.as_str(), s), idx);
        }
    }

    let mut samples = Vec::new();
    for r in &feats {
        let key = (r.video_id.as_str(), r.segment_index);
        let (Some(&g), Some(&p)) = (gold.get(&key), predicted.get(&key)) else {
            continue;
        };
        let Some(f) = &r.features else {
            bail!("{} ({}) has no features", r.key(), r.modality);
        };
        samples.push(PrototypeSample {
            features: f.clone(),
            gold: g,
            predicted: p,
        });
    }
    if samples.is_empty() {
        bail!("no segment has features, a prediction and a gold label");
    }
    let bank = build_prototypes(&samples, &scheme)?;
    write_atomic(&args.out, bank.to_json().as_bytes())?;
    let mut inputs = vec![&args.features, &args.labels];
    inputs.extend(args.preds.iter());
    RunManifest::new("pfsa-build")
        .inputs(inputs)
        .configs(args.space.paths())
        .output(&args.out)
        .write_beside(&args.out)?;

    let correct = samples.iter().filter(|s| s.gold == s.predicted).count();
    println!(
        "{} labelled samples, {} correctly classified; prototypes of dimension {}",
        samples.len(),
        correct,
        bank.dim()
    );
    for (i, label) in basic.labels().iter().enumerate() {
        println!("  {label:<12} {}", bank.count(i));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct PfsaPredictArgs {
    #[arg(long)]
    pub bank: PathBuf,
    /// Stream whose records carry `features`.
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub temperature: f64,
    #[arg(long)]
    pub modality: Option<String>,
    /// Compound prediction stream.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn pfsa_predict(args: PfsaPredictArgs) -> Result<ExitCode> {
    let t = Temperature::new(args.temperature).map_err(|e| UsageError(e.to_string()))?;
    let bank: PrototypeBank = PrototypeBank::load(&args.bank).with_context(|| format!("loading {}", args.bank.display()))?;
    let records = single_modality(
        load_streams(std::slice::from_ref(&args.stream), bank.scheme().source())?,
        args.modality.as_deref(),
    )?;
    let out = records
        .into_iter()
        .map(|r| {
            let Some(f) = &r.features else {
                bail!("{} ({}) has no features", r.key(), r.modality);
            };
            let probs = pfsa_map(f, &bank, t).with_context(|| format!("{} ({})", r.key(), r.modality))?;
            Ok(SegmentRecord { probs, features: None, ..r })
        })
        .collect::<Result<Vec<_>>>()?;
    write_records(&args.out, &out)?;
    RunManifest::new("pfsa-predict")
        .input(&args.bank)
        .input(&args.stream)
        .output(&args.out)
        .write_beside(&args.out)?;
    println!("mapped {} records at temperature {}", out.len(), args.temperature);
    Ok(ExitCode::SUCCESS)
}
