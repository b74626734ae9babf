use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cerfuse::ingest::{align, parse_labels, AlignedSample, SegmentRecord};
use cerfuse::mhpf::{self, EpochRecord, FusionExample, MhpfModel, TrainConfig};
use clap::Args;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::write_records;
use crate::inputs::{load_streams, Policy, SpaceArgs};
use crate::output::{pretty_json, write_atomic, RunManifest};
use crate::UsageError;

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prediction stream files; every modality found becomes a model input.
    #[arg(long = "stream", required = true)]
    pub streams: Vec<PathBuf>,
    /// Training labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// Validation labels. Without it, a seeded fraction of videos is held out.
    #[arg(long, conflicts_with = "val_fraction")]
    pub val_labels: Option<PathBuf>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Seeds initialization, the validation split and batch shuffling.
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 25)]
    pub patience: usize,
    #[arg(long, value_enum, default_value = "drop")]
    pub missing_policy: Policy,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Loss history file; defaults to `<out>.history.json`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Serialize)]
struct History<'a> {
    best_epoch: usize,
    train_examples: usize,
    val_examples: usize,
    epochs: &'a [EpochRecord],
}

const DEFAULT_VAL_FRACTION: f64 = 0.2;

fn examples(model: &MhpfModel, samples: &[&AlignedSample]) -> Result<Vec<FusionExample>> {
    samples
        .iter()
        .map(|s| {
            let gold = s.gold.as_deref().expect("labelled sample");
            let inputs = restrict(model, s);
            model.example(&inputs, gold).with_context(|| format!("{}", s.key()))
        })
        .collect()
}

fn restrict(model: &MhpfModel, s: &AlignedSample) -> BTreeMap<String, cerfuse::ProbVector> {
    model
        .modality_order()
        .iter()
        .filter_map(|m| s.modalities.get(m).map(|e| (m.clone(), e.probs.clone())))
        .collect()
}

/// Holds out `fraction` of the labelled videos, chosen by a seeded shuffle.
fn split_by_video(
    samples: &[AlignedSample],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<&AlignedSample>, Vec<&AlignedSample>)> {
    let mut videos: Vec<&str> = samples
        .iter()
        .filter(|s| s.gold.is_some())
        .map(|s| s.video_id.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if videos.len() < 2 {
        bail!("need labelled segments from at least two videos to hold out a validation split");
    }
    videos.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((videos.len() as f64 * fraction).round() as usize).clamp(1, videos.len() - 1);
    let held: BTreeSet<&str> = videos[..n_val].iter().copied().collect();
    let (val, train) = samples
        .iter()
        .filter(|s| s.gold.is_some())
        .partition(|s| held.contains(s.video_id.as_str()));
    Ok((train, val))
}

pub fn train(args: TrainArgs) -> Result<ExitCode> {
    let fraction = args.val_fraction.unwrap_or(DEFAULT_VAL_FRACTION);
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(UsageError(format!("--val-fraction must lie in (0, 1), got {fraction}")).into());
    }
    if args.heads == 0 {
        return Err(UsageError("--heads must be positive".into()).into());
    }
    let space = args.space.basic()?;
    let records = load_streams(&args.streams, &space)?;
    let order: Vec<String> = records
        .iter()
        .map(|r| r.modality.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let policy = args.missing_policy.into();
    let labels = parse_labels(&args.labels).with_context(|| format!("reading {}", args.labels.display()))?;
    let aligned = align(&records, Some(&labels), &order, policy, &[&space])?;

    let val_aligned;
    let (train_samples, val_samples): (Vec<&AlignedSample>, Vec<&AlignedSample>) = match &args.val_labels {
        Some(p) => {
            let val_labels = parse_labels(p).with_context(|| format!("reading {}", p.display()))?;
            val_aligned = align(&records, Some(&val_labels), &order, policy, &[&space])?;
            (
                aligned.samples.iter().filter(|s| s.gold.is_some()).collect(),
                val_aligned.samples.iter().filter(|s| s.gold.is_some()).collect(),
            )
        }
        None => split_by_video(&aligned.samples, fraction, args.seed.wrapping_add(1))?,
    };

    let model = MhpfModel::init(args.heads, order, space, args.seed)?;
    let train_set = examples(&model, &train_samples)?;
    let val_set = examples(&model, &val_samples)?;
    let config = TrainConfig {
        learning_rate: args.lr,
        max_epochs: args.epochs,
        batch_size: args.batch,
        patience: args.patience,
        seed: args.seed.wrapping_add(2),
    };
    let outcome = mhpf::train(&model, &train_set, &val_set, &config)?;

    let history_path = args.history.clone().unwrap_or_else(|| {
        let mut s = args.out.as_os_str().to_owned();
        s.push(".history.json");
        PathBuf::from(s)
    });
    write_atomic(&args.out, outcome.model.to_json().as_bytes())?;
    write_atomic(
        &history_path,
        &pretty_json(&History {
            best_epoch: outcome.best_epoch,
            train_examples: train_set.len(),
            val_examples: val_set.len(),
            epochs: &outcome.history,
        }),
    )?;
    RunManifest::new("mhpf-train")
        .seed("seed", args.seed)
        .inputs(&args.streams)
        .input(&args.labels)
        .inputs(args.val_labels.iter())
        .configs(args.space.paths())
        .output(&args.out)
        .output(&history_path)
        .write_beside(&args.out)?;

    let last = outcome.history.last().expect("history has the initial entry");
    let best = &outcome.history[outcome.best_epoch];
    println!(
        "trained on {} segments, validated on {}; {} epochs, best epoch {} (val loss {:.4})",
        train_set.len(),
        val_set.len(),
        last.epoch,
        outcome.best_epoch,
        best.val_loss
    );
    let weights = outcome.model.effective_weights();
    for (m, row) in outcome.model.modality_order().iter().zip(&weights) {
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        println!("  {m:<12} mean effective weight {mean:.3}");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "stream", required = true)]
    pub streams: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "drop")]
    pub missing_policy: Policy,
    /// Output stream; records carry modality "fused".
    #[arg(long)]
    pub out: PathBuf,
}

pub const FUSED_MODALITY: &str = "fused";

pub fn predict(args: PredictArgs) -> Result<ExitCode> {
    let model: MhpfModel = MhpfModel::load(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let records = load_streams(&args.streams, model.space())?;
    let records: Vec<SegmentRecord> = records
        .into_iter()
        .filter(|r| model.modality_order().contains(&r.modality))
        .collect();
    let aligned = align(&records, None, model.modality_order(), args.missing_policy.into(), &[])?;
    let mut out = Vec::with_capacity(aligned.samples.len());
    for s in &aligned.samples {
        let fused = model.forward(&restrict(&model, s)).with_context(|| format!("{}", s.key()))?;
        out.push(SegmentRecord {
            video_id: s.video_id.clone(),
            segment_index: s.segment_index,
            start_s: s.start_s,
            end_s: s.end_s,
            modality: FUSED_MODALITY.to_string(),
            probs: fused,
            features: None,
        });
    }
    write_records(&args.out, &out)?;
    RunManifest::new("mhpf-predict")
        .input(&args.model)
        .inputs(&args.streams)
        .output(&args.out)
        .write_beside(&args.out)?;
    println!(
        "fused {} segments ({} dropped, {} imputed)",
        out.len(),
        aligned.dropped,
        aligned.imputed
    );
    Ok(ExitCode::SUCCESS)
}
