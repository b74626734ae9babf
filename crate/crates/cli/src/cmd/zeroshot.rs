use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cerfuse::ingest::SegmentRecord;
use cerfuse::{match_labels, LabelEmbeddingSet, Temperature};
use clap::Args;

use super::write_records;
use crate::inputs::{load_streams, single_modality, SpaceArgs};
use crate::output::RunManifest;
use crate::UsageError;

#[derive(Debug, Args)]
pub struct ZeroshotArgs {
    /// Label embeddings, one `{"label", "embedding"}` per line.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Stream whose records carry `features` in the embedding space.
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub space: SpaceArgs,
    /// Output stream over the embedding labels, modality "zeroshot".
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: ZeroshotArgs) -> Result<ExitCode> {
    let t = Temperature::new(args.temperature).map_err(|e| UsageError(e.to_string()))?;
    let file = File::open(&args.embeddings).with_context(|| format!("opening {}", args.embeddings.display()))?;
    let set: LabelEmbeddingSet = LabelEmbeddingSet::read(BufReader::new(file), None)
        .with_context(|| format!("reading {}", args.embeddings.display()))?;
    let space = args.space.basic()?;
    let records = single_modality(
        load_streams(std::slice::from_ref(&args.stream), &space)?,
        args.modality.as_deref(),
    )?;
    let out = records
        .into_iter()
        .map(|r| {
            let Some(f) = &r.features else {
                bail!("{} ({}) has no features", r.key(), r.modality);
            };
            let probs = match_labels(f, &set, t).with_context(|| format!("{} ({})", r.key(), r.modality))?;
            Ok(SegmentRecord {
                modality: "zeroshot".to_string(),
                probs,
                features: None,
                ..r
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_records(&args.out, &out)?;
    RunManifest::new("zeroshot")
        .input(&args.embeddings)
        .input(&args.stream)
        .configs(args.space.paths())
        .output(&args.out)
        .write_beside(&args.out)?;
    println!("matched {} records against {} labels", out.len(), set.space().len());
    Ok(ExitCode::SUCCESS)
}
