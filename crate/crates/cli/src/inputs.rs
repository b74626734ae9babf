use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cerfuse::ingest::{parse_stream, SegmentRecord};
use cerfuse::space::CompoundEntry;
use cerfuse::{CompoundScheme, EmotionSpace, SpaceConfig};
use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    /// Label space JSON: {"basic": [...], "compounds": [{"name", "pair"}]}.
    /// Defaults to the built-in 8 basic labels and 7 compounds.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Compound scheme JSON: {"compounds": [{"name", "pair"}]}. Replaces the
    /// compounds of --space.
    #[arg(long)]
    pub scheme: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeFile {
    compounds: Vec<CompoundEntry>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl SpaceArgs {
    pub fn config(&self) -> Result<SpaceConfig> {
        let mut cfg = match &self.space {
            Some(p) => read_json::<SpaceConfig>(p)?,
            None => SpaceConfig::builtin(),
        };
        if let Some(p) = &self.scheme {
            cfg.compounds = read_json::<SchemeFile>(p)?.compounds;
        }
        Ok(cfg)
    }

    pub fn basic(&self) -> Result<EmotionSpace> {
        Ok(self.config()?.basic_space()?)
    }

    pub fn scheme(&self) -> Result<CompoundScheme> {
        match self.config()?.scheme()? {
            Some(s) => Ok(s),
            None => Err(UsageError("the label space defines no compounds; pass --scheme".into()).into()),
        }
    }

    /// Space that predictions at `level` are expressed over.
    pub fn for_level(&self, level: Level) -> Result<EmotionSpace> {
        match level {
            Level::Basic => self.basic(),
            Level::Compound => Ok(self.scheme()?.compound_space().clone()),
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.space.iter().chain(self.scheme.iter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Level {
    Basic,
    Compound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    /// Skip segments missing a required modality.
    Drop,
    /// Fill missing modalities with the uniform distribution.
    Uniform,
}

impl From<Policy> for cerfuse::MissingPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Drop => cerfuse::MissingPolicy::Drop,
            Policy::Uniform => cerfuse::MissingPolicy::UniformImpute,
        }
    }
}

/// Reads several stream files as one, rejecting keys repeated across files.
pub fn load_streams(paths: &[PathBuf], space: &EmotionSpace) -> Result<Vec<SegmentRecord>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for path in paths {
        let records: Vec<SegmentRecord> =
            parse_stream(path, space).with_context(|| format!("reading {}", path.display()))?;
        for r in records {
            if !seen.insert((r.video_id.clone(), r.segment_index, r.modality.clone())) {
                bail!(
                    "{}: {} modality {:?} already appeared in an earlier file",
                    path.display(),
                    r.key(),
                    r.modality
                );
            }
            out.push(r);
        }
    }
    Ok(out)
}

/// Keeps one modality's records. With no filter the stream must hold exactly
/// one modality.
pub fn single_modality(records: Vec<SegmentRecord>, modality: Option<&str>) -> Result<Vec<SegmentRecord>> {
    match modality {
        Some(m) => {
            let kept: Vec<_> = records.into_iter().filter(|r| r.modality == m).collect();
            if kept.is_empty() {
                bail!("no records for modality {m:?}");
            }
            Ok(kept)
        }
        None => {
            let mods: BTreeSet<&str> = records.iter().map(|r| r.modality.as_str()).collect();
            if mods.len() > 1 {
                return Err(UsageError(format!("stream mixes modalities {mods:?}; pick one with --modality")).into());
            }
            Ok(records)
        }
    }
}
