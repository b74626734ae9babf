//! Seeded synthetic multimodal prediction streams with controllable
//! per-modality reliability.
//!
//! For every segment a gold label is drawn uniformly. A modality with
//! reliability `r` emits, with probability `r`, a noisy one-hot of the gold
//! (gold mass uniform in `[confident_mass, 1]`, the rest spread by a flat
//! Dirichlet draw); otherwise it emits a flat Dirichlet sample. The feature
//! modality additionally carries a feature drawn from the gold class's
//! Gaussian cluster.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{self, GridSpec, LabelRecord, LabelTarget, SegmentRecord};
use crate::space::{CompoundScheme, EmotionSpace, FeatureVector, ProbVector, SpaceConfig, SpaceError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    /// Probability that a segment's distribution is a noisy one-hot of gold.
    pub reliability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_videos: usize,
    /// Inclusive range for clip durations, seconds.
    pub duration_range: (f64, f64),
    pub fps: f64,
    #[serde(default = "default_window")]
    pub window_s: f64,
    #[serde(default = "default_hop")]
    pub hop_s: f64,
    #[serde(default = "SpaceConfig::builtin")]
    pub space: SpaceConfig,
    pub modalities: Vec<ModalitySpec>,
    pub feature_dim: usize,
    /// Standard deviation of the per-class feature clusters.
    pub feature_spread: f64,
    /// Cluster centers, one per basic class; drawn from N(0, I) when absent.
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    /// Modality whose records carry features; the first modality when absent.
    #[serde(default)]
    pub feature_modality: Option<String>,
    /// Lower bound of the gold mass in reliable outputs.
    #[serde(default = "default_confident_mass")]
    pub confident_mass: f64,
}

fn default_window() -> f64 {
    4.0
}
fn default_hop() -> f64 {
    2.0
}
fn default_confident_mass() -> f64 {
    0.7
}

impl SynthConfig {
    /// A small three-modality setup with mixed reliabilities.
    pub fn example(seed: u64) -> Self {
        Self {
            seed,
            n_videos: 40,
            duration_range: (8.0, 30.0),
            fps: 25.0,
            window_s: 4.0,
            hop_s: 2.0,
            space: SpaceConfig::builtin(),
            modalities: vec![
                ModalitySpec { name: "face".into(), reliability: 0.9 },
                ModalitySpec { name: "audio".into(), reliability: 0.5 },
                ModalitySpec { name: "text".into(), reliability: 0.3 },
            ],
            feature_dim: 16,
            feature_spread: 0.5,
            centers: None,
            feature_modality: None,
            confident_mass: 0.7,
        }
    }

    fn validate(&self) -> Result<(EmotionSpace, Option<CompoundScheme>), SynthError> {
        let bad = |m: String| Err(SynthError::BadConfig(m));
        if self.n_videos == 0 {
            return bad("n_videos must be positive".into());
        }
        let (lo, hi) = self.duration_range;
        if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
            return bad(format!("duration range ({lo}, {hi}) must satisfy 0 < min <= max"));
        }
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return bad("fps must be positive".into());
        }
        if !(self.hop_s > 0.0) || !(self.hop_s <= self.window_s) {
            return bad("hop must satisfy 0 < hop <= window".into());
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.name.is_empty() || self.modalities[..i].iter().any(|o| o.name == m.name) {
                return bad(format!("modality names must be unique and non-empty ({:?})", m.name));
            }
            if !(0.0..=1.0).contains(&m.reliability) {
                return bad(format!("reliability of {:?} outside [0, 1]", m.name));
            }
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be positive".into());
        }
        if !(self.feature_spread >= 0.0) || !self.feature_spread.is_finite() {
            return bad("feature_spread must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.confident_mass) {
            return bad("confident_mass outside [0, 1]".into());
        }
        let space = self.space.basic_space()?;
        if let Some(c) = &self.centers {
            if c.len() != space.len() || c.iter().any(|v| v.len() != self.feature_dim) {
                return bad("centers must be one feature_dim vector per basic class".into());
            }
        }
        if let Some(f) = &self.feature_modality {
            if !self.modalities.iter().any(|m| &m.name == f) {
                return bad(format!("feature modality {f:?} is not a configured modality"));
            }
        }
        Ok((space, self.space.scheme()?))
    }
}

/// A generated dataset held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub space: EmotionSpace,
    pub scheme: Option<CompoundScheme>,
    pub config: SynthConfig,
    /// One stream per modality, in config order.
    pub streams: Vec<(String, Vec<SegmentRecord>)>,
    pub labels: Vec<LabelRecord>,
    pub durations: BTreeMap<String, f64>,
    pub centers: Vec<Vec<f64>>,
}

fn flat_dirichlet(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid gamma");
    loop {
        let draws: Vec<f64> = (0..c).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|d| d / total).collect();
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset, SynthError> {
    let (space, scheme) = config.validate()?;
    let c = space.len();
    let d = config.feature_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let centers: Vec<Vec<f64>> = match &config.centers {
        Some(c) => c.clone(),
        None => (0..c)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect(),
    };
    let feature_modality = config
        .feature_modality
        .clone()
        .unwrap_or_else(|| config.modalities[0].name.clone());
    let grid = GridSpec {
        window_s: config.window_s,
        hop_s: config.hop_s,
    };

    let mut streams: Vec<(String, Vec<SegmentRecord>)> =
        config.modalities.iter().map(|m| (m.name.clone(), Vec::new())).collect();
    let mut labels = Vec::new();
    let mut durations = BTreeMap::new();

    for v in 0..config.n_videos {
        let video_id = format!("vid{v:04}");
        let (lo, hi) = config.duration_range;
        let raw: f64 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let duration = ((raw * 1000.0).round() / 1000.0).max(1e-3);
        durations.insert(video_id.clone(), duration);
        for (index, (start_s, end_s)) in grid.segments(duration).map_err(|e| SynthError::BadConfig(e.to_string()))?.into_iter().enumerate() {
            let gold = rng.random_range(0..c);
            labels.push(LabelRecord {
                video_id: video_id.clone(),
                target: LabelTarget::Segment(index as u64),
                label: space.label(gold).to_string(),
            });
            for (spec, (_, stream)) in config.modalities.iter().zip(streams.iter_mut()) {
                let values = if rng.random_bool(spec.reliability) {
                    let mass: f64 = rng.random_range(config.confident_mass..=1.0);
                    let noise = flat_dirichlet(&mut rng, c);
                    let mut v: Vec<f64> = noise.into_iter().map(|x| x * (1.0 - mass)).collect();
                    v[gold] += mass;
                    v
                } else {
                    flat_dirichlet(&mut rng, c)
                };
                let features = if spec.name == feature_modality {
                    let f: Vec<f64> = centers[gold]
                        .iter()
                        .map(|&m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + config.feature_spread * z
                        })
                        .collect();
                    Some(FeatureVector::new(f)?)
                } else {
                    None
                };
                stream.push(SegmentRecord {
                    video_id: video_id.clone(),
                    segment_index: index as u64,
                    start_s,
                    end_s,
                    modality: spec.name.clone(),
                    probs: ProbVector::new(values, space.clone())?,
                    features,
                });
            }
        }
    }

    Ok(SynthDataset {
        space,
        scheme,
        config: config.clone(),
        streams,
        labels,
        durations,
        centers,
    })
}

impl SynthDataset {
    /// File name of a modality's stream inside a dataset directory.
    pub fn stream_file(modality: &str) -> String {
        format!("stream_{modality}.jsonl")
    }

    /// Writes `stream_<modality>.jsonl`, `labels.jsonl`, `durations.jsonl`,
    /// `space.json`, `centers.json` and `synth_config.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), SynthError> {
        fs::create_dir_all(dir)?;
        for (name, records) in &self.streams {
            let mut w = BufWriter::new(File::create(dir.join(Self::stream_file(name)))?);
            ingest::write_stream(&mut w, records)?;
            w.flush()?;
        }
        let mut w = BufWriter::new(File::create(dir.join("labels.jsonl"))?);
        ingest::write_labels(&mut w, &self.labels)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join("durations.jsonl"))?);
        ingest::write_durations(&mut w, &self.durations)?;
        w.flush()?;
        fs::write(dir.join("space.json"), pretty_json(&self.config.space))?;
        fs::write(dir.join("centers.json"), pretty_json(&self.centers))?;
        fs::write(dir.join("synth_config.json"), pretty_json(&self.config))?;
        Ok(())
    }
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        let mut c = SynthConfig::example(seed);
        c.n_videos = 5;
        c
    }

    #[test]
    fn fully_reliable_modality_matches_gold() {
        let mut cfg = small(1);
        cfg.modalities[0].reliability = 1.0;
        let ds = generate(&cfg).unwrap();
        let face = &ds.streams[0].1;
        for (rec, label) in face.iter().zip(&ds.labels) {
            assert_eq!(rec.probs.argmax_label(), label.label);
            assert!(rec.probs.get(&label.label).unwrap() >= 0.7 - 1e-12);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        assert_eq!(generate(&small(5)).unwrap(), generate(&small(5)).unwrap());
        assert_ne!(generate(&small(5)).unwrap().labels, generate(&small(6)).unwrap().labels);
    }

    #[test]
    fn zero_spread_features_are_centers() {
        let mut cfg = small(2);
        cfg.feature_spread = 0.0;
        let ds = generate(&cfg).unwrap();
        for (rec, label) in ds.streams[0].1.iter().zip(&ds.labels) {
            let gold = ds.space.index_of(&label.label).unwrap();
            assert_eq!(rec.features.as_ref().unwrap().values(), ds.centers[gold].as_slice());
        }
        assert!(ds.streams[1].1.iter().all(|r| r.features.is_none()));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = small(0);
        cfg.modalities[1].reliability = 1.5;
        assert!(matches!(generate(&cfg), Err(SynthError::BadConfig(_))));
        let mut cfg = small(0);
        cfg.n_videos = 0;
        assert!(matches!(generate(&cfg), Err(SynthError::BadConfig(_))));
        let mut cfg = small(0);
        cfg.feature_modality = Some("nope".into());
        assert!(matches!(generate(&cfg), Err(SynthError::BadConfig(_))));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SynthConfig::example(3);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<SynthConfig>(&text).unwrap(), cfg);
    }
}
