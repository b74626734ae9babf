//! Segmentation grid, line-delimited prediction streams and the
//! per-segment join across modalities.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::space::{EmotionSpace, FeatureVector, ProbVector, SpaceError};

/// Slack for comparing segment boundaries in seconds.
pub const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),
    #[error("hop must satisfy 0 < hop <= window (hop {hop}, window {window})")]
    BadHop { hop: f64, window: f64 },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: probabilities invalid: {source}")]
    SimplexViolation { line: usize, source: SpaceError },
    #[error("duplicate record for video {video_id:?}, segment {segment_index}, modality {modality:?}")]
    DuplicateKey {
        video_id: String,
        segment_index: u64,
        modality: String,
    },
    #[error("duplicate label for {0}")]
    DuplicateLabel(String),
    #[error("video {video_id:?} segment {segment_index}: modalities disagree on segment bounds")]
    InconsistentBounds { video_id: String, segment_index: u64 },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("records do not share one label space")]
    MixedSpaces,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Window and hop lengths in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub window_s: f64,
    pub hop_s: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            window_s: 4.0,
            hop_s: 2.0,
        }
    }
}

impl GridSpec {
    pub fn segments(&self, duration_s: f64) -> Result<Vec<(f64, f64)>, IngestError> {
        segment_grid(duration_s, self.window_s, self.hop_s)
    }
}

/// Splits `[0, duration_s)` into windows starting every `hop_s` seconds.
///
/// Clips shorter than one window yield a single `(0, duration)` segment.
/// Otherwise a final window anchored at the clip end is appended when the
/// regular starts leave a remainder uncovered.
pub fn segment_grid(duration_s: f64, window_s: f64, hop_s: f64) -> Result<Vec<(f64, f64)>, IngestError> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(IngestError::NonPositiveDuration(duration_s));
    }
    if !(hop_s > 0.0) || !(hop_s <= window_s) || !window_s.is_finite() {
        return Err(IngestError::BadHop {
            hop: hop_s,
            window: window_s,
        });
    }
    if duration_s < window_s {
        return Ok(vec![(0.0, duration_s)]);
    }
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let start = k as f64 * hop_s;
        if start + window_s > duration_s + TIME_EPS {
            break;
        }
        out.push((start, start + window_s));
        k += 1;
    }
    let tail = duration_s - window_s;
    let last_end = out.last().map(|s| s.1).unwrap_or(0.0);
    if last_end < duration_s - TIME_EPS && out.iter().all(|s| (s.0 - tail).abs() > TIME_EPS) {
        out.push((tail, duration_s));
    }
    Ok(out)
}

/// One modality's output for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord<T = f64> {
    pub video_id: String,
    pub segment_index: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub modality: String,
    pub probs: ProbVector<T>,
    pub features: Option<FeatureVector<T>>,
}

/// Serialized form of a [`SegmentRecord`], one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamLine {
    pub video_id: String,
    pub segment_index: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub modality: String,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub features: Option<Vec<f64>>,
}

impl<T: Scalar> SegmentRecord<T> {
    pub fn to_line(&self) -> StreamLine {
        StreamLine {
            video_id: self.video_id.clone(),
            segment_index: self.segment_index,
            start_s: self.start_s,
            end_s: self.end_s,
            modality: self.modality.clone(),
            probs: self.probs.values().iter().map(|v| v.to_f64_lossy()).collect(),
            features: self
                .features
                .as_ref()
                .map(|f| f.values().iter().map(|v| v.to_f64_lossy()).collect()),
        }
    }

}

impl<T> SegmentRecord<T> {
    pub fn key(&self) -> SegmentKey {
        SegmentKey {
            video_id: self.video_id.clone(),
            segment_index: self.segment_index,
        }
    }
}

/// `(video_id, segment_index)`, ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SegmentKey {
    pub video_id: String,
    pub segment_index: u64,
}

impl std::fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "video {:?} segment {}", self.video_id, self.segment_index)
    }
}

fn convert<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::from_f64(x).unwrap_or_else(T::nan)).collect()
}

fn line_to_record<T: Scalar>(
    line_no: usize,
    line: StreamLine,
    space: &EmotionSpace,
) -> Result<SegmentRecord<T>, IngestError> {
    let malformed = |reason: String| IngestError::Malformed {
        line: line_no,
        reason,
    };
    if line.video_id.is_empty() {
        return Err(malformed("empty video_id".into()));
    }
    if line.modality.is_empty() {
        return Err(malformed("empty modality".into()));
    }
    if !line.start_s.is_finite() || !line.end_s.is_finite() || line.start_s < 0.0 {
        return Err(malformed("segment bounds must be finite and start >= 0".into()));
    }
    if !(line.end_s > line.start_s) {
        return Err(malformed(format!(
            "end_s {} must exceed start_s {}",
            line.end_s, line.start_s
        )));
    }
    let probs = ProbVector::new(convert(&line.probs), space.clone()).map_err(|e| match e {
        SpaceError::LengthMismatch { expected, got } => {
            malformed(format!("expected {expected} probabilities, got {got}"))
        }
        other => IngestError::SimplexViolation {
            line: line_no,
            source: other,
        },
    })?;
    let features = match line.features {
        None => None,
        Some(f) => Some(
            FeatureVector::new(convert(&f)).map_err(|e| malformed(format!("features: {e}")))?,
        ),
    };
    Ok(SegmentRecord {
        video_id: line.video_id,
        segment_index: line.segment_index,
        start_s: line.start_s,
        end_s: line.end_s,
        modality: line.modality,
        probs,
        features,
    })
}

/// Reads a prediction stream. Line numbers in errors are 1-based; blank
/// lines are skipped.
pub fn read_stream<T: Scalar, R: BufRead>(
    reader: R,
    space: &EmotionSpace,
) -> Result<Vec<SegmentRecord<T>>, IngestError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: StreamLine = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: line_no,
            reason: e.to_string(),
        })?;
        let rec = line_to_record(line_no, parsed, space)?;
        if !seen.insert((rec.video_id.clone(), rec.segment_index, rec.modality.clone())) {
            return Err(IngestError::DuplicateKey {
                video_id: rec.video_id,
                segment_index: rec.segment_index,
                modality: rec.modality,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn parse_stream<T: Scalar>(
    path: impl AsRef<Path>,
    space: &EmotionSpace,
) -> Result<Vec<SegmentRecord<T>>, IngestError> {
    read_stream(BufReader::new(File::open(path)?), space)
}

pub fn write_stream<T: Scalar, W: Write>(mut w: W, records: &[SegmentRecord<T>]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &r.to_line())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// What a label line is attached to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LabelTarget {
    Segment(u64),
    Frame(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRecord {
    pub video_id: String,
    pub target: LabelTarget,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    video_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segment_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    frame: Option<u64>,
    label: String,
}

/// Reads a label file keyed either by `segment_index` or by `frame`.
pub fn read_labels<R: BufRead>(reader: R) -> Result<Vec<LabelRecord>, IngestError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| IngestError::Malformed {
            line: line_no,
            reason,
        };
        let parsed: LabelLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let target = match (parsed.segment_index, parsed.frame) {
            (Some(s), None) => LabelTarget::Segment(s),
            (None, Some(f)) => LabelTarget::Frame(f),
            _ => return Err(malformed("exactly one of segment_index or frame is required".into())),
        };
        if !seen.insert((parsed.video_id.clone(), target.clone())) {
            return Err(IngestError::DuplicateLabel(format!(
                "video {:?} {:?}",
                parsed.video_id, target
            )));
        }
        out.push(LabelRecord {
            video_id: parsed.video_id,
            target,
            label: parsed.label,
        });
    }
    Ok(out)
}

pub fn parse_labels(path: impl AsRef<Path>) -> Result<Vec<LabelRecord>, IngestError> {
    read_labels(BufReader::new(File::open(path)?))
}

pub fn write_labels<W: Write>(mut w: W, labels: &[LabelRecord]) -> io::Result<()> {
    for l in labels {
        let (segment_index, frame) = match l.target {
            LabelTarget::Segment(s) => (Some(s), None),
            LabelTarget::Frame(f) => (None, Some(f)),
        };
        let line = LabelLine {
            video_id: l.video_id.clone(),
            segment_index,
            frame,
            label: l.label.clone(),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DurationLine {
    video_id: String,
    duration_s: f64,
}

/// Reads `{"video_id", "duration_s"}` lines.
pub fn read_durations<R: BufRead>(reader: R) -> Result<BTreeMap<String, f64>, IngestError> {
    let mut out = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: DurationLine = serde_json::from_str(&line).map_err(|e| IngestError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if !(d.duration_s > 0.0) {
            return Err(IngestError::NonPositiveDuration(d.duration_s));
        }
        out.insert(d.video_id, d.duration_s);
    }
    Ok(out)
}

pub fn write_durations<W: Write>(mut w: W, durations: &BTreeMap<String, f64>) -> io::Result<()> {
    for (video_id, &duration_s) in durations {
        serde_json::to_writer(
            &mut w,
            &DurationLine {
                video_id: video_id.clone(),
                duration_s,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-video duration taken as the largest segment end seen.
pub fn inferred_durations<T>(records: &[SegmentRecord<T>]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for r in records {
        let d = out.entry(r.video_id.clone()).or_insert(0.0);
        *d = d.max(r.end_s);
    }
    out
}

/// A record whose bounds disagree with the grid for its video.
#[derive(Debug, Clone, PartialEq)]
pub struct GridViolation {
    pub key: SegmentKey,
    pub modality: String,
    pub reason: String,
}

/// Checks every record's bounds against the grid implied by its video's
/// duration (given, or inferred from the records).
pub fn check_grid<T>(
    records: &[SegmentRecord<T>],
    grid: GridSpec,
    durations: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<GridViolation>, IngestError> {
    let inferred;
    let durations = match durations {
        Some(d) => d,
        None => {
            inferred = inferred_durations(records);
            &inferred
        }
    };
    let mut grids: HashMap<&str, Vec<(f64, f64)>> = HashMap::new();
    let mut out = Vec::new();
    for r in records {
        let violation = |reason: String| GridViolation {
            key: r.key(),
            modality: r.modality.clone(),
            reason,
        };
        let Some(&duration) = durations.get(&r.video_id) else {
            out.push(violation("no duration known for video".into()));
            continue;
        };
        if !grids.contains_key(r.video_id.as_str()) {
            grids.insert(r.video_id.as_str(), grid.segments(duration)?);
        }
        let segs = &grids[r.video_id.as_str()];
        if r.end_s - r.start_s > grid.window_s + TIME_EPS {
            out.push(violation(format!(
                "segment length {} exceeds window {}",
                r.end_s - r.start_s,
                grid.window_s
            )));
            continue;
        }
        match segs.get(r.segment_index as usize) {
            None => out.push(violation(format!(
                "index beyond the {} segments of a {duration} s clip",
                segs.len()
            ))),
            Some(&(s, e)) if (s - r.start_s).abs() > TIME_EPS || (e - r.end_s).abs() > TIME_EPS => {
                out.push(violation(format!(
                    "bounds ({}, {}) differ from grid ({s}, {e})",
                    r.start_s, r.end_s
                )))
            }
            Some(_) => {}
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Discard samples lacking a required modality.
    #[default]
    Drop,
    /// Substitute the uniform distribution for missing modalities.
    UniformImpute,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityEntry<T = f64> {
    pub probs: ProbVector<T>,
    pub features: Option<FeatureVector<T>>,
}

/// All modalities' outputs for one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSample<T = f64> {
    pub video_id: String,
    pub segment_index: u64,
    pub start_s: f64,
    pub end_s: f64,
    pub modalities: BTreeMap<String, ModalityEntry<T>>,
    pub gold: Option<String>,
}

impl<T: Scalar> AlignedSample<T> {
    pub fn key(&self) -> SegmentKey {
        SegmentKey {
            video_id: self.video_id.clone(),
            segment_index: self.segment_index,
        }
    }

    /// Probability vectors keyed by modality.
    pub fn probs(&self) -> BTreeMap<String, ProbVector<T>> {
        self.modalities
            .iter()
            .map(|(m, e)| (m.clone(), e.probs.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment<T = f64> {
    pub samples: Vec<AlignedSample<T>>,
    pub dropped: usize,
    pub imputed: usize,
}

/// Joins records by `(video_id, segment_index)`.
///
/// `required` lists the modalities each sample must carry; when empty, every
/// modality present anywhere in `records` is required. Labels are checked
/// against `label_spaces` (a label must belong to at least one). Output is
/// ordered by key.
pub fn align<T: Scalar>(
    records: &[SegmentRecord<T>],
    labels: Option<&[LabelRecord]>,
    required: &[String],
    policy: MissingPolicy,
    label_spaces: &[&EmotionSpace],
) -> Result<Alignment<T>, IngestError> {
    let Some(first) = records.first() else {
        return Ok(Alignment {
            samples: Vec::new(),
            dropped: 0,
            imputed: 0,
        });
    };
    let space = first.probs.space().clone();
    if records.iter().any(|r| r.probs.space() != &space) {
        return Err(IngestError::MixedSpaces);
    }

    let mut gold: HashMap<(&str, u64), &str> = HashMap::new();
    if let Some(labels) = labels {
        for (i, l) in labels.iter().enumerate() {
            if !label_spaces.is_empty() && !label_spaces.iter().any(|s| s.contains(&l.label)) {
                return Err(IngestError::UnknownLabel {
                    line: i + 1,
                    label: l.label.clone(),
                });
            }
            if let LabelTarget::Segment(s) = l.target {
                gold.insert((l.video_id.as_str(), s), l.label.as_str());
            }
        }
    }

    let required: Vec<String> = if required.is_empty() {
        records
            .iter()
            .map(|r| r.modality.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    } else {
        required.to_vec()
    };

    let mut groups: BTreeMap<SegmentKey, Vec<&SegmentRecord<T>>> = BTreeMap::new();
    for r in records {
        groups.entry(r.key()).or_default().push(r);
    }

    let mut samples = Vec::with_capacity(groups.len());
    let (mut dropped, mut imputed) = (0, 0);
    for (key, group) in groups {
        let (start_s, end_s) = (group[0].start_s, group[0].end_s);
        if group
            .iter()
            .any(|r| (r.start_s - start_s).abs() > TIME_EPS || (r.end_s - end_s).abs() > TIME_EPS)
        {
            return Err(IngestError::InconsistentBounds {
                video_id: key.video_id,
                segment_index: key.segment_index,
            });
        }
        let mut modalities: BTreeMap<String, ModalityEntry<T>> = group
            .iter()
            .map(|r| {
                (
                    r.modality.clone(),
                    ModalityEntry {
                        probs: r.probs.clone(),
                        features: r.features.clone(),
                    },
                )
            })
            .collect();
        let missing: Vec<&String> = required.iter().filter(|m| !modalities.contains_key(*m)).collect();
        if !missing.is_empty() {
            match policy {
                MissingPolicy::Drop => {
                    dropped += 1;
                    continue;
                }
                MissingPolicy::UniformImpute => {
                    for m in missing {
                        modalities.insert(
                            m.clone(),
                            ModalityEntry {
                                probs: ProbVector::uniform(space.clone()),
                                features: None,
                            },
                        );
                    }
                    imputed += 1;
                }
            }
        }
        let gold = gold
            .get(&(key.video_id.as_str(), key.segment_index))
            .map(|s| s.to_string());
        samples.push(AlignedSample {
            video_id: key.video_id,
            segment_index: key.segment_index,
            start_s,
            end_s,
            modalities,
            gold,
        });
    }
    Ok(Alignment {
        samples,
        dropped,
        imputed,
    })
}
