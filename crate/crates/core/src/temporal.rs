//! Segment-to-frame reconstruction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::space::{EmotionSpace, ProbVector};

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("no segments supplied")]
    EmptyInput,
    #[error("frame {0} is not covered by any segment")]
    UncoveredFrame(usize),
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
    #[error("duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("segments are over different label spaces")]
    SpaceMismatch,
}

/// A segment's time span and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedPrediction<T = f64> {
    pub start_s: f64,
    pub end_s: f64,
    pub probs: ProbVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameProb<T = f64> {
    pub index: usize,
    pub probs: ProbVector<T>,
    /// Number of segments averaged into this frame.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameTrack<T = f64> {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<FrameProb<T>>,
}

/// Number of frames with timestamp `i / fps < duration_s`.
pub fn frame_count(duration_s: f64, fps: f64) -> usize {
    let mut n = (duration_s * fps).ceil().max(0.0) as usize;
    while n > 0 && (n - 1) as f64 / fps >= duration_s {
        n -= 1;
    }
    while (n as f64) / fps < duration_s {
        n += 1;
    }
    n
}

/// Gives every frame the mean of the predictions of all segments covering
/// its timestamp (`start <= i / fps < end`).
pub fn broadcast_and_average<T: Scalar>(
    video_id: &str,
    segments: &[TimedPrediction<T>],
    fps: f64,
    duration_s: f64,
) -> Result<FrameTrack<T>, TemporalError> {
    let first = segments.first().ok_or(TemporalError::EmptyInput)?;
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(TemporalError::BadFps(fps));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(TemporalError::BadDuration(duration_s));
    }
    let space: &EmotionSpace = first.probs.space();
    if segments.iter().any(|s| s.probs.space() != space) {
        return Err(TemporalError::SpaceMismatch);
    }
    let n = frame_count(duration_s, fps);
    let c = space.len();
    // Running means, so identical contributions reproduce exactly.
    let mut means = vec![T::zero(); n * c];
    let mut counts = vec![0usize; n];

    for seg in segments {
        // First candidate frame, stepped back one to absorb rounding.
        let lo = ((seg.start_s * fps).floor().max(0.0) as usize).saturating_sub(1);
        for i in lo..n {
            let t = i as f64 / fps;
            if t >= seg.end_s {
                break;
            }
            if t < seg.start_s {
                continue;
            }
            counts[i] += 1;
            let k = T::from_usize(counts[i]).expect("count fits");
            for (m, &v) in means[i * c..(i + 1) * c].iter_mut().zip(seg.probs.values()) {
                *m = *m + (v - *m) / k;
            }
        }
    }

    let mut frames = Vec::with_capacity(n);
    for (i, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(TemporalError::UncoveredFrame(i));
        }
        frames.push(FrameProb {
            index: i,
            probs: ProbVector::from_internal(means[i * c..(i + 1) * c].to_vec(), space.clone()),
            count,
        });
    }
    Ok(FrameTrack {
        video_id: video_id.to_string(),
        fps,
        frames,
    })
}

/// Per-frame argmax labels.
pub fn frame_labels<T: Scalar>(track: &FrameTrack<T>) -> Vec<(usize, String)> {
    track
        .frames
        .iter()
        .map(|f| (f.index, f.probs.argmax_label().to_string()))
        .collect()
}

/// Serialized frame output line.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrameLine {
    pub video_id: String,
    pub frame: u64,
    pub label: String,
    pub probs: Vec<f64>,
}

impl<T: Scalar> FrameTrack<T> {
    pub fn to_lines(&self) -> Vec<FrameLine> {
        self.frames
            .iter()
            .map(|f| FrameLine {
                video_id: self.video_id.clone(),
                frame: f.index as u64,
                label: f.probs.argmax_label().to_string(),
                probs: f.probs.values().iter().map(|v| v.to_f64_lossy()).collect(),
            })
            .collect()
    }
}
