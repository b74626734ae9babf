//! Late fusion of per-modality emotion probability streams.
//!
//! The crate consumes segment-level outputs of upstream emotion models over a
//! line-delimited interchange format and provides:
//!
//! - [`mhpf`]: multi-head probability fusion with learnable convex weights,
//! - [`compound`]: basic-to-compound mapping by pair-wise probability
//!   aggregation and by prototype similarity,
//! - [`temporal`]: segment-to-frame reconstruction,
//! - [`zeroshot`]: cosine label matching over precomputed embeddings,
//! - [`metrics`]: macro-F1, UAR and their mean,
//! - [`synth`]: a seeded generator of synthetic multimodal streams.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the common choices.

pub mod compound;
pub mod ingest;
pub mod metrics;
pub mod mhpf;
pub mod scalar;
pub mod space;
pub mod synth;
pub mod temporal;
pub mod zeroshot;

pub use compound::{build_prototypes, pfsa, ppa, ppa_scores, PrototypeBank, PrototypeSample, Temperature};
pub use ingest::{
    align, parse_stream, segment_grid, AlignedSample, GridSpec, LabelRecord, MissingPolicy, SegmentRecord,
};
pub use metrics::{confusion, evaluate, ConfusionMatrix, EvalReport};
pub use mhpf::{train, FusionExample, MhpfModel, TrainConfig};
pub use scalar::Scalar;
pub use space::{normalize, CompoundScheme, EmotionSpace, FeatureVector, ProbVector, SpaceConfig};
pub use temporal::{broadcast_and_average, frame_labels, FrameTrack, TimedPrediction};
pub use zeroshot::{match_labels, LabelEmbeddingSet};

pub type ProbVectorF64 = ProbVector<f64>;
pub type ProbVectorF32 = ProbVector<f32>;
pub type FeatureVectorF64 = FeatureVector<f64>;
pub type FeatureVectorF32 = FeatureVector<f32>;
pub type MhpfModelF64 = MhpfModel<f64>;
pub type MhpfModelF32 = MhpfModel<f32>;
pub type PrototypeBankF64 = PrototypeBank<f64>;
pub type PrototypeBankF32 = PrototypeBank<f32>;
pub type LabelEmbeddingSetF64 = LabelEmbeddingSet<f64>;
pub type LabelEmbeddingSetF32 = LabelEmbeddingSet<f32>;
pub type FrameTrackF64 = FrameTrack<f64>;
pub type FrameTrackF32 = FrameTrack<f32>;
