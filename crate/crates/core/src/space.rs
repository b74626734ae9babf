//! Label vocabularies, probability vectors and feature vectors.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{self, Scalar};

/// Canonical eight-class basic space.
pub const DEFAULT_BASIC_LABELS: [&str; 8] = [
    "Neutral",
    "Anger",
    "Disgust",
    "Fear",
    "Happiness",
    "Sadness",
    "Surprise",
    "Other",
];

/// The seven compound categories of the C-EXPR-DB corpus, as
/// (name, basic pair).
pub const DEFAULT_COMPOUNDS: [(&str, [&str; 2]); 7] = [
    ("Fearfully Surprised", ["Fear", "Surprise"]),
    ("Happily Surprised", ["Happiness", "Surprise"]),
    ("Sadly Surprised", ["Sadness", "Surprise"]),
    ("Disgustedly Surprised", ["Disgust", "Surprise"]),
    ("Angrily Surprised", ["Anger", "Surprise"]),
    ("Sadly Fearful", ["Sadness", "Fear"]),
    ("Sadly Angry", ["Sadness", "Anger"]),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("a label space needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("empty label name at position {0}")]
    EmptyLabel(usize),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("compound {compound:?} references unknown basic label {label:?}")]
    UnknownPairLabel { compound: String, label: String },
    #[error("compound {0:?} pairs a label with itself")]
    DegeneratePair(String),
    #[error("compounds {0:?} and {1:?} share the same basic pair")]
    DuplicatePair(String, String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("entry {0} is negative")]
    NegativeEntry(usize),
    #[error("entry {0} is not finite")]
    NonFinite(usize),
    #[error("all entries are zero")]
    AllZero,
    #[error("values sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("label {0:?} has no counterpart in the target space")]
    UnmappableLabel(String),
    #[error("feature vector is empty")]
    EmptyFeature,
    #[error("probability vectors live in different label spaces")]
    SpaceMismatch,
}

/// An ordered, fixed vocabulary of class names.
///
/// Cloning is cheap; equality compares the label lists.
#[derive(Clone)]
pub struct EmotionSpace {
    labels: Arc<[String]>,
}

impl EmotionSpace {
    pub fn new<I, S>(labels: I) -> Result<Self, SpaceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(SpaceError::TooFewLabels(labels.len()));
        }
        let mut seen = HashSet::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(SpaceError::EmptyLabel(i));
            }
            if !seen.insert(l.as_str()) {
                return Err(SpaceError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self {
            labels: labels.into(),
        })
    }

    /// Neutral, the six basic emotions, and Other.
    pub fn default_basic() -> Self {
        Self::new(DEFAULT_BASIC_LABELS).expect("default labels are valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }
}

impl PartialEq for EmotionSpace {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.labels, &other.labels) || self.labels == other.labels
    }
}

impl Eq for EmotionSpace {}

impl fmt::Debug for EmotionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.labels.iter()).finish()
    }
}

/// Compound categories, each defined by an unordered pair of basic labels.
#[derive(Clone, Debug, PartialEq)]
pub struct CompoundScheme {
    source: EmotionSpace,
    target: EmotionSpace,
    pairs: Vec<(usize, usize)>,
}

impl CompoundScheme {
    pub fn new<S: AsRef<str>>(
        source: EmotionSpace,
        compounds: &[(S, [S; 2])],
    ) -> Result<Self, SpaceError> {
        let target = EmotionSpace::new(compounds.iter().map(|(n, _)| n.as_ref().to_string()))?;
        let mut pairs = Vec::with_capacity(compounds.len());
        let mut seen: Vec<((usize, usize), &str)> = Vec::new();
        for (name, [a, b]) in compounds {
            let name = name.as_ref();
            let lookup = |l: &S| {
                source
                    .index_of(l.as_ref())
                    .ok_or_else(|| SpaceError::UnknownPairLabel {
                        compound: name.to_string(),
                        label: l.as_ref().to_string(),
                    })
            };
            let (ia, ib) = (lookup(a)?, lookup(b)?);
            if ia == ib {
                return Err(SpaceError::DegeneratePair(name.to_string()));
            }
            let key = (ia.min(ib), ia.max(ib));
            if let Some((_, other)) = seen.iter().find(|(k, _)| *k == key) {
                return Err(SpaceError::DuplicatePair(other.to_string(), name.to_string()));
            }
            seen.push((key, name));
            pairs.push((ia, ib));
        }
        Ok(Self {
            source,
            target,
            pairs,
        })
    }

    /// The seven-compound scheme over the default basic space.
    pub fn default_seven() -> Self {
        Self::new(EmotionSpace::default_basic(), &DEFAULT_COMPOUNDS).expect("default scheme is valid")
    }

    /// Basic space the pairs refer to.
    pub fn source(&self) -> &EmotionSpace {
        &self.source
    }

    /// Space whose labels are the compound names, in scheme order.
    pub fn compound_space(&self) -> &EmotionSpace {
        &self.target
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Basic-space indices of compound `k`'s pair, in declaration order.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Basic indices referenced by at least one pair, ascending.
    pub fn referenced_basics(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// On-disk form of a space/scheme configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub basic: Vec<String>,
    #[serde(default)]
    pub compounds: Vec<CompoundEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompoundEntry {
    pub name: String,
    pub pair: [String; 2],
}

impl SpaceConfig {
    pub fn builtin() -> Self {
        Self {
            basic: DEFAULT_BASIC_LABELS.iter().map(|s| s.to_string()).collect(),
            compounds: DEFAULT_COMPOUNDS
                .iter()
                .map(|(n, [a, b])| CompoundEntry {
                    name: n.to_string(),
                    pair: [a.to_string(), b.to_string()],
                })
                .collect(),
        }
    }

    pub fn basic_space(&self) -> Result<EmotionSpace, SpaceError> {
        EmotionSpace::new(self.basic.iter().cloned())
    }

    /// `None` when the configuration lists no compounds.
    pub fn scheme(&self) -> Result<Option<CompoundScheme>, SpaceError> {
        if self.compounds.is_empty() {
            return Ok(None);
        }
        let entries: Vec<(&str, [&str; 2])> = self
            .compounds
            .iter()
            .map(|c| (c.name.as_str(), [c.pair[0].as_str(), c.pair[1].as_str()]))
            .collect();
        CompoundScheme::new(self.basic_space()?, &entries).map(Some)
    }
}

/// A point on the probability simplex over a label space.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector<T = f64> {
    values: Vec<T>,
    space: EmotionSpace,
}

fn check_entries<T: Scalar>(values: &[T]) -> Result<(), SpaceError> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(SpaceError::NonFinite(i));
        }
        if v < T::zero() {
            return Err(SpaceError::NegativeEntry(i));
        }
    }
    Ok(())
}

impl<T: Scalar> ProbVector<T> {
    /// Validates externally supplied probabilities (ingestion tolerance).
    pub fn new(values: Vec<T>, space: EmotionSpace) -> Result<Self, SpaceError> {
        if values.len() != space.len() {
            return Err(SpaceError::LengthMismatch {
                expected: space.len(),
                got: values.len(),
            });
        }
        check_entries(&values)?;
        let sum: T = values.iter().copied().sum();
        if (sum - T::one()).abs() > T::ingest_tolerance() {
            return Err(SpaceError::NotNormalized(sum.to_f64_lossy()));
        }
        Ok(Self { values, space })
    }

    /// Wraps a vector the crate has produced itself and knows to be on the simplex.
    pub(crate) fn from_internal(values: Vec<T>, space: EmotionSpace) -> Self {
        debug_assert_eq!(values.len(), space.len());
        debug_assert!(
            (values.iter().copied().sum::<T>() - T::one()).abs() <= T::internal_tolerance() * T::lit(10.0),
            "internal vector off the simplex"
        );
        Self { values, space }
    }

    pub fn uniform(space: EmotionSpace) -> Self {
        let c = T::from_usize(space.len()).expect("class count fits");
        Self {
            values: vec![T::one() / c; space.len()],
            space,
        }
    }

    pub fn one_hot(index: usize, space: EmotionSpace) -> Self {
        let mut values = vec![T::zero(); space.len()];
        values[index] = T::one();
        Self { values, space }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn space(&self) -> &EmotionSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<T> {
        self.space.index_of(label).map(|i| self.values[i])
    }

    pub fn argmax_index(&self) -> usize {
        scalar::argmax(&self.values).expect("probability vectors are non-empty")
    }

    /// Label of the largest entry, ties to the lowest canonical index.
    pub fn argmax_label(&self) -> &str {
        self.space.label(self.argmax_index())
    }

    /// Copies entries into `target` by label name, zero-filling labels the
    /// source does not have.
    pub fn align_to_space(&self, target: &EmotionSpace) -> Result<ProbVector<T>, SpaceError> {
        if &self.space == target {
            return Ok(self.clone());
        }
        let mut out = vec![T::zero(); target.len()];
        for (label, &v) in self.space.labels().iter().zip(&self.values) {
            let j = target
                .index_of(label)
                .ok_or_else(|| SpaceError::UnmappableLabel(label.clone()))?;
            out[j] = v;
        }
        normalize(&out, target.clone())
    }
}

/// Scales non-negative scores onto the simplex.
pub fn normalize<T: Scalar>(raw: &[T], space: EmotionSpace) -> Result<ProbVector<T>, SpaceError> {
    if raw.len() != space.len() {
        return Err(SpaceError::LengthMismatch {
            expected: space.len(),
            got: raw.len(),
        });
    }
    check_entries(raw)?;
    let sum: T = raw.iter().copied().sum();
    if sum <= T::zero() {
        return Err(SpaceError::AllZero);
    }
    if !sum.is_finite() {
        return Err(SpaceError::NonFinite(0));
    }
    Ok(ProbVector {
        values: raw.iter().map(|&v| v / sum).collect(),
        space,
    })
}

/// A finite real embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<T = f64> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self, SpaceError> {
        if values.is_empty() {
            return Err(SpaceError::EmptyFeature);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SpaceError::NonFinite(i));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn norm(&self) -> T {
        scalar::l2_norm(&self.values)
    }

    pub fn scaled(&self, k: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * k).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> EmotionSpace {
        EmotionSpace::new(["A", "B"]).unwrap()
    }

    fn abc() -> EmotionSpace {
        EmotionSpace::new(["A", "B", "C"]).unwrap()
    }

    #[test]
    fn space_rejects_bad_vocabularies() {
        assert_eq!(EmotionSpace::new(["A"]).unwrap_err(), SpaceError::TooFewLabels(1));
        assert_eq!(EmotionSpace::new(["A", ""]).unwrap_err(), SpaceError::EmptyLabel(1));
        assert!(matches!(
            EmotionSpace::new(["A", "B", "A"]).unwrap_err(),
            SpaceError::DuplicateLabel(_)
        ));
    }

    #[test]
    fn scheme_validation() {
        let s = abc();
        assert!(matches!(
            CompoundScheme::new(s.clone(), &[("X", ["A", "D"]), ("Y", ["A", "B"])]),
            Err(SpaceError::UnknownPairLabel { .. })
        ));
        assert!(matches!(
            CompoundScheme::new(s.clone(), &[("X", ["A", "A"]), ("Y", ["A", "B"])]),
            Err(SpaceError::DegeneratePair(_))
        ));
        assert!(matches!(
            CompoundScheme::new(s.clone(), &[("X", ["A", "B"]), ("Y", ["B", "A"])]),
            Err(SpaceError::DuplicatePair(..))
        ));
        assert!(matches!(
            CompoundScheme::new(s, &[("X", ["A", "B"]), ("X", ["B", "C"])]),
            Err(SpaceError::DuplicateLabel(_))
        ));
    }

    #[test]
    fn default_scheme_shape() {
        let s = CompoundScheme::default_seven();
        assert_eq!(s.len(), 7);
        assert_eq!(s.compound_space().label(1), "Happily Surprised");
        // Neutral (0) and Other (7) are never referenced.
        assert_eq!(s.referenced_basics(), vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn normalize_examples() {
        let p = normalize(&[2.0, 2.0], ab()).unwrap();
        assert_eq!(p.values(), &[0.5, 0.5]);
        let p = normalize(&[1.0, 0.0, 0.0], abc()).unwrap();
        assert_eq!(p.values(), &[1.0, 0.0, 0.0]);
        let p = normalize(&[0.3, 0.3, 0.9], abc()).unwrap();
        for (got, want) in p.values().iter().zip([0.2_f64, 0.2, 0.6]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_errors() {
        assert_eq!(normalize(&[0.0, 0.0], ab()).unwrap_err(), SpaceError::AllZero);
        assert_eq!(normalize(&[1.0, -0.5], ab()).unwrap_err(), SpaceError::NegativeEntry(1));
        assert_eq!(normalize(&[f64::NAN, 1.0], ab()).unwrap_err(), SpaceError::NonFinite(0));
        assert_eq!(normalize(&[f64::INFINITY, 1.0], ab()).unwrap_err(), SpaceError::NonFinite(0));
    }

    #[test]
    fn ingestion_tolerance() {
        assert!(ProbVector::new(vec![0.5, 0.5 + 5e-7], ab()).is_ok());
        assert!(matches!(
            ProbVector::new(vec![0.4, 0.4], ab()),
            Err(SpaceError::NotNormalized(_))
        ));
        assert!(matches!(
            ProbVector::new(vec![1.0], ab()),
            Err(SpaceError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(ProbVector::new(vec![0.1, 0.9], ab()).unwrap().argmax_label(), "B");
        assert_eq!(ProbVector::new(vec![0.5, 0.5], ab()).unwrap().argmax_label(), "A");
        assert_eq!(
            ProbVector::new(vec![0.2, 0.2, 0.6], abc()).unwrap().argmax_label(),
            "C"
        );
    }

    #[test]
    fn align_zero_extends() {
        let p = ProbVector::new(vec![0.4, 0.6], ab()).unwrap();
        let q = p.align_to_space(&abc()).unwrap();
        assert_eq!(q.values(), &[0.4, 0.6, 0.0]);
        assert_eq!(p.align_to_space(&ab()).unwrap(), p);
    }

    #[test]
    fn align_adds_other_placeholder() {
        let seven = EmotionSpace::new(DEFAULT_BASIC_LABELS[..7].iter().copied()).unwrap();
        let vals: Vec<f64> = vec![0.1, 0.2, 0.1, 0.1, 0.3, 0.1, 0.1];
        let p = ProbVector::new(vals.clone(), seven).unwrap();
        let q = p.align_to_space(&EmotionSpace::default_basic()).unwrap();
        assert_eq!(q.get("Other"), Some(0.0));
        for (a, b) in q.values()[..7].iter().zip(&vals) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn align_by_name_not_position() {
        let p = ProbVector::new(vec![0.4, 0.6], ab()).unwrap();
        let target = EmotionSpace::new(["C", "B", "A"]).unwrap();
        let q = p.align_to_space(&target).unwrap();
        assert_eq!(q.values(), &[0.0, 0.6, 0.4]);
    }

    #[test]
    fn align_unmappable() {
        let p = ProbVector::new(vec![0.4, 0.6], ab()).unwrap();
        let target = EmotionSpace::new(["A", "C"]).unwrap();
        assert_eq!(
            p.align_to_space(&target).unwrap_err(),
            SpaceError::UnmappableLabel("B".into())
        );
    }

    #[test]
    fn feature_vector_rejects_nonfinite() {
        assert_eq!(FeatureVector::<f64>::new(vec![]).unwrap_err(), SpaceError::EmptyFeature);
        assert_eq!(
            FeatureVector::new(vec![1.0, f64::NAN]).unwrap_err(),
            SpaceError::NonFinite(1)
        );
    }

    #[test]
    fn f32_vectors() {
        let p = normalize(&[0.3_f32, 0.3, 0.9], abc()).unwrap();
        assert_eq!(p.argmax_label(), "C");
    }

    #[test]
    fn config_round_trip() {
        let cfg = SpaceConfig::builtin();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: SpaceConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.scheme().unwrap().unwrap(), CompoundScheme::default_seven());
    }
}
