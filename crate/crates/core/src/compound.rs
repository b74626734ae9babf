//! Mapping basic-emotion outputs onto compound categories.
//!
//! Two routes are provided. Pair-wise probability aggregation adds the
//! probabilities of each compound's two basic emotions. Pair-wise feature
//! similarity aggregation compares a latent feature with unit-norm compound
//! prototypes and turns the cosine similarities into a distribution with a
//! temperature-scaled softmax.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{cosine, softmax_tempered, Scalar};
use crate::space::{normalize, CompoundScheme, EmotionSpace, FeatureVector, ProbVector, SpaceError};

pub const BANK_FORMAT: &str = "cerfuse-prototypes";
pub const BANK_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CompoundError {
    #[error("input distribution is not over the scheme's basic space")]
    SpaceMismatch,
    #[error("every basic label referenced by the scheme has zero probability")]
    AllZero,
    #[error("no correctly classified sample for basic label {0:?}")]
    MissingClass(String),
    #[error("prototype for compound {0:?} has zero norm")]
    ZeroNorm(String),
    #[error("feature vector has zero norm")]
    ZeroFeature,
    #[error("feature dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label index {0} outside the basic space")]
    BadLabel(usize),
    #[error("temperature must be positive and finite, got {0}")]
    BadTemperature(f64),
    #[error("prototype file version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },
    #[error("corrupt prototype file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Softmax temperature, always positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature<T = f64>(T);

impl<T: Scalar> Temperature<T> {
    pub fn new(t: T) -> Result<Self, CompoundError> {
        if t > T::zero() && t.is_finite() {
            Ok(Self(t))
        } else {
            Err(CompoundError::BadTemperature(t.to_f64_lossy()))
        }
    }

    pub fn get(self) -> T {
        self.0
    }

    /// Compound-prototype default, 0.5.
    pub fn prototype_default() -> Self {
        Self(T::lit(0.5))
    }

    /// Plain softmax, 1.0.
    pub fn unit() -> Self {
        Self(T::one())
    }
}

/// Raw pair sums `p[a_k] + p[b_k]`, one per compound.
pub fn ppa_scores<T: Scalar>(p: &ProbVector<T>, scheme: &CompoundScheme) -> Result<Vec<T>, CompoundError> {
    if p.space() != scheme.source() {
        return Err(CompoundError::SpaceMismatch);
    }
    let v = p.values();
    Ok(scheme.pairs().iter().map(|&(a, b)| v[a] + v[b]).collect())
}

/// Compound distribution from pair-summed basic probabilities.
pub fn ppa<T: Scalar>(p: &ProbVector<T>, scheme: &CompoundScheme) -> Result<ProbVector<T>, CompoundError> {
    let raw = ppa_scores(p, scheme)?;
    normalize(&raw, scheme.compound_space().clone()).map_err(|e| match e {
        SpaceError::AllZero => CompoundError::AllZero,
        other => other.into(),
    })
}

/// One validation sample used to build prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSample<T = f64> {
    pub features: FeatureVector<T>,
    /// Basic-space index.
    pub gold: usize,
    /// Basic-space index.
    pub predicted: usize,
}

/// Basic-emotion mean features and unit-norm compound prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank<T = f64> {
    scheme: CompoundScheme,
    dim: usize,
    /// Indexed by basic label; `None` when no sample was classified correctly.
    basic: Vec<Option<FeatureVector<T>>>,
    counts: Vec<usize>,
    compound: Vec<FeatureVector<T>>,
}

/// Builds prototypes from correctly classified samples only.
///
/// Each class's features are averaged in a canonical (sorted) order so the
/// bank does not depend on sample order. The running mean reproduces
/// identical features exactly.
pub fn build_prototypes<T: Scalar>(
    samples: &[PrototypeSample<T>],
    scheme: &CompoundScheme,
) -> Result<PrototypeBank<T>, CompoundError> {
    let c = scheme.source().len();
    let mut per_class: Vec<Vec<&[T]>> = vec![Vec::new(); c];
    let mut dim = None;
    for s in samples {
        if s.gold >= c {
            return Err(CompoundError::BadLabel(s.gold));
        }
        if s.predicted >= c {
            return Err(CompoundError::BadLabel(s.predicted));
        }
        match dim {
            None => dim = Some(s.features.dim()),
            Some(d) if d != s.features.dim() => {
                return Err(CompoundError::DimensionMismatch {
                    expected: d,
                    got: s.features.dim(),
                })
            }
            Some(_) => {}
        }
        if s.gold == s.predicted {
            per_class[s.gold].push(s.features.values());
        }
    }

    let mut basic = Vec::with_capacity(c);
    let mut counts = Vec::with_capacity(c);
    for rows in per_class.iter_mut() {
        counts.push(rows.len());
        if rows.is_empty() {
            basic.push(None);
            continue;
        }
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut mean = rows[0].to_vec();
        for (i, r) in rows.iter().enumerate().skip(1) {
            let k = T::from_usize(i + 1).expect("count fits");
            for (m, &x) in mean.iter_mut().zip(r.iter()) {
                *m = *m + (x - *m) / k;
            }
        }
        basic.push(Some(FeatureVector::new(mean)?));
    }

    for idx in scheme.referenced_basics() {
        if basic[idx].is_none() {
            return Err(CompoundError::MissingClass(scheme.source().label(idx).to_string()));
        }
    }
    let dim = dim.expect("referenced classes have samples");

    let half = T::lit(0.5);
    let mut compound = Vec::with_capacity(scheme.len());
    for (k, &(a, b)) in scheme.pairs().iter().enumerate() {
        let (pa, pb) = (
            basic[a].as_ref().expect("checked").values(),
            basic[b].as_ref().expect("checked").values(),
        );
        let mean: Vec<T> = pa.iter().zip(pb).map(|(&x, &y)| (x + y) * half).collect();
        let norm = crate::scalar::l2_norm(&mean);
        if !(norm > T::zero()) {
            return Err(CompoundError::ZeroNorm(scheme.compound_space().label(k).to_string()));
        }
        compound.push(FeatureVector::new(mean.into_iter().map(|v| v / norm).collect())?);
    }

    Ok(PrototypeBank {
        scheme: scheme.clone(),
        dim,
        basic,
        counts,
        compound,
    })
}

impl<T: Scalar> PrototypeBank<T> {
    pub fn scheme(&self) -> &CompoundScheme {
        &self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean feature of a basic label, if it had any correct samples.
    pub fn basic_prototype(&self, basic_index: usize) -> Option<&FeatureVector<T>> {
        self.basic.get(basic_index).and_then(Option::as_ref)
    }

    pub fn count(&self, basic_index: usize) -> usize {
        self.counts[basic_index]
    }

    pub fn compound_prototype(&self, k: usize) -> &FeatureVector<T> {
        &self.compound[k]
    }

    pub fn compound_prototypes(&self) -> &[FeatureVector<T>] {
        &self.compound
    }

    /// Cosine similarity of `f` to every compound prototype.
    pub fn similarities(&self, f: &FeatureVector<T>) -> Result<Vec<T>, CompoundError> {
        if f.dim() != self.dim {
            return Err(CompoundError::DimensionMismatch {
                expected: self.dim,
                got: f.dim(),
            });
        }
        if !(f.norm() > T::zero()) {
            return Err(CompoundError::ZeroFeature);
        }
        Ok(self
            .compound
            .iter()
            .map(|p| cosine(f.values(), p.values()))
            .collect())
    }
}

/// Compound distribution from prototype similarity.
pub fn pfsa<T: Scalar>(
    f: &FeatureVector<T>,
    bank: &PrototypeBank<T>,
    temperature: Temperature<T>,
) -> Result<ProbVector<T>, CompoundError> {
    let sims = bank.similarities(f)?;
    Ok(ProbVector::from_internal(
        softmax_tempered(&sims, temperature.get()),
        bank.scheme.compound_space().clone(),
    ))
}

#[derive(Serialize, Deserialize)]
struct BankFile {
    format: String,
    version: u32,
    dim: usize,
    basic_labels: Vec<String>,
    compounds: Vec<crate::space::CompoundEntry>,
    counts: Vec<usize>,
    basic_prototypes: Vec<Option<Vec<f64>>>,
    compound_prototypes: Vec<Vec<f64>>,
}

impl<T: Scalar> PrototypeBank<T> {
    pub fn to_json(&self) -> String {
        let src = self.scheme.source();
        let to64 = |f: &FeatureVector<T>| f.values().iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>();
        let file = BankFile {
            format: BANK_FORMAT.into(),
            version: BANK_VERSION,
            dim: self.dim,
            basic_labels: src.labels().to_vec(),
            compounds: self
                .scheme
                .pairs()
                .iter()
                .enumerate()
                .map(|(k, &(a, b))| crate::space::CompoundEntry {
                    name: self.scheme.compound_space().label(k).to_string(),
                    pair: [src.label(a).to_string(), src.label(b).to_string()],
                })
                .collect(),
            counts: self.counts.clone(),
            basic_prototypes: self.basic.iter().map(|b| b.as_ref().map(to64)).collect(),
            compound_prototypes: self.compound.iter().map(to64).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("bank serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CompoundError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CompoundError::Corrupt(e.to_string()))?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or("<none>");
        let version = value.get("version").and_then(|v| v.as_u64());
        if format != BANK_FORMAT || version != Some(BANK_VERSION as u64) {
            return Err(CompoundError::VersionMismatch {
                expected: format!("{BANK_FORMAT} v{BANK_VERSION}"),
                found: format!("{format} v{}", version.map_or("<none>".into(), |v| v.to_string())),
            });
        }
        let file: BankFile = serde_json::from_value(value).map_err(|e| CompoundError::Corrupt(e.to_string()))?;
        let corrupt = |m: &str| CompoundError::Corrupt(m.to_string());
        let source = EmotionSpace::new(file.basic_labels).map_err(|e| CompoundError::Corrupt(e.to_string()))?;
        let entries: Vec<(&str, [&str; 2])> = file
            .compounds
            .iter()
            .map(|c| (c.name.as_str(), [c.pair[0].as_str(), c.pair[1].as_str()]))
            .collect();
        let scheme = CompoundScheme::new(source, &entries).map_err(|e| CompoundError::Corrupt(e.to_string()))?;
        let c = scheme.source().len();
        if file.counts.len() != c || file.basic_prototypes.len() != c || file.compound_prototypes.len() != scheme.len() {
            return Err(corrupt("array lengths disagree with the scheme"));
        }
        let to_t = |v: &[f64]| -> Result<FeatureVector<T>, CompoundError> {
            if v.len() != file.dim {
                return Err(corrupt("prototype dimension mismatch"));
            }
            let vals = v
                .iter()
                .map(|&x| T::from_f64(x).ok_or_else(|| corrupt("unrepresentable value")))
                .collect::<Result<Vec<T>, _>>()?;
            FeatureVector::new(vals).map_err(|e| CompoundError::Corrupt(e.to_string()))
        };
        let mut basic = Vec::with_capacity(c);
        for (b, &n) in file.basic_prototypes.iter().zip(&file.counts) {
            match (b, n) {
                (None, 0) => basic.push(None),
                (Some(v), n) if n > 0 => basic.push(Some(to_t(v)?)),
                _ => return Err(corrupt("prototype presence disagrees with counts")),
            }
        }
        for idx in scheme.referenced_basics() {
            if basic[idx].is_none() {
                return Err(corrupt("referenced basic label lacks a prototype"));
            }
        }
        let compound = file
            .compound_prototypes
            .iter()
            .map(|v| to_t(v))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            scheme,
            dim: file.dim,
            basic,
            counts: file.counts,
            compound,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CompoundError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CompoundError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
