//! Zero-shot label matching: cosine similarity between a query embedding
//! and per-label text embeddings, softmax-normalized.

use std::io::{self, BufRead};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compound::Temperature;
use crate::scalar::{cosine, softmax_tempered, Scalar};
use crate::space::{EmotionSpace, FeatureVector, ProbVector, SpaceError};

#[derive(Debug, Error)]
pub enum ZeroShotError {
    #[error("query embedding has zero norm")]
    ZeroQuery,
    #[error("embedding for {0:?} has zero norm")]
    ZeroEmbedding(String),
    #[error("embedding dimension {got} does not match {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("expected one embedding per label ({expected}), got {got}")]
    CountMismatch { expected: usize, got: usize },
    #[error("no embedding for label {0:?}")]
    MissingLabel(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One embedding per label of a space, all the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbeddingSet<T = f64> {
    space: EmotionSpace,
    embeddings: Vec<FeatureVector<T>>,
}

impl<T: Scalar> LabelEmbeddingSet<T> {
    /// `embeddings[i]` belongs to `space.label(i)`.
    pub fn new(space: EmotionSpace, embeddings: Vec<FeatureVector<T>>) -> Result<Self, ZeroShotError> {
        if embeddings.len() != space.len() {
            return Err(ZeroShotError::CountMismatch {
                expected: space.len(),
                got: embeddings.len(),
            });
        }
        let d = embeddings[0].dim();
        for (i, e) in embeddings.iter().enumerate() {
            if e.dim() != d {
                return Err(ZeroShotError::DimensionMismatch { expected: d, got: e.dim() });
            }
            if !(e.norm() > T::zero()) {
                return Err(ZeroShotError::ZeroEmbedding(space.label(i).to_string()));
            }
        }
        Ok(Self { space, embeddings })
    }

    pub fn space(&self) -> &EmotionSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.embeddings[0].dim()
    }

    pub fn embedding(&self, i: usize) -> &FeatureVector<T> {
        &self.embeddings[i]
    }

    /// Reads `{"label", "embedding"}` lines. With `space` given, embeddings
    /// are reordered to it; otherwise the file order defines the space.
    pub fn read<R: BufRead>(reader: R, space: Option<&EmotionSpace>) -> Result<Self, ZeroShotError> {
        let mut rows: Vec<(String, FeatureVector<T>)> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| ZeroShotError::Malformed { line: i + 1, reason };
            let parsed: EmbeddingLine = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
            let vals = parsed
                .embedding
                .iter()
                .map(|&v| T::from_f64(v).ok_or_else(|| malformed("unrepresentable value".into())))
                .collect::<Result<Vec<T>, _>>()?;
            let f = FeatureVector::new(vals).map_err(|e| malformed(e.to_string()))?;
            rows.push((parsed.label, f));
        }
        match space {
            None => {
                let space = EmotionSpace::new(rows.iter().map(|(l, _)| l.clone()))?;
                Self::new(space, rows.into_iter().map(|(_, f)| f).collect())
            }
            Some(space) => {
                if rows.len() != space.len() {
                    return Err(ZeroShotError::CountMismatch {
                        expected: space.len(),
                        got: rows.len(),
                    });
                }
                let embeddings = space
                    .labels()
                    .iter()
                    .map(|l| {
                        rows.iter()
                            .find(|(name, _)| name == l)
                            .map(|(_, f)| f.clone())
                            .ok_or_else(|| ZeroShotError::MissingLabel(l.clone()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Self::new(space.clone(), embeddings)
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbeddingLine {
    pub label: String,
    pub embedding: Vec<f64>,
}

/// Cosine similarity of `query` to each label embedding.
pub fn label_similarities<T: Scalar>(
    query: &FeatureVector<T>,
    labels: &LabelEmbeddingSet<T>,
) -> Result<Vec<T>, ZeroShotError> {
    if query.dim() != labels.dim() {
        return Err(ZeroShotError::DimensionMismatch {
            expected: labels.dim(),
            got: query.dim(),
        });
    }
    if !(query.norm() > T::zero()) {
        return Err(ZeroShotError::ZeroQuery);
    }
    Ok(labels
        .embeddings
        .iter()
        .map(|e| cosine(query.values(), e.values()))
        .collect())
}

/// Distribution over labels from temperature-scaled cosine similarities.
pub fn match_labels<T: Scalar>(
    query: &FeatureVector<T>,
    labels: &LabelEmbeddingSet<T>,
    temperature: Temperature<T>,
) -> Result<ProbVector<T>, ZeroShotError> {
    let sims = label_similarities(query, labels)?;
    Ok(ProbVector::from_internal(
        softmax_tempered(&sims, temperature.get()),
        labels.space.clone(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn self_match_wins() {
        let space = EmotionSpace::new(["A", "B", "C"]).unwrap();
        let set = LabelEmbeddingSet::new(
            space,
            vec![fv(&[1.0, 0.0, 0.0]), fv(&[0.0, 1.0, 0.0]), fv(&[1.0, 1.0, 0.0])],
        )
        .unwrap();
        let p = match_labels(&fv(&[0.0, 1.0, 0.0]), &set, Temperature::unit()).unwrap();
        assert_eq!(p.argmax_label(), "B");
    }

    #[test]
    fn orthogonal_query_is_uniform() {
        let space = EmotionSpace::default_basic();
        let embeddings = (0..8)
            .map(|i| {
                let mut v = vec![0.0; 9];
                v[i] = 1.0;
                fv(&v)
            })
            .collect();
        let set = LabelEmbeddingSet::new(space, embeddings).unwrap();
        let mut q = vec![0.0; 9];
        q[8] = 2.0;
        let p = match_labels(&fv(&q), &set, Temperature::unit()).unwrap();
        assert!(p.values().iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn two_label_analytic() {
        let space = EmotionSpace::new(["A", "B"]).unwrap();
        let set = LabelEmbeddingSet::new(space, vec![fv(&[1.0, 0.0]), fv(&[0.0, 1.0])]).unwrap();
        let p = match_labels(&fv(&[3.0, 0.0]), &set, Temperature::unit()).unwrap();
        let e = std::f64::consts::E;
        assert!((p.values()[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p.values()[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        let space = EmotionSpace::new(["A", "B"]).unwrap();
        let set = LabelEmbeddingSet::new(space.clone(), vec![fv(&[1.0, 0.0]), fv(&[0.0, 1.0])]).unwrap();
        assert!(matches!(
            match_labels(&fv(&[0.0, 0.0]), &set, Temperature::unit()),
            Err(ZeroShotError::ZeroQuery)
        ));
        assert!(matches!(
            match_labels(&fv(&[1.0]), &set, Temperature::unit()),
            Err(ZeroShotError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            LabelEmbeddingSet::new(space, vec![fv(&[1.0, 0.0]), fv(&[0.0, 0.0])]),
            Err(ZeroShotError::ZeroEmbedding(_))
        ));
    }

    #[test]
    fn reads_file_in_space_order() {
        let text = "{\"label\":\"B\",\"embedding\":[0,1]}\n{\"label\":\"A\",\"embedding\":[1,0]}\n";
        let space = EmotionSpace::new(["A", "B"]).unwrap();
        let set: LabelEmbeddingSet = LabelEmbeddingSet::read(text.as_bytes(), Some(&space)).unwrap();
        assert_eq!(set.embedding(0).values(), &[1.0, 0.0]);
        let own: LabelEmbeddingSet = LabelEmbeddingSet::read(text.as_bytes(), None).unwrap();
        assert_eq!(own.space().label(0), "B");
    }
}
