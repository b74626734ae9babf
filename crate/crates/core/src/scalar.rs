//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real scalar the fusion math can run on (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Simplex tolerance applied to externally supplied vectors.
    ///
    /// `1e-6` for `f64`; widened for narrower types so that rounding of a
    /// few dozen terms never trips it.
    #[inline]
    fn ingest_tolerance() -> Self {
        Self::lit(1e-6).max(Self::epsilon() * Self::lit(64.0))
    }

    /// Simplex tolerance for vectors produced by the crate itself.
    #[inline]
    fn internal_tolerance() -> Self {
        Self::lit(1e-9).max(Self::epsilon() * Self::lit(64.0))
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
}

/// Numerically stable softmax of `scores / temperature`.
///
/// Returns an empty vector for empty input.
pub fn softmax_tempered<T: Scalar>(scores: &[T], temperature: T) -> Vec<T> {
    let Some(max) = scores.iter().copied().reduce(T::max) else {
        return Vec::new();
    };
    let exps: Vec<T> = scores
        .iter()
        .map(|&s| ((s - max) / temperature).exp())
        .collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Plain softmax.
pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    softmax_tempered(scores, T::one())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn l2_norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Cosine similarity clamped to `[-1, 1]`. Caller guarantees non-zero norms.
pub(crate) fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let c = dot(a, b) / (l2_norm(a) * l2_norm(b));
    c.max(-T::one()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_constants_is_uniform() {
        let p = softmax(&[3.0_f64, 3.0, 3.0, 3.0]);
        for v in p {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_large_scores() {
        let p = softmax_tempered(&[1000.0_f64, 0.0], 0.01);
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax(&[0.1, 0.9, 0.9]), Some(1));
        assert_eq!(argmax::<f64>(&[]), None);
    }

    #[test]
    fn tolerances_scale_with_precision() {
        assert_eq!(f64::ingest_tolerance(), 1e-6);
        assert_eq!(f64::internal_tolerance(), 1e-9);
        assert!(f32::ingest_tolerance() > 1e-6);
    }
}
