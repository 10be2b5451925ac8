use serde::{Deserialize, Serialize};

use super::matrix::{dot, norm2, Matrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Epsilon floor on the mean square (RMS norm) or variance (layer norm).
pub const NORM_EPS: f64 = 1e-6;

/// Row-wise softmax. With `causal` set, entries above the diagonal are
/// excluded from the normalization and come out exactly zero.
pub fn row_softmax<T: Scalar>(logits: &Matrix<T>, causal: bool) -> Result<Matrix<T>> {
    logits.ensure_finite("softmax logits")?;
    if causal && logits.rows() != logits.cols() {
        return Err(Error::InvalidInput(format!(
            "causal mask needs a square matrix, got {}x{}",
            logits.rows(),
            logits.cols()
        )));
    }
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        let width = if causal { i + 1 } else { logits.cols() };
        softmax_prefix(&logits.row(i)[..width], &mut out.row_mut(i)[..width]);
    }
    Ok(out)
}

#[inline]
pub(crate) fn softmax_prefix<T: Scalar>(x: &[T], out: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Rms,
    /// Mean-centred layer norm without bias.
    Layer,
}

/// RMS normalization with a per-channel gain.
///
/// The mean square is floored at [`NORM_EPS`], so an all-zero row maps to
/// zeros and any row with mean square above the floor has unit RMS before
/// the gain is applied.
pub fn rms_norm<T: Scalar>(x: &Matrix<T>, gain: &[T]) -> Result<Matrix<T>> {
    normalize(x, gain, NormKind::Rms)
}

pub fn layer_norm<T: Scalar>(x: &Matrix<T>, gain: &[T]) -> Result<Matrix<T>> {
    normalize(x, gain, NormKind::Layer)
}

pub fn normalize<T: Scalar>(x: &Matrix<T>, gain: &[T], kind: NormKind) -> Result<Matrix<T>> {
    if gain.len() != x.cols() {
        return Err(Error::shape(
            format!("gain of length {}", x.cols()),
            format!("length {}", gain.len()),
        ));
    }
    let mut out = x.clone();
    let eps = T::lit(NORM_EPS);
    let n = T::from_count(x.cols().max(1));
    for i in 0..x.rows() {
        let row = out.row_mut(i);
        let mean = match kind {
            NormKind::Rms => T::zero(),
            NormKind::Layer => row.iter().copied().sum::<T>() / n,
        };
        let ms = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / ms.max(eps).sqrt();
        for (v, &g) in row.iter_mut().zip(gain) {
            *v = (*v - mean) * inv * g;
        }
    }
    Ok(out)
}

pub fn frobenius_distance<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    a.check_same_shape(b)?;
    Ok(a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt())
}

/// Cosine similarity with its degeneracy flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine<T> {
    pub value: T,
    /// Set when either input had zero norm; `value` is then 0.
    pub zero_vector: bool,
}

pub fn cosine_similarity<T: Scalar>(a: &[T], b: &[T]) -> Result<Cosine<T>> {
    if a.len() != b.len() {
        return Err(Error::shape(
            format!("length {}", a.len()),
            format!("length {}", b.len()),
        ));
    }
    let (na, nb) = (norm2(a), norm2(b));
    if na == T::zero() || nb == T::zero() {
        return Ok(Cosine {
            value: T::zero(),
            zero_vector: true,
        });
    }
    let c = dot(a, b) / (na * nb);
    Ok(Cosine {
        value: c.max(-T::one()).min(T::one()),
        zero_vector: false,
    })
}

/// Mean over rows of the row-wise cosine similarity of two equally shaped
/// matrices (per-token cosine between residual streams).
pub fn mean_row_cosine<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    a.check_same_shape(b)?;
    if a.rows() == 0 {
        return Err(Error::Empty("matrix with no rows"));
    }
    let mut acc = T::zero();
    for i in 0..a.rows() {
        acc += cosine_similarity(a.row(i), b.row(i))?.value;
    }
    Ok(acc / T::from_count(a.rows()))
}
