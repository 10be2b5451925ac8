use serde::{Deserialize, Serialize};

use super::fixed_point::LONG_COLUMNS;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_distance, mean_row_cosine};
use crate::model::Trace;
use crate::scalar::Scalar;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityKind {
    /// Mean over heads of `||A_i - A_j||_F`.
    AttentionFrobenius,
    /// Mean over tokens of the cosine between residual rows.
    ResidualCosine,
}

impl SimilarityKind {
    pub fn name(self) -> &'static str {
        match self {
            SimilarityKind::AttentionFrobenius => "attention_frobenius",
            SimilarityKind::ResidualCosine => "residual_cosine",
        }
    }
}

/// Pairwise comparison of every two realized depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub kind: SimilarityKind,
    pub n: usize,
    /// Row-major `n x n`.
    pub values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Mean of entries `(i, i + lag)` over all `i >= start` with
    /// `i + lag < n`; `None` when no such pair exists.
    pub fn lag_mean(&self, lag: usize, start: usize) -> Option<f64> {
        let vals: Vec<f64> = (start..self.n.saturating_sub(lag)).map(|i| self.get(i, i + lag)).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn long_table(&self) -> Result<Table> {
        let mut t = Table::new(&LONG_COLUMNS);
        for i in 0..self.n {
            for j in 0..self.n {
                t.push(vec![self.kind.name().into(), i.into(), j.into(), self.get(i, j).into()])?;
            }
        }
        Ok(t)
    }
}

/// Similarity between every pair of realized depths of one trace.
pub fn pairwise_similarity<T: Scalar>(trace: &Trace<T>, kind: SimilarityKind) -> Result<SimilarityMatrix> {
    pairwise_similarity_batch(std::slice::from_ref(trace), kind)
}

/// Batch mean of [`pairwise_similarity`].
pub fn pairwise_similarity_batch<T: Scalar>(traces: &[Trace<T>], kind: SimilarityKind) -> Result<SimilarityMatrix> {
    let n = traces.first().ok_or(Error::Empty("trace batch"))?.depth();
    if traces.iter().any(|t| t.depth() != n) {
        return Err(Error::InvalidInput("batch traces differ in depth".into()));
    }
    let diag = match kind {
        SimilarityKind::AttentionFrobenius => 0.0,
        SimilarityKind::ResidualCosine => 1.0,
    };
    let mut values = vec![diag; n * n];
    let b = traces.len() as f64;
    for i in 0..n {
        for j in 0..i {
            let mut sum = 0.0;
            for t in traces {
                sum += match kind {
                    SimilarityKind::AttentionFrobenius => {
                        let (a, c) = (t.attention(i)?, t.attention(j)?);
                        if a.is_empty() || a.len() != c.len() {
                            return Err(Error::InvalidInput("head counts differ".into()));
                        }
                        let mut s = T::zero();
                        for (x, y) in a.iter().zip(c) {
                            s += frobenius_distance(x, y)?;
                        }
                        s.as_f64() / a.len() as f64
                    }
                    SimilarityKind::ResidualCosine => mean_row_cosine(t.residual(i)?, t.residual(j)?)?.as_f64(),
                };
            }
            values[i * n + j] = sum / b;
            values[j * n + i] = sum / b;
        }
    }
    if n > 0 {
        // fail on a missing diagonal capture too
        for t in traces {
            match kind {
                SimilarityKind::AttentionFrobenius => drop(t.attention(n - 1)?),
                SimilarityKind::ResidualCosine => drop(t.residual(n - 1)?),
            }
        }
    }
    Ok(SimilarityMatrix { kind, n, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::{Capture, ModelConfig, NormScheme};

    fn causal(t: usize, w: f64) -> Matrix<f64> {
        Matrix::from_fn(t, t, |i, j| {
            if j > i {
                0.0
            } else if i == 0 {
                1.0
            } else if j == 0 {
                w
            } else {
                (1.0 - w) / i as f64
            }
        })
    }

    /// Period-`k` trace: depth `d` carries pattern `d % k`.
    fn cyclic(k: usize, loops: usize) -> Trace<f64> {
        let c = ModelConfig::looped(4, 2, (0, k, 0), NormScheme::PreNorm, false);
        let mut t = Trace::empty(c, loops, Capture::all(), Matrix::zeros(3, 4));
        for d in 0..t.depth() {
            let j = d % k;
            let w = 0.1 + 0.2 * j as f64;
            t.attentions[d] = Some(vec![causal(3, w), causal(3, 1.0 - w)]);
            t.residuals[d] = Some(Matrix::from_fn(3, 4, |a, b| ((a + 2 * b + 3 * j) as f64).cos()));
        }
        t
    }

    #[test]
    fn identical_attention_gives_zero_matrix() {
        let c = ModelConfig::looped(4, 1, (0, 2, 0), NormScheme::PreNorm, false);
        let mut t = Trace::empty(c, 1, Capture::all(), Matrix::zeros(3, 4));
        t.attentions = vec![Some(vec![causal(3, 0.4)]); 2];
        let m = pairwise_similarity(&t, SimilarityKind::AttentionFrobenius).unwrap();
        assert_eq!(m.values, vec![0.0; 4]);
    }

    #[test]
    fn periodic_trace_is_banded() {
        let t = cyclic(3, 4);
        for kind in [SimilarityKind::AttentionFrobenius, SimilarityKind::ResidualCosine] {
            let m = pairwise_similarity(&t, kind).unwrap();
            assert_eq!(m.n, 12);
            assert!(m.is_symmetric(0.0));
            let same = if kind == SimilarityKind::AttentionFrobenius { 0.0 } else { 1.0 };
            for i in 0..12 {
                assert_eq!(m.get(i, i), same);
                if i + 3 < 12 {
                    assert!((m.get(i, i + 3) - same).abs() < 1e-12);
                }
            }
        }
        let m = pairwise_similarity(&t, SimilarityKind::AttentionFrobenius).unwrap();
        assert!(m.lag_mean(3, 0).unwrap() < m.lag_mean(2, 0).unwrap());
        assert!(m.lag_mean(3, 0).unwrap() < m.lag_mean(4, 0).unwrap());
        assert_eq!(m.long_table().unwrap().len(), 144);
    }

    #[test]
    fn missing_capture() {
        let mut t = cyclic(2, 2);
        t.attentions[3] = None;
        assert!(matches!(
            pairwise_similarity(&t, SimilarityKind::AttentionFrobenius),
            Err(Error::MissingCapture(_))
        ));
    }
}
