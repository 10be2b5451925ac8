//! Attention-pattern and representation metrics over single matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm2, symmetric_eigenvalues, Matrix};
use crate::scalar::Scalar;

/// Default sink threshold.
pub const SINK_TAU: f64 = 0.3;

fn square<T: Scalar>(attn: &Matrix<T>) -> Result<usize> {
    let (r, c) = attn.shape();
    if r != c {
        return Err(Error::InvalidInput(format!("attention must be square, got {r}x{c}")));
    }
    Ok(r)
}

fn xlogx<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x * x.ln()
    } else {
        T::zero()
    }
}

/// Column sums `c_j = sum_i A_ij`.
pub fn column_sums<T: Scalar>(attn: &Matrix<T>) -> Vec<T> {
    let mut c = vec![T::zero(); attn.cols()];
    for row in attn.row_iter() {
        for (s, &a) in c.iter_mut().zip(row) {
            *s += a;
        }
    }
    c
}

/// `1 - H(c / T) / log T` where `c` are the column sums.
pub fn colsum_concentration<T: Scalar>(attn: &Matrix<T>) -> Result<T> {
    let t = square(attn)?;
    if t < 2 {
        return Err(Error::SingleToken);
    }
    let n = T::from_count(t);
    let neg_h: T = column_sums(attn).into_iter().map(|c| xlogx(c / n)).sum();
    let c = (T::one() + neg_h / n.ln()).max(T::zero()).min(T::one());
    // column sums of a uniform matrix are only 1 up to rounding
    let snap = T::epsilon() * n * T::lit(4.0);
    Ok(if c <= snap {
        T::zero()
    } else if c >= T::one() - snap {
        T::one()
    } else {
        c
    })
}

/// Mean attention received by token `k`.
pub fn sink_score<T: Scalar>(attn: &Matrix<T>, k: usize) -> Result<T> {
    let t = square(attn)?;
    if k >= t {
        return Err(Error::IndexOutOfRange {
            what: "sink token",
            index: k,
            len: t,
        });
    }
    Ok((0..t).map(|i| attn[(i, k)]).sum::<T>() / T::from_count(t))
}

/// Which token a head's sink score is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SinkMode {
    /// The token with the largest score (lowest index on ties).
    #[default]
    Argmax,
    Fixed(usize),
}

/// A head's sink score and the token it was taken at.
pub fn head_sink_score<T: Scalar>(attn: &Matrix<T>, mode: SinkMode) -> Result<(usize, T)> {
    match mode {
        SinkMode::Fixed(k) => Ok((k, sink_score(attn, k)?)),
        SinkMode::Argmax => {
            let t = square(attn)?;
            if t == 0 {
                return Err(Error::Empty("attention matrix"));
            }
            let n = T::from_count(t);
            let mut best = (0, T::neg_infinity());
            for (k, c) in column_sums(attn).into_iter().enumerate() {
                if c / n > best.1 {
                    best = (k, c / n);
                }
            }
            Ok(best)
        }
    }
}

/// Fraction of heads whose score is at least `tau`.
pub fn sink_rate<T: Scalar>(per_head_scores: &[T], tau: T) -> Result<T> {
    if per_head_scores.is_empty() {
        return Err(Error::Empty("head scores"));
    }
    let hits = per_head_scores.iter().filter(|&&s| s >= tau).count();
    Ok(T::from_count(hits) / T::from_count(per_head_scores.len()))
}

/// Mean row entropy in nats.
pub fn mixing_score<T: Scalar>(attn: &Matrix<T>) -> Result<T> {
    let t = square(attn)?;
    if t == 0 {
        return Err(Error::Empty("attention matrix"));
    }
    let total: T = attn.row_iter().map(|row| -row.iter().map(|&a| xlogx(a)).sum::<T>()).sum();
    Ok(total / T::from_count(t))
}

/// Matrix-based entropy with the zero rows that were left out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixEntropy<T> {
    pub value: T,
    pub dropped_rows: usize,
}

/// Von Neumann entropy of the trace-normalised cosine Gram matrix of the
/// rows, divided by `log n` for the `n` non-zero rows used.
pub fn matrix_entropy<T: Scalar>(residual: &Matrix<T>) -> Result<T> {
    Ok(matrix_entropy_detailed(residual)?.value)
}

pub fn matrix_entropy_detailed<T: Scalar>(residual: &Matrix<T>) -> Result<MatrixEntropy<T>> {
    residual.ensure_finite("residual")?;
    let units: Vec<Vec<T>> = residual
        .row_iter()
        .filter_map(|row| {
            let n = norm2(row);
            (n > T::zero()).then(|| row.iter().map(|&x| x / n).collect())
        })
        .collect();
    let dropped_rows = residual.rows() - units.len();
    let n = units.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "matrix entropy needs two non-zero rows, got {n}"
        )));
    }
    let inv_n = T::one() / T::from_count(n);
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = inv_n;
        for j in 0..i {
            let v = units[i].iter().zip(&units[j]).map(|(&a, &b)| a * b).sum::<T>() * inv_n;
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let floor = T::epsilon() * T::lit(64.0);
    let lambdas: Vec<T> = symmetric_eigenvalues(&k)?.into_iter().filter(|&l| l > floor).collect();
    if lambdas.len() <= 1 {
        return Ok(MatrixEntropy {
            value: T::zero(),
            dropped_rows,
        });
    }
    let total: T = lambdas.iter().copied().sum();
    let h = -lambdas.iter().map(|&l| xlogx(l / total)).sum::<T>();
    let value = (h / T::from_count(n).ln()).max(T::zero()).min(T::one());
    Ok(MatrixEntropy { value, dropped_rows })
}
