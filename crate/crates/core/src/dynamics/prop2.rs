//! Check of the attention-stability bound
//! `||A(X_t) - A(X_{t-1})||_F <= L_sm * 2 B kappa / sqrt(d) * ||X_t - X_{t-1}||_F`
//! on the normed attention inputs of one recurrent layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_distance, Matrix};
use crate::model::{BlockWeights, ModelConfig, ModelWeights, Positional, Trace};
use crate::scalar::Scalar;
use crate::table::{ColumnKind, Table};

/// Lipschitz constant of row softmax.
pub const SOFTMAX_LIPSCHITZ: f64 = 0.5;

/// Slack allowed on the right hand side.
pub const BOUND_TOL: f64 = 1e-9;

/// `||W_Q,h W_K,h^T||_F`, or `||W_Q,h||_F ||W_K,h||_F` under rotary
/// embeddings, where a position dependent rotation sits between the two.
pub fn head_kappa<T: Scalar>(block: &BlockWeights<T>, config: &ModelConfig, head: usize) -> Result<T> {
    let (wq, wk) = block.head_qk(head, config.d_head);
    match config.positional {
        Positional::Rotary => Ok(wq.frobenius_norm() * wk.frobenius_norm()),
        Positional::None => {
            // ||A B^T||_F^2 = <A^T A, B^T B>
            let (qq, kk) = (wq.transpose().matmul(&wq)?, wk.transpose().matmul(&wk)?);
            let s: T = qq.as_slice().iter().zip(kk.as_slice()).map(|(&a, &b)| a * b).sum();
            Ok(s.max(T::zero()).sqrt())
        }
    }
}

pub fn bound_rhs(b: f64, kappa: f64, d_head: usize, delta_x: f64) -> f64 {
    SOFTMAX_LIPSCHITZ * 2.0 * b * kappa / (d_head as f64).sqrt() * delta_x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop2Record {
    /// Global layer index.
    pub layer: usize,
    pub recurrence: usize,
    pub head: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub delta_x: f64,
    pub bound_b: f64,
    pub kappa: f64,
    pub holds: bool,
}

pub const PROP2_COLUMNS: [(&str, ColumnKind); 9] = [
    ("layer", ColumnKind::Int),
    ("recurrence", ColumnKind::Int),
    ("head", ColumnKind::Int),
    ("lhs", ColumnKind::Float),
    ("rhs", ColumnKind::Float),
    ("holds", ColumnKind::Bool),
    ("delta_x", ColumnKind::Float),
    ("bound_b", ColumnKind::Float),
    ("kappa", ColumnKind::Float),
];

pub fn prop2_table(records: &[Prop2Record]) -> Result<Table> {
    let mut t = Table::new(&PROP2_COLUMNS);
    for r in records {
        t.push(vec![
            r.layer.into(),
            r.recurrence.into(),
            r.head.into(),
            r.lhs.into(),
            r.rhs.into(),
            r.holds.into(),
            r.delta_x.into(),
            r.bound_b.into(),
            r.kappa.into(),
        ])?;
    }
    Ok(t)
}

/// Evaluate both sides of the bound for one head between two states.
/// `bound_b` must dominate the Frobenius norm of both inputs.
pub fn bound_pair<T: Scalar>(
    prev_input: &Matrix<T>,
    cur_input: &Matrix<T>,
    prev_attn: &Matrix<T>,
    cur_attn: &Matrix<T>,
    kappa: f64,
    bound_b: f64,
    d_head: usize,
) -> Result<(f64, f64)> {
    let lhs = frobenius_distance(cur_attn, prev_attn)?.as_f64();
    let delta = frobenius_distance(cur_input, prev_input)?.as_f64();
    Ok((lhs, bound_rhs(bound_b, kappa, d_head, delta)))
}

/// Audit recurrent layer `within` at every recurrence `t >= 1`, one record
/// per head. `B` is the running maximum of the observed input norms.
pub fn prop2_bound_check<T: Scalar>(trace: &Trace<T>, weights: &ModelWeights<T>, within: usize) -> Result<Vec<Prop2Record>> {
    let c = &trace.config;
    let block = weights.recurrent.get(within).ok_or(Error::IndexOutOfRange {
        what: "recurrent layer",
        index: within,
        len: weights.recurrent.len(),
    })?;
    let kappas = (0..c.n_heads)
        .map(|h| head_kappa(block, c, h).map(|k| k.as_f64()))
        .collect::<Result<Vec<_>>>()?;
    let layer = c.prelude_layers + within;
    let mut out = Vec::new();
    let first = trace.attn_input(trace.recurrent_depth(0, within))?;
    let mut b = first.frobenius_norm().as_f64();
    for r in 1..trace.loops {
        let (dp, dc) = (trace.recurrent_depth(r - 1, within), trace.recurrent_depth(r, within));
        let (xp, xc) = (trace.attn_input(dp)?, trace.attn_input(dc)?);
        let (ap, ac) = (trace.attention(dp)?, trace.attention(dc)?);
        b = b.max(xc.frobenius_norm().as_f64());
        let delta_x = frobenius_distance(xc, xp)?.as_f64();
        for h in 0..c.n_heads {
            let (lhs, rhs) = bound_pair(xp, xc, &ap[h], &ac[h], kappas[h], b, c.d_head)?;
            out.push(Prop2Record {
                layer,
                recurrence: r,
                head: h,
                lhs,
                rhs,
                delta_x,
                bound_b: b,
                kappa: kappas[h],
                holds: lhs <= rhs + BOUND_TOL,
            });
        }
    }
    Ok(out)
}

/// [`prop2_bound_check`] over every recurrent layer.
pub fn prop2_audit<T: Scalar>(trace: &Trace<T>, weights: &ModelWeights<T>) -> Result<Vec<Prop2Record>> {
    let mut out = Vec::new();
    for j in 0..trace.config.recurrent_layers {
        out.extend(prop2_bound_check(trace, weights, j)?);
    }
    Ok(out)
}
