use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pca_2d, Matrix};
use crate::model::{Stage, Trace};
use crate::scalar::Scalar;
use crate::table::{ColumnKind, Table};

/// Two-dimensional PCA path of one token through every realized depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub token: usize,
    /// `(x, y)` per realized depth.
    pub points: Vec<[f64; 2]>,
    pub recurrence: Vec<usize>,
    pub layer: Vec<usize>,
    pub stage: Vec<String>,
    pub variances: [f64; 2],
    pub rank_deficient: bool,
}

pub const TRAJECTORY_COLUMNS: [(&str, ColumnKind); 7] = [
    ("depth", ColumnKind::Int),
    ("stage", ColumnKind::Text),
    ("recurrence", ColumnKind::Int),
    ("layer", ColumnKind::Int),
    ("token", ColumnKind::Int),
    ("pc1", ColumnKind::Float),
    ("pc2", ColumnKind::Float),
];

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points of recurrence `r`, in depth order.
    pub fn segment(&self, r: usize) -> Vec<[f64; 2]> {
        self.points
            .iter()
            .zip(&self.recurrence)
            .filter(|(_, &rec)| rec == r)
            .map(|(p, _)| *p)
            .collect()
    }

    pub fn table(&self) -> Result<Table> {
        let mut t = Table::new(&TRAJECTORY_COLUMNS);
        for (d, p) in self.points.iter().enumerate() {
            t.push(vec![
                d.into(),
                self.stage[d].clone().into(),
                self.recurrence[d].into(),
                self.layer[d].into(),
                self.token.into(),
                p[0].into(),
                p[1].into(),
            ])?;
        }
        Ok(t)
    }
}

/// PCA trajectory of `token` (the last token when `None`).
pub fn pca_trajectory<T: Scalar>(trace: &Trace<T>, token: Option<usize>) -> Result<Trajectory> {
    let n_tok = trace.tokens();
    if n_tok == 0 {
        return Err(Error::Empty("trace tokens"));
    }
    let token = token.unwrap_or(n_tok - 1);
    if token >= n_tok {
        return Err(Error::IndexOutOfRange {
            what: "token",
            index: token,
            len: n_tok,
        });
    }
    let n = trace.depth();
    let mut rows = Vec::with_capacity(n);
    for d in 0..n {
        rows.push(trace.residual(d)?.row(token).to_vec());
    }
    let pca = pca_2d(&Matrix::from_rows(&rows)?)?;
    let slots: Vec<_> = (0..n).map(|d| trace.slot(d)).collect();
    Ok(Trajectory {
        token,
        points: (0..n)
            .map(|i| [pca.projections[(i, 0)].as_f64(), pca.projections[(i, 1)].as_f64()])
            .collect(),
        recurrence: slots.iter().map(|s| s.recurrence).collect(),
        layer: slots.iter().map(|s| s.layer).collect(),
        stage: slots
            .iter()
            .map(|s| match s.stage {
                Stage::Prelude => "prelude",
                Stage::Recurrent => "recurrent",
                Stage::Coda => "coda",
            })
            .map(String::from)
            .collect(),
        variances: [pca.variances[0].as_f64(), pca.variances[1].as_f64()],
        rank_deficient: pca.rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capture, ModelConfig, NormScheme};

    fn trace(k: usize, loops: usize, f: impl Fn(usize) -> Vec<f64>) -> Trace<f64> {
        let c = ModelConfig::looped(4, 1, (1, k, 1), NormScheme::PreNorm, false);
        let mut t = Trace::empty(c, loops, Capture::residuals_only(), Matrix::zeros(2, 4));
        for d in 0..t.depth() {
            let v = f(d);
            t.residuals[d] = Some(Matrix::from_rows(&[vec![9.0; 4], v]).unwrap());
        }
        t
    }

    #[test]
    fn cyclic_states_overlap() {
        let t = trace(4, 5, |d| {
            let a = std::f64::consts::TAU * (d % 4) as f64 / 4.0 + 0.3;
            vec![a.cos(), a.sin(), 0.5, 2.0]
        });
        let tr = pca_trajectory(&t, None).unwrap();
        assert_eq!(tr.len(), 1 + 20 + 1);
        assert_eq!(tr.token, 1);
        let (s2, s3) = (tr.segment(2), tr.segment(3));
        for (a, b) in s2.iter().zip(&s3) {
            assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        }
        assert_eq!(tr.stage[0], "prelude");
        assert_eq!(tr.stage[21], "coda");
    }

    #[test]
    fn constant_trace_collapses() {
        let t = trace(2, 3, |_| vec![1.0, -2.0, 0.5, 4.0]);
        let tr = pca_trajectory(&t, Some(1)).unwrap();
        assert!(tr.points.iter().all(|p| p[0].abs() < 1e-12 && p[1].abs() < 1e-12));
    }

    #[test]
    fn planar_path_is_recovered() {
        // points in the plane spanned by e0 and e2 with distinct variances
        let t = trace(3, 4, |d| {
            let s = d as f64;
            vec![3.0 * (0.7 * s).cos(), 7.0, 0.8 * (1.3 * s).sin(), 7.0]
        });
        let tr = pca_trajectory(&t, None).unwrap();
        let rows: Vec<Vec<f64>> = (0..t.depth()).map(|d| t.residual(d).unwrap().row(1).to_vec()).collect();
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..4).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        // centred points have norm equal to their projected norm
        for (p, r) in tr.points.iter().zip(&rows) {
            let c: f64 = r.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum();
            assert!((p[0] * p[0] + p[1] * p[1] - c).abs() < 1e-9);
        }
        assert!(!tr.rank_deficient);
        assert_eq!(tr.table().unwrap().len(), tr.len());
    }
}
