use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius_distance, mean_row_cosine};
use crate::metrics::{Grouping, MetricSeries};
use crate::model::Trace;
use crate::scalar::Scalar;
use crate::table::{ColumnKind, Table};

/// Columns of every long-format dynamics CSV.
pub const LONG_COLUMNS: [(&str, ColumnKind); 4] = [
    ("kind", ColumnKind::Text),
    ("i", ColumnKind::Int),
    ("j", ColumnKind::Int),
    ("value", ColumnKind::Float),
];

fn require_loops<T>(trace: &Trace<T>, needed: usize) -> Result<()> {
    if trace.loops < needed {
        return Err(Error::InsufficientRecurrences {
            needed,
            got: trace.loops,
        });
    }
    Ok(())
}

fn successive<T: Scalar>(
    trace: &Trace<T>,
    name: &str,
    f: impl Fn(&crate::linalg::Matrix<T>, &crate::linalg::Matrix<T>) -> Result<T>,
) -> Result<MetricSeries> {
    require_loops(trace, 2)?;
    let (p, k) = (trace.config.prelude_layers, trace.config.recurrent_layers);
    let n = trace.depth();
    let mut s = MetricSeries {
        name: name.into(),
        grouping: Grouping::ByLayer,
        index: Vec::new(),
        pct_depth: Vec::new(),
        values: Vec::new(),
        dispersion: None,
    };
    for j in 0..k {
        for r in 1..trace.loops {
            let v = f(trace.recurrent_residual(r, j)?, trace.recurrent_residual(r - 1, j)?)?;
            s.index.push((r, p + j));
            s.pct_depth.push(trace.recurrent_depth(r, j) as f64 / (n - 1) as f64);
            s.values.push(v.as_f64());
        }
    }
    Ok(s)
}

/// `||X_{l,r} - X_{l,r-1}||_F` for every recurrent layer and `r >= 1`,
/// ordered by layer then recurrence.
pub fn successive_differences<T: Scalar>(trace: &Trace<T>) -> Result<MetricSeries> {
    successive(trace, "successive_difference", |a, b| frobenius_distance(a, b))
}

/// Mean token cosine between successive recurrences of the same layer.
pub fn successive_cosines<T: Scalar>(trace: &Trace<T>) -> Result<MetricSeries> {
    successive(trace, "successive_cosine", |a, b| mean_row_cosine(a, b))
}

/// How a per-layer distance series is judged converged over the final window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "test", content = "threshold")]
pub enum ConvergenceTest {
    /// Mean of `1 - cos` to the reference state.
    CosineGap(f64),
    /// Mean Frobenius distance divided by the mean state norm.
    RelativeDistance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedPointParams {
    /// 1-based recurrence whose states serve as the fixed points.
    #[serde(default = "default_reference")]
    pub reference: usize,
    /// Number of recurrences before the reference averaged by the test.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_test")]
    pub convergence: ConvergenceTest,
    /// Cosine distance below which two fixed points count as the same.
    #[serde(default = "default_eps_deg")]
    pub eps_degenerate: f64,
}

fn default_reference() -> usize {
    128
}

fn default_window() -> usize {
    8
}

fn default_test() -> ConvergenceTest {
    ConvergenceTest::CosineGap(1e-3)
}

fn default_eps_deg() -> f64 {
    1e-3
}

impl Default for FixedPointParams {
    fn default() -> Self {
        Self {
            reference: default_reference(),
            window: default_window(),
            convergence: default_test(),
            eps_degenerate: default_eps_deg(),
        }
    }
}

impl FixedPointParams {
    pub fn with_reference(mut self, reference: usize) -> Self {
        self.reference = reference;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFixedPoint {
    /// Global layer index.
    pub layer: usize,
    /// Distance to the reference state for every captured recurrence.
    pub distances: Vec<f64>,
    pub cosines: Vec<f64>,
    /// Frobenius norm of the reference state.
    pub reference_norm: f64,
    /// Statistic compared against the convergence threshold.
    pub window_statistic: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub params: FixedPointParams,
    pub layers: Vec<LayerFixedPoint>,
    /// `k x k` mean token cosines between the layers' fixed points.
    pub fixed_point_cosines: Vec<Vec<f64>>,
    pub min_fixed_point_cosine: f64,
    /// Per recurrence, the smallest cosine of any layer's state to the first
    /// recurrent layer's fixed point.
    pub min_cosine_to_first: Vec<f64>,
    pub converged: bool,
    pub degenerate: bool,
}

impl FixedPointReport {
    /// Cosine of the first recurrent layer to its own fixed point.
    pub fn first_layer_cosines(&self) -> &[f64] {
        &self.layers[0].cosines
    }

    pub fn long_table(&self) -> Result<Table> {
        let mut t = Table::new(&LONG_COLUMNS);
        for l in &self.layers {
            for (r, (&d, &c)) in l.distances.iter().zip(&l.cosines).enumerate() {
                t.push(vec!["distance".into(), l.layer.into(), r.into(), d.into()])?;
                t.push(vec!["cosine".into(), l.layer.into(), r.into(), c.into()])?;
            }
        }
        for (r, &c) in self.min_cosine_to_first.iter().enumerate() {
            t.push(vec!["min_cosine_to_first".into(), 0usize.into(), r.into(), c.into()])?;
        }
        for (i, row) in self.fixed_point_cosines.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                t.push(vec!["fixed_point_cosine".into(), i.into(), j.into(), c.into()])?;
            }
        }
        Ok(t)
    }
}

/// Compare every recurrent layer's state against its own state at the
/// reference recurrence.
pub fn fixed_point_report<T: Scalar>(trace: &Trace<T>, params: &FixedPointParams) -> Result<FixedPointReport> {
    let reference = params.reference;
    if reference == 0 || reference > trace.loops {
        return Err(Error::IndexOutOfRange {
            what: "reference recurrence",
            index: reference,
            len: trace.loops,
        });
    }
    if params.window == 0 || params.window >= reference {
        return Err(Error::InvalidInput(format!(
            "convergence window {} must lie in 1..{reference}",
            params.window
        )));
    }
    let (p, k) = (trace.config.prelude_layers, trace.config.recurrent_layers);
    let ref_idx = reference - 1;
    let fps = (0..k)
        .map(|j| trace.recurrent_residual(ref_idx, j))
        .collect::<Result<Vec<_>>>()?;

    let mut layers = Vec::with_capacity(k);
    let mut min_cosine_to_first = vec![f64::INFINITY; trace.loops];
    for j in 0..k {
        let mut distances = Vec::with_capacity(trace.loops);
        let mut cosines = Vec::with_capacity(trace.loops);
        let mut norms = Vec::with_capacity(trace.loops);
        for (r, m) in min_cosine_to_first.iter_mut().enumerate() {
            let x = trace.recurrent_residual(r, j)?;
            distances.push(frobenius_distance(x, fps[j])?.as_f64());
            cosines.push(mean_row_cosine(x, fps[j])?.as_f64());
            norms.push(x.frobenius_norm().as_f64());
            *m = m.min(mean_row_cosine(x, fps[0])?.as_f64());
        }
        let window = ref_idx - params.window..ref_idx;
        let w = params.window as f64;
        let window_statistic = match params.convergence {
            ConvergenceTest::CosineGap(_) => window.map(|r| 1.0 - cosines[r]).sum::<f64>() / w,
            ConvergenceTest::RelativeDistance(_) => {
                let d = window.clone().map(|r| distances[r]).sum::<f64>() / w;
                let n = window.map(|r| norms[r]).sum::<f64>() / w;
                if n > 0.0 {
                    d / n
                } else {
                    d
                }
            }
        };
        let threshold = match params.convergence {
            ConvergenceTest::CosineGap(t) | ConvergenceTest::RelativeDistance(t) => t,
        };
        layers.push(LayerFixedPoint {
            layer: p + j,
            distances,
            cosines,
            reference_norm: fps[j].frobenius_norm().as_f64(),
            window_statistic,
            converged: window_statistic <= threshold,
        });
    }

    let mut fixed_point_cosines = vec![vec![1.0; k]; k];
    let mut min_fixed_point_cosine = 1.0f64;
    for i in 0..k {
        for j in 0..i {
            let c = mean_row_cosine(fps[i], fps[j])?.as_f64();
            fixed_point_cosines[i][j] = c;
            fixed_point_cosines[j][i] = c;
            min_fixed_point_cosine = min_fixed_point_cosine.min(c);
        }
    }
    Ok(FixedPointReport {
        params: *params,
        converged: layers.iter().all(|l| l.converged),
        degenerate: min_fixed_point_cosine >= 1.0 - params.eps_degenerate,
        layers,
        fixed_point_cosines,
        min_fixed_point_cosine,
        min_cosine_to_first,
    })
}
