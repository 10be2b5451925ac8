//! Metrics evaluated at every realized depth of a trace, laid out under one
//! of the three presentation groupings.

use serde::{Deserialize, Serialize};

use super::attention::{
    colsum_concentration, head_sink_score, matrix_entropy, mixing_score, sink_rate, SinkMode, SINK_TAU,
};
use crate::error::{Error, Result};
use crate::linalg::{norm2, Matrix};
use crate::model::Trace;
use crate::scalar::Scalar;
use crate::table::{ColumnKind, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One line over realized depth.
    NoGrouping,
    /// One line per recurrence, x-axis is the slot inside `p + k + c`.
    ByRecurrence,
    /// One line per unique layer, points ordered by recurrence.
    ByLayer,
}

impl Grouping {
    pub const ALL: [Grouping; 3] = [Grouping::NoGrouping, Grouping::ByRecurrence, Grouping::ByLayer];

    pub fn name(self) -> &'static str {
        match self {
            Grouping::NoGrouping => "none",
            Grouping::ByRecurrence => "by_recurrence",
            Grouping::ByLayer => "by_layer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "metric")]
pub enum Metric {
    ColsumConcentration,
    /// Mean over heads of each head's sink score.
    SinkScore {
        #[serde(default)]
        mode: SinkMode,
    },
    SinkRate {
        #[serde(default = "default_tau")]
        tau: f64,
        #[serde(default)]
        mode: SinkMode,
    },
    MixingScore,
    MatrixEntropy,
    /// Mean over tokens of the residual row norm.
    ResidualNorm,
}

fn default_tau() -> f64 {
    SINK_TAU
}

impl Metric {
    /// The attention metrics plus matrix entropy and residual norm, with
    /// default parameters.
    pub const SUITE: [Metric; 6] = [
        Metric::ColsumConcentration,
        Metric::SinkScore { mode: SinkMode::Argmax },
        Metric::SinkRate {
            tau: SINK_TAU,
            mode: SinkMode::Argmax,
        },
        Metric::MixingScore,
        Metric::MatrixEntropy,
        Metric::ResidualNorm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::ColsumConcentration => "colsum_concentration",
            Metric::SinkScore { .. } => "sink_score",
            Metric::SinkRate { .. } => "sink_rate",
            Metric::MixingScore => "mixing_score",
            Metric::MatrixEntropy => "matrix_entropy",
            Metric::ResidualNorm => "residual_norm",
        }
    }

    pub fn needs_attention(&self) -> bool {
        !matches!(self, Metric::MatrixEntropy | Metric::ResidualNorm)
    }

    /// Value of the metric at realized depth `depth`.
    pub fn evaluate<T: Scalar>(&self, trace: &Trace<T>, depth: usize) -> Result<f64> {
        let mean_heads = |f: &dyn Fn(&Matrix<T>) -> Result<T>| -> Result<f64> {
            let heads = trace.attention(depth)?;
            if heads.is_empty() {
                return Err(Error::Empty("attention heads"));
            }
            let mut sum = T::zero();
            for a in heads {
                sum += f(a)?;
            }
            Ok((sum / T::from_count(heads.len())).as_f64())
        };
        match *self {
            Metric::ColsumConcentration => mean_heads(&|a| colsum_concentration(a)),
            Metric::MixingScore => mean_heads(&|a| mixing_score(a)),
            Metric::SinkScore { mode } => mean_heads(&|a| Ok(head_sink_score(a, mode)?.1)),
            Metric::SinkRate { tau, mode } => {
                let scores = trace
                    .attention(depth)?
                    .iter()
                    .map(|a| head_sink_score(a, mode).map(|s| s.1))
                    .collect::<Result<Vec<T>>>()?;
                Ok(sink_rate(&scores, T::lit(tau))?.as_f64())
            }
            Metric::MatrixEntropy => Ok(matrix_entropy(trace.residual(depth)?)?.as_f64()),
            Metric::ResidualNorm => {
                let x = trace.residual(depth)?;
                if x.rows() == 0 {
                    return Err(Error::Empty("residual"));
                }
                let sum: T = x.row_iter().map(norm2).sum();
                Ok((sum / T::from_count(x.rows())).as_f64())
            }
        }
    }
}

/// One point of a series layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub depth: usize,
    pub recurrence: usize,
    pub layer: usize,
    pub pct_depth: f64,
}

fn ratio(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// Order and x-coordinates of every realized depth under `grouping`.
///
/// `NoGrouping` and `ByRecurrence` both run in depth order; the former uses
/// `depth / (depth_count - 1)` and the latter the slot inside one
/// `p + k + c` group. `ByLayer` sorts by layer then recurrence.
pub fn layout<T: Scalar>(trace: &Trace<T>, grouping: Grouping) -> Vec<Position> {
    let n = trace.depth();
    let group = trace.config.unique_layers();
    let mut out: Vec<Position> = (0..n)
        .map(|d| {
            let s = trace.slot(d);
            let pct_depth = match grouping {
                Grouping::ByRecurrence => ratio(s.group_slot, group),
                Grouping::NoGrouping | Grouping::ByLayer => ratio(d, n),
            };
            Position {
                depth: d,
                recurrence: s.recurrence,
                layer: s.layer,
                pct_depth,
            }
        })
        .collect();
    if grouping == Grouping::ByLayer {
        out.sort_by_key(|p| (p.layer, p.recurrence));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub grouping: Grouping,
    /// `(recurrence, layer)` per point.
    pub index: Vec<(usize, usize)>,
    pub pct_depth: Vec<f64>,
    pub values: Vec<f64>,
    /// Population standard deviation over a batch.
    pub dispersion: Option<Vec<f64>>,
}

pub const SERIES_COLUMNS: [(&str, ColumnKind); 7] = [
    ("name", ColumnKind::Text),
    ("grouping", ColumnKind::Text),
    ("recurrence", ColumnKind::Int),
    ("layer", ColumnKind::Int),
    ("pct_depth", ColumnKind::Float),
    ("value", ColumnKind::Float),
    ("std", ColumnKind::OptFloat),
];

impl MetricSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.index.len();
        if self.values.len() != n || self.pct_depth.len() != n {
            return Err(Error::shape(format!("{n} points"), format!("{} values", self.values.len())));
        }
        if let Some(d) = &self.dispersion {
            if d.len() != n {
                return Err(Error::shape(format!("{n} points"), format!("{} std values", d.len())));
            }
            if d.iter().any(|&s| s.is_nan() || s < 0.0) {
                return Err(Error::InvalidInput("negative or NaN dispersion".into()));
            }
        }
        Ok(())
    }

    /// Values belonging to recurrence `r`, in series order.
    pub fn recurrence_values(&self, r: usize) -> Vec<f64> {
        self.index
            .iter()
            .zip(&self.values)
            .filter(|((rec, _), _)| *rec == r)
            .map(|(_, &v)| v)
            .collect()
    }

    /// Values belonging to global layer `layer`, in series order.
    pub fn layer_values(&self, layer: usize) -> Vec<f64> {
        self.index
            .iter()
            .zip(&self.values)
            .filter(|((_, l), _)| *l == layer)
            .map(|(_, &v)| v)
            .collect()
    }

    pub fn append_to(&self, table: &mut Table) -> Result<()> {
        self.validate()?;
        for i in 0..self.len() {
            let (r, l) = self.index[i];
            table.push(vec![
                self.name.clone().into(),
                self.grouping.name().into(),
                r.into(),
                l.into(),
                self.pct_depth[i].into(),
                self.values[i].into(),
                self.dispersion.as_ref().map(|d| d[i]).into(),
            ])?;
        }
        Ok(())
    }

    pub fn table(series: &[MetricSeries]) -> Result<Table> {
        let mut t = Table::new(&SERIES_COLUMNS);
        for s in series {
            s.append_to(&mut t)?;
        }
        Ok(t)
    }
}

fn build(metric: &Metric, grouping: Grouping, positions: &[Position], values: Vec<f64>, dispersion: Option<Vec<f64>>) -> MetricSeries {
    MetricSeries {
        name: metric.name().to_string(),
        grouping,
        index: positions.iter().map(|p| (p.recurrence, p.layer)).collect(),
        pct_depth: positions.iter().map(|p| p.pct_depth).collect(),
        values,
        dispersion,
    }
}

pub fn metric_over_trace<T: Scalar>(trace: &Trace<T>, metric: &Metric, grouping: Grouping) -> Result<MetricSeries> {
    let positions = layout(trace, grouping);
    let values = positions
        .iter()
        .map(|p| metric.evaluate(trace, p.depth))
        .collect::<Result<Vec<_>>>()?;
    Ok(build(metric, grouping, &positions, values, None))
}

/// Mean and population standard deviation over a batch of traces that share
/// a configuration and loop count.
pub fn metric_over_batch<T: Scalar>(traces: &[Trace<T>], metric: &Metric, grouping: Grouping) -> Result<MetricSeries> {
    let first = traces.first().ok_or(Error::Empty("trace batch"))?;
    for t in traces {
        if t.loops != first.loops || t.config.unique_layers() != first.config.unique_layers() || t.config.recurrent_layers != first.config.recurrent_layers {
            return Err(Error::InvalidInput("batch traces differ in structure".into()));
        }
    }
    let positions = layout(first, grouping);
    let n = traces.len() as f64;
    let mut values = Vec::with_capacity(positions.len());
    let mut stds = Vec::with_capacity(positions.len());
    for p in &positions {
        let xs = traces
            .iter()
            .map(|t| metric.evaluate(t, p.depth))
            .collect::<Result<Vec<_>>>()?;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        values.push(mean);
        stds.push(var.sqrt());
    }
    Ok(build(metric, grouping, &positions, values, Some(stds)))
}

/// Mean token norm of the residual stream after every block, in depth order.
pub fn residual_norms<T: Scalar>(trace: &Trace<T>) -> Result<MetricSeries> {
    metric_over_trace(trace, &Metric::ResidualNorm, Grouping::NoGrouping)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Capture, ModelConfig, NormScheme};

    /// Trace with `loops` recurrences of a `(p, k, c)` model whose attention
    /// and residual at depth `d` are filled from `d`.
    fn synthetic(p: usize, k: usize, c: usize, loops: usize) -> Trace<f64> {
        let config = ModelConfig::looped(4, 2, (p, k, c), NormScheme::PreNorm, false);
        let mut t = Trace::empty(config, loops, Capture::all(), Matrix::zeros(2, 4));
        for d in 0..t.depth() {
            let w = 1.0 / (d as f64 + 2.0);
            let a = Matrix::from_rows(&[[1.0, 0.0], [1.0 - w, w]]).unwrap();
            t.attentions[d] = Some(vec![a.clone(), Matrix::identity(2)]);
            t.residuals[d] = Some(Matrix::filled(2, 4, d as f64));
        }
        t
    }

    #[test]
    fn hand_assembled_series() {
        let t = synthetic(1, 2, 1, 3);
        let s = metric_over_trace(&t, &Metric::MixingScore, Grouping::NoGrouping).unwrap();
        assert_eq!(s.len(), 8);
        for (d, &v) in s.values.iter().enumerate() {
            let w = 1.0 / (d as f64 + 2.0);
            let h = -(w * w.ln() + (1.0 - w) * (1.0 - w).ln());
            // row 0 and the identity head contribute nothing
            assert!((v - h / 4.0).abs() < 1e-15);
        }
        assert_eq!(s.index[0], (0, 0));
        assert_eq!(s.index[1], (0, 1));
        assert_eq!(s.index[7], (2, 3));
        let norms = residual_norms(&t).unwrap();
        assert_eq!(norms.values[5], 10.0);
    }

    #[test]
    fn single_loop_groupings_coincide() {
        let t = synthetic(2, 3, 1, 1);
        let a = metric_over_trace(&t, &Metric::ColsumConcentration, Grouping::NoGrouping).unwrap();
        let b = metric_over_trace(&t, &Metric::ColsumConcentration, Grouping::ByRecurrence).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.index, b.index);
        assert_eq!(a.pct_depth, b.pct_depth);
    }

    #[test]
    fn by_layer_has_one_line_per_unique_layer() {
        let t = synthetic(1, 2, 2, 4);
        let s = metric_over_trace(&t, &Metric::SUITE[2], Grouping::ByLayer).unwrap();
        let mut layers: Vec<usize> = s.index.iter().map(|x| x.1).collect();
        layers.dedup();
        assert_eq!(layers, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.layer_values(1).len(), 4);
        assert_eq!(s.layer_values(0).len(), 1);
    }

    #[test]
    fn by_recurrence_pct_depth() {
        let t = synthetic(1, 2, 1, 2);
        let s = metric_over_trace(&t, &Metric::ResidualNorm, Grouping::ByRecurrence).unwrap();
        assert_eq!(s.pct_depth, vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        assert_eq!(s.recurrence_values(1), vec![6.0, 8.0, 10.0]);
    }

    #[test]
    fn missing_capture_is_reported() {
        let mut t = synthetic(0, 1, 0, 2);
        t.attentions[1] = None;
        assert!(matches!(
            metric_over_trace(&t, &Metric::MixingScore, Grouping::NoGrouping),
            Err(Error::MissingCapture(_))
        ));
    }

    #[test]
    fn batch_mean_and_std() {
        let a = synthetic(0, 1, 0, 2);
        let mut b = a.clone();
        for r in b.residuals.iter_mut().flatten() {
            *r = r.map(|x| x + 2.0);
        }
        let s = metric_over_batch(&[a, b], &Metric::ResidualNorm, Grouping::NoGrouping).unwrap();
        assert_eq!(s.values, vec![2.0, 4.0]);
        assert_eq!(s.dispersion, Some(vec![2.0, 2.0]));
        let table = MetricSeries::table(&[s]).unwrap();
        assert_eq!(table.len(), 2);
        assert!(table.to_csv_string().starts_with("name,grouping,recurrence,layer,pct_depth,value,std\nresidual_norm,none,0,0,"));
    }
}
