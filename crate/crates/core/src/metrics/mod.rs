//! Attention and residual-stream metrics, and their evaluation across the
//! depth of a trace.

mod attention;
mod series;

pub use attention::{
    colsum_concentration, column_sums, head_sink_score, matrix_entropy, matrix_entropy_detailed, mixing_score,
    sink_rate, sink_score, MatrixEntropy, SinkMode, SINK_TAU,
};
pub use series::{
    layout, metric_over_batch, metric_over_trace, residual_norms, Grouping, Metric, MetricSeries, Position,
    SERIES_COLUMNS,
};
