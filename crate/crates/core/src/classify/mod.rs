//! Per-token limiting-behaviour classification of recurrence series and
//! corpus statistics over the resulting labels.

mod series;
mod stats;

pub use series::{
    build_layer_token_norm_series, build_layer_token_series, build_token_norm_series, build_token_series, classify_series, detrend_linear, hann_window, ClassifierParams,
    LabelKind, SeriesKind, SeriesLabel, MIN_CLASSIFY_LEN,
};
pub use stats::{label_statistics, label_table, Fractions, LabelStatistics, TokenLabel, LABEL_COLUMNS};
