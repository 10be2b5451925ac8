use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cosine_similarity, norm2, real_fft_magnitudes};
use crate::model::Trace;
use crate::scalar::Scalar;

/// Shortest series [`classify_series`] accepts.
pub const MIN_CLASSIFY_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    FixedPoint,
    Orbit,
    Slider,
    Unknown,
}

impl LabelKind {
    pub const ALL: [LabelKind; 4] = [LabelKind::FixedPoint, LabelKind::Orbit, LabelKind::Slider, LabelKind::Unknown];

    pub fn name(self) -> &'static str {
        match self {
            LabelKind::FixedPoint => "fixed_point",
            LabelKind::Orbit => "orbit",
            LabelKind::Slider => "slider",
            LabelKind::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SeriesLabel {
    FixedPoint,
    /// `freq` in cycles per step, `amp` the window-corrected amplitude.
    Orbit { freq: f64, amp: f64 },
    Slider { slope: f64 },
    Unknown,
}

impl SeriesLabel {
    pub fn kind(&self) -> LabelKind {
        match self {
            SeriesLabel::FixedPoint => LabelKind::FixedPoint,
            SeriesLabel::Orbit { .. } => LabelKind::Orbit,
            SeriesLabel::Slider { .. } => LabelKind::Slider,
            SeriesLabel::Unknown => LabelKind::Unknown,
        }
    }

    pub fn freq(&self) -> Option<f64> {
        match *self {
            SeriesLabel::Orbit { freq, .. } => Some(freq),
            _ => None,
        }
    }

    pub fn amp(&self) -> Option<f64> {
        match *self {
            SeriesLabel::Orbit { amp, .. } => Some(amp),
            _ => None,
        }
    }

    pub fn slope(&self) -> Option<f64> {
        match *self {
            SeriesLabel::Slider { slope } => Some(slope),
            _ => None,
        }
    }
}

/// Whether a series approaches 1 (similarity) or 0 (norm of a difference)
/// at a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    #[default]
    Similarity,
    Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierParams {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub series_kind: SeriesKind,
}

fn default_tau() -> f64 {
    0.05
}

fn default_rho() -> f64 {
    0.9
}

impl Default for ClassifierParams {
    fn default() -> Self {
        Self {
            tau: default_tau(),
            rho: default_rho(),
            series_kind: SeriesKind::Similarity,
        }
    }
}

impl ClassifierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidInput(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidInput(format!("rho must lie in (0, 1], got {}", self.rho)));
        }
        Ok(())
    }
}

/// Least-squares line over `t = 0..n-1`: `(residual, slope, intercept)`.
pub fn detrend_linear<T: Scalar>(s: &[T]) -> Result<(Vec<T>, T, T)> {
    let n = s.len();
    if n < 2 {
        return Err(Error::SeriesTooShort { len: n, min: 2 });
    }
    let nf = T::from_count(n);
    let t_mean = T::from_count(n - 1) / T::lit(2.0);
    let s_mean = s.iter().copied().sum::<T>() / nf;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    for (i, &v) in s.iter().enumerate() {
        let dt = T::from_count(i) - t_mean;
        sxy += dt * (v - s_mean);
        sxx += dt * dt;
    }
    let slope = sxy / sxx;
    let intercept = s_mean - slope * t_mean;
    let residual = s
        .iter()
        .enumerate()
        .map(|(i, &v)| v - (slope * T::from_count(i) + intercept))
        .collect();
    Ok((residual, slope, intercept))
}

/// Symmetric Hann window `0.5 (1 - cos(2 pi i / (n - 1)))`.
pub fn hann_window<T: Scalar>(n: usize) -> Vec<T> {
    if n < 2 {
        return vec![T::one(); n];
    }
    let m = T::from_count(n - 1);
    (0..n)
        .map(|i| {
            // evaluate on the mirrored index so w_i == w_{n-1-i} bit for bit
            let j = i.min(n - 1 - i);
            T::lit(0.5) * (T::one() - (T::TAU() * T::from_count(j) / m).cos())
        })
        .collect()
}

/// The limiting-behaviour cascade: fixed point, then orbit, then slider.
pub fn classify_series<T: Scalar>(s: &[T], params: &ClassifierParams) -> Result<SeriesLabel> {
    params.validate()?;
    let n = s.len();
    if n < MIN_CLASSIFY_LEN {
        return Err(Error::SeriesTooShort {
            len: n,
            min: MIN_CLASSIFY_LEN,
        });
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("series contains non-finite values".into()));
    }
    let s: Vec<f64> = s.iter().map(|x| x.as_f64()).collect();
    let (tau, nf) = (params.tau, n as f64);

    let n_close = match params.series_kind {
        SeriesKind::Similarity => s.iter().filter(|&&v| v >= 1.0 - tau).count(),
        SeriesKind::Norm => s.iter().filter(|&&v| v <= tau).count(),
    };
    if n_close as f64 >= params.rho * nf {
        return Ok(SeriesLabel::FixedPoint);
    }

    let (residual, slope, _) = detrend_linear(&s)?;
    let windowed: Vec<f64> = residual.iter().zip(hann_window::<f64>(n)).map(|(r, w)| r * w).collect();
    let spectrum = real_fft_magnitudes(&windowed)?;
    let k = spectrum.peak().expect("spectrum of n >= 8 has bins");
    let amp = 4.0 * spectrum.magnitudes()[k] / nf;
    if amp >= tau / 2.0 && (k + 1) as f64 / nf >= 2.0 / nf {
        return Ok(SeriesLabel::Orbit {
            freq: (k + 1) as f64 / nf,
            amp,
        });
    }

    let g = match params.series_kind {
        SeriesKind::Similarity => slope,
        SeriesKind::Norm => -slope,
    };
    if g > tau / nf {
        return Ok(SeriesLabel::Slider { slope: g });
    }
    Ok(SeriesLabel::Unknown)
}

fn layer_rows<T: Scalar>(trace: &Trace<T>, within: usize, token: usize) -> Result<Vec<&[T]>> {
    let l = trace.loops;
    if l < MIN_CLASSIFY_LEN + 1 {
        return Err(Error::InsufficientRecurrences {
            needed: MIN_CLASSIFY_LEN + 1,
            got: l,
        });
    }
    if token >= trace.tokens() {
        return Err(Error::IndexOutOfRange {
            what: "token",
            index: token,
            len: trace.tokens(),
        });
    }
    (0..l)
        .map(|r| trace.recurrent_residual(r, within).map(|x| x.row(token)))
        .collect()
}

/// Cosine of token `token` at the last recurrent layer in each recurrence
/// `1..l-1` against its state in the final recurrence `l`.
pub fn build_token_series<T: Scalar>(trace: &Trace<T>, token: usize) -> Result<Vec<f64>> {
    build_layer_token_series(trace, trace.config.recurrent_layers - 1, token)
}

/// [`build_token_series`] for recurrent layer `within` instead of the last.
pub fn build_layer_token_series<T: Scalar>(trace: &Trace<T>, within: usize, token: usize) -> Result<Vec<f64>> {
    let rows = layer_rows(trace, within, token)?;
    let (last, rest) = rows.split_last().expect("at least nine rows");
    rest.iter()
        .map(|r| cosine_similarity(r, last).map(|c| c.value.as_f64()))
        .collect()
}

/// Norm counterpart: `||x_r - x_l|| / ||x_l||`.
pub fn build_token_norm_series<T: Scalar>(trace: &Trace<T>, token: usize) -> Result<Vec<f64>> {
    build_layer_token_norm_series(trace, trace.config.recurrent_layers - 1, token)
}

pub fn build_layer_token_norm_series<T: Scalar>(trace: &Trace<T>, within: usize, token: usize) -> Result<Vec<f64>> {
    let rows = layer_rows(trace, within, token)?;
    let (last, rest) = rows.split_last().expect("at least nine rows");
    let scale = norm2(last).as_f64();
    Ok(rest
        .iter()
        .map(|r| {
            let d: T = r.iter().zip(last.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let d = d.sqrt().as_f64();
            if scale > 0.0 {
                d / scale
            } else {
                d
            }
        })
        .collect())
}
