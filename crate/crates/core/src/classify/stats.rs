use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::series::{LabelKind, SeriesLabel};
use crate::error::{Error, Result};
use crate::table::{ColumnKind, Table};

/// One classified series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenLabel {
    pub example: usize,
    pub token: usize,
    pub layer: usize,
    pub label: SeriesLabel,
}

pub const LABEL_COLUMNS: [(&str, ColumnKind); 7] = [
    ("example", ColumnKind::Int),
    ("token", ColumnKind::Int),
    ("layer", ColumnKind::Int),
    ("kind", ColumnKind::Text),
    ("freq", ColumnKind::OptFloat),
    ("amp", ColumnKind::OptFloat),
    ("slope", ColumnKind::OptFloat),
];

pub fn label_table(labels: &[TokenLabel]) -> Result<Table> {
    let mut t = Table::new(&LABEL_COLUMNS);
    for l in labels {
        t.push(vec![
            l.example.into(),
            l.token.into(),
            l.layer.into(),
            l.label.kind().name().into(),
            l.label.freq().into(),
            l.label.amp().into(),
            l.label.slope().into(),
        ])?;
    }
    Ok(t)
}

/// Share of each behaviour within one scope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub fixed_point: f64,
    pub orbit: f64,
    pub slider: f64,
    pub unknown: f64,
    pub non_fixed_point: f64,
}

impl Fractions {
    pub fn get(&self, kind: LabelKind) -> f64 {
        match kind {
            LabelKind::FixedPoint => self.fixed_point,
            LabelKind::Orbit => self.orbit,
            LabelKind::Slider => self.slider,
            LabelKind::Unknown => self.unknown,
        }
    }

    /// Percentages keyed like the published tables.
    pub fn percent_json(&self) -> serde_json::Value {
        serde_json::json!({
            "Non-Fixed-Point %": 100.0 * self.non_fixed_point,
            "Orbit %": 100.0 * self.orbit,
            "Slider %": 100.0 * self.slider,
            "Unknown %": 100.0 * self.unknown,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelStatistics {
    pub series_count: usize,
    pub token_count: usize,
    pub example_count: usize,
    /// Over every classified series; sums to one.
    pub series: Fractions,
    /// Fraction of examples in which any token shows the behaviour.
    pub examples: Fractions,
    /// `conditional[a][b] = P(a at some layer | b at some layer)` over
    /// tokens, in [`LabelKind::ALL`] order; `None` when `b` never occurs.
    pub conditional: Vec<Vec<Option<f64>>>,
}

impl LabelStatistics {
    pub fn to_json(&self) -> serde_json::Value {
        let names: Vec<&str> = LabelKind::ALL.iter().map(|k| k.name()).collect();
        let mut cond = serde_json::Map::new();
        for (a, row) in LabelKind::ALL.iter().zip(&self.conditional) {
            let inner = LabelKind::ALL
                .iter()
                .zip(row)
                .map(|(b, p)| (b.name().to_string(), serde_json::json!(p)))
                .collect();
            cond.insert(a.name().to_string(), serde_json::Value::Object(inner));
        }
        serde_json::json!({
            "series_count": self.series_count,
            "token_count": self.token_count,
            "example_count": self.example_count,
            "tokens": self.series.percent_json(),
            "examples": self.examples.percent_json(),
            "kinds": names,
            "conditional": cond,
        })
    }
}

fn fractions(counts: &BTreeMap<LabelKind, usize>, total: usize, non_fixed: usize) -> Fractions {
    let f = |k| *counts.get(&k).unwrap_or(&0) as f64 / total as f64;
    Fractions {
        fixed_point: f(LabelKind::FixedPoint),
        orbit: f(LabelKind::Orbit),
        slider: f(LabelKind::Slider),
        unknown: f(LabelKind::Unknown),
        non_fixed_point: non_fixed as f64 / total as f64,
    }
}

pub fn label_statistics(labels: &[TokenLabel]) -> Result<LabelStatistics> {
    if labels.is_empty() {
        return Err(Error::Empty("label set"));
    }
    let mut counts = BTreeMap::new();
    let mut per_token: BTreeMap<(usize, usize), BTreeSet<LabelKind>> = BTreeMap::new();
    let mut per_example: BTreeMap<usize, BTreeSet<LabelKind>> = BTreeMap::new();
    for l in labels {
        let k = l.label.kind();
        *counts.entry(k).or_insert(0) += 1;
        per_token.entry((l.example, l.token)).or_default().insert(k);
        per_example.entry(l.example).or_default().insert(k);
    }
    let non_fixed = labels.len() - counts.get(&LabelKind::FixedPoint).copied().unwrap_or(0);
    let series = fractions(&counts, labels.len(), non_fixed);

    let mut ex_counts = BTreeMap::new();
    let mut ex_non_fixed = 0;
    for kinds in per_example.values() {
        for &k in kinds {
            *ex_counts.entry(k).or_insert(0) += 1;
        }
        if kinds.iter().any(|&k| k != LabelKind::FixedPoint) {
            ex_non_fixed += 1;
        }
    }
    let examples = fractions(&ex_counts, per_example.len(), ex_non_fixed);

    let conditional = LabelKind::ALL
        .iter()
        .map(|a| {
            LabelKind::ALL
                .iter()
                .map(|b| {
                    let with_b = per_token.values().filter(|s| s.contains(b)).count();
                    let both = per_token.values().filter(|s| s.contains(a) && s.contains(b)).count();
                    (with_b > 0).then(|| both as f64 / with_b as f64)
                })
                .collect()
        })
        .collect();

    Ok(LabelStatistics {
        series_count: labels.len(),
        token_count: per_token.len(),
        example_count: per_example.len(),
        series,
        examples,
        conditional,
    })
}
