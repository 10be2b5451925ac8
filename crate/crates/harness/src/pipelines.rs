//! Single-model pipelines. Each runs every seed of the spec as one batch
//! and tags per-seed rows with a leading `seed` column.

use loopscope_core::classify::{
    build_layer_token_norm_series, build_layer_token_series, classify_series, ClassifierParams, label_statistics, label_table,
    SeriesKind, TokenLabel,
};
use loopscope_core::dynamics::{
    fixed_point_report, pairwise_similarity, pca_trajectory, prop2_audit, prop2_table, successive_cosines,
    successive_differences, SimilarityKind, LONG_COLUMNS, PROP2_COLUMNS, TRAJECTORY_COLUMNS,
};
use loopscope_core::metrics::{metric_over_batch, Grouping, MetricSeries, SERIES_COLUMNS};
use loopscope_core::model::Looped;
use loopscope_core::table::{Cell, ColumnKind, Table};
use loopscope_core::{Trace64, Weights64};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{HarnessError, Result};
use crate::output::Artifacts;
use crate::setup::{build_input, ModelSource};
use crate::spec::{ExperimentKind, ExperimentSpec};

/// Tolerance for the symmetry check on emitted similarity matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

struct SeedRun<T> {
    seed: u64,
    value: T,
}

/// Build each seed's model and input, run it and hand the trace to `f`.
/// Seeds run in parallel; results come back in spec order.
fn for_each_seed<T: Send>(
    spec: &ExperimentSpec,
    f: impl Fn(u64, Trace64, &Weights64) -> Result<T> + Sync,
) -> Result<Vec<SeedRun<T>>> {
    let source = ModelSource::from_spec(spec)?;
    let capture = spec.capture();
    spec.seeds
        .par_iter()
        .map(|&seed| {
            let (config, weights) = source.instantiate(seed, spec.ablate_mlp_layer)?;
            let input = build_input(spec, &config, &weights, seed)?;
            let trace = Looped::new(&config, &weights, input.rows())?.run(&input, spec.loops, &capture)?;
            Ok(SeedRun {
                seed,
                value: f(seed, trace, &weights)?,
            })
        })
        .collect()
}

fn expect_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<()> {
    if spec.kind != kind {
        return Err(HarnessError::Spec(format!(
            "expected a {} spec, got {}",
            kind.name(),
            spec.kind.name()
        )));
    }
    spec.validate()
}

fn seeded_columns(columns: &[(&'static str, ColumnKind)]) -> Table {
    let mut all = vec![("seed", ColumnKind::Int)];
    all.extend_from_slice(columns);
    Table::new(&all)
}

fn append_seeded(into: &mut Table, seed: u64, table: &Table) -> Result<()> {
    into.extend_from(&table.prefixed("seed", ColumnKind::Int, Cell::from(seed))?)?;
    Ok(())
}

struct DynamicsSeed {
    fixed_point: Option<Table>,
    differences: Option<Table>,
    cosines: Option<Table>,
    similarity: Vec<(SimilarityKind, Table)>,
    report: Value,
}

fn dynamics_seed(spec: &ExperimentSpec, seed: u64, trace: &Trace64) -> Result<DynamicsSeed> {
    let mut errors = Vec::new();
    let mut record_err = |stage: &str, e: loopscope_core::Error| {
        errors.push(json!({ "stage": stage, "error": e.to_string() }));
    };
    let params = spec.fixed_point_params();
    let mut out = DynamicsSeed {
        fixed_point: None,
        differences: None,
        cosines: None,
        similarity: Vec::new(),
        report: Value::Null,
    };
    let mut fp_json = Value::Null;
    match fixed_point_report(trace, &params) {
        Ok(r) => {
            out.fixed_point = Some(r.long_table()?);
            fp_json = json!({
                "converged": r.converged,
                "degenerate": r.degenerate,
                "min_fixed_point_cosine": r.min_fixed_point_cosine,
                "layers": r.layers.iter().map(|l| json!({
                    "layer": l.layer,
                    "window_statistic": l.window_statistic,
                    "converged": l.converged,
                    "reference_norm": l.reference_norm,
                })).collect::<Vec<_>>(),
                "params": r.params,
            });
        }
        Err(e) => record_err("fixed_point", e),
    }
    match successive_differences(trace) {
        Ok(s) => out.differences = Some(MetricSeries::table(&[s])?),
        Err(e) => record_err("successive_differences", e),
    }
    match successive_cosines(trace) {
        Ok(s) => out.cosines = Some(MetricSeries::table(&[s])?),
        Err(e) => record_err("successive_cosines", e),
    }
    let mut sims = Vec::new();
    let k = trace.config.recurrent_layers;
    let start = trace.config.prelude_layers + k;
    for kind in [SimilarityKind::AttentionFrobenius, SimilarityKind::ResidualCosine] {
        match pairwise_similarity(trace, kind) {
            Ok(m) => {
                let lags: Vec<Value> = (1..m.n)
                    .filter_map(|lag| m.lag_mean(lag, start).map(|v| json!([lag, v])))
                    .collect();
                sims.push(json!({
                    "kind": kind.name(),
                    "n": m.n,
                    "symmetric": m.is_symmetric(SYMMETRY_TOL),
                    "lag_means_from_second_recurrence": lags,
                }));
                out.similarity.push((kind, m.long_table()?));
            }
            Err(e) => record_err(kind.name(), e),
        }
    }
    out.report = json!({
        "seed": seed,
        "loops": trace.loops,
        "fixed_point": fp_json,
        "similarity": sims,
        "errors": errors,
    });
    Ok(out)
}

/// Fixed point report, successive differences and similarity matrices.
/// Analysis errors (too few recurrences, missing captures) are listed in
/// `report.json` instead of aborting the run.
pub fn run_dynamics(spec: &ExperimentSpec) -> Result<Artifacts> {
    expect_kind(spec, ExperimentKind::Dynamics)?;
    let runs = for_each_seed(spec, |seed, trace, _| dynamics_seed(spec, seed, &trace))?;
    let mut fixed = seeded_columns(&LONG_COLUMNS);
    let mut diffs = seeded_columns(&SERIES_COLUMNS);
    let mut coss = seeded_columns(&SERIES_COLUMNS);
    let mut attn = seeded_columns(&LONG_COLUMNS);
    let mut resid = seeded_columns(&LONG_COLUMNS);
    let mut reports = Vec::new();
    for run in runs {
        let d = run.value;
        if let Some(t) = &d.fixed_point {
            append_seeded(&mut fixed, run.seed, t)?;
        }
        if let Some(t) = &d.differences {
            append_seeded(&mut diffs, run.seed, t)?;
        }
        if let Some(t) = &d.cosines {
            append_seeded(&mut coss, run.seed, t)?;
        }
        for (kind, t) in &d.similarity {
            let target = match kind {
                SimilarityKind::AttentionFrobenius => &mut attn,
                SimilarityKind::ResidualCosine => &mut resid,
            };
            append_seeded(target, run.seed, t)?;
        }
        reports.push(d.report);
    }
    let mut out = Artifacts::default();
    out.csv("fixed_point.csv", fixed);
    out.csv("successive_differences.csv", diffs);
    out.csv("successive_cosines.csv", coss);
    out.csv("similarity_attention_frobenius.csv", attn);
    out.csv("similarity_residual_cosine.csv", resid);
    out.json("report.json", json!({ "kind": spec.kind.name(), "seeds": reports }));
    Ok(out)
}

/// Label the series of every recurrent layer and token of one trace.
pub fn label_trace(trace: &Trace64, params: &ClassifierParams, example: usize) -> Result<Vec<TokenLabel>> {
    let p = trace.config.prelude_layers;
    let mut out = Vec::new();
    for within in 0..trace.config.recurrent_layers {
        for token in 0..trace.tokens() {
            let series = match params.series_kind {
                SeriesKind::Similarity => build_layer_token_series(trace, within, token)?,
                SeriesKind::Norm => build_layer_token_norm_series(trace, within, token)?,
            };
            out.push(TokenLabel {
                example,
                token,
                layer: p + within,
                label: classify_series(&series, params)?,
            });
        }
    }
    Ok(out)
}

/// Label every (seed, recurrent layer, token) series and aggregate. Each
/// seed is one example; `example` indexes the spec's seed list.
pub fn run_classify(spec: &ExperimentSpec) -> Result<Artifacts> {
    expect_kind(spec, ExperimentKind::Classify)?;
    let runs = for_each_seed(spec, |seed, trace, _| {
        let example = spec.seeds.iter().position(|&s| s == seed).expect("seed from spec");
        label_trace(&trace, &spec.classifier, example)
    })?;
    let labels: Vec<TokenLabel> = runs.into_iter().flat_map(|r| r.value).collect();
    let stats = label_statistics(&labels)?;
    let mut out = Artifacts::default();
    out.csv("labels.csv", label_table(&labels)?);
    out.json(
        "stats.json",
        json!({
            "seeds": spec.seeds,
            "classifier": spec.classifier,
            "statistics": stats.to_json(),
        }),
    );
    Ok(out)
}

/// Every metric of the spec in all three groupings, averaged over seeds
/// with the population standard deviation in the `std` column.
pub fn run_metrics(spec: &ExperimentSpec) -> Result<Artifacts> {
    expect_kind(spec, ExperimentKind::Metrics)?;
    let traces: Vec<Trace64> = for_each_seed(spec, |_, trace, _| Ok(trace))?
        .into_iter()
        .map(|r| r.value)
        .collect();
    let mut out = Artifacts::default();
    for grouping in Grouping::ALL {
        let series = spec
            .metrics
            .iter()
            .map(|m| metric_over_batch(&traces, m, grouping))
            .collect::<loopscope_core::Result<Vec<_>>>()?;
        out.csv(format!("metrics_{}.csv", grouping.name()), MetricSeries::table(&series)?);
    }
    Ok(out)
}

/// Largest distance between matching points of the last two recurrences.
fn final_segment_gap(t: &loopscope_core::dynamics::Trajectory, loops: usize) -> Option<f64> {
    if loops < 2 {
        return None;
    }
    let (a, b) = (t.segment(loops - 2), t.segment(loops - 1));
    (a.len() == b.len() && !a.is_empty()).then(|| {
        a.iter()
            .zip(&b)
            .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .fold(0.0, f64::max)
    })
}

/// Two-dimensional PCA path of `spec.token` (or all tokens) per seed.
pub fn run_trajectory(spec: &ExperimentSpec) -> Result<Artifacts> {
    expect_kind(spec, ExperimentKind::Trajectory)?;
    let runs = for_each_seed(spec, |_, trace, _| Ok(pca_trajectory(&trace, spec.token)?))?;
    let mut table = seeded_columns(&TRAJECTORY_COLUMNS);
    let mut summary = Vec::new();
    for run in &runs {
        append_seeded(&mut table, run.seed, &run.value.table()?)?;
        summary.push(json!({
            "seed": run.seed,
            "variances": run.value.variances,
            "rank_deficient": run.value.rank_deficient,
            "final_segment_gap": final_segment_gap(&run.value, spec.loops),
        }));
    }
    let mut out = Artifacts::default();
    out.csv("trajectory.csv", table);
    out.json("trajectory.json", json!({ "token": spec.token, "seeds": summary }));
    Ok(out)
}

/// Attention-perturbation bound at every recurrent layer, recurrence and
/// head of every seed.
pub fn run_prop2_audit(spec: &ExperimentSpec) -> Result<Artifacts> {
    expect_kind(spec, ExperimentKind::Prop2Audit)?;
    let runs = for_each_seed(spec, |_, trace, weights| Ok(prop2_audit(&trace, weights)?))?;
    let mut table = seeded_columns(&PROP2_COLUMNS);
    let mut per_seed = Vec::new();
    let (mut checks, mut violations) = (0usize, 0usize);
    for run in &runs {
        append_seeded(&mut table, run.seed, &prop2_table(&run.value)?)?;
        let v = run.value.iter().filter(|r| !r.holds).count();
        let max_ratio = run
            .value
            .iter()
            .filter(|r| r.rhs > 0.0)
            .map(|r| r.lhs / r.rhs)
            .fold(0.0, f64::max);
        checks += run.value.len();
        violations += v;
        per_seed.push(json!({
            "seed": run.seed,
            "checks": run.value.len(),
            "violations": v,
            "max_lhs_over_rhs": max_ratio,
        }));
    }
    let mut out = Artifacts::default();
    out.csv("prop2.csv", table);
    out.json(
        "prop2_summary.json",
        json!({ "checks": checks, "violations": violations, "seeds": per_seed }),
    );
    Ok(out)
}
