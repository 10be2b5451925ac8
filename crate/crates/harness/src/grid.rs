//! Norm scheme x injection x seed stability grid.

use loopscope_core::dynamics::{cyclic_shift_check, fixed_point_report, CyclicShiftReport};
use loopscope_core::model::{Looped, NormScheme};
use loopscope_core::table::{ColumnKind, Table};
use loopscope_core::Error;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::output::Artifacts;
use crate::setup::{build_input, ModelSource};
use crate::spec::{ExperimentKind, ExperimentSpec};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "message")]
pub enum CellStatus {
    Ok,
    Diverged(String),
    Failed(String),
}

impl CellStatus {
    pub fn name(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Diverged(_) => "diverged",
            CellStatus::Failed(_) => "failed",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CellStatus::Ok => "",
            CellStatus::Diverged(m) | CellStatus::Failed(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub scheme: NormScheme,
    pub injection: bool,
    pub seed: u64,
    pub status: CellStatus,
    /// Cosine of the first recurrent layer to its own fixed point, one
    /// entry per recurrence.
    pub first_layer_cosine: Vec<f64>,
    /// Smallest cosine of any layer to the first layer's fixed point.
    pub min_cosine_to_first: Vec<f64>,
    pub converged: Option<bool>,
    pub degenerate: Option<bool>,
    pub min_fixed_point_cosine: Option<f64>,
    pub first_layer_window_statistic: Option<f64>,
    /// Cyclic-shift check, run on converged cells only.
    pub prop1: Option<CyclicShiftReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub scheme: NormScheme,
    pub injection: bool,
    /// Seeds whose cell finished.
    pub seeds: Vec<u64>,
    pub first_layer_cosine: Vec<f64>,
    pub first_layer_std: Vec<f64>,
    pub min_cosine_to_first: Vec<f64>,
    pub min_cosine_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityGridResult {
    pub loops: usize,
    pub reference: usize,
    pub cells: Vec<GridCell>,
    pub mean_curves: Vec<MeanCurve>,
}

impl StabilityGridResult {
    pub fn cell(&self, scheme: NormScheme, injection: bool, seed: u64) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.injection == injection && c.seed == seed)
    }

    pub fn cells_for(&self, scheme: NormScheme, injection: bool) -> impl Iterator<Item = &GridCell> {
        self.cells
            .iter()
            .filter(move |c| c.scheme == scheme && c.injection == injection)
    }

    pub fn any_diverged(&self) -> bool {
        self.cells.iter().any(|c| matches!(c.status, CellStatus::Diverged(_)))
    }
}

fn run_cell(spec: &ExperimentSpec, scheme: NormScheme, injection: bool, seed: u64) -> GridCell {
    let mut cell = GridCell {
        scheme,
        injection,
        seed,
        status: CellStatus::Ok,
        first_layer_cosine: Vec::new(),
        min_cosine_to_first: Vec::new(),
        converged: None,
        degenerate: None,
        min_fixed_point_cosine: None,
        first_layer_window_statistic: None,
        prop1: None,
    };
    if let Err(e) = fill_cell(spec, &mut cell) {
        cell.status = match e {
            HarnessError::Core(Error::Diverged { .. }) => CellStatus::Diverged(e.to_string()),
            other => CellStatus::Failed(other.to_string()),
        };
    }
    cell
}

fn fill_cell(spec: &ExperimentSpec, cell: &mut GridCell) -> Result<()> {
    let mut base = spec.base_model();
    base.norm_scheme = cell.scheme;
    base.input_injection = cell.injection;
    let source = ModelSource::Random(base);
    let (config, weights) = source.instantiate(cell.seed, spec.ablate_mlp_layer)?;
    let input = build_input(spec, &config, &weights, cell.seed)?;
    let model = Looped::new(&config, &weights, input.rows())?;
    let trace = model.run(&input, spec.loops, &spec.capture())?;
    let report = fixed_point_report(&trace, &spec.fixed_point_params())?;
    cell.first_layer_cosine = report.first_layer_cosines().to_vec();
    cell.min_cosine_to_first = report.min_cosine_to_first.clone();
    cell.converged = Some(report.converged);
    cell.degenerate = Some(report.degenerate);
    cell.min_fixed_point_cosine = Some(report.min_fixed_point_cosine);
    cell.first_layer_window_statistic = Some(report.layers[0].window_statistic);
    if report.converged {
        let state = trace.loop_states.last().expect("at least one recurrence");
        cell.prop1 = Some(cyclic_shift_check(
            &model,
            state,
            trace.injected_input.as_ref(),
            spec.grid.prop1_max_iterations,
            spec.grid.prop1_tolerance,
        )?);
    }
    Ok(())
}

fn mean_std(columns: &[&Vec<f64>], i: usize) -> (f64, f64) {
    let n = columns.len() as f64;
    let mean = columns.iter().map(|c| c[i]).sum::<f64>() / n;
    let var = columns.iter().map(|c| (c[i] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn mean_curves(spec: &ExperimentSpec, cells: &[GridCell]) -> Vec<MeanCurve> {
    let mut out = Vec::new();
    for &scheme in &spec.grid.schemes {
        for &injection in &spec.grid.injection {
            let done: Vec<&GridCell> = cells
                .iter()
                .filter(|c| c.scheme == scheme && c.injection == injection && c.status == CellStatus::Ok)
                .collect();
            let first: Vec<&Vec<f64>> = done.iter().map(|c| &c.first_layer_cosine).collect();
            let min: Vec<&Vec<f64>> = done.iter().map(|c| &c.min_cosine_to_first).collect();
            let len = if done.is_empty() { 0 } else { spec.loops };
            let (fm, fs): (Vec<f64>, Vec<f64>) = (0..len).map(|i| mean_std(&first, i)).unzip();
            let (mm, ms): (Vec<f64>, Vec<f64>) = (0..len).map(|i| mean_std(&min, i)).unzip();
            out.push(MeanCurve {
                scheme,
                injection,
                seeds: done.iter().map(|c| c.seed).collect(),
                first_layer_cosine: fm,
                first_layer_std: fs,
                min_cosine_to_first: mm,
                min_cosine_std: ms,
            });
        }
    }
    out
}

/// Run every cell of the grid. Cells run in parallel on the current rayon
/// pool; the result order is scheme, then injection, then seed, as listed
/// in the spec. A failing cell is recorded and the grid continues.
pub fn run_stability_grid(spec: &ExperimentSpec) -> Result<StabilityGridResult> {
    if spec.kind != ExperimentKind::StabilityGrid {
        return Err(HarnessError::Spec(format!("expected a stability_grid spec, got {}", spec.kind.name())));
    }
    spec.validate()?;
    let mut jobs = Vec::new();
    for &scheme in &spec.grid.schemes {
        for &injection in &spec.grid.injection {
            for &seed in &spec.seeds {
                jobs.push((scheme, injection, seed));
            }
        }
    }
    let cells: Vec<GridCell> = jobs
        .into_par_iter()
        .map(|(scheme, injection, seed)| run_cell(spec, scheme, injection, seed))
        .collect();
    Ok(StabilityGridResult {
        loops: spec.loops,
        reference: spec.fixed_point_params().reference,
        mean_curves: mean_curves(spec, &cells),
        cells,
    })
}

pub const CELL_COLUMNS: [(&str, ColumnKind); 15] = [
    ("scheme", ColumnKind::Text),
    ("injection", ColumnKind::Bool),
    ("seed", ColumnKind::Int),
    ("status", ColumnKind::Text),
    ("message", ColumnKind::Text),
    ("converged", ColumnKind::OptBool),
    ("degenerate", ColumnKind::OptBool),
    ("min_fixed_point_cosine", ColumnKind::OptFloat),
    ("first_layer_window_statistic", ColumnKind::OptFloat),
    ("first_layer_final_cosine", ColumnKind::OptFloat),
    ("min_cosine_final", ColumnKind::OptFloat),
    ("prop1_residual", ColumnKind::OptFloat),
    ("prop1_shifted_residual", ColumnKind::OptFloat),
    ("prop1_reached_fixed_point", ColumnKind::OptBool),
    ("prop1_holds", ColumnKind::OptBool),
];

pub const CURVE_COLUMNS: [(&str, ColumnKind); 6] = [
    ("scheme", ColumnKind::Text),
    ("injection", ColumnKind::Bool),
    ("seed", ColumnKind::Int),
    ("recurrence", ColumnKind::Int),
    ("first_layer_cosine", ColumnKind::Float),
    ("min_cosine_to_first", ColumnKind::Float),
];

pub const MEAN_CURVE_COLUMNS: [(&str, ColumnKind); 8] = [
    ("scheme", ColumnKind::Text),
    ("injection", ColumnKind::Bool),
    ("seeds", ColumnKind::Int),
    ("recurrence", ColumnKind::Int),
    ("first_layer_cosine", ColumnKind::Float),
    ("first_layer_std", ColumnKind::Float),
    ("min_cosine_to_first", ColumnKind::Float),
    ("min_cosine_std", ColumnKind::Float),
];

pub fn grid_artifacts(result: &StabilityGridResult) -> Result<Artifacts> {
    let mut cells = Table::new(&CELL_COLUMNS);
    let mut curves = Table::new(&CURVE_COLUMNS);
    for c in &result.cells {
        let prop1 = c.prop1.as_ref();
        cells.push(vec![
            c.scheme.name().into(),
            c.injection.into(),
            c.seed.into(),
            c.status.name().into(),
            c.status.message().into(),
            c.converged.into(),
            c.degenerate.into(),
            c.min_fixed_point_cosine.into(),
            c.first_layer_window_statistic.into(),
            c.first_layer_cosine.last().copied().into(),
            c.min_cosine_to_first.last().copied().into(),
            prop1.map(|p| p.residual).into(),
            prop1.map(|p| p.shifted_residual).into(),
            prop1.map(|p| p.reached_fixed_point).into(),
            prop1.map(|p| p.holds).into(),
        ])?;
        for (r, (&f, &m)) in c.first_layer_cosine.iter().zip(&c.min_cosine_to_first).enumerate() {
            curves.push(vec![
                c.scheme.name().into(),
                c.injection.into(),
                c.seed.into(),
                r.into(),
                f.into(),
                m.into(),
            ])?;
        }
    }
    let mut means = Table::new(&MEAN_CURVE_COLUMNS);
    for m in &result.mean_curves {
        for r in 0..m.first_layer_cosine.len() {
            means.push(vec![
                m.scheme.name().into(),
                m.injection.into(),
                m.seeds.len().into(),
                r.into(),
                m.first_layer_cosine[r].into(),
                m.first_layer_std[r].into(),
                m.min_cosine_to_first[r].into(),
                m.min_cosine_std[r].into(),
            ])?;
        }
    }
    let mut out = Artifacts::default();
    out.csv("grid_cells.csv", cells);
    out.csv("grid_curves.csv", curves);
    out.csv("grid_mean_curves.csv", means);
    out.json("grid.json", serde_json::to_value(result)?);
    Ok(out)
}
