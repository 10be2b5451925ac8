//! Experiment harness for looped transformer dynamics: TOML experiment
//! specs, the norm-scheme stability grid, single-model pipelines and
//! CSV/JSON output.
//!
//! ```
//! use loopscope::{ExperimentKind, ExperimentSpec};
//!
//! let spec = ExperimentSpec::from_toml("kind = \"classify\"\nloops = 16\n").unwrap();
//! assert_eq!(spec.kind, ExperimentKind::Classify);
//! assert_eq!(spec.reference, 128);
//! spec.validate().unwrap();
//! ```

pub mod error;
pub mod grid;
pub mod output;
pub mod pipelines;
pub mod setup;
pub mod spec;

pub use error::{HarnessError, Result};
pub use grid::{run_stability_grid, StabilityGridResult};
pub use output::{emit_outputs, Artifacts};
pub use spec::{load_spec, ExperimentKind, ExperimentSpec};

/// Artifacts of one experiment plus whether any forward pass diverged.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Artifacts,
    pub diverged: bool,
}

/// Run `spec` on a pool of `threads` workers (0 picks the core count).
/// The resolved spec is included as `spec.toml`. Output bytes do not
/// depend on the thread count.
pub fn run_experiment(spec: &ExperimentSpec, threads: usize) -> Result<Outcome> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Spec(format!("thread pool: {e}")))?;
    let (mut artifacts, diverged) = pool.install(|| -> Result<_> {
        Ok(match spec.kind {
            ExperimentKind::StabilityGrid => {
                let result = run_stability_grid(spec)?;
                (grid::grid_artifacts(&result)?, result.any_diverged())
            }
            ExperimentKind::Dynamics => (pipelines::run_dynamics(spec)?, false),
            ExperimentKind::Classify => (pipelines::run_classify(spec)?, false),
            ExperimentKind::Metrics => (pipelines::run_metrics(spec)?, false),
            ExperimentKind::Trajectory => (pipelines::run_trajectory(spec)?, false),
            ExperimentKind::Prop2Audit => (pipelines::run_prop2_audit(spec)?, false),
        })
    })?;
    artifacts.text("spec.toml", spec.to_toml());
    Ok(Outcome { artifacts, diverged })
}
