use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use loopscope::output::ensure_writable;
use loopscope::setup::ModelSource;
use loopscope::{emit_outputs, load_spec, run_experiment, ExperimentKind, ExperimentSpec, HarnessError, Result};
use loopscope_core::model::{read_header, save_weights};

#[derive(Parser)]
#[command(name = "loopscope", version, about = "Looped transformer dynamics experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment spec (TOML). Defaults apply when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output directory; overrides the spec.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run a single seed; overrides the spec's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of recurrences; overrides the spec.
    #[arg(long)]
    loops: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Norm scheme x injection x seed convergence grid.
    StabilityGrid(Common),
    /// Fixed points, successive differences and similarity matrices.
    Dynamics(Common),
    /// Fixed point / orbit / slider labels per token.
    Classify(Common),
    /// Attention and residual metrics in every grouping.
    Metrics(Common),
    /// PCA trajectories through depth.
    Trajectory(Common),
    /// Attention perturbation bound audit.
    Prop2Audit(Common),
    /// Write a randomly initialised weight file to `<out>/weights.bin`.
    InitWeights(Common),
    /// Print a weight file's header as JSON.
    InspectWeights {
        path: PathBuf,
    },
}

fn resolve(kind: ExperimentKind, common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.spec {
        Some(path) => load_spec(path)?,
        None => ExperimentSpec::new(kind),
    };
    if spec.kind != kind {
        return Err(HarnessError::Spec(format!(
            "spec is for {}, not {}",
            spec.kind.name(),
            kind.name()
        )));
    }
    spec.apply_overrides(common.seed, common.loops, common.out.clone());
    spec.validate()?;
    Ok(spec)
}

fn experiment(kind: ExperimentKind, common: &Common) -> Result<bool> {
    let spec = resolve(kind, common)?;
    ensure_writable(&spec.output)?;
    let outcome = run_experiment(&spec, common.threads)?;
    emit_outputs(&outcome.artifacts, &spec.output)?;
    for name in outcome.artifacts.names() {
        println!("{}", spec.output.join(name).display());
    }
    Ok(outcome.diverged)
}

fn init_weights(common: &Common) -> Result<()> {
    let mut spec = match &common.spec {
        Some(path) => load_spec(path)?,
        None => ExperimentSpec::new(ExperimentKind::Dynamics),
    };
    spec.apply_overrides(common.seed, None, common.out.clone());
    if spec.weights.is_some() {
        return Err(HarnessError::Spec("init-weights needs a model config, not a weight file".into()));
    }
    let seed = spec.seeds.first().copied().unwrap_or_default();
    let source = ModelSource::Random(spec.base_model());
    let (config, weights) = source.instantiate(seed, None)?;
    ensure_writable(&spec.output)?;
    let path = spec.output.join("weights.bin");
    save_weights(&path, &config, &weights)?;
    println!("{}", path.display());
    Ok(())
}

fn inspect_weights(path: &PathBuf) -> Result<()> {
    let file = std::fs::File::open(path)?;
    let header = read_header(std::io::BufReader::new(file))?;
    let params: usize = header
        .tensors
        .values()
        .map(|t| t.shape.iter().product::<usize>())
        .sum();
    let summary = serde_json::json!({
        "version": header.version,
        "config": header.config,
        "rope_base": header.rope_base,
        "parameters": params,
        "tensors": header.tensors,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::StabilityGrid(c) => experiment(ExperimentKind::StabilityGrid, c),
        Command::Dynamics(c) => experiment(ExperimentKind::Dynamics, c),
        Command::Classify(c) => experiment(ExperimentKind::Classify, c),
        Command::Metrics(c) => experiment(ExperimentKind::Metrics, c),
        Command::Trajectory(c) => experiment(ExperimentKind::Trajectory, c),
        Command::Prop2Audit(c) => experiment(ExperimentKind::Prop2Audit, c),
        Command::InitWeights(c) => init_weights(c).map(|_| false),
        Command::InspectWeights { path } => inspect_weights(path).map(|_| false),
    };
    match result {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("error: at least one forward pass diverged");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
