//! End-to-end acceptance checks. Each test prints one line per criterion to
//! stderr (uncaptured) and fails if any of its criteria fail.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use loopscope::grid::{CellStatus, StabilityGridResult};
use loopscope::{run_experiment, run_stability_grid, ExperimentKind, ExperimentSpec};
use loopscope_core::classify::{classify_series, ClassifierParams, LabelKind};
use loopscope_core::dynamics::{prop2_audit, CYCLIC_SHIFT_TOL, FIXED_POINT_TOL};
use loopscope_core::linalg::real_fft_magnitudes;
use loopscope_core::metrics::{
    colsum_concentration, head_sink_score, matrix_entropy, mixing_score, sink_rate, sink_score, SinkMode,
};
use loopscope_core::model::{
    init_random, load_weights, random_embeddings, run_recurrent, save_weights, Capture, ModelConfig, NormScheme,
    Positional,
};
use loopscope_core::{Matrix64, Trace64, Weights64};

fn report(id: &str, pass: bool, detail: &str) -> bool {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {id}: {verdict} {detail}");
    pass
}

fn finish(results: &[bool]) {
    assert!(results.iter().all(|&p| p), "criteria failed, see the lines above");
}

struct Grid {
    result: StabilityGridResult,
    elapsed: Duration,
}

fn default_grid() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| {
        let spec = ExperimentSpec::new(ExperimentKind::StabilityGrid);
        let start = Instant::now();
        let result = run_stability_grid(&spec).unwrap();
        Grid {
            result,
            elapsed: start.elapsed(),
        }
    })
}

/// Recurrence 96, 0-based.
const BY: usize = 95;

#[test]
fn criterion_1_stability_grid() {
    let grid = default_grid();
    let g = &grid.result;
    let _ = writeln!(
        std::io::stderr(),
        "criterion 1: info grid of {} cells, {} loops, ran in {:.1} s",
        g.cells.len(),
        g.loops,
        grid.elapsed.as_secs_f64()
    );
    let mut results = vec![report(
        "1 complete",
        g.cells.len() == 18 && g.cells.iter().all(|c| c.status == CellStatus::Ok),
        "all 18 cells finished",
    )];

    let cells: Vec<_> = g.cells_for(NormScheme::PreNorm, true).collect();
    let first = cells
        .iter()
        .flat_map(|c| c.first_layer_cosine[BY..].iter())
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let spread = cells
        .iter()
        .flat_map(|c| c.min_cosine_to_first.iter())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    results.push(report(
        "1a",
        first >= 0.999 && spread < 0.99,
        &format!("PreNorm+inj: min layer-1 cosine from recurrence 96 = {first:.6} (>= 0.999), max min-over-layers cosine = {spread:.6} (< 0.99)"),
    ));

    let cells: Vec<_> = g.cells_for(NormScheme::PreNorm, false).collect();
    let low = |f: fn(&loopscope::grid::GridCell) -> &Vec<f64>| {
        cells
            .iter()
            .flat_map(|c| f(c)[BY..].iter())
            .fold(f64::INFINITY, |a, &b| a.min(b))
    };
    let (first, spread) = (low(|c| &c.first_layer_cosine), low(|c| &c.min_cosine_to_first));
    let at_96: Vec<String> = cells
        .iter()
        .map(|c| format!("{:.4}/{:.4}", c.first_layer_cosine[BY], c.min_cosine_to_first[BY]))
        .collect();
    results.push(report(
        "1b",
        first >= 0.999 && spread >= 0.999,
        &format!(
            "PreNorm-inj: min from recurrence 96 of layer-1 cosine = {first:.6}, of min-over-layers cosine = {spread:.6} (both >= 0.999); per seed at 96: {}",
            at_96.join(" ")
        ),
    ));

    for injection in [true, false] {
        let flags: Vec<bool> = g
            .cells_for(NormScheme::OuroSandwich, injection)
            .map(|c| c.converged == Some(true))
            .collect();
        let unconverged = flags.iter().filter(|&&f| !f).count();
        let sign = if injection { "+" } else { "-" };
        results.push(report(
            &format!("1c{sign}"),
            unconverged >= 2,
            &format!("Ouro{sign}inj: {unconverged} of 3 seeds not converged (need >= 2); converged flags {flags:?}"),
        ));
    }

    let flags: Vec<bool> = g
        .cells_for(NormScheme::HuginnSandwich, true)
        .map(|c| c.converged == Some(true))
        .collect();
    results.push(report(
        "1d",
        flags.iter().all(|&f| f),
        &format!("Huginn+inj converged flags {flags:?}"),
    ));
    finish(&results);
}

#[test]
fn criterion_3_cyclic_shift() {
    let g = &default_grid().result;
    let (mut checked, mut at_fixed_point, mut failures) = (0, 0, Vec::new());
    for c in g.cells.iter().filter(|c| c.converged == Some(true)) {
        let p = c.prop1.as_ref().expect("converged cells carry a shift check");
        checked += 1;
        if p.residual <= FIXED_POINT_TOL {
            at_fixed_point += 1;
            if p.shifted_residual > CYCLIC_SHIFT_TOL {
                failures.push(format!("{:?}/{}/{}: {:.3e}", c.scheme, c.injection, c.seed, p.shifted_residual));
            }
        }
    }
    finish(&[report(
        "3",
        checked > 0 && failures.is_empty(),
        &format!(
            "{checked} converged cells, {at_fixed_point} reached residual <= {FIXED_POINT_TOL:e}, {} shifted residuals above {CYCLIC_SHIFT_TOL:e} {failures:?}",
            failures.len()
        ),
    )]);
}

// ---- criterion 2 ----

/// `x @ w[:, cols]`.
fn project(x: &Matrix64, w: &Matrix64, cols: std::ops::Range<usize>) -> Vec<Vec<f64>> {
    (0..x.rows())
        .map(|i| {
            cols.clone()
                .map(|c| (0..x.cols()).map(|k| x[(i, k)] * w[(k, c)]).sum())
                .collect()
        })
        .collect()
}

fn rotate(v: &mut [f64], pos: usize, base: f64) {
    let h = v.len() / 2;
    for i in 0..h {
        let angle = pos as f64 * base.powf(-2.0 * i as f64 / v.len() as f64);
        let (a, b) = (v[i], v[i + h]);
        v[i] = a * angle.cos() - b * angle.sin();
        v[i + h] = a * angle.sin() + b * angle.cos();
    }
}

/// Causal softmax attention of one head, from the normed input.
fn oracle_attention(x: &Matrix64, w: &Weights64, c: &ModelConfig, layer: usize, head: usize) -> Matrix64 {
    let block = &w.recurrent[layer];
    let cols = head * c.d_head..(head + 1) * c.d_head;
    let mut q = project(x, &block.wq, cols.clone());
    let mut k = project(x, &block.wk, cols);
    if c.positional == Positional::Rotary {
        for (pos, (qi, ki)) in q.iter_mut().zip(k.iter_mut()).enumerate() {
            rotate(qi, pos, w.rope_base);
            rotate(ki, pos, w.rope_base);
        }
    }
    let t = x.rows();
    let mut a = Matrix64::zeros(t, t);
    for i in 0..t {
        let logits: Vec<f64> = (0..=i)
            .map(|j| q[i].iter().zip(&k[j]).map(|(x, y)| x * y).sum::<f64>() / (c.d_head as f64).sqrt())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for j in 0..=i {
            a[(i, j)] = (logits[j] - m).exp() / z;
        }
    }
    a
}

fn oracle_kappa(w: &Weights64, c: &ModelConfig, layer: usize, head: usize) -> f64 {
    let block = &w.recurrent[layer];
    let d = c.d_model;
    let cols = head * c.d_head..(head + 1) * c.d_head;
    let frob = |m: &Matrix64| {
        let mut s = 0.0;
        for i in 0..d {
            for j in cols.clone() {
                s += m[(i, j)] * m[(i, j)];
            }
        }
        s.sqrt()
    };
    match c.positional {
        Positional::Rotary => frob(&block.wq) * frob(&block.wk),
        Positional::None => {
            let mut s = 0.0;
            for i in 0..d {
                for j in 0..d {
                    let m: f64 = cols.clone().map(|a| block.wq[(i, a)] * block.wk[(j, a)]).sum();
                    s += m * m;
                }
            }
            s.sqrt()
        }
    }
}

fn frobenius_diff(a: &Matrix64, b: &Matrix64) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            s += (a[(i, j)] - b[(i, j)]).powi(2);
        }
    }
    s.sqrt()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn criterion_2_attention_bound() {
    let loops = 32;
    let (mut configs, mut checks, mut violations, mut mismatches) = (0, 0, 0, Vec::new());
    let mut worst: f64 = 0.0;
    for i in 0..24u64 {
        let scheme = NormScheme::ALL[i as usize % 3];
        let total = 4 + (i as usize * 5) % 13;
        let (p, c) = if i % 4 == 3 && total >= 6 { (1, 1) } else { (0, 0) };
        let mut config = ModelConfig::looped(32, 2, (p, total - p - c, c), scheme, i % 2 == 0).with_seed(1000 + i);
        config.positional = if i % 3 == 1 { Positional::None } else { Positional::Rotary };
        if i % 5 == 4 {
            config.init_std = 0.1;
        }
        let weights = init_random::<f64>(&config).unwrap();
        let x = random_embeddings::<f64>(8, 32, 2000 + i);
        let trace = run_recurrent(&x, &weights, &config, loops, &Capture::all()).unwrap();
        let records = prop2_audit(&trace, &weights).unwrap();
        configs += 1;
        let mut it = records.iter();
        for layer in 0..config.recurrent_layers {
            let kappas: Vec<f64> = (0..config.n_heads).map(|h| oracle_kappa(&weights, &config, layer, h)).collect();
            let input = |r: usize| trace.attn_input(trace.recurrent_depth(r, layer)).unwrap();
            let attn = |r: usize| trace.attention(trace.recurrent_depth(r, layer)).unwrap();
            let mut b = input(0).frobenius_norm();
            for r in 1..loops {
                b = b.max(input(r).frobenius_norm());
                let delta_x = frobenius_diff(input(r), input(r - 1));
                for (h, &kappa) in kappas.iter().enumerate() {
                    let a_now = oracle_attention(input(r), &weights, &config, layer, h);
                    let a_prev = oracle_attention(input(r - 1), &weights, &config, layer, h);
                    if frobenius_diff(&a_now, &attn(r)[h]) > 1e-10 {
                        mismatches.push(format!("config {i} layer {layer} recurrence {r}: captured attention"));
                    }
                    let lhs = frobenius_diff(&a_now, &a_prev);
                    let rhs = 0.5 * 2.0 * b * kappa / (config.d_head as f64).sqrt() * delta_x;
                    checks += 1;
                    if lhs > rhs {
                        violations += 1;
                    }
                    if rhs > 0.0 {
                        worst = worst.max(lhs / rhs);
                    }
                    let rec = it.next().expect("one record per head");
                    let agree = rec.recurrence == r
                        && rec.head == h
                        && rec.layer == p + layer
                        && rel_close(rec.kappa, kappa, 1e-9)
                        && rel_close(rec.bound_b, b, 1e-12)
                        && rel_close(rec.delta_x, delta_x, 1e-9)
                        && (rec.lhs - lhs).abs() <= 1e-10
                        && rel_close(rec.rhs, rhs, 1e-9)
                        && rec.holds == (rec.lhs <= rec.rhs + 1e-9);
                    if !agree {
                        mismatches.push(format!("config {i} layer {layer} recurrence {r} head {h}: {rec:?}"));
                    }
                }
            }
        }
        assert!(it.next().is_none());
    }
    mismatches.truncate(5);
    finish(&[report(
        "2",
        configs >= 20 && violations == 0 && mismatches.is_empty(),
        &format!(
            "{configs} configs, {checks} head checks, {violations} violations, max lhs/rhs {worst:.3e}, audit disagreements {mismatches:?}"
        ),
    )]);
}

// ---- criterion 4 ----

/// Head-averaged attention Frobenius distance between two depths.
fn attention_distance(trace: &Trace64, i: usize, j: usize) -> f64 {
    let (a, b) = (trace.attention(i).unwrap(), trace.attention(j).unwrap());
    a.iter().zip(b).map(|(x, y)| frobenius_diff(x, y)).sum::<f64>() / a.len() as f64
}

#[test]
fn criterion_4_lag_band() {
    let mut spec = ExperimentSpec::new(ExperimentKind::Dynamics);
    spec.loops = 8;
    let config = spec.base_model();
    let k = config.recurrent_layers;
    let n = config.realized_depth(spec.loops);
    let start = config.prelude_layers + k;
    let mut capture = Capture::none();
    capture.attentions = true;
    let mut results = Vec::new();
    for &seed in &spec.seeds {
        let config = config.clone().with_seed(seed);
        let weights = init_random::<f64>(&config).unwrap();
        let x = random_embeddings::<f64>(32, config.d_model, spec.input_seed(seed));
        let trace = run_recurrent(&x, &weights, &config, spec.loops, &capture).unwrap();
        let lag_mean = |lag: usize| {
            let vals: Vec<f64> = (start..n - lag).map(|i| attention_distance(&trace, i, i + lag)).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let (below, at, above) = (lag_mean(k - 1), lag_mean(k), lag_mean(k + 1));
        results.push(report(
            &format!("4 seed {seed}"),
            at < below && at < above,
            &format!("lag {} mean {below:.5}, lag {k} mean {at:.5}, lag {} mean {above:.5}", k - 1, k + 1),
        ));

        // the harness's own matrix must agree with the oracle
        let sim = loopscope_core::dynamics::pairwise_similarity(
            &trace,
            loopscope_core::dynamics::SimilarityKind::AttentionFrobenius,
        )
        .unwrap();
        assert!((sim.lag_mean(k, start).unwrap() - at).abs() < 1e-12);
    }
    finish(&results);
}

// ---- criterion 5 ----

fn naive_sink_rate(scores: &[f64], tau: f64) -> f64 {
    let mut hits = 0;
    for &s in scores {
        if s >= tau {
            hits += 1;
        }
    }
    hits as f64 / scores.len() as f64
}

#[test]
fn criterion_5_metric_oracles() {
    let mut rng = Mix::new(0x5EED);
    let mut worst = [0.0f64; 5];
    for case in 0..1000 {
        let t = 2 + rng.below(63);
        let a = random_stochastic(&mut rng, t, case % 2 == 0);
        worst[0] = worst[0].max((colsum_concentration(&a).unwrap() - naive_colsum(&a)).abs());
        let k = rng.below(t);
        worst[1] = worst[1].max((sink_score(&a, k).unwrap() - naive_sink(&a, k)).abs());
        worst[3] = worst[3].max((mixing_score(&a).unwrap() - naive_mixing(&a)).abs());
        worst[4] = worst[4].max((matrix_entropy(&a).unwrap() - naive_matrix_entropy(&a)).abs());

        // a few heads, scored at their strongest column
        let heads: Vec<Matrix64> = (0..4).map(|_| random_stochastic(&mut rng, t, true)).collect();
        let scores: Vec<f64> = heads.iter().map(|h| head_sink_score(h, SinkMode::Argmax).unwrap().1).collect();
        let naive_scores: Vec<f64> = heads
            .iter()
            .map(|h| (0..t).map(|j| naive_sink(h, j)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let tau = rng.range(0.05, 0.6);
        worst[2] = worst[2].max((sink_rate(&scores, tau).unwrap() - naive_sink_rate(&naive_scores, tau)).abs());
    }
    let names = ["colsum_concentration", "sink_score", "sink_rate", "mixing_score", "matrix_entropy"];
    let mut results = Vec::new();
    for (name, w) in names.iter().zip(worst) {
        results.push(report(&format!("5 {name}"), w <= 1e-12, &format!("max |diff| over 1000 matrices {w:.2e}")));
    }

    let mut edges = Vec::new();
    for t in [2, 7, 32, 64] {
        let uniform = Matrix64::filled(t, t, 1.0 / t as f64);
        let one_hot = Matrix64::from_fn(t, t, |_, j| if j == 0 { 1.0 } else { 0.0 });
        let identity = Matrix64::identity(t);
        let rank_one = Matrix64::from_fn(t, 2 * t, |i, j| (i + 1) as f64 * (j as f64 - 3.5));
        edges.push(("uniform C = 0", colsum_concentration(&uniform).unwrap() == 0.0));
        edges.push(("one-hot column C = 1", colsum_concentration(&one_hot).unwrap() == 1.0));
        edges.push(("one-hot sink = 1", sink_score(&one_hot, 0).unwrap() == 1.0));
        edges.push(("one-hot mixing = 0", mixing_score(&one_hot).unwrap() == 0.0));
        edges.push(("identity mixing = 0", mixing_score(&identity).unwrap() == 0.0));
        edges.push((
            "uniform mixing = log T",
            (mixing_score(&uniform).unwrap() - (t as f64).ln()).abs() <= 1e-12,
        ));
        edges.push(("rank-1 entropy = 0", matrix_entropy(&rank_one).unwrap() == 0.0));
    }
    let failed: Vec<&str> = edges.iter().filter(|e| !e.1).map(|e| e.0).collect();
    results.push(report(
        "5 edge cases",
        failed.is_empty(),
        &format!("{} checks, failed {failed:?}", edges.len()),
    ));
    finish(&results);
}

// ---- criterion 6 ----

#[test]
fn criterion_6_classifier() {
    let params = ClassifierParams::default();
    let n = 64;
    let mut results = Vec::new();

    let label = classify_series(&vec![1.0; n], &params).unwrap();
    results.push(report("6 constant", label.kind() == LabelKind::FixedPoint, &format!("{label:?}")));

    let sine: Vec<f64> = (0..n)
        .map(|i| 0.9 + 0.05 * (std::f64::consts::TAU * 8.0 * i as f64 / n as f64).sin())
        .collect();
    let label = classify_series(&sine, &params).unwrap();
    let ok = label.kind() == LabelKind::Orbit
        && label.freq() == Some(8.0 / 64.0)
        && label.amp().is_some_and(|a| (a - 0.05).abs() <= 0.15 * 0.05);
    results.push(report("6 sinusoid", ok, &format!("{label:?}")));

    let ramp: Vec<f64> = (0..n).map(|i| 0.5 + 0.4 * i as f64 / (n - 1) as f64).collect();
    let label = classify_series(&ramp, &params).unwrap();
    results.push(report("6 ramp", label.kind() == LabelKind::Slider, &format!("{label:?}")));

    let mut rng = Mix::new(42);
    let noise: Vec<f64> = (0..n).map(|_| rng.range(0.45, 0.55)).collect();
    let label = classify_series(&noise, &params).unwrap();
    results.push(report("6 noise", label.kind() == LabelKind::Unknown, &format!("{label:?}")));

    let mut worst: f64 = 0.0;
    for len in 4..=256 {
        let x: Vec<f64> = (0..len).map(|_| rng.range(-1.0, 1.0)).collect();
        let spec = real_fft_magnitudes(&x).unwrap();
        for (i, &m) in spec.magnitudes().iter().enumerate() {
            let expect = dft_magnitude(&x, i + 1);
            worst = worst.max((m - expect).abs() / expect.max(1e-300));
        }
    }
    results.push(report("6 fft", worst <= 1e-9, &format!("max relative error over n = 4..256 {worst:.2e}")));
    finish(&results);
}

// ---- criterion 7 ----

/// Mean token norm at every depth, averaged over seeds.
fn mean_residual_norms(scheme: NormScheme, injection: bool) -> Vec<f64> {
    let spec = ExperimentSpec::new(ExperimentKind::Metrics);
    let loops = 8;
    let mut base = spec.base_model();
    base.norm_scheme = scheme;
    base.input_injection = injection;
    let mut sum = vec![0.0; base.realized_depth(loops)];
    for &seed in &spec.seeds {
        let config = base.clone().with_seed(seed);
        let weights = init_random::<f64>(&config).unwrap();
        let x = random_embeddings::<f64>(32, config.d_model, spec.input_seed(seed));
        let trace = run_recurrent(&x, &weights, &config, loops, &Capture::residuals_only()).unwrap();
        for (d, s) in sum.iter_mut().enumerate() {
            let r = trace.residual(d).unwrap();
            let norms: f64 = (0..r.rows())
                .map(|i| r.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum();
            *s += norms / r.rows() as f64;
        }
    }
    sum.iter().map(|s| s / spec.seeds.len() as f64).collect()
}

fn cv(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

#[test]
fn criterion_7_residual_norm_signature() {
    let huginn = mean_residual_norms(NormScheme::HuginnSandwich, false);
    let pre = mean_residual_norms(NormScheme::PreNorm, false);
    let ratio = pre[pre.len() - 1] / pre[0];
    let results = [
        report("7 huginn", cv(&huginn) < 0.05, &format!("HuginnSandwich residual-norm CV {:.4} (< 0.05)", cv(&huginn))),
        report(
            "7 prenorm",
            ratio >= 2.0,
            &format!("PreNorm final/first residual norm {:.2}/{:.2} = {ratio:.2} (>= 2)", pre[pre.len() - 1], pre[0]),
        ),
    ];
    let huginn_inj = mean_residual_norms(NormScheme::HuginnSandwich, true);
    let pre_inj = mean_residual_norms(NormScheme::PreNorm, true);
    let _ = writeln!(
        std::io::stderr(),
        "criterion 7: info with injection, Huginn CV {:.4}, PreNorm final/first {:.2}",
        cv(&huginn_inj),
        pre_inj[pre_inj.len() - 1] / pre_inj[0]
    );
    finish(&results);
}

// ---- criterion 8 ----

fn rendered(spec: &ExperimentSpec, threads: usize) -> Vec<(String, String)> {
    run_experiment(spec, threads)
        .unwrap()
        .artifacts
        .files
        .iter()
        .map(|a| (a.name.clone(), a.content.render().unwrap()))
        .collect()
}

#[test]
fn criterion_8_determinism() {
    let mut results = Vec::new();
    let mut grid = ExperimentSpec::new(ExperimentKind::StabilityGrid);
    grid.model = Some(ModelConfig::looped(64, 4, (0, 4, 0), NormScheme::PreNorm, true));
    grid.sequence.random_embeddings = Some(8);
    grid.loops = 16;
    let mut dynamics = ExperimentSpec::new(ExperimentKind::Dynamics);
    dynamics.model = Some(ModelConfig::looped(64, 4, (1, 3, 1), NormScheme::OuroSandwich, true));
    dynamics.sequence.random_embeddings = Some(8);
    dynamics.loops = 6;
    for (name, spec) in [("grid", &grid), ("dynamics", &dynamics)] {
        let a = rendered(spec, 1);
        let same = a == rendered(spec, 1) && a == rendered(spec, 3);
        results.push(report(
            &format!("8 {name}"),
            same,
            &format!("{} files identical across reruns and 1 vs 3 threads", a.len()),
        ));
    }

    let dir = tempfile::tempdir().unwrap();
    let mut ok = true;
    for (i, scheme) in NormScheme::ALL.into_iter().enumerate() {
        let mut config = ModelConfig::looped(32, 2, (1, 2, 1), scheme, i != 1).with_seed(i as u64);
        config.vocab_size = 11;
        config.mlp_gated = i == 2;
        let w = init_random::<f64>(&config).unwrap();
        let (p, q) = (dir.path().join(format!("{i}a.bin")), dir.path().join(format!("{i}b.bin")));
        save_weights(&p, &config, &w).unwrap();
        let (c2, w2) = load_weights::<f64>(&p).unwrap();
        save_weights(&q, &c2, &w2).unwrap();
        let bits = |m: &Weights64| m.checksum();
        ok &= c2 == config && w2 == w && bits(&w2) == bits(&w);
        ok &= std::fs::read(&p).unwrap() == std::fs::read(&q).unwrap();
        let (_, w32) = load_weights::<f32>(&p).unwrap();
        ok &= w32.checksum() == init_random::<f32>(&config).unwrap().checksum();
    }
    results.push(report("8 weights", ok, "weight files round-trip bit-exactly in f64 and f32"));
    finish(&results);
}
