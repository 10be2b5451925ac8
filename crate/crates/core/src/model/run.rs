use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::block::{apply_block, BlockOutput, Rope};
use super::config::{ModelConfig, Positional};
use super::weights::{ModelWeights, Stage};
use crate::error::{Error, Result};
use crate::linalg::{normalize, Matrix};
use crate::scalar::Scalar;

/// Which recurrent-layer records a trace keeps. Prelude and coda records
/// are always kept when their kind is captured.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Retention {
    #[default]
    All,
    /// Keep recurrent layers in `layers` (0-based within the stack) at every
    /// recurrence, and every layer during the final `last_recurrences`.
    Sparse {
        layers: Vec<usize>,
        last_recurrences: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Capture {
    pub residuals: bool,
    pub attentions: bool,
    /// Post-norm attention inputs `n1(x)`.
    pub attn_inputs: bool,
    pub retention: Retention,
}

impl Default for Capture {
    fn default() -> Self {
        Self::all()
    }
}

impl Capture {
    pub fn all() -> Self {
        Self {
            residuals: true,
            attentions: true,
            attn_inputs: true,
            retention: Retention::All,
        }
    }

    pub fn residuals_only() -> Self {
        Self {
            residuals: true,
            attentions: false,
            attn_inputs: false,
            retention: Retention::All,
        }
    }

    pub fn none() -> Self {
        Self {
            residuals: false,
            attentions: false,
            attn_inputs: false,
            retention: Retention::All,
        }
    }

    pub fn with_retention(mut self, retention: Retention) -> Self {
        self.retention = retention;
        self
    }

    fn keeps(&self, slot: &Slot, loops: usize) -> bool {
        match (&self.retention, slot.stage) {
            (_, Stage::Prelude | Stage::Coda) | (Retention::All, _) => true,
            (Retention::Sparse { layers, last_recurrences }, Stage::Recurrent) => {
                layers.contains(&slot.within) || slot.recurrence + last_recurrences >= loops
            }
        }
    }
}

/// Location of one realized-depth position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Slot {
    pub stage: Stage,
    /// Recurrence the position belongs to. Prelude positions sit in
    /// recurrence 0 and coda positions in the final recurrence.
    pub recurrence: usize,
    /// Global layer index (prelude, recurrent, coda order).
    pub layer: usize,
    /// Index within the stage.
    pub within: usize,
    /// Position within one `p + k + c` presentation group.
    pub group_slot: usize,
}

/// Recording of one run. Per-depth records are indexed by realized depth
/// `0..p + l*k + c`; entry `d` is the output of the `d`-th block application.
/// The weights are never copied into a trace.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub config: ModelConfig,
    pub loops: usize,
    pub capture: Capture,
    /// The state entering the first block.
    pub embedding: Matrix<T>,
    /// Prelude output fed to `W_I` at every recurrence.
    pub injected_input: Option<Matrix<T>>,
    /// `Z_0`.
    pub initial_state: Option<Matrix<T>>,
    /// Number of times `W_I` was applied.
    pub injection_count: usize,
    pub residuals: Vec<Option<Matrix<T>>>,
    /// Per head attention matrices.
    pub attentions: Vec<Option<Vec<Matrix<T>>>>,
    pub attn_inputs: Vec<Option<Matrix<T>>>,
    /// State carried out of each recurrence (after the loop norm if any).
    pub loop_states: Vec<Matrix<T>>,
    /// Output of the coda (or of the last recurrence when there is none).
    pub final_state: Matrix<T>,
}

impl<T: Scalar> Trace<T> {
    /// An empty trace with room for every depth; used by the runner and for
    /// building synthetic traces in analysis code.
    pub fn empty(config: ModelConfig, loops: usize, capture: Capture, embedding: Matrix<T>) -> Self {
        let depth = config.realized_depth(loops);
        Self {
            config,
            loops,
            capture,
            final_state: embedding.clone(),
            embedding,
            injected_input: None,
            initial_state: None,
            injection_count: 0,
            residuals: vec![None; depth],
            attentions: vec![None; depth],
            attn_inputs: vec![None; depth],
            loop_states: Vec::new(),
        }
    }

    pub fn depth(&self) -> usize {
        self.config.realized_depth(self.loops)
    }

    pub fn tokens(&self) -> usize {
        self.embedding.rows()
    }

    pub fn slot(&self, depth: usize) -> Slot {
        let c = &self.config;
        let (p, k) = (c.prelude_layers, c.recurrent_layers);
        let recurrent_end = p + self.loops * k;
        if depth < p {
            Slot {
                stage: Stage::Prelude,
                recurrence: 0,
                layer: depth,
                within: depth,
                group_slot: depth,
            }
        } else if depth < recurrent_end {
            let (r, j) = ((depth - p) / k, (depth - p) % k);
            Slot {
                stage: Stage::Recurrent,
                recurrence: r,
                layer: p + j,
                within: j,
                group_slot: p + j,
            }
        } else {
            let j = depth - recurrent_end;
            Slot {
                stage: Stage::Coda,
                recurrence: self.loops - 1,
                layer: p + k + j,
                within: j,
                group_slot: p + k + j,
            }
        }
    }

    /// Realized depth of recurrent layer `within` at recurrence `r`.
    pub fn recurrent_depth(&self, r: usize, within: usize) -> usize {
        self.config.prelude_layers + r * self.config.recurrent_layers + within
    }

    pub fn residual(&self, depth: usize) -> Result<&Matrix<T>> {
        lookup(&self.residuals, depth, "residual")
    }

    pub fn recurrent_residual(&self, r: usize, within: usize) -> Result<&Matrix<T>> {
        if r >= self.loops || within >= self.config.recurrent_layers {
            return Err(Error::IndexOutOfRange {
                what: "recurrent position",
                index: r * self.config.recurrent_layers + within,
                len: self.loops * self.config.recurrent_layers,
            });
        }
        self.residual(self.recurrent_depth(r, within))
    }

    pub fn attention(&self, depth: usize) -> Result<&[Matrix<T>]> {
        lookup(&self.attentions, depth, "attention").map(Vec::as_slice)
    }

    pub fn attn_input(&self, depth: usize) -> Result<&Matrix<T>> {
        lookup(&self.attn_inputs, depth, "attention input")
    }
}

fn lookup<'a, X>(v: &'a [Option<X>], depth: usize, what: &'static str) -> Result<&'a X> {
    match v.get(depth) {
        None => Err(Error::IndexOutOfRange {
            what: "depth",
            index: depth,
            len: v.len(),
        }),
        Some(None) => Err(Error::MissingCapture(what)),
        Some(Some(x)) => Ok(x),
    }
}

/// One step of the recurrent cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackOp {
    Inject,
    Block(usize),
    LoopNorm,
}

/// A model bound to a sequence length, ready to run.
#[derive(Debug, Clone)]
pub struct Looped<'a, T> {
    pub config: &'a ModelConfig,
    pub weights: &'a ModelWeights<T>,
    rope: Option<Rope<T>>,
}

impl<'a, T: Scalar> Looped<'a, T> {
    pub fn new(config: &'a ModelConfig, weights: &'a ModelWeights<T>, tokens: usize) -> Result<Self> {
        weights.check_against(config)?;
        let rope = match config.positional {
            Positional::Rotary => Some(Rope::new(tokens, config.d_head, weights.rope_base)),
            Positional::None => None,
        };
        Ok(Self { config, weights, rope })
    }

    fn block(&self, stage: Stage, i: usize, x: &Matrix<T>) -> Result<BlockOutput<T>> {
        let (blocks, offset) = match stage {
            Stage::Prelude => (&self.weights.prelude, 0),
            Stage::Recurrent => (&self.weights.recurrent, self.config.prelude_layers),
            Stage::Coda => (
                &self.weights.coda,
                self.config.prelude_layers + self.config.recurrent_layers,
            ),
        };
        if self.rope.as_ref().is_some_and(|r| r.len() < x.rows()) {
            return Err(Error::shape(
                format!("at most {} tokens", self.rope.as_ref().map_or(0, Rope::len)),
                format!("{}", x.rows()),
            ));
        }
        apply_block(x, &blocks[i], self.config, self.rope.as_ref(), offset + i)
    }

    /// `[X, Z] W_I`.
    pub fn inject(&self, x: &Matrix<T>, z: &Matrix<T>) -> Result<Matrix<T>> {
        let w = self
            .weights
            .injection
            .as_ref()
            .ok_or_else(|| Error::Config("model has no injection matrix".into()))?;
        x.hcat(z)?.matmul(w)
    }

    fn loop_norm(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.weights.loop_norm {
            Some(g) => normalize(x, g, self.config.norm_kind),
            None => Ok(x.clone()),
        }
    }

    /// The recurrent cycle as a list of operations: optional injection,
    /// every recurrent block, optional loop norm.
    pub fn cycle(&self) -> Vec<StackOp> {
        let mut ops = Vec::new();
        if self.config.input_injection {
            ops.push(StackOp::Inject);
        }
        ops.extend((0..self.config.recurrent_layers).map(StackOp::Block));
        if self.weights.loop_norm.is_some() {
            ops.push(StackOp::LoopNorm);
        }
        ops
    }

    /// Apply one cycle operation. `injected` is the prelude output `X`.
    pub fn apply_op(&self, op: StackOp, state: &Matrix<T>, injected: Option<&Matrix<T>>) -> Result<Matrix<T>> {
        match op {
            StackOp::Inject => {
                let x = injected.ok_or_else(|| Error::InvalidInput("injection needs the prelude output".into()))?;
                self.inject(x, state)
            }
            StackOp::Block(j) => Ok(self.block(Stage::Recurrent, j, state)?.output),
            StackOp::LoopNorm => self.loop_norm(state),
        }
    }

    /// Run one full cycle starting at operation `start` of [`Self::cycle`].
    pub fn rotated_cycle(&self, state: &Matrix<T>, start: usize, injected: Option<&Matrix<T>>) -> Result<Matrix<T>> {
        let ops = self.cycle();
        let mut s = state.clone();
        for i in 0..ops.len() {
            s = self.apply_op(ops[(start + i) % ops.len()], &s, injected)?;
        }
        Ok(s)
    }

    /// Initial recurrent state, `N(0, sigma^2)` entries seeded from the
    /// config's injection seed.
    pub fn initial_state(&self, tokens: usize) -> Result<Matrix<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.z0_seed());
        let dist = Normal::new(0.0, self.config.injection_sigma).map_err(|e| Error::Config(e.to_string()))?;
        let data = (0..tokens * self.config.d_model)
            .map(|_| T::lit(dist.sample(&mut rng)))
            .collect();
        Matrix::from_vec(tokens, self.config.d_model, data)
    }

    pub fn run(&self, input: &Matrix<T>, loops: usize, capture: &Capture) -> Result<Trace<T>> {
        if loops == 0 {
            return Err(Error::InvalidInput("loops must be at least 1".into()));
        }
        if input.rows() == 0 {
            return Err(Error::Empty("input sequence"));
        }
        if input.cols() != self.config.d_model {
            return Err(Error::shape(
                format!("{} columns", self.config.d_model),
                format!("{}", input.cols()),
            ));
        }
        input.ensure_finite("input embeddings")?;
        let mut trace = Trace::empty(self.config.clone(), loops, capture.clone(), input.clone());
        let mut depth = 0;
        let record = |trace: &mut Trace<T>, depth: &mut usize, out: BlockOutput<T>| -> Matrix<T> {
            let slot = trace.slot(*depth);
            if capture.keeps(&slot, loops) {
                if capture.attentions {
                    trace.attentions[*depth] = Some(out.attention);
                }
                if capture.attn_inputs {
                    trace.attn_inputs[*depth] = Some(out.attn_input);
                }
                if capture.residuals {
                    trace.residuals[*depth] = Some(out.output.clone());
                }
            }
            *depth += 1;
            out.output
        };

        let mut x = input.clone();
        for i in 0..self.config.prelude_layers {
            let out = self.block(Stage::Prelude, i, &x)?;
            x = record(&mut trace, &mut depth, out);
        }

        let mut state = if self.config.input_injection {
            let z0 = self.initial_state(input.rows())?;
            trace.injected_input = Some(x.clone());
            trace.initial_state = Some(z0.clone());
            z0
        } else {
            x.clone()
        };
        for r in 0..loops {
            if self.config.input_injection {
                state = self.inject(&x, &state)?;
                trace.injection_count += 1;
            }
            for j in 0..self.config.recurrent_layers {
                let out = self
                    .block(Stage::Recurrent, j, &state)
                    .map_err(|e| e.at_recurrence(r))?;
                state = record(&mut trace, &mut depth, out);
            }
            state = self.loop_norm(&state)?;
            trace.loop_states.push(state.clone());
        }

        for i in 0..self.config.coda_layers {
            let out = self.block(Stage::Coda, i, &state)?;
            state = record(&mut trace, &mut depth, out);
        }
        trace.final_state = state;
        Ok(trace)
    }
}

/// Run a `(p, k x loops, c)` model on `input` embeddings.
pub fn run_recurrent<T: Scalar>(
    input: &Matrix<T>,
    weights: &ModelWeights<T>,
    config: &ModelConfig,
    loops: usize,
    capture: &Capture,
) -> Result<Trace<T>> {
    Looped::new(config, weights, input.rows())?.run(input, loops, capture)
}
