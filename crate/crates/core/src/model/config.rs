use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::NormKind;

/// Where normalization sits inside a block.
///
/// * `PreNorm`: `h = x + attn(n(x))`, `x' = h + mlp(n(h))`.
/// * `HuginnSandwich`: `h = n(x + attn(n(x)))`, `x' = n(h + mlp(n(h)))`.
/// * `OuroSandwich`: `h = x + n(attn(n(x)))`, `x' = h + n(mlp(n(h)))`, plus
///   a residual-stream norm after every full pass of the recurrent stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormScheme {
    PreNorm,
    HuginnSandwich,
    OuroSandwich,
}

impl NormScheme {
    pub const ALL: [NormScheme; 3] = [
        NormScheme::PreNorm,
        NormScheme::HuginnSandwich,
        NormScheme::OuroSandwich,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NormScheme::PreNorm => "pre_norm",
            NormScheme::HuginnSandwich => "huginn_sandwich",
            NormScheme::OuroSandwich => "ouro_sandwich",
        }
    }

    /// Which of the four per-block norm sites are active:
    /// attention input, attention output / post-residual, MLP input,
    /// MLP output / post-residual.
    pub fn sites(self) -> [bool; 4] {
        match self {
            NormScheme::PreNorm => [true, false, true, false],
            NormScheme::HuginnSandwich | NormScheme::OuroSandwich => [true; 4],
        }
    }

    pub fn norm_after_loop(self) -> bool {
        matches!(self, NormScheme::OuroSandwich)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Positional {
    None,
    #[default]
    Rotary,
}

/// Full architectural description of a `(p, k, c)` looped transformer,
/// optionally with input injection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    #[serde(default)]
    pub prelude_layers: usize,
    pub recurrent_layers: usize,
    #[serde(default)]
    pub coda_layers: usize,
    pub norm_scheme: NormScheme,
    #[serde(default)]
    pub norm_kind: NormKind,
    #[serde(default)]
    pub input_injection: bool,
    #[serde(default = "default_sigma")]
    pub injection_sigma: f64,
    #[serde(default)]
    pub positional: Positional,
    #[serde(default = "default_rope_base")]
    pub rope_base: f64,
    /// Hidden width of the MLP; 0 means `4 * d_model`.
    #[serde(default)]
    pub mlp_hidden: usize,
    #[serde(default)]
    pub mlp_gated: bool,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Size of the token embedding table; 0 for models driven by raw
    /// embeddings only.
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Seed for the initial recurrent state; derived from `seed` when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub injection_seed: Option<u64>,
}

/// Offset applied to `seed` when no explicit injection seed is given.
pub const INJECTION_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn default_sigma() -> f64 {
    1.0
}

fn default_rope_base() -> f64 {
    10_000.0
}

fn default_init_std() -> f64 {
    0.02
}

impl ModelConfig {
    /// A `(p, k, c)` model with `n_heads` heads splitting `d_model`, all
    /// other fields at their defaults.
    pub fn looped(
        d_model: usize,
        n_heads: usize,
        (prelude_layers, recurrent_layers, coda_layers): (usize, usize, usize),
        norm_scheme: NormScheme,
        input_injection: bool,
    ) -> Self {
        Self {
            d_model,
            n_heads,
            d_head: d_model / n_heads.max(1),
            prelude_layers,
            recurrent_layers,
            coda_layers,
            norm_scheme,
            norm_kind: NormKind::Rms,
            input_injection,
            injection_sigma: default_sigma(),
            positional: Positional::Rotary,
            rope_base: default_rope_base(),
            mlp_hidden: 0,
            mlp_gated: false,
            init_std: default_init_std(),
            vocab_size: 0,
            seed: 0,
            injection_seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn z0_seed(&self) -> u64 {
        self.injection_seed
            .unwrap_or(self.seed.wrapping_add(INJECTION_SEED_OFFSET))
    }

    pub fn hidden(&self) -> usize {
        if self.mlp_hidden == 0 {
            4 * self.d_model
        } else {
            self.mlp_hidden
        }
    }

    /// `p + k + c`.
    pub fn unique_layers(&self) -> usize {
        self.prelude_layers + self.recurrent_layers + self.coda_layers
    }

    /// Number of block applications for `loops` recurrences.
    pub fn realized_depth(&self, loops: usize) -> usize {
        self.prelude_layers + loops * self.recurrent_layers + self.coda_layers
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.d_model == 0 || self.n_heads == 0 || self.d_head == 0 {
            return bad("d_model, n_heads and d_head must be positive".into());
        }
        if self.n_heads * self.d_head != self.d_model {
            return bad(format!(
                "n_heads * d_head = {} * {} != d_model = {}",
                self.n_heads, self.d_head, self.d_model
            ));
        }
        if self.recurrent_layers == 0 {
            return bad("recurrent_layers must be at least 1".into());
        }
        if self.positional == Positional::Rotary && !self.d_head.is_multiple_of(2) {
            return bad(format!("rotary embedding needs an even d_head, got {}", self.d_head));
        }
        if !(self.injection_sigma.is_finite() && self.injection_sigma > 0.0) {
            return bad(format!("injection_sigma must be positive, got {}", self.injection_sigma));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return bad(format!("init_std must be non-negative, got {}", self.init_std));
        }
        if !(self.rope_base.is_finite() && self.rope_base > 1.0) {
            return bad(format!("rope_base must exceed 1, got {}", self.rope_base));
        }
        Ok(())
    }

    /// Short label such as `(2,4,2)_I`.
    pub fn structure_label(&self) -> String {
        format!(
            "({},{},{}){}",
            self.prelude_layers,
            self.recurrent_layers,
            self.coda_layers,
            if self.input_injection { "_I" } else { "" }
        )
    }
}
