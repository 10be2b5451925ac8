use super::config::{ModelConfig, NormScheme, Positional};
use super::weights::{BlockWeights, ModelWeights};
use crate::error::{Error, Result};
use crate::linalg::{normalize, softmax_prefix, Matrix, NormKind};
use crate::scalar::Scalar;

/// Cached rotary angles for positions `0..len`, half-split pairing
/// `(i, i + d/2)`.
#[derive(Debug, Clone)]
pub struct Rope<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Scalar> Rope<T> {
    pub fn new(len: usize, d_head: usize, base: f64) -> Self {
        let half = d_head / 2;
        let mut cos = Vec::with_capacity(len * half);
        let mut sin = Vec::with_capacity(len * half);
        for pos in 0..len {
            for i in 0..half {
                let freq = base.powf(-2.0 * i as f64 / d_head as f64);
                let angle = pos as f64 * freq;
                cos.push(T::lit(angle.cos()));
                sin.push(T::lit(angle.sin()));
            }
        }
        Self { half, cos, sin }
    }

    pub fn len(&self) -> usize {
        self.cos.len().checked_div(self.half).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rotate one head's vector at position `pos` in place.
    pub fn apply(&self, v: &mut [T], pos: usize) {
        let h = self.half;
        let (c, s) = (&self.cos[pos * h..(pos + 1) * h], &self.sin[pos * h..(pos + 1) * h]);
        for i in 0..h {
            let (a, b) = (v[i], v[i + h]);
            v[i] = a * c[i] - b * s[i];
            v[i + h] = a * s[i] + b * c[i];
        }
    }
}

/// Everything one block application can report.
#[derive(Debug, Clone)]
pub struct BlockOutput<T> {
    pub output: Matrix<T>,
    /// One `T x T` causal attention matrix per head.
    pub attention: Vec<Matrix<T>>,
    /// `n1(x)`, the state the query/key projections see.
    pub attn_input: Matrix<T>,
    /// State after the attention sub-layer (`x-hat`).
    pub after_attn: Matrix<T>,
}

pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    T::lit(0.5) * x * (T::one() + (c * (x + T::lit(0.044_715) * x * x * x)).tanh())
}

fn norm_or_identity<T: Scalar>(x: Matrix<T>, gain: Option<&Vec<T>>, kind: NormKind) -> Result<Matrix<T>> {
    match gain {
        Some(g) => normalize(&x, g, kind),
        None => Ok(x),
    }
}

/// Causal multi-head attention on an already normed input. Returns the
/// projected output and the per-head attention matrices.
pub fn attention<T: Scalar>(
    normed: &Matrix<T>,
    block: &BlockWeights<T>,
    config: &ModelConfig,
    rope: Option<&Rope<T>>,
) -> Result<(Matrix<T>, Vec<Matrix<T>>)> {
    let t = normed.rows();
    let d = config.d_head;
    let q = normed.matmul(&block.wq)?;
    let k = normed.matmul(&block.wk)?;
    let v = normed.matmul(&block.wv)?;
    let scale = T::one() / T::from_count(d).sqrt();

    let mut concat = Matrix::zeros(t, config.d_model);
    let mut maps = Vec::with_capacity(config.n_heads);
    let mut qh = vec![T::zero(); t * d];
    let mut kh = vec![T::zero(); t * d];
    let mut logits = vec![T::zero(); t];
    for h in 0..config.n_heads {
        let cols = h * d..(h + 1) * d;
        for i in 0..t {
            qh[i * d..(i + 1) * d].copy_from_slice(&q.row(i)[cols.clone()]);
            kh[i * d..(i + 1) * d].copy_from_slice(&k.row(i)[cols.clone()]);
            if let Some(r) = rope {
                r.apply(&mut qh[i * d..(i + 1) * d], i);
                r.apply(&mut kh[i * d..(i + 1) * d], i);
            }
        }
        let mut a = Matrix::zeros(t, t);
        for i in 0..t {
            let qi = &qh[i * d..(i + 1) * d];
            for (j, l) in logits[..=i].iter_mut().enumerate() {
                let kj = &kh[j * d..(j + 1) * d];
                *l = qi.iter().zip(kj).map(|(&x, &y)| x * y).sum::<T>() * scale;
            }
            if logits[..=i].iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged {
                    recurrence: None,
                    layer: usize::MAX,
                });
            }
            softmax_prefix(&logits[..=i], &mut a.row_mut(i)[..=i]);
            let out = &mut concat.row_mut(i)[cols.clone()];
            for (j, &w) in a.row(i)[..=i].iter().enumerate() {
                for (o, &x) in out.iter_mut().zip(&v.row(j)[cols.clone()]) {
                    *o += w * x;
                }
            }
        }
        maps.push(a);
    }
    Ok((concat.matmul(&block.wo)?, maps))
}

/// Per-head attention matrices of `block` on an already normed input, with
/// rotary angles built for the input length when the config asks for them.
pub fn attention_maps<T: Scalar>(
    normed: &Matrix<T>,
    block: &BlockWeights<T>,
    config: &ModelConfig,
    rope_base: f64,
) -> Result<Vec<Matrix<T>>> {
    let rope = match config.positional {
        Positional::Rotary => Some(Rope::new(normed.rows(), config.d_head, rope_base)),
        Positional::None => None,
    };
    Ok(attention(normed, block, config, rope.as_ref())?.1)
}

pub fn mlp<T: Scalar>(normed: &Matrix<T>, block: &BlockWeights<T>) -> Result<Matrix<T>> {
    let mut hidden = normed.matmul(&block.mlp_in)?.map(gelu);
    if let Some(gate) = &block.mlp_gate {
        let g = normed.matmul(gate)?;
        for (h, &x) in hidden.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *h *= x;
        }
    }
    hidden.matmul(&block.mlp_out)
}

/// One block under the configured norm scheme; `layer` is only used to
/// label a divergence.
pub fn apply_block<T: Scalar>(
    x: &Matrix<T>,
    block: &BlockWeights<T>,
    config: &ModelConfig,
    rope: Option<&Rope<T>>,
    layer: usize,
) -> Result<BlockOutput<T>> {
    let diverged = || Error::Diverged {
        recurrence: None,
        layer,
    };
    if x.cols() != config.d_model {
        return Err(Error::shape(
            format!("{} columns", config.d_model),
            format!("{}", x.cols()),
        ));
    }
    if !x.is_finite() {
        return Err(diverged());
    }
    let kind = config.norm_kind;
    let g = &block.norms;
    let attn_input = norm_or_identity(x.clone(), g.attn_in.as_ref(), kind)?;
    let (attn_out, attention) = attention(&attn_input, block, config, rope).map_err(|e| match e {
        Error::Diverged { .. } => diverged(),
        other => other,
    })?;

    let after_attn = match config.norm_scheme {
        NormScheme::PreNorm => x.add(&attn_out)?,
        NormScheme::HuginnSandwich => norm_or_identity(x.add(&attn_out)?, g.attn_out.as_ref(), kind)?,
        NormScheme::OuroSandwich => x.add(&norm_or_identity(attn_out, g.attn_out.as_ref(), kind)?)?,
    };
    let mlp_input = norm_or_identity(after_attn.clone(), g.mlp_in.as_ref(), kind)?;
    let mlp_out = mlp(&mlp_input, block)?;
    let output = match config.norm_scheme {
        NormScheme::PreNorm => after_attn.add(&mlp_out)?,
        NormScheme::HuginnSandwich => norm_or_identity(after_attn.add(&mlp_out)?, g.mlp_out.as_ref(), kind)?,
        NormScheme::OuroSandwich => after_attn.add(&norm_or_identity(mlp_out, g.mlp_out.as_ref(), kind)?)?,
    };
    if !output.is_finite() {
        return Err(diverged());
    }
    Ok(BlockOutput {
        output,
        attention,
        attn_input,
        after_attn,
    })
}

/// Apply global layer `layer` of `weights` to `x`.
pub fn block_forward<T: Scalar>(
    x: &Matrix<T>,
    layer: usize,
    weights: &ModelWeights<T>,
    config: &ModelConfig,
) -> Result<BlockOutput<T>> {
    let (_, block) = weights.layer(layer)?;
    let rope = match config.positional {
        Positional::Rotary => Some(Rope::new(x.rows(), config.d_head, weights.rope_base)),
        Positional::None => None,
    };
    apply_block(x, block, config, rope.as_ref(), layer)
}
