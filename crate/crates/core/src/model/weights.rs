use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Gains for the four per-block norm sites; `None` where the scheme has no
/// norm at that site.
#[derive(Debug, Clone, PartialEq)]
pub struct NormGains<T> {
    pub attn_in: Option<Vec<T>>,
    pub attn_out: Option<Vec<T>>,
    pub mlp_in: Option<Vec<T>>,
    pub mlp_out: Option<Vec<T>>,
}

impl<T: Scalar> NormGains<T> {
    fn unit(config: &ModelConfig) -> Self {
        let sites = config.norm_scheme.sites();
        let make = |on: bool| on.then(|| vec![T::one(); config.d_model]);
        Self {
            attn_in: make(sites[0]),
            attn_out: make(sites[1]),
            mlp_in: make(sites[2]),
            mlp_out: make(sites[3]),
        }
    }

    pub(crate) fn sites(&self) -> [(&'static str, Option<&Vec<T>>); 4] {
        [
            ("attn_in", self.attn_in.as_ref()),
            ("attn_out", self.attn_out.as_ref()),
            ("mlp_in", self.mlp_in.as_ref()),
            ("mlp_out", self.mlp_out.as_ref()),
        ]
    }

    pub(crate) fn site_mut(&mut self, name: &str) -> Option<&mut Option<Vec<T>>> {
        match name {
            "attn_in" => Some(&mut self.attn_in),
            "attn_out" => Some(&mut self.attn_out),
            "mlp_in" => Some(&mut self.mlp_in),
            "mlp_out" => Some(&mut self.mlp_out),
            _ => None,
        }
    }
}

/// One transformer block. The query/key/value projections are `D x D`,
/// head `h` owning columns `h*d .. (h+1)*d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights<T> {
    pub wq: Matrix<T>,
    pub wk: Matrix<T>,
    pub wv: Matrix<T>,
    pub wo: Matrix<T>,
    pub mlp_in: Matrix<T>,
    pub mlp_gate: Option<Matrix<T>>,
    pub mlp_out: Matrix<T>,
    pub norms: NormGains<T>,
}

impl<T: Scalar> BlockWeights<T> {
    /// Query and key projections of one head, each `D x d`.
    pub fn head_qk(&self, head: usize, d_head: usize) -> (Matrix<T>, Matrix<T>) {
        let (a, b) = (head * d_head, (head + 1) * d_head);
        (self.wq.col_block(a, b), self.wk.col_block(a, b))
    }

    pub(crate) fn tensors(&self) -> Vec<(&'static str, &Matrix<T>)> {
        let mut v = vec![
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("mlp_in", &self.mlp_in),
        ];
        if let Some(g) = &self.mlp_gate {
            v.push(("mlp_gate", g));
        }
        v.push(("mlp_out", &self.mlp_out));
        v
    }
}

/// Which stack a block belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Prelude,
    Recurrent,
    Coda,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prelude => "prelude",
            Stage::Recurrent => "recurrent",
            Stage::Coda => "coda",
        }
    }
}

/// All learned tensors of a looped transformer. The recurrent stack is
/// stored once and reused by every recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub prelude: Vec<BlockWeights<T>>,
    pub recurrent: Vec<BlockWeights<T>>,
    pub coda: Vec<BlockWeights<T>>,
    /// `2D x D`, present iff the model uses input injection.
    pub injection: Option<Matrix<T>>,
    /// Gain of the residual norm applied after each recurrent pass.
    pub loop_norm: Option<Vec<T>>,
    /// `vocab x D` token embedding table.
    pub embedding: Option<Matrix<T>>,
    pub rope_base: f64,
}

impl<T: Scalar> ModelWeights<T> {
    /// Resolve a global layer index (prelude, then recurrent, then coda).
    pub fn layer(&self, index: usize) -> Result<(Stage, &BlockWeights<T>)> {
        let (p, k) = (self.prelude.len(), self.recurrent.len());
        if index < p {
            Ok((Stage::Prelude, &self.prelude[index]))
        } else if index < p + k {
            Ok((Stage::Recurrent, &self.recurrent[index - p]))
        } else if index < p + k + self.coda.len() {
            Ok((Stage::Coda, &self.coda[index - p - k]))
        } else {
            Err(Error::IndexOutOfRange {
                what: "layer",
                index,
                len: self.num_layers(),
            })
        }
    }

    pub fn layer_mut(&mut self, index: usize) -> Result<&mut BlockWeights<T>> {
        let (p, k, len) = (self.prelude.len(), self.recurrent.len(), self.num_layers());
        if index < p {
            Ok(&mut self.prelude[index])
        } else if index < p + k {
            Ok(&mut self.recurrent[index - p])
        } else if index < len {
            Ok(&mut self.coda[index - p - k])
        } else {
            Err(Error::IndexOutOfRange {
                what: "layer",
                index,
                len,
            })
        }
    }

    pub fn num_layers(&self) -> usize {
        self.prelude.len() + self.recurrent.len() + self.coda.len()
    }

    /// Check every tensor against the shapes `config` implies.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        let d = config.d_model;
        let h = config.hidden();
        let counts = [
            (self.prelude.len(), config.prelude_layers, "prelude"),
            (self.recurrent.len(), config.recurrent_layers, "recurrent"),
            (self.coda.len(), config.coda_layers, "coda"),
        ];
        for (got, want, what) in counts {
            if got != want {
                return Err(Error::shape(format!("{want} {what} layers"), format!("{got}")));
            }
        }
        let expect = |m: &Matrix<T>, shape: (usize, usize), name: &str| {
            if m.shape() != shape {
                Err(Error::shape(
                    format!("{name} {}x{}", shape.0, shape.1),
                    format!("{}x{}", m.rows(), m.cols()),
                ))
            } else {
                Ok(())
            }
        };
        let sites = config.norm_scheme.sites();
        for b in self.prelude.iter().chain(&self.recurrent).chain(&self.coda) {
            for (name, m) in [("wq", &b.wq), ("wk", &b.wk), ("wv", &b.wv), ("wo", &b.wo)] {
                expect(m, (d, d), name)?;
            }
            expect(&b.mlp_in, (d, h), "mlp_in")?;
            expect(&b.mlp_out, (h, d), "mlp_out")?;
            match (&b.mlp_gate, config.mlp_gated) {
                (Some(g), true) => expect(g, (d, h), "mlp_gate")?,
                (None, false) => {}
                _ => return Err(Error::Config("mlp_gate presence disagrees with mlp_gated".into())),
            }
            for ((name, gain), on) in b.norms.sites().into_iter().zip(sites) {
                match gain {
                    Some(g) if on && g.len() == d => {}
                    None if !on => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "norm gain {name} inconsistent with {:?}",
                            config.norm_scheme
                        )))
                    }
                }
            }
        }
        match (&self.injection, config.input_injection) {
            (Some(w), true) => expect(w, (2 * d, d), "injection")?,
            (None, false) => {}
            _ => return Err(Error::Config("W_I present iff input_injection".into())),
        }
        match (&self.loop_norm, config.norm_scheme.norm_after_loop()) {
            (Some(g), true) if g.len() == d => {}
            (None, false) => {}
            _ => return Err(Error::Config("loop norm gain inconsistent with scheme".into())),
        }
        match (&self.embedding, config.vocab_size) {
            (None, 0) => {}
            (Some(e), v) if v > 0 => expect(e, (v, d), "embedding")?,
            _ => return Err(Error::Config("embedding table inconsistent with vocab_size".into())),
        }
        Ok(())
    }

    /// Order-sensitive FNV-1a hash over the bit patterns of every tensor.
    pub fn checksum(&self) -> u64 {
        let mut h = Fnv::new();
        for b in self.prelude.iter().chain(&self.recurrent).chain(&self.coda) {
            hash_block(&mut h, b);
        }
        for m in self.injection.iter().chain(&self.embedding) {
            h.matrix(m);
        }
        if let Some(g) = &self.loop_norm {
            h.values(g);
        }
        h.finish()
    }

    /// Checksum of a single layer.
    pub fn layer_checksum(&self, index: usize) -> Result<u64> {
        let mut h = Fnv::new();
        hash_block(&mut h, self.layer(index)?.1);
        Ok(h.finish())
    }
}

fn hash_block<T: Scalar>(h: &mut Fnv, b: &BlockWeights<T>) {
    for (_, m) in b.tensors() {
        h.matrix(m);
    }
    for (_, g) in b.norms.sites() {
        if let Some(g) = g {
            h.values(g);
        }
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn values<T: Scalar>(&mut self, v: &[T]) {
        for x in v {
            for byte in x.as_f64().to_bits().to_le_bytes() {
                self.0 ^= u64::from(byte);
                self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }

    fn matrix<T: Scalar>(&mut self, m: &Matrix<T>) {
        self.values(&[T::from_count(m.rows()), T::from_count(m.cols())]);
        self.values(m.as_slice());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Draw a fresh model from `config.seed`.
///
/// Projection entries are `N(0, init_std^2)` and embedding entries
/// `N(0, 1) / sqrt(D)`, each rounded to `f32` so the weights survive a trip
/// through the `f32` weight file unchanged. Norm gains start at one.
pub fn init_random<T: Scalar>(config: &ModelConfig) -> Result<ModelWeights<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d_model;
    let h = config.hidden();
    let proj = Normal::new(0.0, config.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut draw = |rows: usize, cols: usize, dist: &Normal<f64>, scale: f64| {
        let data = (0..rows * cols)
            .map(|_| T::lit(f64::from((dist.sample(&mut rng) * scale) as f32)))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("sized buffer")
    };

    let embedding = (config.vocab_size > 0).then(|| {
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        draw(config.vocab_size, d, &std_normal, 1.0 / (d as f64).sqrt())
    });
    let block = |draw: &mut dyn FnMut(usize, usize) -> Matrix<T>| BlockWeights {
        wq: draw(d, d),
        wk: draw(d, d),
        wv: draw(d, d),
        wo: draw(d, d),
        mlp_in: draw(d, h),
        mlp_gate: config.mlp_gated.then(|| draw(d, h)),
        mlp_out: draw(h, d),
        norms: NormGains::unit(config),
    };
    let mut proj_draw = |r: usize, c: usize| draw(r, c, &proj, 1.0);
    let prelude = (0..config.prelude_layers).map(|_| block(&mut proj_draw)).collect();
    let recurrent = (0..config.recurrent_layers).map(|_| block(&mut proj_draw)).collect();
    let coda = (0..config.coda_layers).map(|_| block(&mut proj_draw)).collect();
    let injection = config.input_injection.then(|| proj_draw(2 * d, d));
    let loop_norm = config
        .norm_scheme
        .norm_after_loop()
        .then(|| vec![T::one(); d]);

    Ok(ModelWeights {
        prelude,
        recurrent,
        coda,
        injection,
        loop_norm,
        embedding,
        rope_base: config.rope_base,
    })
}

/// `tokens x d_model` input with i.i.d. `N(0, 1)` entries.
pub fn random_embeddings<T: Scalar>(tokens: usize, d_model: usize, seed: u64) -> Matrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 1.0).expect("unit normal");
    let data = (0..tokens * d_model).map(|_| T::lit(dist.sample(&mut rng))).collect();
    Matrix::from_vec(tokens, d_model, data).expect("sized buffer")
}

/// Copy of `weights` with the MLP output projection of `layer` zeroed.
pub fn ablate_mlp<T: Scalar>(weights: &ModelWeights<T>, layer: usize) -> Result<ModelWeights<T>> {
    let mut out = weights.clone();
    let block = out.layer_mut(layer)?;
    block.mlp_out = Matrix::zeros(block.mlp_out.rows(), block.mlp_out.cols());
    Ok(out)
}

/// Look up token embeddings; row `t` of the result is `table[ids[t]]`.
pub fn embed_tokens<T: Scalar>(ids: &[usize], table: &Matrix<T>) -> Result<Matrix<T>> {
    let mut out = Matrix::zeros(ids.len(), table.cols());
    for (t, &id) in ids.iter().enumerate() {
        if id >= table.rows() {
            return Err(Error::Vocabulary {
                id,
                vocab: table.rows(),
            });
        }
        out.row_mut(t).copy_from_slice(table.row(id));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::NormScheme;

    fn small(injection: bool) -> ModelConfig {
        ModelConfig::looped(16, 2, (1, 3, 1), NormScheme::PreNorm, injection).with_seed(7)
    }

    #[test]
    fn same_seed_same_weights() {
        let a = init_random::<f64>(&small(true)).unwrap();
        let b = init_random::<f64>(&small(true)).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
        let c = init_random::<f64>(&small(true).with_seed(8)).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn injection_matrix_only_when_enabled() {
        assert!(init_random::<f64>(&small(false)).unwrap().injection.is_none());
        let w = init_random::<f64>(&small(true)).unwrap();
        assert_eq!(w.injection.as_ref().unwrap().shape(), (32, 16));
        w.check_against(&small(true)).unwrap();
    }

    #[test]
    fn full_scale_head_layout() {
        let mut c = ModelConfig::looped(512, 4, (0, 1, 0), NormScheme::PreNorm, false);
        c.mlp_hidden = 8;
        let w = init_random::<f64>(&c).unwrap();
        let b = &w.recurrent[0];
        assert_eq!(b.wq.shape(), (512, 512));
        let (q, k) = b.head_qk(3, 128);
        assert_eq!(q.shape(), (512, 128));
        assert_eq!(k.shape(), (512, 128));
        assert_eq!(q.row(5), &b.wq.row(5)[384..512]);
    }

    #[test]
    fn init_statistics() {
        let mut c = ModelConfig::looped(64, 4, (0, 1, 0), NormScheme::HuginnSandwich, false);
        c.seed = 3;
        let w = init_random::<f64>(&c).unwrap();
        let v = w.recurrent[0].mlp_in.as_slice();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
        assert!(mean.abs() < 1e-3);
        assert!((std - 0.02).abs() < 1e-3);
        assert!(v.iter().all(|&x| f64::from(x as f32) == x));
        assert!(w.recurrent[0].norms.attn_out.is_some());
    }

    #[test]
    fn ablation_is_local_and_idempotent() {
        let c = ModelConfig::looped(16, 2, (0, 12, 0), NormScheme::PreNorm, true).with_seed(1);
        let w = init_random::<f64>(&c).unwrap();
        let a = ablate_mlp(&w, 2).unwrap();
        assert!(a.recurrent[2].mlp_out.as_slice().iter().all(|&x| x == 0.0));
        for layer in (0..12).filter(|&l| l != 2) {
            assert_eq!(a.layer_checksum(layer).unwrap(), w.layer_checksum(layer).unwrap());
        }
        assert_eq!(ablate_mlp(&a, 2).unwrap(), a);
        assert!(matches!(ablate_mlp(&w, 12), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn embedding_lookup() {
        let table = Matrix::from_fn(8, 3, |i, j| (i * 10 + j) as f64);
        let e = embed_tokens(&[], &table).unwrap();
        assert_eq!(e.shape(), (0, 3));
        let e = embed_tokens(&[3, 3], &table).unwrap();
        assert_eq!(e.row(0), e.row(1));
        assert_eq!(embed_tokens(&[5], &table).unwrap().row(0), table.row(5));
        assert!(matches!(
            embed_tokens(&[8], &table),
            Err(Error::Vocabulary { id: 8, vocab: 8 })
        ));
    }
}
