//! Turning a spec and a run seed into a model and its input.

use std::borrow::Cow;

use loopscope_core::model::{ablate_mlp, embed_tokens, init_random, load_weights, random_embeddings, ModelConfig};
use loopscope_core::{Matrix64, Weights64};

use crate::error::{HarnessError, Result};
use crate::spec::{ExperimentSpec, InputSource};

/// Where a spec's model comes from. File weights are loaded once and
/// shared by every seed.
#[derive(Debug, Clone)]
pub enum ModelSource {
    Random(ModelConfig),
    Loaded { config: ModelConfig, weights: Weights64 },
}

impl ModelSource {
    pub fn from_spec(spec: &ExperimentSpec) -> Result<Self> {
        match &spec.weights {
            Some(path) => {
                let (config, weights) = load_weights::<f64>(path).map_err(|e| {
                    HarnessError::Spec(format!("weights {}: {e}", path.display()))
                })?;
                Ok(ModelSource::Loaded { config, weights })
            }
            None => Ok(ModelSource::Random(spec.base_model())),
        }
    }

    /// Model for run seed `seed`. Random models are drawn with
    /// `config.seed = seed`; loaded weights are used as is.
    pub fn instantiate(&self, seed: u64, ablate: Option<usize>) -> Result<(ModelConfig, Cow<'_, Weights64>)> {
        let (config, weights) = match self {
            ModelSource::Random(base) => {
                let config = base.clone().with_seed(seed);
                let w = init_random::<f64>(&config)?;
                (config, Cow::Owned(w))
            }
            ModelSource::Loaded { config, weights } => (config.clone(), Cow::Borrowed(weights)),
        };
        let weights = match ablate {
            Some(layer) => Cow::Owned(ablate_mlp(&weights, layer)?),
            None => weights,
        };
        Ok((config, weights))
    }
}

/// Input embeddings for run seed `seed`.
pub fn build_input(spec: &ExperimentSpec, config: &ModelConfig, weights: &Weights64, seed: u64) -> Result<Matrix64> {
    match spec.sequence.source()? {
        InputSource::Random { tokens, .. } => Ok(random_embeddings(tokens, config.d_model, spec.input_seed(seed))),
        InputSource::Tokens(ids) => {
            let table = weights
                .embedding
                .as_ref()
                .ok_or_else(|| HarnessError::Spec("token_ids need a model with an embedding table".into()))?;
            Ok(embed_tokens(&ids, table)?)
        }
    }
}
