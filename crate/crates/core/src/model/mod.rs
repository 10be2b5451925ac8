//! Looped transformers: configuration, weights, the block forward pass and
//! the recurrent runner that records traces.

pub mod block;
pub mod config;
pub mod io;
pub mod run;
pub mod weights;

pub use block::{attention_maps, block_forward, BlockOutput};
pub use config::{ModelConfig, NormScheme, Positional};
pub use io::{load_weights, read_header, read_weights, save_weights, write_weights, TensorEntry, WeightHeader};
pub use run::{run_recurrent, Capture, Looped, Retention, Slot, StackOp, Trace};
pub use weights::{ablate_mlp, embed_tokens, init_random, random_embeddings, BlockWeights, ModelWeights, NormGains, Stage};
