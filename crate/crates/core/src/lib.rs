//! Looped (recurrent-depth) transformers at desk scale: construction, trace
//! capture, attention and residual metrics, fixed point dynamics and
//! limiting-behaviour classification.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.
//!
//! ```
//! use loopscope_core::model::{init_random, run_recurrent, Capture, ModelConfig, NormScheme};
//! use loopscope_core::Matrix64;
//!
//! let config = ModelConfig::looped(16, 2, (0, 2, 0), NormScheme::PreNorm, true);
//! let weights = init_random::<f64>(&config).unwrap();
//! let x = Matrix64::filled(3, 16, 0.5);
//! let trace = run_recurrent(&x, &weights, &config, 4, &Capture::all()).unwrap();
//! assert_eq!(trace.depth(), 8);
//! ```

pub mod classify;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod table;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Weights64 = model::ModelWeights<f64>;
pub type Weights32 = model::ModelWeights<f32>;
pub type Trace64 = model::Trace<f64>;
pub type Trace32 = model::Trace<f32>;
