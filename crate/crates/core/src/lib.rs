//! Hierarchical Pitman-Yor topic models with collapsed blocked Gibbs
//! sampling.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod gp;
pub mod lda;
pub mod math;
pub mod pyp;
pub mod sampler;
pub mod stirling;
pub mod synth;
pub mod tntm;

pub use error::{Error, Result};
