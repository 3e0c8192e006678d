//! Bidirectional digital twin of a printing-imaging channel.
//!
//! An encoder maps acquired prints back to binary templates and a decoder maps
//! templates to prints. Both are trained jointly on a direct path (y → t̃ → ŷ) and
//! a reverse path (t → ỹ → t̂) with reconstruction and critic-based terms.

pub mod backbones;
#[cfg(feature = "cli")]
pub mod cli;
pub mod config;
pub mod critics;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod nn;
pub mod objectives;
pub mod rng;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
