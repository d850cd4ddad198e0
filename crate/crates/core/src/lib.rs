//! Sparse phase retrieval with redundant (Parseval) dictionaries under the
//! ℓq-analysis model, 0 < q ≤ 1.

pub mod bounds;
pub mod error;
pub mod files;
pub mod frames;
pub mod harness;
pub mod lemmas;
pub mod linalg;
pub mod measurement;
pub mod nsp;
pub mod record;
pub mod rip;
pub mod rng;
mod serde_vec;
pub mod signals;
pub mod solver;

pub use error::{Error, Result};
