//! Numerical laboratory for pseudodifferential operators on the circle.
//!
//! Symbols on `S^1 x R` are quantized to finite Fourier matrices over the
//! modes `|n| <= N`; compactness is modeled by tail norms beyond a cutoff `K`
//! and Fredholm indices by stable kernel counts.

pub mod cli;
pub mod connes_higson;
pub mod error;
pub mod extension;
pub mod index;
pub mod inverse_ch;
pub mod numerics;
pub mod partition;
pub mod quantize;
pub mod symbols;

pub use error::{LabError, Result};
