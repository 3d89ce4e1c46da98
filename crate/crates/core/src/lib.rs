//! Frequency-domain forecasting with per-frequency complex transfer functions
//! and learnable fusion weights.
//!
//! A lookback window is zero-padded to the joint past-plus-future length,
//! lifted per time step into an embedding space, passed through a stack of
//! frequency blocks and projected back to the variable space. Each block
//! transforms its input to the Fourier domain, multiplies the coefficient
//! vector of every bin by that bin's own complex matrix, returns each bin to
//! the time domain and sums the per-bin series with learnable weights.

pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod spectral;
pub mod training;

pub use error::{Error, Result};
