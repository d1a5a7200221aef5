//! Deep Fourier Residual training for time-harmonic Maxwell problems on `[0, pi]^n`.
//!
//! A neural field `E = xi * N(x)` is trained against the dual norm of its
//! weak-form residual, computed exactly in an orthonormal basis of
//! `H_0(curl)` and evaluated with type-II sine/cosine transforms.

#![allow(clippy::needless_range_loop)]

pub mod basis;
pub mod cli;
pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod grid;
pub mod network;
pub mod pipeline;
pub mod residual;
pub mod training;
pub mod transforms;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::MidpointGrid;
