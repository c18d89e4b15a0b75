//! Adaptive Markov chain Monte Carlo driven by stochastic approximation with
//! reprojections on randomly varying truncation sets.

pub mod config;
pub mod controller;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod kernels;
pub mod linalg;
pub mod mixture_em;
pub mod nsrwm;
pub mod schemes;
pub mod target;

pub use error::{Error, Result};
