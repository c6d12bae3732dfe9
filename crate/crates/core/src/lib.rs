//! Flash-crowd workload modelling with large deviations.
//!
//! The pipeline goes model → simulate → spectrum (theoretical or empirical)
//! → provisioning answers. Every stage exchanges plain CSV files through the
//! `buzzld` command-line tool.

mod band;
pub mod cli;
pub mod error;
pub mod model;
pub mod provision;
pub mod simulate;
pub mod spectrum_empirical;
pub mod spectrum_theory;

pub use error::{Error, Result};
pub use model::{
    build_generator, marginal_i, steady_state, ChainState, Generator, ModelParams, Phase,
    SteadyState,
};
