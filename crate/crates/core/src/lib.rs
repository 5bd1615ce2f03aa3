//! Simulation and nonparametric Bayesian volatility estimation for monotone
//! SDEs driven by a gamma process.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod gamma;
pub mod inference;
pub mod io;
pub mod mcmc;
pub mod rng;
pub mod rqv;
pub mod simulate;
pub mod special;
pub mod stats;
pub mod volatility;

pub use error::{Error, ErrorClass, Result};
pub use gamma::GammaParams;
pub use inference::{IGPosterior, PriorSpec, SufficientStats};
pub use rng::RngStream;
pub use simulate::{HittingRecord, SimulatedPath};
pub use volatility::{BinPartition, PiecewiseVolatility, Volatility};
