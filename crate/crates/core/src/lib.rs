//! Causal discovery for cyclic industrial time series: cycle segmentation,
//! validated subsampling, PCMCI+ with four conditional-independence tests,
//! hybrid integration of their graphs and cross-cluster comparison.

pub mod ci;
pub mod config;
pub mod cycles;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod graph;
pub mod hybrid;
pub mod io;
mod knn;
pub mod pcmci;
pub mod pipeline;
pub mod posthoc;
pub mod rng;
pub mod sampler;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
