//! Event-log input/output, the training and evaluation pipeline, the
//! command-line interface and the HTTP service around `ppm-core`.

pub mod bundle;
pub mod cli;
pub mod datafile;
pub mod io;
pub mod pipeline;
pub mod report;
pub mod service;

pub use bundle::{ModelBundle, ModelSummary};
pub use pipeline::{Partition, TrainConfig};
