//! Core of an outcome-oriented prescriptive process monitor.
//!
//! Historical traces are encoded as four-valued DECLARE monitoring states,
//! a decision tree learns which temporal relations separate positive from
//! negative outcomes, and for an ongoing case the best matching positive
//! path of that tree is turned into a prioritized list of "satisfy / do not
//! violate / violate / do not satisfy" recommendations.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and
//! the HTTP service live in the `ppm` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod declare;
pub mod dtree;
pub mod encoder;
pub mod log;
pub mod ltlf;
pub mod recommend;
pub mod sample;
pub mod whatif;

mod math;

pub use declare::{ActivationStats, Constraint, Family, RvState, Template};
pub use dtree::{DecisionTree, DtPath, Hyperparameters, LearnedValue};
pub use encoder::{ConstraintUniverse, EncodedDataset};
pub use log::{Event, EventLog, PrefixLog, Trace};
pub use ltlf::Formula;
pub use recommend::{LambdaWeights, RecCondition, Recommendation, RecommendationResult};
pub use whatif::{ConfusionMatrix, MetricsReport};
