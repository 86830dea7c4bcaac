//! Bayesian model-evaluation scores: the marginal likelihood, exhaustive
//! leave-p-out cross-validation and cumulative cross-validation after a
//! preparatory training phase.

pub mod conjugate;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod general;
pub mod mc;
pub mod numerics;
pub mod probit;
pub mod seed;
pub mod splits;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use exact::{ExactPredictiveModel, IndexedModel, ScoreDecomposition};
pub use mc::{Aggregation, McEstimate, SampledModel};
pub use splits::Split;
