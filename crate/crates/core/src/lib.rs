//! Contrastive document representations under topic models: an exact
//! oracle for the Bayes-optimal contrastive predictor, a small neural
//! learner, landmark embeddings and linear probes.
//!
//! Numerical code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for common use.

pub mod checks;
pub mod contrastive_data;
pub mod embedding;
pub mod experiment;
pub mod learner;
pub mod linalg;
pub mod oracle;
pub mod persist;
pub mod probe_eval;
pub mod rng;
pub mod scalar;
pub mod topic_model;

pub use scalar::Real;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type TopicModel64 = topic_model::TopicModel<f64>;
pub type TopicModel32 = topic_model::TopicModel<f32>;
pub type Learner64 = learner::Learner<f64>;
pub type Learner32 = learner::Learner<f32>;
pub type LandmarkSet64 = oracle::LandmarkSet<f64>;
pub type LandmarkSet32 = oracle::LandmarkSet<f32>;
pub type Batch64 = learner::Batch<f64>;
pub type Batch32 = learner::Batch<f32>;
