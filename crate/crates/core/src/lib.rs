//! Desk-scale engine for outcome-rewarded video question answering.
//!
//! The crate has two halves that share one set of domain types:
//!
//! * a GRPO trainer ([`grpo`]) with binary format/accuracy rewards
//!   ([`rewards`]), difficulty-based data curation ([`datafilter`]), and a
//!   synthetic video-QA environment with a tiny trainable policy ([`simenv`])
//!   so the whole loop is verifiable end to end;
//! * a sparse-to-dense test-time-scaling controller ([`tts`]) that resamples
//!   a question at doubling frame budgets until the sampled answers agree,
//!   falling back to majority vote at the budget cap.
//!
//! Numeric code is generic over the scalar type via [`num::Real`]; the
//! aliases below pin the `f64` instantiations used by the shipped binaries.

pub mod datafilter;
pub mod dataset;
pub mod frames;
pub mod grpo;
pub mod num;
pub mod parse;
pub mod rewards;
pub mod seed;
pub mod simenv;
pub mod tts;
pub mod types;

/// Default scalar for the shipped binaries and tests.
pub type Scalar = f64;

/// Toy policy at the default precision.
pub type ToyPolicy = simenv::ToyPolicy<Scalar>;
/// Token sequence at the default precision.
pub type TokenSequence = grpo::TokenSequence<Scalar>;
/// Rollout group at the default precision.
pub type RolloutGroup = grpo::RolloutGroup<Scalar>;
/// GRPO trainer over the toy policy at the default precision.
pub type ToyTrainer = grpo::GrpoTrainer<Scalar, simenv::ToyPolicy<Scalar>>;

pub use types::{FrameBudget, McqaOption, McqaSample, ParsedResponse, SamplingParams, VideoRef};
