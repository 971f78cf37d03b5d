//! Identification of two anonymous piecewise-linear additive value models
//! from matching queries answered by both decision-makers.
//!
//! Start with [`elicitation::run`] against any [`oracle::AnswerSource`].

pub mod algebra;
pub mod elicitation;
pub mod error;
pub mod model;
pub mod oracle;
pub mod patterns;
pub mod plot;
pub mod rational;
pub mod report;
pub mod scenario;

pub use elicitation::{run, ElicitationConfig, ElicitationOutcome, RecoveredModels};
pub use error::{Error, Result};
pub use model::{models_equivalent, CriterionScale, Grid, UtaModel};
pub use oracle::{AnswerPair, AnswerSource, Query, ReplayTranscript, SimulatedPair, Transcript};
pub use rational::Rational;
