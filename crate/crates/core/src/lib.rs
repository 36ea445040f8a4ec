//! Distractor retrieval for multiple-choice question authoring.
//!
//! Given a question stem and its answer key, the engine ranks a pool of
//! candidate distractors with three families of scorers:
//!
//! * a feature-based logistic-regression [`baseline`],
//! * bi-encoder models in [`retrieval`] (stem+key vs distractor, and
//!   stem vs stem with distractor inheritance),
//! * their score- or rank-level combination in [`fusion`].
//!
//! [`evalstats`] provides IR metrics and annotation agreement statistics,
//! and [`service`] the suggestion / rating workflow used by teachers.

pub mod baseline;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evalstats;
pub mod fusion;
pub mod io;
pub mod pipeline;
pub mod retrieval;
pub mod service;
pub mod textres;

pub use error::{Error, Result};
