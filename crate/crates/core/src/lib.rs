//! Adaptive sequential sampling for rare-event probabilities.
//!
//! The method explores the standard Gaussian space with nested shells of
//! candidate points, refines the boundary between event types once a rare
//! event has been seen, classifies everything else with a nearest-neighbour
//! rule, and estimates probabilities by importance sampling over the ring
//! that carries the relevant probability mass. Only the categorical outcome
//! of each model evaluation is ever used.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod benchmarks;
pub mod candidate_engine;
pub mod classifier;
pub mod direction_sampling;
pub mod driver;
pub mod error;
pub mod estimator;
pub mod exploration_plan;
mod float_serde;
pub mod gaussian_geometry;
pub mod input_transform;
pub mod points;
pub mod reporting;
pub mod rng;
pub mod sensitivity;
pub mod spatial;
pub mod special;

pub use error::{Error, Result};
