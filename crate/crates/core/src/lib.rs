//! Deterministic multi-agent simulation of how inference profiles make
//! conclusions diverge under shared observations.
//!
//! An agent pairs a smoothed categorical [`model::WorldModel`] with an
//! [`profile::InferenceProfile`] that fixes how it weights grounds (R), how
//! much posterior entropy it keeps (E), how readily it updates (S) and how
//! far ahead it evaluates actions (D). [`engine::infer`] turns a model, an
//! observation and a profile into a conclusion; [`learning`] repeats that
//! over a shared stream of evidence with profile-biased exposure; and
//! [`identifiability`] holds the procedures that separate profile-level from
//! model-level disagreement.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod engine;
pub mod error;
pub mod identifiability;
pub mod learning;
pub mod model;
pub mod profile;
pub mod report;
pub mod scenario;

pub use engine::{compare, infer, DivergenceReport, InferenceOutcome};
pub use error::{Error, Result};
pub use learning::{run_episode, Agent, Environment, Episode, SimulationTrace};
pub use model::{Ground, Hypothesis, HypothesisSpace, LatentState, Observation, WorldModel};
pub use profile::{BasisCoordinates, Component, GateDecision, InferenceProfile};
pub use scenario::Scenario;
