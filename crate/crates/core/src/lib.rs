//! Multi-label user-intent and musical-attribute classification for music
//! discovery conversations.
//!
//! The pipeline runs corpus loading and splitting ([`corpus`]), dialogue-context
//! windowing ([`context`]), feature extraction ([`features`]), MLP training
//! ([`model`]), per-label threshold calibration ([`calibrate`]) and macro-F1
//! evaluation ([`eval`]). [`pipeline`] wires the stages into experiments.

pub mod calibrate;
pub mod context;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod model;
pub mod pipeline;
pub mod synthetic;
