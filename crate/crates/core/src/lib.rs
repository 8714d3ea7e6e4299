//! Wildfire containment-duration regression.
//!
//! Pipeline: [`ingest`] parses perimeter attributes, the data dictionary and
//! perimeter geometry; [`clean`] enforces integrity rules and derives the
//! `ln(1 + days)` target; [`features`] builds model matrices with a temporal
//! split; [`forest`], [`gbt`] and [`lstm`] train regressors on top of the
//! shared [`cart`] tree core; [`eval`] scores models in day units and writes
//! reports; [`cli`] wires the stages into subcommands.

pub mod cart;
pub mod clean;
pub mod cli;
pub mod eval;
pub mod features;
pub mod forest;
pub mod gbt;
pub mod ingest;
pub mod lstm;
pub mod matrix;
pub mod rng;
pub mod synth;
