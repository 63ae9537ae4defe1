//! Command-line support: synthetic corpora and DET plots.

pub mod plot;
pub mod synth;
