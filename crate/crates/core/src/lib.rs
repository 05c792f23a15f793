//! Template relevance prediction for single-step retrosynthesis.
//!
//! Molecules and reaction templates are encoded into a shared association
//! space and templates are ranked by modern Hopfield retrieval. A bit-subset
//! substructure screen removes templates that cannot apply, and top-ranked
//! templates are executed as graph rewrites to produce reactant sets.

pub mod chemgraph;
pub mod cli;
pub mod data;
pub mod eval;
pub mod fingerprints;
pub mod model;
pub mod numkernel;
pub mod screen;
