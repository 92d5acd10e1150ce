//! Bill-position labelling and lobbying-position scoring.
//!
//! The crate turns lobbying-report text and legislative metadata into
//! per-bill positions for interest groups, types the remaining
//! group–bill links with a relational graph network, estimates
//! one-dimensional lobbying position scores with a two-category graded
//! response model, and runs the downstream regressions.
//!
//! Module map:
//!
//! * [`ingest`] parses reports, bills and entities and builds node features.
//! * [`annotate`] filters lines, classifies positions and de-duplicates edges.
//! * [`hetgraph`] assembles the typed graph in one of 17 configurations.
//! * [`gnn`] trains the link-type classifier and emits proxy labels.
//! * [`irt`] fits item parameters by EM and scores groups by EAP.
//! * [`analysis`] holds stage timelines, subject ratios, logistic and
//!   Dirichlet regressions, and the firm-level block bootstrap.
//!
//! Data-parallel loops go through [`par`]; with the default `parallel`
//! feature they run on rayon, without it they run sequentially. Results
//! are bit-identical either way.

pub mod analysis;
pub mod annotate;
pub mod error;
pub mod gnn;
pub mod hetgraph;
pub mod ingest;
pub mod irt;
pub mod par;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
