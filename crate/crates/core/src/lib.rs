//! Forecasting of multi-dimensional time processes on graphs.
//!
//! A multi-dimensional graph process carries `F` feature values on each of
//! `N` graph nodes at every time step. This crate models such processes with
//! vector autoregressions whose lag matrices are polynomial graph filters:
//! in the node graph alone (per-channel baseline), in a lazy product-graph
//! shift operator combining a node graph with a feature graph, or in the
//! general bivariate family `S^k ⊗ S_F^l`. Filters are evaluated by iterated
//! sparse shifts, so parameter counts and per-step cost are independent of
//! `N * F`.
//!
//! The pieces:
//!
//! - [`graph`]: sparse shift operators, kNN construction, normalization, and
//!   lazy product operators.
//! - [`signal`]: node-major multi-feature sequences, preprocessing, splits,
//!   CSV I/O.
//! - [`filtering`]: Kronecker-free filter evaluation kernels.
//! - [`models`]: the four predictor families and rollout.
//! - [`estimation`]: least-squares fitting and grid-search selection.
//! - [`synth`]: stable synthetic process and moving-mesh generators.
//! - [`metrics`]: rNMSE and evaluation reports.
//! - [`experiment`]: the end-to-end comparison protocol.
//! - [`dense`]: dense reference routines for small-scale cross-checks.

pub mod dense;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod filtering;
pub mod graph;
pub mod metrics;
pub mod models;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
