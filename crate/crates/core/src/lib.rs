//! Partial-identification bounds for conditional average potential outcomes
//! (CAPOs) and conditional average treatment effects (CATEs) estimated from
//! right-censored survival data when censoring may be informative.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: censored-subject datasets, CSV ingestion and overlap checks.
//! - [`models`]: the supervised learners used for nuisance and second-stage
//!   regression (random forests, k-NN, ridge, constant).
//! - [`nuisance`]: cross-fitted estimation of the conditional survival times
//!   `ν(δ, x, a)`, the censoring strength `ξ(x, a)` and the propensity `π_a(x)`.
//! - [`bounds`]: closed-form bounds, debiased pseudo-outcomes, the plug-in
//!   learner and the two-stage SurvB learner (discrete and continuous dose).
//! - [`sensitivity`]: the post-dropout function `γ(x, a)` and the generalized
//!   marginal sensitivity model for hidden confounding.
//! - [`simulation`]: synthetic data-generating processes with oracle nuisances.
//! - [`analysis`]: RMSE evaluation, width sweeps, subgroup trees, bootstrap
//!   summaries and bound survival curves.
//! - [`cli`]: the `censorbounds` command-line workflows.
//!
//! Runnable walkthroughs for each capability live in this crate's `examples/`
//! directory.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bounds;
pub mod cli;
pub mod data;
pub mod models;
pub mod nuisance;
pub mod rng;
pub mod sensitivity;
pub mod simulation;

pub use bounds::{BoundPair, BoundPredictor};
pub use data::{Arm, Dataset, Subject, TreatmentMode};
pub use models::{LearnerSpec, Matrix};
