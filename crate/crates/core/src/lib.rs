//! Non-model-sharing collaborative data analysis.
//!
//! Several institutions hold horizontal (sample) and vertical (feature)
//! partitions of one dataset. Instead of pooling raw data, every party
//! publishes a dimension-reduced *intermediate representation* of its block
//! plus an intermediate representation of a shareable *anchor* matrix. An
//! analyst aligns the per-institution intermediates into a common
//! *collaboration space*, trains a Gaussian-kernel ridge model there, labels
//! the anchor with it, and returns those labels so each institution can
//! distill a plain decision tree over the full feature space.
//!
//! The crate is organized along the protocol roles:
//!
//! * [`dataset`] — labeled matrices, CSV ingestion, synthetic data, block
//!   partitioning.
//! * [`dimred`] — the per-party mapping functions (LPP and PCA) as affine
//!   row-wise maps.
//! * [`anchor`] — generation and assembly of the shareable anchor matrix.
//! * [`collaboration`] — the analyst-side alignment (total least squares
//!   against a common SVD target).
//! * [`learner`] — kernel ridge regression on the collaboration space.
//! * [`distill`] — CART trees fit to anchor predictions.
//! * [`metrics`] — accuracy, NMI and fidelity-to-centralized reporting.
//! * [`protocol`] — end-to-end orchestration with an auditable message
//!   trace, plus centralized/individual baselines.
//! * [`config`] — experiment configuration shared by the CLI and tests.

pub mod anchor;
pub mod collaboration;
pub mod config;
pub mod dataset;
pub mod dimred;
pub mod distill;
pub mod error;
pub mod learner;
pub mod linalg;
pub mod metrics;
pub mod protocol;

pub use error::{Error, Result};
