//! Analytics for underground follower markets and a kernel-SVM detector for
//! suspicious following behaviour.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`model`] holds the domain records, the on-disk dataset layout and
//!   snapshot differencing.
//! * [`metrics`] computes per-account behavioural measures and the numeric
//!   helpers (Pearson correlation, power-law fitting).
//! * [`market`] scores merchants (QoS, popularity, leaders) and profiles
//!   their customers.
//! * [`detection`] extracts the 18 features, trains an RBF SVM with SMO and
//!   runs the undersampling / cross-validation / ablation protocol.
//! * [`simgen`] generates seeded synthetic markets with ground truth.

pub mod detection;
pub mod error;
pub mod market;
pub mod metrics;
pub mod model;
pub mod simgen;

pub use error::{Error, Result};
