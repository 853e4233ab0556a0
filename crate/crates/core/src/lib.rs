//! Backdoor adjustment for text classifiers under confounding by provenance,
//! plus a sampling framework that imposes controlled confounding shift between
//! train and test splits drawn from a labeled two-source pool.
//!
//! The pipeline is: [`corpus`] (documents, JSONL, synthetic pools) →
//! [`shift`] (derive shifted distributions, check feasibility, draw splits) →
//! [`featurize`] (binary unigrams or sidecar embeddings, confounder block) →
//! [`model`] (L2 logistic regression, backdoor and vanilla prediction) →
//! [`metrics`] (average precision, aggregation) → [`harness`] (sweeps, curves).

pub mod corpus;
pub mod error;
pub mod featurize;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod shift;

pub use error::{Error, Result};
