//! Differentially private publication of frequency matrices.
//!
//! A frequency matrix over a multi-dimensional schema is transformed with a
//! Haar wavelet on ordinal dimensions and a hierarchy-derived nominal wavelet on
//! nominal ones, Laplace noise is added to the weighted coefficients, and the
//! noisy coefficients are transformed back.

pub mod bench;
pub mod budget;
pub mod dataset;
pub mod error;
pub mod fixtures;
pub mod haar;
pub mod hn;
pub mod matrix;
pub mod mechanism;
pub mod noise;
pub mod nominal;
pub mod oracle;
pub mod query;
pub mod schema;
pub mod transform;
pub mod verify;

pub use dataset::{generate_synthetic, Dataset, Synthetic};
pub use error::{Error, Result};
pub use hn::{hn_forward, hn_inverse, hn_weight_of, HnPlan, StepMatrix};
pub use budget::{epsilon_for, lambda_for, variance_bound, PrivacyBudget};
pub use matrix::{FrequencyMatrix, MatrixFile, Space};
pub use schema::{AttributeKind, AttributeSchema, Hierarchy, NodeSpec, Schema};
pub use mechanism::{publish, Mechanism, MechanismRegistry, Published, Publisher};
pub use noise::{LaplaceSampler, NoiseSampler};
pub use query::{evaluate, generate_workload, Predicate, QueryMetrics, RangeQuery};
