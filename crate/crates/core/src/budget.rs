//! Privacy budget accounting and closed-form variance bounds.
//!
//! `split` arguments are sorted dimension indices kept out of the wavelet
//! transform. An attribute contributes `P(A)` to the generalized sensitivity
//! unless it is split, in which case it contributes 1.

use crate::error::{Error, Result};
use crate::schema::Schema;

/// `ε`, the Laplace magnitude `λ` and the generalized sensitivity `ρ`, with `λ = 2ρ/ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub lambda: f64,
    pub rho: f64,
}

impl PrivacyBudget {
    pub fn from_epsilon(epsilon: f64, rho: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        check_positive("rho", rho)?;
        Ok(PrivacyBudget {
            epsilon,
            lambda: 2.0 * rho / epsilon,
            rho,
        })
    }

    pub fn from_lambda(lambda: f64, rho: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("rho", rho)?;
        Ok(PrivacyBudget {
            epsilon: 2.0 * rho / lambda,
            lambda,
            rho,
        })
    }

    /// Variance of each unit-weight Laplace draw, `σ² = 2λ²`.
    pub fn sigma_squared(&self) -> f64 {
        2.0 * self.lambda * self.lambda
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be a positive finite number, got {v}")))
    }
}

/// `ρ = ∏ P(A)` over the attributes not in `split`.
pub fn rho(schema: &Schema, split: &[usize]) -> f64 {
    schema
        .attributes()
        .iter()
        .enumerate()
        .filter(|(i, _)| !split.contains(i))
        .map(|(_, a)| a.sensitivity_factor())
        .product()
}

pub fn epsilon_for(lambda: f64, schema: &Schema, split: &[usize]) -> f64 {
    2.0 / lambda * rho(schema, split)
}

pub fn lambda_for(epsilon: f64, schema: &Schema, split: &[usize]) -> f64 {
    2.0 * rho(schema, split) / epsilon
}

/// Worst-case noise variance of a range-count query:
/// `8/ε² · ∏_{split} |A| · ∏_{others} P(A)² H(A)`.
pub fn variance_bound(schema: &Schema, split: &[usize], epsilon: f64) -> f64 {
    let per_dim: f64 = schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            if split.contains(&i) {
                a.domain_size() as f64
            } else {
                let p = a.sensitivity_factor();
                p * p * a.variance_factor()
            }
        })
        .product();
    8.0 / (epsilon * epsilon) * per_dim
}

/// Worst case of the entry-wise method: a query covering every real entry.
pub fn basic_variance_bound(schema: &Schema, epsilon: f64) -> f64 {
    let all: Vec<usize> = (0..schema.len()).collect();
    variance_bound(schema, &all, epsilon)
}

/// Attributes whose domain is small enough that splitting does not worsen the bound.
pub fn suggested_split(schema: &Schema) -> Vec<usize> {
    (0..schema.len())
        .filter(|&i| schema.attribute(i).prefers_split())
        .collect()
}
