//! One-dimensional transforms applied along a single matrix dimension.
//!
//! Each variant implements [`LineTransform`]; the multi-dimensional transform
//! only talks to this trait. Which variant handles a dimension is decided by
//! [`line_transform_for`] from the attribute kind and whether the dimension is
//! kept out of the wavelet transform (split).

use std::fmt;
use std::sync::Arc;

use crate::haar;
use crate::nominal::DecompositionTree;
use crate::schema::AttributeSchema;

pub trait LineTransform: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Vector length consumed.
    fn input_len(&self) -> usize;

    /// Coefficient count produced.
    fn output_len(&self) -> usize;

    /// Weight of each output position.
    fn weights(&self) -> &[f64];

    /// Transforms `lanes` interleaved vectors.
    fn forward(&self, input: &[f64], out: &mut [f64], lanes: usize, scratch: &mut Vec<f64>);

    /// Inverse of [`LineTransform::forward`]; may modify `coeffs` (e.g. refine noisy values).
    fn inverse(&self, coeffs: &mut [f64], out: &mut [f64], lanes: usize);

    /// Generalized sensitivity with respect to [`LineTransform::weights`].
    fn sensitivity(&self) -> f64;

    /// Worst-case query variance, in units of `sigma^2`, for coefficients carrying
    /// noise of variance `(sigma / weight)^2`.
    fn variance_factor(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct HaarLine {
    weights: Vec<f64>,
}

impl HaarLine {
    pub fn new(len: usize) -> Self {
        assert!(len.is_power_of_two(), "Haar length {len} is not a power of two");
        let levels = len.trailing_zeros();
        let weights = (0..len)
            .map(|i| haar::haar_weight(haar::position_of(i), levels))
            .collect();
        HaarLine { weights }
    }

    fn levels(&self) -> u32 {
        self.weights.len().trailing_zeros()
    }
}

impl LineTransform for HaarLine {
    fn name(&self) -> &'static str {
        "haar"
    }

    fn input_len(&self) -> usize {
        self.weights.len()
    }

    fn output_len(&self) -> usize {
        self.weights.len()
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn forward(&self, input: &[f64], out: &mut [f64], lanes: usize, scratch: &mut Vec<f64>) {
        haar::forward_lanes(input, out, lanes, scratch);
    }

    fn inverse(&self, coeffs: &mut [f64], out: &mut [f64], lanes: usize) {
        haar::inverse_lanes(coeffs, out, lanes);
    }

    fn sensitivity(&self) -> f64 {
        1.0 + self.levels() as f64
    }

    fn variance_factor(&self) -> f64 {
        (2.0 + self.levels() as f64) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct NominalLine {
    tree: DecompositionTree,
}

impl NominalLine {
    pub fn new(tree: DecompositionTree) -> Self {
        NominalLine { tree }
    }
}

impl LineTransform for NominalLine {
    fn name(&self) -> &'static str {
        "nominal"
    }

    fn input_len(&self) -> usize {
        self.tree.entry_count()
    }

    fn output_len(&self) -> usize {
        self.tree.coefficient_count()
    }

    fn weights(&self) -> &[f64] {
        self.tree.weights()
    }

    fn forward(&self, input: &[f64], out: &mut [f64], lanes: usize, _scratch: &mut Vec<f64>) {
        self.tree.forward_lanes(input, out, lanes);
    }

    fn inverse(&self, coeffs: &mut [f64], out: &mut [f64], lanes: usize) {
        self.tree.mean_subtract_lanes(coeffs, lanes);
        self.tree.inverse_lanes_in_place(coeffs, out, lanes);
    }

    fn sensitivity(&self) -> f64 {
        self.tree.height() as f64
    }

    fn variance_factor(&self) -> f64 {
        4.0
    }
}

/// Leaves a dimension untouched: the matrix is effectively split into independent
/// sub-matrices along it.
#[derive(Debug, Clone)]
pub struct IdentityLine {
    weights: Vec<f64>,
    real: usize,
}

impl IdentityLine {
    /// `len` stored positions of which the first `real` can be covered by a query.
    pub fn new(len: usize, real: usize) -> Self {
        IdentityLine {
            weights: vec![1.0; len],
            real,
        }
    }
}

impl LineTransform for IdentityLine {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn input_len(&self) -> usize {
        self.weights.len()
    }

    fn output_len(&self) -> usize {
        self.weights.len()
    }

    fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn forward(&self, input: &[f64], out: &mut [f64], _lanes: usize, _scratch: &mut Vec<f64>) {
        out.copy_from_slice(input);
    }

    fn inverse(&self, coeffs: &mut [f64], out: &mut [f64], _lanes: usize) {
        out.copy_from_slice(coeffs);
    }

    fn sensitivity(&self) -> f64 {
        1.0
    }

    fn variance_factor(&self) -> f64 {
        self.real as f64
    }
}

/// Picks the transform for one attribute: identity when split, otherwise Haar for
/// ordinal and the nominal transform for nominal attributes.
pub fn line_transform_for(attr: &AttributeSchema, split: bool) -> Arc<dyn LineTransform> {
    if split {
        return Arc::new(IdentityLine::new(attr.padded_size(), attr.domain_size()));
    }
    match attr.hierarchy() {
        None => Arc::new(HaarLine::new(attr.padded_size())),
        Some(h) => Arc::new(NominalLine::new(DecompositionTree::new(h))),
    }
}
