//! Multi-dimensional Haar-nominal transform by standard decomposition.
//!
//! Step `i` runs the dimension's [`LineTransform`] over every maximal vector along
//! dimension `i` of the step-`(i-1)` matrix. A nominal step grows the dimension
//! from `m_i` to `m'_i`. Every coefficient produced in a step gets the 1-D weight
//! of its position times the weight shared by its source vector, so the final
//! weights are products of the per-step weights along each coefficient's history.

use std::sync::Arc;

use crate::matrix::{FrequencyMatrix, MatrixFile, Space};
use crate::schema::Schema;
use crate::transform::{line_transform_for, LineTransform};

/// A (partially) transformed matrix with one weight per value.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrix {
    dims: Vec<usize>,
    values: Vec<f64>,
    weights: Vec<f64>,
    processed: usize,
    tuple_count: u64,
}

impl StepMatrix {
    /// The step-0 matrix: raw entries with unit weights.
    pub fn from_matrix(m: &FrequencyMatrix) -> Self {
        StepMatrix {
            dims: m.dims().to_vec(),
            values: m.entries().to_vec(),
            weights: vec![1.0; m.len()],
            processed: 0,
            tuple_count: m.tuple_count(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of completed steps.
    pub fn processed_dims(&self) -> usize {
        self.processed
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn offset(&self, coords: &[usize]) -> usize {
        assert_eq!(coords.len(), self.dims.len(), "coordinate arity");
        coords.iter().zip(&self.dims).fold(0, |acc, (&c, &d)| {
            assert!(c < d, "coordinate {c} out of range {d}");
            acc * d + c
        })
    }

    pub fn to_file(&self, schema: &Schema, meta: &[(String, String)]) -> MatrixFile {
        MatrixFile {
            space: Space::Coefficient,
            dims: self.dims.clone(),
            tuple_count: self.tuple_count,
            schema: schema.fingerprint(),
            meta: meta.to_vec(),
            values: self.values.clone(),
            weights: Some(self.weights.clone()),
        }
    }
}

/// Stored propagated weight of the coefficient at `coords`.
pub fn hn_weight_of(c: &StepMatrix, coords: &[usize]) -> f64 {
    c.weights[c.offset(coords)]
}

/// The sequence of 1-D transforms applied to a schema, in declaration order.
#[derive(Debug, Clone)]
pub struct HnPlan {
    transforms: Vec<Arc<dyn LineTransform>>,
}

impl HnPlan {
    /// Wavelet transforms on every dimension except those in `split`, which are left as is.
    pub fn new(schema: &Schema, split: &[usize]) -> Self {
        HnPlan {
            transforms: schema
                .attributes()
                .iter()
                .enumerate()
                .map(|(i, a)| line_transform_for(a, split.contains(&i)))
                .collect(),
        }
    }

    pub fn from_transforms(transforms: Vec<Arc<dyn LineTransform>>) -> Self {
        HnPlan { transforms }
    }

    pub fn transforms(&self) -> &[Arc<dyn LineTransform>] {
        &self.transforms
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.transforms.iter().map(|t| t.input_len()).collect()
    }

    pub fn output_dims(&self) -> Vec<usize> {
        self.transforms.iter().map(|t| t.output_len()).collect()
    }

    /// Product of the per-dimension sensitivities.
    pub fn sensitivity(&self) -> f64 {
        self.transforms.iter().map(|t| t.sensitivity()).product()
    }

    /// Product of the per-dimension variance factors.
    pub fn variance_factor(&self) -> f64 {
        self.transforms.iter().map(|t| t.variance_factor()).product()
    }

    /// Applies the next pending step in place.
    pub fn step_forward(&self, c: &mut StepMatrix) {
        let i = c.processed;
        assert!(i < self.transforms.len(), "all dimensions already processed");
        let t = &self.transforms[i];
        assert_eq!(c.dims[i], t.input_len(), "dimension {i} size mismatch");
        let pre: usize = c.dims[..i].iter().product();
        let post: usize = c.dims[i + 1..].iter().product();
        let n_in = t.input_len();
        let n_out = t.output_len();

        let mut values = vec![0.0; pre * n_out * post];
        let mut weights = vec![0.0; pre * n_out * post];
        let mut scratch = Vec::new();
        let step_weights = t.weights();
        for p in 0..pre {
            let src = p * n_in * post;
            let dst = p * n_out * post;
            t.forward(
                &c.values[src..src + n_in * post],
                &mut values[dst..dst + n_out * post],
                post,
                &mut scratch,
            );
            // All entries of a vector share the weight found at its first position.
            let shared = &c.weights[src..src + post];
            for (k, &w) in step_weights.iter().enumerate() {
                let row = &mut weights[dst + k * post..dst + (k + 1) * post];
                for (out, s) in row.iter_mut().zip(shared) {
                    *out = w * s;
                }
            }
        }
        c.dims[i] = n_out;
        c.values = values;
        c.weights = weights;
        c.processed += 1;
    }

    /// Undoes the most recent step in place, restoring the previous weights.
    pub fn step_inverse(&self, c: &mut StepMatrix) {
        assert!(c.processed > 0, "nothing to invert");
        let i = c.processed - 1;
        let t = &self.transforms[i];
        assert_eq!(c.dims[i], t.output_len(), "dimension {i} size mismatch");
        let pre: usize = c.dims[..i].iter().product();
        let post: usize = c.dims[i + 1..].iter().product();
        let n_in = t.input_len();
        let n_out = t.output_len();

        let mut values = vec![0.0; pre * n_in * post];
        let mut weights = vec![0.0; pre * n_in * post];
        let mut block = Vec::with_capacity(n_out * post);
        let base_weight = t.weights()[0];
        for p in 0..pre {
            let src = p * n_out * post;
            let dst = p * n_in * post;
            block.clear();
            block.extend_from_slice(&c.values[src..src + n_out * post]);
            t.inverse(&mut block, &mut values[dst..dst + n_in * post], post);
            for k in 0..n_in {
                for q in 0..post {
                    weights[dst + k * post + q] = c.weights[src + q] / base_weight;
                }
            }
        }
        c.dims[i] = n_in;
        c.values = values;
        c.weights = weights;
        c.processed -= 1;
    }

    pub fn forward(&self, m: &FrequencyMatrix) -> StepMatrix {
        assert_eq!(m.dims(), self.input_dims().as_slice(), "matrix does not fit the plan");
        let mut c = StepMatrix::from_matrix(m);
        for _ in 0..self.transforms.len() {
            self.step_forward(&mut c);
        }
        c
    }

    /// Forward transform of raw row-major values with the plan's input dims.
    pub fn forward_values(&self, values: &[f64]) -> StepMatrix {
        let dims = self.input_dims();
        assert_eq!(values.len(), dims.iter().product::<usize>());
        let mut c = StepMatrix {
            weights: vec![1.0; values.len()],
            values: values.to_vec(),
            dims,
            processed: 0,
            tuple_count: 0,
        };
        for _ in 0..self.transforms.len() {
            self.step_forward(&mut c);
        }
        c
    }

    /// Weight of every output coefficient.
    pub fn weights(&self) -> Vec<f64> {
        let n: usize = self.input_dims().iter().product();
        self.forward_values(&vec![0.0; n]).weights
    }

    /// Inverse transform of raw row-major coefficients with the plan's output dims.
    pub fn inverse_raw(&self, coeffs: &[f64]) -> Vec<f64> {
        let dims = self.output_dims();
        assert_eq!(coeffs.len(), dims.iter().product::<usize>());
        self.inverse_values(StepMatrix {
            weights: vec![1.0; coeffs.len()],
            values: coeffs.to_vec(),
            dims,
            processed: self.transforms.len(),
            tuple_count: 0,
        })
    }

    /// Inverts every step, last dimension first, returning the row-major entries.
    pub fn inverse_values(&self, mut c: StepMatrix) -> Vec<f64> {
        assert_eq!(c.processed, self.transforms.len(), "matrix is not fully transformed");
        while c.processed > 0 {
            self.step_inverse(&mut c);
        }
        c.values
    }
}

/// Fully transforms `m` with wavelet transforms on every dimension.
pub fn hn_forward(m: &FrequencyMatrix) -> StepMatrix {
    HnPlan::new(m.schema(), &[]).forward(m)
}

/// Inverts a fully transformed matrix, refining nominal vectors by mean subtraction.
pub fn hn_inverse(c: StepMatrix, schema: impl Into<Arc<Schema>>) -> FrequencyMatrix {
    let schema = schema.into();
    let tuple_count = c.tuple_count;
    let entries = HnPlan::new(&schema, &[]).inverse_values(c);
    FrequencyMatrix::from_entries(schema, entries, tuple_count).expect("inverse restores schema dims")
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fixtures::{medical_records, two_by_three_hierarchy};
    use crate::haar::haar_forward;
    use crate::nominal::nominal_forward;
    use crate::schema::AttributeSchema;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
    }

    fn ord(n: usize) -> AttributeSchema {
        AttributeSchema::ordinal_sized(format!("o{n}"), n).unwrap()
    }

    #[test]
    fn two_by_two_dataflow() {
        let schema = Schema::new(vec![ord(2), AttributeSchema::ordinal_sized("b", 2).unwrap()]).unwrap();
        let (v11, v12, v21, v22) = (1.0, 2.0, 3.0, 5.0);
        // Dimension 1 indexes the first coordinate: vectors <v11, v12> and <v21, v22>
        // are columns of constant second coordinate.
        let m = FrequencyMatrix::from_entries(schema, vec![v11, v21, v12, v22], 0).unwrap();
        let c = hn_forward(&m);
        assert_eq!(c.values()[0], (v11 + v12 + v21 + v22) / 4.0);
        assert_eq!(c.weights(), &[4.0, 4.0, 4.0, 4.0]);
        // Step 1 alone.
        let plan = HnPlan::new(m.schema(), &[]);
        let mut s = StepMatrix::from_matrix(&m);
        plan.step_forward(&mut s);
        assert_eq!(s.values(), &[(v11 + v12) / 2.0, (v21 + v22) / 2.0, (v11 - v12) / 2.0, (v21 - v22) / 2.0]);
        assert_eq!(s.weights(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn all_zero_matrix() {
        let schema = Schema::new(vec![
            ord(4),
            AttributeSchema::nominal("n", two_by_three_hierarchy()).unwrap(),
        ])
        .unwrap();
        let c = hn_forward(&FrequencyMatrix::zeros(schema));
        assert_eq!(c.dims(), &[4, 9]);
        assert!(c.values().iter().all(|&x| x == 0.0));
        assert_eq!(hn_weight_of(&c, &[0, 0]), 4.0);
        assert_eq!(hn_weight_of(&c, &[3, 8]), 2.0 * 0.75);
    }

    #[test]
    fn one_dimensional_reduces_to_1d_weights() {
        let schema = Schema::new(vec![ord(16)]).unwrap();
        let c = hn_forward(&FrequencyMatrix::zeros(schema));
        assert_eq!(c.weights(), haar_forward(&[0.0; 16]).weights().as_slice());
        let schema = Schema::new(vec![AttributeSchema::nominal("n", two_by_three_hierarchy()).unwrap()]).unwrap();
        let c = hn_forward(&FrequencyMatrix::zeros(schema));
        assert_eq!(c.weights(), nominal_forward(&[0.0; 6], &two_by_three_hierarchy()).weights());
    }

    #[test]
    fn eight_by_eight_base_weight() {
        let schema = Schema::new(vec![ord(8), AttributeSchema::ordinal_sized("x", 8).unwrap()]).unwrap();
        let c = hn_forward(&FrequencyMatrix::zeros(schema));
        assert_eq!(hn_weight_of(&c, &[0, 0]), 64.0);
    }

    #[test]
    fn medical_records_round_trip() {
        let m = FrequencyMatrix::build(&medical_records());
        let back = hn_inverse(hn_forward(&m), m.shared_schema());
        for (a, b) in back.entries().iter().zip(m.entries()) {
            assert!(close(*a, *b));
        }
        assert_eq!(back.tuple_count(), 8);
    }

    #[test]
    fn base_only_gives_constant_matrix() {
        let schema = Arc::new(Schema::new(vec![ord(4), AttributeSchema::ordinal_sized("x", 8).unwrap()]).unwrap());
        let mut c = hn_forward(&FrequencyMatrix::zeros(schema.clone()));
        c.values_mut()[0] = 2.5;
        let m = hn_inverse(c, schema);
        assert!(m.entries().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn matches_sequential_1d_composition() {
        // Oracle: apply the single-vector 1-D transforms by explicit gathering.
        let h = two_by_three_hierarchy();
        let schema = Schema::new(vec![
            ord(4),
            AttributeSchema::ordinal_sized("b", 4).unwrap(),
            AttributeSchema::nominal("n", h.clone()).unwrap(),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let entries: Vec<f64> = (0..96).map(|_| rng.gen_range(0.0..9.0)).collect();
            let m = FrequencyMatrix::from_entries(schema.clone(), entries.clone(), 0).unwrap();
            let fast = hn_forward(&m);

            let mut dims = vec![4, 4, 6];
            let mut cur = entries;
            for axis in 0..3 {
                let out_len = if axis == 2 { 9 } else { 4 };
                let mut out_dims = dims.clone();
                out_dims[axis] = out_len;
                let mut next = vec![0.0; out_dims.iter().product()];
                let idx = |d: &[usize], c: &[usize]| c.iter().zip(d).fold(0, |a, (&c, &d)| a * d + c);
                let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
                for i in 0..dims[others[0]] {
                    for j in 0..dims[others[1]] {
                        let coord = |k: usize| {
                            let mut c = [0; 3];
                            c[axis] = k;
                            c[others[0]] = i;
                            c[others[1]] = j;
                            c
                        };
                        let line: Vec<f64> = (0..dims[axis]).map(|k| cur[idx(&dims, &coord(k))]).collect();
                        let coeffs = if axis == 2 {
                            nominal_forward(&line, &h).values().to_vec()
                        } else {
                            haar_forward(&line).into_values()
                        };
                        for (k, v) in coeffs.into_iter().enumerate() {
                            next[idx(&out_dims, &coord(k))] = v;
                        }
                    }
                }
                dims = out_dims;
                cur = next;
            }
            for (a, b) in fast.values().iter().zip(&cur) {
                assert!(close(*a, *b), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn step_inverse_restores_weights() {
        let schema = Schema::new(vec![
            ord(4),
            AttributeSchema::nominal("n", two_by_three_hierarchy()).unwrap(),
        ])
        .unwrap();
        let m = FrequencyMatrix::zeros(schema);
        let plan = HnPlan::new(m.schema(), &[]);
        let mut c = plan.forward(&m);
        plan.step_inverse(&mut c);
        let mut expected = StepMatrix::from_matrix(&m);
        plan.step_forward(&mut expected);
        assert_eq!(c.weights(), expected.weights());
        assert_eq!(c.dims(), expected.dims());
    }
}
