//! One-dimensional Haar wavelet transform.
//!
//! Coefficients are kept in a single array of length `m = 2^l`: index 0 holds the
//! base coefficient (the mean of all entries), and indices `1..m` hold the
//! decomposition tree in heap order, so node `i` has children `2i` and `2i + 1`
//! and sits at level `floor(log2 i) + 1` (the root is level 1). This is also the
//! level-order layout used when the transform runs along one dimension of a
//! larger matrix.
//!
//! The `*_lanes` kernels transform `lanes` interleaved vectors at once: element
//! `k` of vector `q` lives at `k * lanes + q`.

#[derive(Debug, Clone, PartialEq)]
pub struct HaarCoefficients {
    values: Vec<f64>,
}

/// Position of a coefficient in the decomposition tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HaarPosition {
    Base,
    /// Tree level, root = 1.
    Level(u32),
}

impl HaarCoefficients {
    /// Wraps base-first heap-ordered coefficients. Panics unless the length is a power of two.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(
            values.len().is_power_of_two(),
            "Haar coefficient count {} is not a power of two",
            values.len()
        );
        HaarCoefficients { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn base(&self) -> f64 {
        self.values[0]
    }

    /// The `2^l - 1` detail coefficients, heap order, root first.
    pub fn tree(&self) -> &[f64] {
        &self.values[1..]
    }

    /// Tree depth `l`.
    pub fn levels(&self) -> u32 {
        self.values.len().trailing_zeros()
    }

    pub fn weight(&self, index: usize) -> f64 {
        haar_weight(position_of(index), self.levels())
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.values.len()).map(|i| self.weight(i)).collect()
    }

    /// Reconstructs the entry at `index` from its ancestors: the base plus each
    /// ancestor, added when the entry lies in its left subtree and subtracted otherwise.
    pub fn reconstruct_entry(&self, index: usize) -> f64 {
        let m = self.values.len();
        assert!(index < m, "entry {index} out of range {m}");
        let mut v = self.values[0];
        // Leaf `index` hangs below heap node (m + index) / 2.
        let mut child = m + index;
        while child > 1 {
            let parent = child / 2;
            let sign = if child % 2 == 0 { 1.0 } else { -1.0 };
            v += sign * self.values[parent];
            child = parent;
        }
        v
    }
}

/// Tree position of the coefficient stored at `index`.
pub fn position_of(index: usize) -> HaarPosition {
    if index == 0 {
        HaarPosition::Base
    } else {
        HaarPosition::Level(index.ilog2() + 1)
    }
}

/// Weight of a coefficient in a transform of `2^levels` entries: `2^levels` for the
/// base and `2^(levels - i + 1)` at level `i`.
pub fn haar_weight(position: HaarPosition, levels: u32) -> f64 {
    match position {
        HaarPosition::Base => (1u64 << levels) as f64,
        HaarPosition::Level(i) => {
            assert!(
                (1..=levels).contains(&i),
                "level {i} outside 1..={levels}"
            );
            (1u64 << (levels - i + 1)) as f64
        }
    }
}

pub fn haar_forward(v: &[f64]) -> HaarCoefficients {
    let mut out = vec![0.0; v.len()];
    let mut scratch = Vec::new();
    forward_lanes(v, &mut out, 1, &mut scratch);
    HaarCoefficients { values: out }
}

pub fn haar_inverse(c: &HaarCoefficients) -> Vec<f64> {
    let mut out = vec![0.0; c.values.len()];
    inverse_lanes(&c.values, &mut out, 1);
    out
}

/// Forward transform of `lanes` interleaved vectors by bottom-up pairwise averaging.
pub fn forward_lanes(input: &[f64], out: &mut [f64], lanes: usize, scratch: &mut Vec<f64>) {
    let n = input.len() / lanes;
    assert!(
        n.is_power_of_two() && input.len() == n * lanes,
        "Haar input length {n} is not a power of two"
    );
    assert_eq!(out.len(), input.len());
    scratch.clear();
    scratch.extend_from_slice(input);
    let cur = scratch.as_mut_slice();
    let mut len = n;
    while len > 1 {
        let half = len / 2;
        for j in 0..half {
            for q in 0..lanes {
                let a = cur[2 * j * lanes + q];
                let b = cur[(2 * j + 1) * lanes + q];
                out[(half + j) * lanes + q] = (a - b) / 2.0;
                cur[j * lanes + q] = (a + b) / 2.0;
            }
        }
        len = half;
    }
    out[..lanes].copy_from_slice(&cur[..lanes]);
}

/// Inverse of [`forward_lanes`], top-down.
pub fn inverse_lanes(coeffs: &[f64], out: &mut [f64], lanes: usize) {
    let n = coeffs.len() / lanes;
    assert!(
        n.is_power_of_two() && coeffs.len() == n * lanes,
        "Haar coefficient count {n} is not a power of two"
    );
    assert_eq!(out.len(), coeffs.len());
    out[..lanes].copy_from_slice(&coeffs[..lanes]);
    let mut half = 1;
    while half < n {
        // Descending j keeps out[j] unread-overwritten: writes land on 2j and 2j + 1.
        for j in (0..half).rev() {
            for q in 0..lanes {
                let a = out[j * lanes + q];
                let d = coeffs[(half + j) * lanes + q];
                out[(2 * j + 1) * lanes + q] = a - d;
                out[2 * j * lanes + q] = a + d;
            }
        }
        half *= 2;
    }
}
