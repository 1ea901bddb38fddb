//! Over-complete wavelet transform for nominal attributes.
//!
//! The decomposition tree is the attribute's hierarchy with one extra child under
//! every hierarchy leaf holding the matrix entry. Every hierarchy node therefore
//! yields one coefficient: the root's coefficient (the base) is the total
//! leaf-sum, and any other node's coefficient is its leaf-sum minus the average
//! leaf-sum of its parent's children. Coefficients are stored by hierarchy node
//! id, which is a level-order numbering with the base first.

use std::ops::Range;

use crate::schema::Hierarchy;

/// Weight of a nominal coefficient: 1 for the base, otherwise `f / (2f - 2)` with
/// `f` the fanout of the coefficient's parent.
pub fn nominal_weight(parent_fanout: Option<usize>) -> f64 {
    match parent_fanout {
        None => 1.0,
        Some(f) => {
            assert!(f >= 2, "nominal weight undefined for fanout {f}");
            f as f64 / (2 * f - 2) as f64
        }
    }
}

/// Precomputed structure of one hierarchy's decomposition tree.
#[derive(Debug, Clone)]
pub struct DecompositionTree {
    parent: Vec<Option<usize>>,
    /// `1 / fanout(parent)`, zero for the root.
    inv_parent_fanout: Vec<f64>,
    children: Vec<Range<usize>>,
    /// Entry index of each hierarchy leaf, by node id.
    entry_of: Vec<Option<usize>>,
    groups: Vec<Range<usize>>,
    weights: Vec<f64>,
    height: usize,
}

impl DecompositionTree {
    pub fn new(h: &Hierarchy) -> Self {
        let nodes = h.nodes();
        let parent: Vec<Option<usize>> = nodes.iter().map(|n| n.parent).collect();
        let inv_parent_fanout = parent
            .iter()
            .map(|p| p.map_or(0.0, |p| 1.0 / nodes[p].fanout() as f64))
            .collect();
        let weights = parent
            .iter()
            .map(|p| nominal_weight(p.map(|p| nodes[p].fanout())))
            .collect();
        let groups = nodes
            .iter()
            .filter(|n| !n.is_leaf())
            .map(|n| n.children.clone())
            .collect();
        let entry_of = nodes
            .iter()
            .map(|n| n.is_leaf().then_some(n.leaves.start))
            .collect();
        DecompositionTree {
            parent,
            inv_parent_fanout,
            children: nodes.iter().map(|n| n.children.clone()).collect(),
            entry_of,
            groups,
            weights,
            height: h.height(),
        }
    }

    /// Number of matrix entries `m`.
    pub fn entry_count(&self) -> usize {
        self.entry_of.iter().filter(|e| e.is_some()).count()
    }

    /// Number of coefficients `m'` (one per hierarchy node).
    pub fn coefficient_count(&self) -> usize {
        self.parent.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Sibling groups as ranges of coefficient indices; the base belongs to none.
    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Forward transform of `lanes` interleaved vectors (`m` rows in, `m'` rows out).
    pub fn forward_lanes(&self, input: &[f64], out: &mut [f64], lanes: usize) {
        let m = self.entry_count();
        let nodes = self.coefficient_count();
        assert_eq!(input.len(), m * lanes, "nominal input size mismatch");
        assert_eq!(out.len(), nodes * lanes);

        // Leaf-sums, children before parents.
        for node in (0..nodes).rev() {
            let row = node * lanes;
            match self.entry_of[node] {
                Some(e) => out[row..row + lanes].copy_from_slice(&input[e * lanes..(e + 1) * lanes]),
                None => {
                    let (head, tail) = out.split_at_mut((node + 1) * lanes);
                    let acc = &mut head[row..];
                    acc.fill(0.0);
                    let offset = (node + 1) * lanes;
                    for c in self.children[node].clone() {
                        let child = &tail[c * lanes - offset..(c + 1) * lanes - offset];
                        for (a, x) in acc.iter_mut().zip(child) {
                            *a += x;
                        }
                    }
                }
            }
        }
        // Deviation from the sibling average; parents are still raw leaf-sums
        // because they precede their children.
        for node in (1..nodes).rev() {
            let p = self.parent[node].expect("non-root has a parent");
            let inv = self.inv_parent_fanout[node];
            let (head, tail) = out.split_at_mut(node * lanes);
            let parent_sum = &head[p * lanes..(p + 1) * lanes];
            for (c, s) in tail[..lanes].iter_mut().zip(parent_sum) {
                *c -= s * inv;
            }
        }
    }

    /// Subtracts each sibling group's mean from its members, lane by lane.
    pub fn mean_subtract_lanes(&self, coeffs: &mut [f64], lanes: usize) {
        for g in &self.groups {
            let size = g.len() as f64;
            for q in 0..lanes {
                let mean = g.clone().map(|i| coeffs[i * lanes + q]).sum::<f64>() / size;
                for i in g.clone() {
                    coeffs[i * lanes + q] -= mean;
                }
            }
        }
    }

    /// Reconstructs entries top-down, overwriting `coeffs` with leaf-sums.
    ///
    /// Expects zero-sum sibling groups (see [`DecompositionTree::mean_subtract_lanes`]).
    pub fn inverse_lanes_in_place(&self, coeffs: &mut [f64], out: &mut [f64], lanes: usize) {
        let nodes = self.coefficient_count();
        assert_eq!(coeffs.len(), nodes * lanes, "nominal coefficient size mismatch");
        assert_eq!(out.len(), self.entry_count() * lanes);
        for node in 0..nodes {
            if let Some(p) = self.parent[node] {
                let inv = self.inv_parent_fanout[node];
                let (head, tail) = coeffs.split_at_mut(node * lanes);
                let parent_sum = &head[p * lanes..(p + 1) * lanes];
                for (c, s) in tail[..lanes].iter_mut().zip(parent_sum) {
                    *c += s * inv;
                }
            }
            if let Some(e) = self.entry_of[node] {
                out[e * lanes..(e + 1) * lanes]
                    .copy_from_slice(&coeffs[node * lanes..(node + 1) * lanes]);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NominalCoefficients {
    values: Vec<f64>,
    weights: Vec<f64>,
    groups: Vec<Range<usize>>,
}

impl NominalCoefficients {
    /// Wraps coefficients indexed by the node ids of `h`.
    pub fn from_values(values: Vec<f64>, h: &Hierarchy) -> Self {
        assert_eq!(values.len(), h.node_count(), "one coefficient per hierarchy node");
        let tree = DecompositionTree::new(h);
        NominalCoefficients {
            values,
            weights: tree.weights,
            groups: tree.groups,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn base(&self) -> f64 {
        self.values[0]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sibling_groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    /// Largest `|sum|` over sibling groups, each scaled by `1 + max |c|` in the group.
    pub fn max_group_imbalance(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let vals = &self.values[g.clone()];
                let sum: f64 = vals.iter().sum();
                let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                sum.abs() / scale
            })
            .fold(0.0, f64::max)
    }
}

pub fn nominal_forward(v: &[f64], h: &Hierarchy) -> NominalCoefficients {
    assert_eq!(v.len(), h.leaf_count(), "vector length must equal the leaf count");
    let tree = DecompositionTree::new(h);
    let mut values = vec![0.0; tree.coefficient_count()];
    tree.forward_lanes(v, &mut values, 1);
    NominalCoefficients {
        values,
        weights: tree.weights,
        groups: tree.groups,
    }
}

pub fn mean_subtract(c: &NominalCoefficients) -> NominalCoefficients {
    let mut out = c.clone();
    for g in &out.groups {
        let mean = out.values[g.clone()].iter().sum::<f64>() / g.len() as f64;
        for x in &mut out.values[g.clone()] {
            *x -= mean;
        }
    }
    out
}

/// Panics if some sibling group does not sum to zero; call [`mean_subtract`] first
/// on noisy coefficients.
pub fn nominal_inverse(c: &NominalCoefficients, h: &Hierarchy) -> Vec<f64> {
    let imbalance = c.max_group_imbalance();
    assert!(
        imbalance <= 1e-9,
        "sibling groups must sum to zero before reconstruction (imbalance {imbalance:e})"
    );
    let tree = DecompositionTree::new(h);
    let mut work = c.values.clone();
    let mut out = vec![0.0; tree.entry_count()];
    tree.inverse_lanes_in_place(&mut work, &mut out, 1);
    out
}
