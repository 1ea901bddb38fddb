//! Small datasets and hierarchy builders shared by tests, examples and the verifier.

use rand::Rng;

use crate::dataset::Dataset;
use crate::schema::{AttributeSchema, Hierarchy, NodeSpec, Schema};

/// Eight medical records over `Age` (five ordered bands) and `HasDiabetes` (`Yes`, `No`).
pub fn medical_records() -> Dataset {
    let age = AttributeSchema::ordinal(
        "Age",
        ["<30", "30-39", "40-49", "50-59", ">=60"]
            .map(String::from)
            .to_vec(),
    )
    .expect("valid attribute");
    let diabetes =
        AttributeSchema::ordinal("HasDiabetes", vec!["Yes".into(), "No".into()]).expect("valid attribute");
    let schema = Schema::new(vec![age, diabetes]).expect("valid schema");
    let rows = [[0, 1], [0, 1], [1, 1], [2, 1], [2, 0], [2, 1], [3, 1], [4, 0]];
    Dataset::new(schema, rows.iter().flatten().copied().collect()).expect("rows in domain")
}

/// Root with two groups of three leaves each (height 3).
pub fn two_by_three_hierarchy() -> Hierarchy {
    let group = |g: &str| {
        NodeSpec::node(
            g,
            (1..=3).map(|i| NodeSpec::leaf(format!("{g}{i}"))).collect(),
        )
    };
    Hierarchy::from_spec(&NodeSpec::node("all", vec![group("a"), group("b")]))
}

/// Root over `groups` internal nodes of `leaves_per_group` leaves each (height 3).
pub fn uniform_hierarchy(groups: usize, leaves_per_group: usize) -> Hierarchy {
    layered_hierarchy(&[groups, leaves_per_group])
}

/// Complete tree where every node on level `i + 1` has `fanouts[i]` children.
/// Height is `fanouts.len() + 1`; leaf labels are `v` followed by the child path.
pub fn layered_hierarchy(fanouts: &[usize]) -> Hierarchy {
    fn build(label: String, fanouts: &[usize]) -> NodeSpec {
        match fanouts.split_first() {
            None => NodeSpec::leaf(format!("v{label}")),
            Some((&f, rest)) => NodeSpec::node(
                format!("g{label}"),
                (0..f).map(|i| build(format!("{label}_{i}"), rest)).collect(),
            ),
        }
    }
    let mut spec = build(String::new(), fanouts);
    spec.label = "all".into();
    Hierarchy::from_spec(&spec)
}

/// Random valid hierarchy of height in `2..=max_height` with at most `max_leaves` leaves.
///
/// Internal nodes get fanouts of at least two; leaves may sit at different depths.
pub fn random_hierarchy(rng: &mut impl Rng, max_height: usize, max_leaves: usize) -> Hierarchy {
    assert!(max_height >= 2 && max_leaves >= 2);

    fn grow(
        rng: &mut impl Rng,
        level: usize,
        max_height: usize,
        cap: usize,
        next_label: &mut usize,
        force: bool,
    ) -> NodeSpec {
        let label = format!("n{next_label}");
        *next_label += 1;
        if level < max_height && cap >= 2 && (force || rng.gen_bool(0.6)) {
            let fanout = rng.gen_range(2..=cap.min(6));
            let children = (0..fanout)
                .map(|_| grow(rng, level + 1, max_height, cap / fanout, next_label, false))
                .collect();
            NodeSpec::node(label, children)
        } else {
            NodeSpec::leaf(label)
        }
    }

    let mut next_label = 0;
    let h = Hierarchy::from_spec(&grow(rng, 1, max_height, max_leaves, &mut next_label, true));
    debug_assert!(h.validate().is_ok());
    h
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn random_hierarchies_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut tallest = 0;
        for _ in 0..500 {
            let h = random_hierarchy(&mut rng, 5, 64);
            assert!(h.validate().is_ok());
            assert!(h.leaf_count() <= 64, "{} leaves", h.leaf_count());
            assert!((2..=5).contains(&h.height()));
            tallest = tallest.max(h.height());
        }
        assert_eq!(tallest, 5);
    }

    #[test]
    fn layered_shapes() {
        let h = layered_hierarchy(&[2, 3, 4]);
        assert_eq!((h.height(), h.leaf_count(), h.node_count()), (4, 24, 33));
        assert!(h.validate().is_ok());
        assert_eq!(h.path_of(h.leaf_node(5)), "g_0/g_0_1/v_0_1_1");
        assert_eq!(uniform_hierarchy(4, 3).height(), 3);
    }
}
