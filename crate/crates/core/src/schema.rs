//! Attribute domains and nominal hierarchies.
//!
//! A [`Schema`] is an ordered list of attributes. Ordinal attributes carry an
//! ordered list of value labels and are padded to the next power of two when
//! stored in a frequency matrix. Nominal attributes carry a [`Hierarchy`] whose
//! leaves, read left to right, are the domain values; that left-to-right order
//! is also the storage order, so every hierarchy node covers a contiguous range
//! of storage indices.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Nested description of a hierarchy node, as written in schema files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<NodeSpec>,
}

impl NodeSpec {
    pub fn leaf(label: impl Into<String>) -> Self {
        NodeSpec {
            label: label.into(),
            children: Vec::new(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<NodeSpec>) -> Self {
        NodeSpec {
            label: label.into(),
            children,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyNode {
    pub label: String,
    pub parent: Option<usize>,
    /// Children occupy a contiguous id range because ids are assigned in level order.
    pub children: Range<usize>,
    /// Root is level 1.
    pub level: usize,
    /// Storage indices of the leaves under this node.
    pub leaves: Range<usize>,
}

impl HierarchyNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn fanout(&self) -> usize {
        self.children.len()
    }
}

/// A tree over the values of a nominal attribute.
///
/// Node ids follow a level-order traversal (root is `0`), so siblings are
/// contiguous and a parent always precedes its children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    nodes: Vec<HierarchyNode>,
    leaf_nodes: Vec<usize>,
    height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HierarchyIssue {
    TooShallow { height: usize },
    SingleChild { node: String },
    DuplicateLeaf { label: String },
}

impl fmt::Display for HierarchyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HierarchyIssue::TooShallow { height } => {
                write!(f, "height {height} is below the minimum of 2")
            }
            HierarchyIssue::SingleChild { node } => {
                write!(f, "internal node `{node}` has exactly one child")
            }
            HierarchyIssue::DuplicateLeaf { label } => write!(f, "duplicate leaf value `{label}`"),
        }
    }
}

impl Hierarchy {
    /// Builds the tree without checking it; see [`Hierarchy::validate`].
    pub fn from_spec(spec: &NodeSpec) -> Self {
        // Leaf storage order is the left-to-right (preorder) leaf order.
        fn leaf_count(spec: &NodeSpec) -> usize {
            if spec.children.is_empty() {
                1
            } else {
                spec.children.iter().map(leaf_count).sum()
            }
        }

        let mut nodes: Vec<HierarchyNode> = Vec::new();
        let mut queue: Vec<(&NodeSpec, Option<usize>, usize, usize)> = vec![(spec, None, 1, 0)];
        let mut head = 0;
        while head < queue.len() {
            let (node, parent, level, first_leaf) = queue[head];
            let id = head;
            head += 1;
            let width = leaf_count(node);
            let child_start = queue.len();
            let mut offset = first_leaf;
            for child in &node.children {
                queue.push((child, Some(id), level + 1, offset));
                offset += leaf_count(child);
            }
            nodes.push(HierarchyNode {
                label: node.label.clone(),
                parent,
                children: child_start..queue.len(),
                level,
                leaves: first_leaf..first_leaf + width,
            });
        }

        let leaf_total = nodes[0].leaves.len();
        let mut leaf_nodes = vec![0; leaf_total];
        for (id, node) in nodes.iter().enumerate() {
            if node.is_leaf() {
                leaf_nodes[node.leaves.start] = id;
            }
        }
        let height = nodes.iter().map(|n| n.level).max().unwrap_or(1);
        Hierarchy {
            nodes,
            leaf_nodes,
            height,
        }
    }

    /// Lists every structural problem; an empty list means the hierarchy is usable.
    pub fn validate(&self) -> std::result::Result<(), Vec<HierarchyIssue>> {
        let mut issues = Vec::new();
        if self.height < 2 {
            issues.push(HierarchyIssue::TooShallow {
                height: self.height,
            });
        }
        for node in &self.nodes {
            if node.fanout() == 1 {
                issues.push(HierarchyIssue::SingleChild {
                    node: node.label.clone(),
                });
            }
        }
        let mut seen = HashSet::new();
        for &leaf in &self.leaf_nodes {
            let label = &self.nodes[leaf].label;
            if !seen.insert(label.as_str()) {
                issues.push(HierarchyIssue::DuplicateLeaf {
                    label: label.clone(),
                });
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(issues)
        }
    }

    pub fn to_spec(&self) -> NodeSpec {
        self.spec_of(0)
    }

    fn spec_of(&self, id: usize) -> NodeSpec {
        let node = &self.nodes[id];
        NodeSpec {
            label: node.label.clone(),
            children: node.children.clone().map(|c| self.spec_of(c)).collect(),
        }
    }

    pub fn nodes(&self) -> &[HierarchyNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &HierarchyNode {
        &self.nodes[id]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_nodes.len()
    }

    /// Node id of the leaf stored at `index`.
    pub fn leaf_node(&self, index: usize) -> usize {
        self.leaf_nodes[index]
    }

    pub fn leaf_labels(&self) -> impl Iterator<Item = &str> + '_ {
        self.leaf_nodes
            .iter()
            .map(move |&id| self.nodes[id].label.as_str())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `/`-separated labels from below the root down to `id`; the root's path is empty.
    pub fn path_of(&self, id: usize) -> String {
        let mut labels = Vec::new();
        let mut cur = id;
        while let Some(parent) = self.nodes[cur].parent {
            labels.push(self.nodes[cur].label.as_str());
            cur = parent;
        }
        labels.reverse();
        labels.join("/")
    }

    pub fn find_path(&self, path: &str) -> Option<usize> {
        let mut cur = 0;
        for part in path.split('/').filter(|p| !p.is_empty()) {
            cur = self.nodes[cur]
                .children
                .clone()
                .find(|&c| self.nodes[c].label == part)?;
        }
        Some(cur)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Ordinal,
    Nominal,
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttributeKind::Ordinal => f.write_str("ordinal"),
            AttributeKind::Nominal => f.write_str("nominal"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeSchema {
    name: String,
    kind: AttributeKind,
    labels: Vec<String>,
    hierarchy: Option<Hierarchy>,
}

impl AttributeSchema {
    pub fn ordinal(name: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if labels.is_empty() {
            return Err(Error::Schema(format!("ordinal attribute `{name}` has an empty domain")));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = labels.iter().find(|l| !seen.insert(l.as_str())) {
            return Err(Error::Schema(format!(
                "ordinal attribute `{name}` repeats value `{dup}`"
            )));
        }
        Ok(AttributeSchema {
            name,
            kind: AttributeKind::Ordinal,
            labels,
            hierarchy: None,
        })
    }

    /// Ordinal attribute whose values are the integers `0..size` (labels are their decimal form).
    pub fn ordinal_sized(name: impl Into<String>, size: usize) -> Result<Self> {
        Self::ordinal(name, (0..size).map(|v| v.to_string()).collect())
    }

    pub fn nominal(name: impl Into<String>, hierarchy: Hierarchy) -> Result<Self> {
        let name = name.into();
        if let Err(issues) = hierarchy.validate() {
            return Err(Error::Hierarchy {
                attribute: name,
                issues,
            });
        }
        let labels = hierarchy.leaf_labels().map(str::to_owned).collect();
        Ok(AttributeSchema {
            name,
            kind: AttributeKind::Nominal,
            labels,
            hierarchy: Some(hierarchy),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> AttributeKind {
        self.kind
    }

    pub fn is_ordinal(&self) -> bool {
        self.kind == AttributeKind::Ordinal
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn hierarchy(&self) -> Option<&Hierarchy> {
        self.hierarchy.as_ref()
    }

    /// `|A|`, the number of real domain values.
    pub fn domain_size(&self) -> usize {
        self.labels.len()
    }

    /// Size of this attribute's dimension in a frequency matrix.
    pub fn padded_size(&self) -> usize {
        match self.kind {
            AttributeKind::Ordinal => self.labels.len().next_power_of_two(),
            AttributeKind::Nominal => self.labels.len(),
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Sensitivity factor `P(A)`: `1 + log2` of the padded size, or the hierarchy height.
    pub fn sensitivity_factor(&self) -> f64 {
        match &self.hierarchy {
            None => 1.0 + self.padded_size().trailing_zeros() as f64,
            Some(h) => h.height() as f64,
        }
    }

    /// Variance factor `H(A)`: `(2 + log2 |A|) / 2` on the padded size, or 4 for nominal attributes.
    pub fn variance_factor(&self) -> f64 {
        match self.kind {
            AttributeKind::Ordinal => (2.0 + self.padded_size().trailing_zeros() as f64) / 2.0,
            AttributeKind::Nominal => 4.0,
        }
    }

    /// True when keeping this attribute out of the wavelet transform does not
    /// worsen the worst-case variance bound: `|A| <= P(A)^2 * H(A)`.
    pub fn prefers_split(&self) -> bool {
        let p = self.sensitivity_factor();
        self.domain_size() as f64 <= p * p * self.variance_factor()
    }

    fn to_spec(&self) -> AttributeSpec {
        match &self.hierarchy {
            None => AttributeSpec::Ordinal {
                name: self.name.clone(),
                values: Some(self.labels.clone()),
                range: None,
            },
            Some(h) => AttributeSpec::Nominal {
                name: self.name.clone(),
                hierarchy: h.to_spec(),
            },
        }
    }
}

/// Schema-file form of one attribute.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AttributeSpec {
    Ordinal {
        name: String,
        /// Ordered value labels.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<String>>,
        /// Inclusive integer range `[lo, hi]`, used when `values` is absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<[i64; 2]>,
    },
    Nominal {
        name: String,
        hierarchy: NodeSpec,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSpec {
    pub attributes: Vec<AttributeSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    attributes: Vec<AttributeSchema>,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSchema>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::Schema("schema declares no attributes".into()));
        }
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.name()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name())));
            }
        }
        Ok(Schema { attributes })
    }

    pub fn from_spec(spec: SchemaSpec) -> Result<Self> {
        let attributes = spec
            .attributes
            .into_iter()
            .map(|a| match a {
                AttributeSpec::Ordinal {
                    name,
                    values: Some(values),
                    range: None,
                } => AttributeSchema::ordinal(name, values),
                AttributeSpec::Ordinal {
                    name,
                    values: None,
                    range: Some([lo, hi]),
                } => {
                    if lo > hi {
                        return Err(Error::Schema(format!(
                            "attribute `{name}` has an empty range {lo}..={hi}"
                        )));
                    }
                    AttributeSchema::ordinal(name, (lo..=hi).map(|v| v.to_string()).collect())
                }
                AttributeSpec::Ordinal { name, .. } => Err(Error::Schema(format!(
                    "ordinal attribute `{name}` needs exactly one of `values` or `range`"
                ))),
                AttributeSpec::Nominal { name, hierarchy } => {
                    AttributeSchema::nominal(name, Hierarchy::from_spec(&hierarchy))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Schema::new(attributes)
    }

    pub fn to_spec(&self) -> SchemaSpec {
        SchemaSpec {
            attributes: self.attributes.iter().map(|a| a.to_spec()).collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: SchemaSpec = serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("malformed schema file: {e}")))?;
        Schema::from_spec(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("schema spec serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Schema::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn attributes(&self) -> &[AttributeSchema] {
        &self.attributes
    }

    pub fn attribute(&self, i: usize) -> &AttributeSchema {
        &self.attributes[i]
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name() == name)
    }

    /// Resolves attribute names to dimension indices, sorted and deduplicated.
    pub fn resolve(&self, names: &[impl AsRef<str>]) -> Result<Vec<usize>> {
        let mut dims = names
            .iter()
            .map(|n| {
                let n = n.as_ref();
                self.index_of(n)
                    .ok_or_else(|| Error::Schema(format!("unknown attribute `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        dims.sort_unstable();
        dims.dedup();
        Ok(dims)
    }

    /// Per-dimension storage sizes of the frequency matrix.
    pub fn dims(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.padded_size()).collect()
    }

    /// Entry count `m` of the frequency matrix, padding included.
    pub fn entry_count(&self) -> usize {
        self.attributes.iter().map(|a| a.padded_size()).product()
    }

    /// Hex digest of the canonical schema-file form.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(&self.to_spec()).expect("schema spec serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::two_by_three_hierarchy as two_by_three;

    #[test]
    fn level_order_ids_and_leaf_ranges() {
        let h = two_by_three();
        assert!(h.validate().is_ok());
        assert_eq!(h.height(), 3);
        assert_eq!(h.node_count(), 9);
        assert_eq!(h.internal_count(), 3);
        assert_eq!(h.node(0).children, 1..3);
        assert_eq!(h.node(1).children, 3..6);
        assert_eq!(h.node(2).leaves, 3..6);
        assert_eq!(h.leaf_node(4), 7);
        assert_eq!(
            h.leaf_labels().collect::<Vec<_>>(),
            vec!["a1", "a2", "a3", "b1", "b2", "b3"]
        );
        assert_eq!(h.find_path("b/b2"), Some(7));
        assert_eq!(h.path_of(7), "b/b2");
        assert_eq!(h.find_path(""), Some(0));
        assert_eq!(h.find_path("c"), None);
    }

    #[test]
    fn rejects_single_leaf() {
        let h = Hierarchy::from_spec(&NodeSpec::leaf("only"));
        assert_eq!(
            h.validate().unwrap_err(),
            vec![HierarchyIssue::TooShallow { height: 1 }]
        );
    }

    #[test]
    fn rejects_fanout_one() {
        let h = Hierarchy::from_spec(&NodeSpec::node(
            "root",
            vec![NodeSpec::node(
                "mid",
                vec![NodeSpec::leaf("x"), NodeSpec::leaf("y")],
            )],
        ));
        let issues = h.validate().unwrap_err();
        assert_eq!(
            issues,
            vec![HierarchyIssue::SingleChild {
                node: "root".into()
            }]
        );
    }

    #[test]
    fn lists_every_violation() {
        let h = Hierarchy::from_spec(&NodeSpec::node(
            "root",
            vec![
                NodeSpec::node("solo", vec![NodeSpec::leaf("x")]),
                NodeSpec::leaf("x"),
            ],
        ));
        let issues = h.validate().unwrap_err();
        assert_eq!(issues.len(), 2);
        assert!(issues.contains(&HierarchyIssue::DuplicateLeaf { label: "x".into() }));
    }

    #[test]
    fn factors() {
        let ord16 = AttributeSchema::ordinal_sized("a", 16).unwrap();
        assert_eq!(ord16.sensitivity_factor(), 5.0);
        assert_eq!(ord16.variance_factor(), 3.0);
        let ord101 = AttributeSchema::ordinal_sized("age", 101).unwrap();
        assert_eq!(ord101.padded_size(), 128);
        assert_eq!(ord101.sensitivity_factor(), 8.0);
        let ord512 = AttributeSchema::ordinal_sized("b", 512).unwrap();
        assert_eq!(ord512.variance_factor(), 5.5);
        let nom = AttributeSchema::nominal("n", two_by_three()).unwrap();
        assert_eq!(nom.sensitivity_factor(), 3.0);
        assert_eq!(nom.variance_factor(), 4.0);
        assert_eq!(nom.padded_size(), 6);
    }

    #[test]
    fn split_rule_matches_census_style_attributes() {
        let age = AttributeSchema::ordinal_sized("Age", 101).unwrap();
        let income = AttributeSchema::ordinal_sized("Income", 1001).unwrap();
        let gender = AttributeSchema::nominal(
            "Gender",
            Hierarchy::from_spec(&NodeSpec::node(
                "any",
                vec![NodeSpec::leaf("M"), NodeSpec::leaf("F")],
            )),
        )
        .unwrap();
        let occupation = AttributeSchema::nominal(
            "Occupation",
            Hierarchy::from_spec(&NodeSpec::node(
                "any",
                (0..16)
                    .map(|g| {
                        NodeSpec::node(
                            format!("g{g}"),
                            (0..32).map(|l| NodeSpec::leaf(format!("o{g}_{l}"))).collect(),
                        )
                    })
                    .collect(),
            )),
        )
        .unwrap();
        // 101 <= 8^2 * 4.5 = 288; 2 <= 2^2 * 4 = 16.
        assert!(age.prefers_split());
        assert!(gender.prefers_split());
        // 1001 > 11^2 * 6 = 726; 512 > 3^2 * 4 = 36.
        assert!(!income.prefers_split());
        assert!(!occupation.prefers_split());
    }

    #[test]
    fn schema_file_round_trip() {
        let text = r#"{
            "attributes": [
                {"kind": "ordinal", "name": "Age", "values": ["<30", "30-39", "40-49"]},
                {"kind": "ordinal", "name": "Score", "range": [10, 14]},
                {"kind": "nominal", "name": "Region", "hierarchy":
                    {"label": "any", "children": [
                        {"label": "north", "children": [{"label": "n1"}, {"label": "n2"}]},
                        {"label": "south", "children": [{"label": "s1"}, {"label": "s2"}]}
                    ]}}
            ]
        }"#;
        let schema = Schema::from_json(text).unwrap();
        assert_eq!(schema.dims(), vec![4, 8, 4]);
        assert_eq!(schema.attribute(1).labels()[0], "10");
        let again = Schema::from_json(&schema.to_json()).unwrap();
        assert_eq!(schema, again);
        assert_eq!(schema.fingerprint(), again.fingerprint());
    }

    #[test]
    fn schema_file_errors() {
        let both = r#"{"attributes":[{"kind":"ordinal","name":"a","values":["x"],"range":[0,1]}]}"#;
        assert!(matches!(Schema::from_json(both), Err(Error::Schema(_))));
        let bad_tree = r#"{"attributes":[{"kind":"nominal","name":"n","hierarchy":{"label":"x"}}]}"#;
        assert!(matches!(
            Schema::from_json(bad_tree),
            Err(Error::Hierarchy { .. })
        ));
        let dup = r#"{"attributes":[{"kind":"ordinal","name":"a","range":[0,1]},{"kind":"ordinal","name":"a","range":[0,1]}]}"#;
        assert!(Schema::from_json(dup).is_err());
    }
}
