//! Tabular input: validated rows of domain indices, CSV I/O and the synthetic generator.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::schema::{AttributeSchema, Hierarchy, NodeSpec, Schema};

/// Rows stored as domain indices, row-major with one column per attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    values: Vec<u32>,
    rows: usize,
}

impl Dataset {
    pub fn new(schema: impl Into<Arc<Schema>>, values: Vec<u32>) -> Result<Self> {
        let schema = schema.into();
        let d = schema.len();
        if values.len() % d != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of {d} attributes",
                values.len()
            )));
        }
        let dataset = Dataset {
            rows: values.len() / d,
            schema,
            values,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn from_rows(schema: impl Into<Arc<Schema>>, rows: &[Vec<u32>]) -> Result<Self> {
        Dataset::new(schema, rows.iter().flatten().copied().collect())
    }

    pub fn empty(schema: impl Into<Arc<Schema>>) -> Self {
        Dataset {
            schema: schema.into(),
            values: Vec::new(),
            rows: 0,
        }
    }

    /// Checks that every value lies in its attribute's (unpadded) domain.
    pub fn validate(&self) -> Result<()> {
        for (r, row) in self.iter().enumerate() {
            for (attr, &v) in self.schema.attributes().iter().zip(row) {
                if v as usize >= attr.domain_size() {
                    return Err(Error::Domain {
                        row: r,
                        attribute: attr.name().to_owned(),
                        value: v.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<Schema> {
        self.schema.clone()
    }

    /// `n`.
    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let d = self.schema.len();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u32]> + '_ {
        self.values.chunks_exact(self.schema.len())
    }

    /// Reads a delimited file whose header names the schema's attributes (in any order)
    /// and whose cells hold value labels.
    pub fn read_csv(schema: impl Into<Arc<Schema>>, reader: impl Read, delimiter: u8) -> Result<Self> {
        let schema = schema.into();
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let column_of = schema
            .attributes()
            .iter()
            .map(|a| {
                headers.iter().position(|h| h == a.name()).ok_or_else(|| {
                    Error::Schema(format!("input has no column for attribute `{}`", a.name()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let lookups: Vec<std::collections::HashMap<&str, u32>> = schema
            .attributes()
            .iter()
            .map(|a| {
                a.labels()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.as_str(), i as u32))
                    .collect()
            })
            .collect();

        let mut values = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            for ((attr, &col), lookup) in schema.attributes().iter().zip(&column_of).zip(&lookups) {
                let cell = record.get(col).unwrap_or("");
                let v = lookup.get(cell).ok_or_else(|| Error::Domain {
                    row: r,
                    attribute: attr.name().to_owned(),
                    value: cell.to_owned(),
                })?;
                values.push(*v);
            }
        }
        let rows = values.len() / schema.len();
        Ok(Dataset {
            schema,
            values,
            rows,
        })
    }

    pub fn write_csv(&self, writer: impl Write, delimiter: u8) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(writer);
        wtr.write_record(self.schema.attributes().iter().map(|a| a.name()))?;
        for row in self.iter() {
            wtr.write_record(
                self.schema
                    .attributes()
                    .iter()
                    .zip(row)
                    .map(|(a, &v)| a.labels()[v as usize].as_str()),
            )?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Output of [`generate_synthetic`].
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    /// Deviations from the nominal construction, e.g. uneven hierarchy groups.
    pub notes: Vec<String>,
}

/// Attribute sizes for a synthetic matrix of `m` entries: four equal sides when `m`
/// is a fourth power, otherwise (for powers of two) the exponent spread as evenly
/// as possible across the four attributes.
pub fn synthetic_sides(m: usize) -> Result<[usize; 4]> {
    if m == 0 {
        return Err(Error::InvalidArgument("matrix size must be positive".into()));
    }
    let root = (m as f64).powf(0.25).round() as usize;
    for side in root.saturating_sub(1).max(1)..=root + 1 {
        if side.pow(4) == m {
            return Ok([side; 4]);
        }
    }
    if m.is_power_of_two() {
        let bits = m.trailing_zeros() as usize;
        let mut sides = [1usize; 4];
        for (i, side) in sides.iter_mut().enumerate() {
            let share = bits / 4 + usize::from(i < bits % 4);
            *side = 1 << share;
        }
        return Ok(sides);
    }
    Err(Error::InvalidArgument(format!(
        "matrix size {m} is neither a fourth power nor a power of two"
    )))
}

/// Three-level hierarchy over `size` leaves with about `sqrt(size)` level-2 nodes.
///
/// Returns the hierarchy and an optional note when the split is not exactly even.
pub fn balanced_hierarchy(name: &str, size: usize) -> (Hierarchy, Option<String>) {
    assert!(size >= 2, "a nominal attribute needs at least two values");
    let leaf = |i: usize| NodeSpec::leaf(format!("{name}_{i}"));
    if size < 4 {
        let h = Hierarchy::from_spec(&NodeSpec::node(name, (0..size).map(leaf).collect()));
        return (
            h,
            Some(format!(
                "`{name}`: {size} values cannot form three levels; using a two-level hierarchy"
            )),
        );
    }
    let groups = ((size as f64).sqrt().round() as usize).clamp(2, size / 2);
    let base = size / groups;
    let extra = size % groups;
    let mut next = 0;
    let children = (0..groups)
        .map(|g| {
            let width = base + usize::from(g < extra);
            let leaves = (next..next + width).map(leaf).collect();
            next += width;
            NodeSpec::node(format!("{name}_g{g}"), leaves)
        })
        .collect();
    let note = (groups * groups != size || extra != 0).then(|| {
        format!("`{name}`: {size} values split into {groups} groups of {base}-{} leaves", base + usize::from(extra > 0))
    });
    (Hierarchy::from_spec(&NodeSpec::node(name, children)), note)
}

/// Two ordinal and two nominal attributes whose sizes multiply to `m`, each nominal
/// attribute with a three-level hierarchy; rows uniform over the product domain.
pub fn generate_synthetic(n: usize, m: usize, seed: u64) -> Result<Synthetic> {
    let sides = synthetic_sides(m)?;
    let mut notes = Vec::new();
    if sides.iter().any(|&s| s != sides[0]) {
        notes.push(format!("matrix size {m} is not a fourth power; attribute sizes {sides:?}"));
    }
    let mut attributes = vec![
        AttributeSchema::ordinal_sized("ord1", sides[0])?,
        AttributeSchema::ordinal_sized("ord2", sides[1])?,
    ];
    for (name, &size) in ["nom1", "nom2"].iter().zip(&sides[2..]) {
        if size < 2 {
            return Err(Error::InvalidArgument(format!(
                "matrix size {m} leaves nominal attribute `{name}` with fewer than two values"
            )));
        }
        let (h, note) = balanced_hierarchy(name, size);
        notes.extend(note);
        attributes.push(AttributeSchema::nominal(*name, h)?);
    }
    let schema = Arc::new(Schema::new(attributes)?);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n * 4);
    for _ in 0..n {
        for &side in &sides {
            values.push(rng.gen_range(0..side as u32));
        }
    }
    Ok(Synthetic {
        dataset: Dataset {
            schema,
            values,
            rows: n,
        },
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_shape_for_fourth_power() {
        let s = generate_synthetic(10, 1 << 16, 1).unwrap();
        let schema = s.dataset.schema();
        assert_eq!(schema.dims(), vec![16, 16, 16, 16]);
        for a in &schema.attributes()[2..] {
            let h = a.hierarchy().unwrap();
            assert_eq!(h.height(), 3);
            assert_eq!(h.node(0).fanout(), 4);
            assert!(h.node(0).children.clone().all(|c| h.node(c).fanout() == 4));
        }
        assert!(s.notes.is_empty());
    }

    #[test]
    fn synthetic_empty() {
        let s = generate_synthetic(0, 256, 3).unwrap();
        assert!(s.dataset.is_empty());
        assert_eq!(s.dataset.schema().entry_count(), 256);
    }

    #[test]
    fn synthetic_is_reproducible() {
        let a = generate_synthetic(500, 4096, 42).unwrap();
        let b = generate_synthetic(500, 4096, 42).unwrap();
        let c = generate_synthetic(500, 4096, 43).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn uneven_split_is_recorded() {
        let s = generate_synthetic(1, 1 << 21, 0).unwrap();
        assert_eq!(s.dataset.schema().entry_count(), 1 << 21);
        assert!(!s.notes.is_empty());
        let (h, note) = balanced_hierarchy("x", 32);
        assert!(h.validate().is_ok());
        assert_eq!(h.node(0).fanout(), 6);
        assert!(note.is_some());
    }

    #[test]
    fn synthetic_sides_rejects_odd_sizes() {
        assert!(synthetic_sides(1000).is_err());
        assert_eq!(synthetic_sides(81).unwrap(), [3; 4]);
        assert_eq!(synthetic_sides(1 << 10).unwrap(), [8, 8, 4, 4]);
    }

    #[test]
    fn domain_errors_name_row_and_attribute() {
        let schema = Schema::new(vec![
            AttributeSchema::ordinal_sized("a", 3).unwrap(),
            AttributeSchema::ordinal_sized("b", 2).unwrap(),
        ])
        .unwrap();
        let err = Dataset::from_rows(schema.clone(), &[vec![0, 1], vec![2, 2]]).unwrap_err();
        match err {
            Error::Domain { row, attribute, .. } => {
                assert_eq!(row, 1);
                assert_eq!(attribute, "b");
            }
            other => panic!("unexpected error {other}"),
        }

        let csv = "b,a\n1,0\nx,2\n";
        let err = Dataset::read_csv(schema, csv.as_bytes(), b',').unwrap_err();
        assert!(matches!(err, Error::Domain { row: 1, .. }), "{err}");
    }

    #[test]
    fn csv_round_trip() {
        let s = generate_synthetic(50, 256, 9).unwrap();
        let mut buf = Vec::new();
        s.dataset.write_csv(&mut buf, b',').unwrap();
        let back = Dataset::read_csv(s.dataset.shared_schema(), buf.as_slice(), b',').unwrap();
        assert_eq!(back, s.dataset);
    }
}
