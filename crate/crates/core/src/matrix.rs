//! Dense row-major frequency matrices and their on-disk container format.
//!
//! # Container format (version 1)
//!
//! A line-oriented UTF-8 text file:
//!
//! ```text
//! privelet-matrix 1
//! space frequency            # or `coefficient`
//! dims 8 2                   # per-dimension sizes, first dimension slowest
//! tuple_count 8
//! schema 3f2a9c0d1e4b5a67    # schema fingerprint
//! meta method privelet+      # zero or more `meta <key> <value>` lines
//! values
//! 0                          # one entry per line, row-major
//! ...
//! weights                    # coefficient space only, aligned with `values`
//! ...
//! end
//! ```
//!
//! Numbers use Rust's shortest round-trip decimal form, so a read after a write
//! reproduces every entry bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::schema::Schema;

pub const FORMAT_MAGIC: &str = "privelet-matrix";
pub const FORMAT_VERSION: u32 = 1;

/// Row-major strides for `dims`.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    strides
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    schema: Arc<Schema>,
    dims: Vec<usize>,
    entries: Vec<f64>,
    tuple_count: u64,
}

impl FrequencyMatrix {
    pub fn zeros(schema: impl Into<Arc<Schema>>) -> Self {
        let schema = schema.into();
        let dims = schema.dims();
        let m = dims.iter().product();
        FrequencyMatrix {
            schema,
            dims,
            entries: vec![0.0; m],
            tuple_count: 0,
        }
    }

    pub fn from_entries(
        schema: impl Into<Arc<Schema>>,
        entries: Vec<f64>,
        tuple_count: u64,
    ) -> Result<Self> {
        let schema = schema.into();
        let dims = schema.dims();
        let m: usize = dims.iter().product();
        if entries.len() != m {
            return Err(Error::InvalidArgument(format!(
                "expected {m} entries for dims {dims:?}, got {}",
                entries.len()
            )));
        }
        Ok(FrequencyMatrix {
            schema,
            dims,
            entries,
            tuple_count,
        })
    }

    /// Tallies the rows of `dataset`; linear in `n + m`.
    pub fn build(dataset: &Dataset) -> Self {
        let mut matrix = FrequencyMatrix::zeros(dataset.shared_schema());
        let strides = strides(&matrix.dims);
        for row in dataset.iter() {
            let idx: usize = row.iter().zip(&strides).map(|(&v, s)| v as usize * s).sum();
            matrix.entries[idx] += 1.0;
        }
        matrix.tuple_count = dataset.len() as u64;
        matrix
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn shared_schema(&self) -> Arc<Schema> {
        self.schema.clone()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn into_entries(self) -> Vec<f64> {
        self.entries
    }

    /// `m`, padding included.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `n` of the table the matrix was built from.
    pub fn tuple_count(&self) -> u64 {
        self.tuple_count
    }

    pub fn offset(&self, coords: &[usize]) -> usize {
        assert_eq!(coords.len(), self.dims.len(), "coordinate arity");
        coords
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&c, &d)| {
                assert!(c < d, "coordinate {c} out of range {d}");
                acc * d + c
            })
    }

    pub fn get(&self, coords: &[usize]) -> f64 {
        self.entries[self.offset(coords)]
    }

    pub fn set(&mut self, coords: &[usize], value: f64) {
        let i = self.offset(coords);
        self.entries[i] = value;
    }

    /// Whether the entry at `offset` is a real value on every ordinal dimension
    /// rather than padding.
    pub fn is_real(&self, offset: usize) -> bool {
        let mut rest = offset;
        for (attr, &d) in self.schema.attributes().iter().zip(&self.dims).rev() {
            if rest % d >= attr.domain_size() {
                return false;
            }
            rest /= d;
        }
        true
    }

    pub fn real_sum(&self) -> f64 {
        self.entries
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_real(*i))
            .map(|(_, v)| v)
            .sum()
    }

    pub fn to_file(&self, meta: &[(String, String)]) -> MatrixFile {
        MatrixFile {
            space: Space::Frequency,
            dims: self.dims.clone(),
            tuple_count: self.tuple_count,
            schema: self.schema.fingerprint(),
            meta: meta.to_vec(),
            values: self.entries.clone(),
            weights: None,
        }
    }

    /// Rebuilds a matrix from a frequency-space file written for `schema`.
    pub fn from_file(schema: impl Into<Arc<Schema>>, file: MatrixFile) -> Result<Self> {
        let schema = schema.into();
        if file.space != Space::Frequency {
            return Err(Error::InvalidArgument("file holds coefficients, not a frequency matrix".into()));
        }
        if file.schema != schema.fingerprint() {
            return Err(Error::Schema(format!(
                "matrix was written for schema {} but schema {} was supplied",
                file.schema,
                schema.fingerprint()
            )));
        }
        if file.dims != schema.dims() {
            return Err(Error::Schema(format!(
                "matrix dims {:?} do not match schema dims {:?}",
                file.dims,
                schema.dims()
            )));
        }
        FrequencyMatrix::from_entries(schema, file.values, file.tuple_count)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Frequency,
    Coefficient,
}

impl Space {
    fn as_str(self) -> &'static str {
        match self {
            Space::Frequency => "frequency",
            Space::Coefficient => "coefficient",
        }
    }
}

/// In-memory form of the container format.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub space: Space,
    pub dims: Vec<usize>,
    pub tuple_count: u64,
    pub schema: String,
    pub meta: Vec<(String, String)>,
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl MatrixFile {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 8 + 256);
        let _ = writeln!(out, "{FORMAT_MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "space {}", self.space.as_str());
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(out, "dims {}", dims.join(" "));
        let _ = writeln!(out, "tuple_count {}", self.tuple_count);
        let _ = writeln!(out, "schema {}", self.schema);
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        out.push_str("values\n");
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        if let Some(weights) = &self.weights {
            out.push_str("weights\n");
            for w in weights {
                let _ = writeln!(out, "{w}");
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("unexpected end of file, expected {what}")))
        };

        let (ln, header) = next("header")?;
        match header.split_once(' ') {
            Some((FORMAT_MAGIC, v)) if v == FORMAT_VERSION.to_string() => {}
            Some((FORMAT_MAGIC, v)) => {
                return Err(Error::parse(ln, format!("unsupported format version {v}")))
            }
            _ => return Err(Error::parse(ln, "not a matrix file")),
        }

        let mut space = None;
        let mut dims = None;
        let mut tuple_count = 0;
        let mut schema = String::new();
        let mut meta = Vec::new();
        loop {
            let (ln, line) = next("`values`")?;
            if line == "values" {
                break;
            }
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "space" => {
                    space = Some(match rest {
                        "frequency" => Space::Frequency,
                        "coefficient" => Space::Coefficient,
                        other => return Err(Error::parse(ln, format!("unknown space `{other}`"))),
                    })
                }
                "dims" => {
                    dims = Some(
                        rest.split_whitespace()
                            .map(|d| d.parse::<usize>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|e| Error::parse(ln, format!("bad dims: {e}")))?,
                    )
                }
                "tuple_count" => {
                    tuple_count = rest
                        .parse()
                        .map_err(|e| Error::parse(ln, format!("bad tuple_count: {e}")))?
                }
                "schema" => schema = rest.to_owned(),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.push((k.to_owned(), v.to_owned()));
                }
                other => return Err(Error::parse(ln, format!("unknown header field `{other}`"))),
            }
        }
        let space = space.ok_or_else(|| Error::parse(0, "missing `space`"))?;
        let dims: Vec<usize> = dims.ok_or_else(|| Error::parse(0, "missing `dims`"))?;
        let m: usize = dims.iter().product();

        fn read_block<'a>(
            next: &mut impl FnMut(&str) -> Result<(usize, &'a str)>,
            count: usize,
            what: &str,
        ) -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, line) = next(what)?;
                out.push(
                    line.parse::<f64>()
                        .map_err(|e| Error::parse(ln, format!("bad {what} entry `{line}`: {e}")))?,
                );
            }
            Ok(out)
        }
        let values = read_block(&mut next, m, "value")?;
        let weights = match space {
            Space::Frequency => None,
            Space::Coefficient => {
                let (ln, line) = next("`weights`")?;
                if line != "weights" {
                    return Err(Error::parse(ln, "expected `weights`"));
                }
                Some(read_block(&mut next, m, "weight")?)
            }
        };
        let (ln, line) = next("`end`")?;
        if line != "end" {
            return Err(Error::parse(ln, format!("expected `end`, found `{line}`")));
        }
        Ok(MatrixFile {
            space,
            dims,
            tuple_count,
            schema,
            meta,
            values,
            weights,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MatrixFile::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.render())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::schema::AttributeSchema;
    use crate::fixtures::medical_records;

    #[test]
    fn medical_records_matrix() {
        let dataset = medical_records();
        let m = FrequencyMatrix::build(&dataset);
        // Age padded from 5 to 8 values; HasDiabetes = [Yes, No].
        assert_eq!(m.dims(), &[8, 2]);
        let yes: Vec<f64> = (0..5).map(|a| m.get(&[a, 0])).collect();
        let no: Vec<f64> = (0..5).map(|a| m.get(&[a, 1])).collect();
        assert_eq!(yes, vec![0.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(no, vec![2.0, 1.0, 2.0, 1.0, 0.0]);
        for a in 5..8 {
            assert_eq!(m.get(&[a, 0]), 0.0);
            assert_eq!(m.get(&[a, 1]), 0.0);
        }
        assert_eq!(m.tuple_count(), 8);
        assert_eq!(m.real_sum(), 8.0);
    }

    #[test]
    fn empty_dataset_gives_zero_matrix() {
        let dataset = Dataset::empty(medical_records().shared_schema());
        let m = FrequencyMatrix::build(&dataset);
        assert!(m.entries().iter().all(|&v| v == 0.0));
        assert_eq!(m.tuple_count(), 0);
    }

    #[test]
    fn matches_hash_map_tally() {
        let schema = Schema::new(vec![
            AttributeSchema::ordinal_sized("a", 7).unwrap(),
            AttributeSchema::ordinal_sized("b", 5).unwrap(),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<u32>> = (0..1000)
            .map(|_| vec![rng.gen_range(0..7), rng.gen_range(0..5)])
            .collect();
        let mut tally: HashMap<(u32, u32), f64> = HashMap::new();
        for r in &rows {
            *tally.entry((r[0], r[1])).or_default() += 1.0;
        }
        let m = FrequencyMatrix::build(&Dataset::from_rows(schema, &rows).unwrap());
        for a in 0..8 {
            for b in 0..8 {
                let expected = tally.get(&(a, b)).copied().unwrap_or(0.0);
                assert_eq!(m.get(&[a as usize, b as usize]), expected);
            }
        }
    }

    #[test]
    fn changing_one_row_moves_two_entries_by_one() {
        let dataset = medical_records();
        let before = FrequencyMatrix::build(&dataset);
        let mut rows: Vec<Vec<u32>> = dataset.iter().map(|r| r.to_vec()).collect();
        rows[0][0] = 1;
        let after = FrequencyMatrix::build(
            &Dataset::from_rows(dataset.shared_schema(), &rows).unwrap(),
        );
        let diffs: Vec<f64> = before
            .entries()
            .iter()
            .zip(after.entries())
            .map(|(a, b)| b - a)
            .filter(|d| *d != 0.0)
            .collect();
        assert_eq!(diffs.len(), 2);
        assert!(diffs.iter().all(|d| d.abs() == 1.0));
    }

    #[test]
    fn container_round_trip_is_bit_exact() {
        let mut m = FrequencyMatrix::build(&medical_records());
        m.entries_mut()[3] = -0.1234567890123456789;
        m.entries_mut()[4] = 1e-300;
        let meta = vec![("method".to_owned(), "basic".to_owned())];
        let text = m.to_file(&meta).render();
        let file = MatrixFile::parse(&text).unwrap();
        assert_eq!(file.meta("method"), Some("basic"));
        let back = FrequencyMatrix::from_file(m.shared_schema(), file).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn container_rejects_bad_input() {
        assert!(MatrixFile::parse("hello\n").is_err());
        assert!(MatrixFile::parse("privelet-matrix 2\n").is_err());
        let m = FrequencyMatrix::build(&medical_records());
        let text = m.to_file(&[]).render();
        let truncated: String = text.lines().take(10).collect::<Vec<_>>().join("\n");
        assert!(MatrixFile::parse(&truncated).is_err());
        let other = Schema::new(vec![AttributeSchema::ordinal_sized("x", 16).unwrap()]).unwrap();
        assert!(FrequencyMatrix::from_file(other, MatrixFile::parse(&text).unwrap()).is_err());
    }

    #[test]
    fn strides_row_major() {
        assert_eq!(strides(&[8, 2, 3]), vec![6, 3, 1]);
        assert_eq!(strides(&[]), Vec::<usize>::new());
    }
}
