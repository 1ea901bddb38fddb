//! Range-count queries, their evaluation, and error metrics.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::Range;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::FrequencyMatrix;
use crate::schema::{AttributeKind, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    All,
    /// Closed interval of 0-based ordinal indices.
    Interval { lo: usize, hi: usize },
    /// Hierarchy node id: a leaf or every leaf below an internal node.
    Node(usize),
}

/// Conjunction of one predicate per attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RangeQuery {
    predicates: Vec<Predicate>,
}

impl RangeQuery {
    pub fn all(schema: &Schema) -> Self {
        RangeQuery {
            predicates: vec![Predicate::All; schema.len()],
        }
    }

    pub fn new(schema: &Schema, predicates: Vec<Predicate>) -> Result<Self> {
        let q = RangeQuery { predicates };
        q.validate(schema)?;
        Ok(q)
    }

    /// Replaces the predicate on dimension `dim`.
    pub fn with(mut self, schema: &Schema, dim: usize, p: Predicate) -> Result<Self> {
        if dim >= self.predicates.len() {
            return Err(Error::Query(format!("dimension {dim} out of range")));
        }
        self.predicates[dim] = p;
        self.validate(schema)?;
        Ok(self)
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    /// Number of constrained attributes.
    pub fn arity(&self) -> usize {
        self.predicates.iter().filter(|p| **p != Predicate::All).count()
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.predicates.len() != schema.len() {
            return Err(Error::Query(format!(
                "{} predicates for {} attributes",
                self.predicates.len(),
                schema.len()
            )));
        }
        for (p, a) in self.predicates.iter().zip(schema.attributes()) {
            match (*p, a.kind()) {
                (Predicate::All, _) => {}
                (Predicate::Interval { lo, hi }, AttributeKind::Ordinal) => {
                    if lo > hi || hi >= a.domain_size() {
                        return Err(Error::Query(format!(
                            "interval {lo}..{hi} outside the domain of `{}` (0..{})",
                            a.name(),
                            a.domain_size() - 1
                        )));
                    }
                }
                (Predicate::Node(id), AttributeKind::Nominal) => {
                    if id >= a.hierarchy().map_or(0, |h| h.node_count()) {
                        return Err(Error::Query(format!("no node {id} in the hierarchy of `{}`", a.name())));
                    }
                }
                (Predicate::Interval { .. }, AttributeKind::Nominal) => {
                    return Err(Error::Query(format!("`{}` is nominal; use a hierarchy node", a.name())));
                }
                (Predicate::Node(_), AttributeKind::Ordinal) => {
                    return Err(Error::Query(format!("`{}` is ordinal; use an interval", a.name())));
                }
            }
        }
        Ok(())
    }

    /// Covered storage indices per dimension; padding is never covered.
    pub fn ranges(&self, schema: &Schema) -> Vec<Range<usize>> {
        self.predicates
            .iter()
            .zip(schema.attributes())
            .map(|(p, a)| match *p {
                Predicate::All => 0..a.domain_size(),
                Predicate::Interval { lo, hi } => lo..hi + 1,
                Predicate::Node(id) => a.hierarchy().expect("nominal attribute").node(id).leaves.clone(),
            })
            .collect()
    }
}

/// Sum of the entries of `m` covered by `q`.
pub fn evaluate(q: &RangeQuery, m: &FrequencyMatrix) -> f64 {
    q.validate(m.schema()).expect("query does not fit the matrix");
    box_sum(m.entries(), m.dims(), &q.ranges(m.schema()))
}

fn box_sum(entries: &[f64], dims: &[usize], ranges: &[Range<usize>]) -> f64 {
    if dims.len() == 1 {
        return entries[ranges[0].clone()].iter().sum();
    }
    let inner: usize = dims[1..].iter().product();
    ranges[0]
        .clone()
        .map(|i| box_sum(&entries[i * inner..(i + 1) * inner], &dims[1..], &ranges[1..]))
        .sum()
}

/// Fraction of the (padded) matrix entries covered by `q`.
pub fn coverage(q: &RangeQuery, schema: &Schema) -> f64 {
    q.ranges(schema)
        .iter()
        .zip(schema.dims())
        .map(|(r, d)| r.len() as f64 / d as f64)
        .product()
}

/// Fraction of tuples satisfying `q`, computed on the exact matrix.
pub fn selectivity(q: &RangeQuery, exact: &FrequencyMatrix) -> f64 {
    match exact.tuple_count() {
        0 => 0.0,
        n => evaluate(q, exact) / n as f64,
    }
}

pub fn relative_error(noisy: f64, exact: f64, sanity: f64) -> f64 {
    assert!(sanity > 0.0, "sanity bound must be positive");
    (noisy - exact).abs() / exact.max(sanity)
}

/// Default sanity bound, 0.1% of the tuple count.
pub fn default_sanity_bound(tuple_count: u64) -> f64 {
    0.001 * tuple_count as f64
}

/// Inclusive prefix sums for constant-time box queries (`2^d` lookups).
#[derive(Debug, Clone)]
pub struct PrefixSums {
    dims: Vec<usize>,
    sums: Vec<f64>,
}

impl PrefixSums {
    pub fn new(m: &FrequencyMatrix) -> Self {
        let dims = m.dims().to_vec();
        let mut sums = m.entries().to_vec();
        let mut stride = 1;
        for &n in dims.iter().rev() {
            let block = stride * n;
            for chunk in sums.chunks_mut(block) {
                for k in 1..n {
                    let (prev, cur) = chunk.split_at_mut(k * stride);
                    let prev = &prev[(k - 1) * stride..];
                    for (c, p) in cur[..stride].iter_mut().zip(prev) {
                        *c += p;
                    }
                }
            }
            stride = block;
        }
        PrefixSums { dims, sums }
    }

    pub fn sum(&self, ranges: &[Range<usize>]) -> f64 {
        if ranges.iter().any(|r| r.is_empty()) {
            return 0.0;
        }
        let d = self.dims.len();
        let mut total = 0.0;
        'corners: for mask in 0u32..1 << d {
            let mut offset = 0;
            for (k, r) in ranges.iter().enumerate() {
                let idx = if mask >> k & 1 == 1 {
                    if r.start == 0 {
                        continue 'corners;
                    }
                    r.start - 1
                } else {
                    r.end - 1
                };
                offset = offset * self.dims[k] + idx;
            }
            if mask.count_ones() % 2 == 0 {
                total += self.sums[offset];
            } else {
                total -= self.sums[offset];
            }
        }
        total
    }
}

/// Per-query outcome of answering on a noisy matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMetrics {
    pub exact: f64,
    pub noisy: f64,
    pub selectivity: f64,
    pub coverage: f64,
    pub square_error: f64,
    pub relative_error: f64,
}

impl QueryMetrics {
    pub fn new(exact: f64, noisy: f64, tuple_count: u64, coverage: f64, sanity: f64) -> Self {
        QueryMetrics {
            exact,
            noisy,
            selectivity: if tuple_count == 0 { 0.0 } else { exact / tuple_count as f64 },
            coverage,
            square_error: (noisy - exact) * (noisy - exact),
            relative_error: relative_error(noisy, exact, sanity),
        }
    }
}

/// Answers `queries` on both matrices.
pub fn measure(queries: &[RangeQuery], exact: &FrequencyMatrix, noisy: &FrequencyMatrix, sanity: f64) -> Vec<QueryMetrics> {
    use rayon::prelude::*;
    let schema = exact.schema();
    let e = PrefixSums::new(exact);
    let n = PrefixSums::new(noisy);
    queries
        .par_iter()
        .map(|q| {
            let r = q.ranges(schema);
            QueryMetrics::new(e.sum(&r), n.sum(&r), exact.tuple_count(), coverage(q, schema), sanity)
        })
        .collect()
}

/// Random workload: 1 to `min(4, d)` predicates on distinct attributes, ordinal
/// intervals uniform over all `lo <= hi` pairs, nominal nodes uniform over non-root nodes.
pub fn generate_workload(schema: &Schema, count: usize, seed: u64) -> Vec<RangeQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = schema.len();
    (0..count)
        .map(|_| {
            let k = rng.gen_range(1..=d.min(4));
            let mut q = RangeQuery::all(schema);
            for dim in sample(&mut rng, d, k).into_iter() {
                let a = schema.attribute(dim);
                q.predicates[dim] = match a.hierarchy() {
                    None => {
                        let n = a.domain_size();
                        loop {
                            let (lo, hi) = (rng.gen_range(0..n), rng.gen_range(0..n));
                            if lo <= hi {
                                break Predicate::Interval { lo, hi };
                            }
                        }
                    }
                    Some(h) => Predicate::Node(rng.gen_range(1..h.node_count())),
                };
            }
            q
        })
        .collect()
}

/// Parses one query line: `attr=lo..hi` / `attr=@path/to/node` clauses joined by `&`, or `*`.
pub fn parse_query(line: &str, schema: &Schema) -> Result<RangeQuery> {
    let line = line.trim();
    let mut q = RangeQuery::all(schema);
    if line == "*" {
        return Ok(q);
    }
    let mut seen = vec![false; schema.len()];
    for clause in line.split('&') {
        let clause = clause.trim();
        let (name, spec) = clause
            .split_once('=')
            .ok_or_else(|| Error::Query(format!("clause `{clause}` is not `attr=value`")))?;
        let name = name.trim();
        let dim = schema
            .index_of(name)
            .ok_or_else(|| Error::Query(format!("unknown attribute `{name}`")))?;
        if std::mem::replace(&mut seen[dim], true) {
            return Err(Error::Query(format!("attribute `{name}` constrained twice")));
        }
        let spec = spec.trim();
        q.predicates[dim] = if let Some(path) = spec.strip_prefix('@') {
            let h = schema
                .attribute(dim)
                .hierarchy()
                .ok_or_else(|| Error::Query(format!("`{name}` is ordinal; use lo..hi")))?;
            Predicate::Node(
                h.find_path(path)
                    .ok_or_else(|| Error::Query(format!("no node `{path}` in `{name}`")))?,
            )
        } else {
            let (lo, hi) = spec.split_once("..").unwrap_or((spec, spec));
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Query(format!("bad index `{s}` in `{clause}`")))
            };
            Predicate::Interval {
                lo: parse(lo)?,
                hi: parse(hi)?,
            }
        };
    }
    q.validate(schema)?;
    Ok(q)
}

pub fn format_query(q: &RangeQuery, schema: &Schema) -> String {
    let mut out = String::new();
    for (p, a) in q.predicates.iter().zip(schema.attributes()) {
        let sep = if out.is_empty() { "" } else { "&" };
        match *p {
            Predicate::All => continue,
            Predicate::Interval { lo, hi } => write!(out, "{sep}{}={lo}..{hi}", a.name()),
            Predicate::Node(id) => write!(out, "{sep}{}=@{}", a.name(), a.hierarchy().unwrap().path_of(id)),
        }
        .unwrap();
    }
    if out.is_empty() {
        out.push('*');
    }
    out
}

/// Reads a query file; blank lines and `#` comments are skipped.
pub fn parse_queries(text: &str, schema: &Schema) -> Result<Vec<RangeQuery>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .map(|(i, l)| parse_query(l, schema).map_err(|e| Error::parse(i + 1, e.to_string())))
        .collect()
}

pub fn format_queries(queries: &[RangeQuery], schema: &Schema) -> String {
    queries.iter().map(|q| format_query(q, schema) + "\n").collect()
}

pub fn write_results(writer: impl Write, metrics: &[QueryMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["query", "exact", "noisy", "selectivity", "coverage", "square_error", "relative_error"])?;
    for (query, m) in metrics.iter().enumerate() {
        w.serialize((query, m.exact, m.noisy, m.selectivity, m.coverage, m.square_error, m.relative_error))?;
    }
    w.flush()?;
    Ok(())
}
