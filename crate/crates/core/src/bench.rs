//! Workload benchmark with quantile bucketing, and per-phase timing runs.

use std::io::Write;
use std::time::{Duration, Instant};

use crate::budget;
use crate::dataset::{generate_synthetic, Dataset};
use crate::error::{Error, Result};
use crate::hn::HnPlan;
use crate::matrix::FrequencyMatrix;
use crate::mechanism::{MechanismRegistry, Publisher};
use crate::noise::{derive_seed, LaplaceSampler, NoiseSampler};
use crate::query::{generate_workload, measure, QueryMetrics};

#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic { n: usize, m: usize },
    Dataset(Dataset),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub source: DataSource,
    pub methods: Vec<String>,
    pub epsilons: Vec<f64>,
    /// Split attribute names, used by methods that accept a split.
    pub split: Vec<String>,
    pub queries: usize,
    pub seed: u64,
    /// Sanity bound as a fraction of the tuple count.
    pub sanity_fraction: f64,
    pub buckets: usize,
}

impl BenchConfig {
    pub fn synthetic(n: usize, m: usize) -> Self {
        BenchConfig {
            source: DataSource::Synthetic { n, m },
            methods: vec!["basic".into(), "privelet+".into()],
            epsilons: vec![0.5, 0.75, 1.0, 1.25],
            split: Vec::new(),
            queries: 40_000,
            seed: 0,
            sanity_fraction: 0.001,
            buckets: 5,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.buckets == 0 {
            return Err(Error::InvalidArgument("bucket count must be at least 1".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {e}")));
        }
        if !(self.sanity_fraction > 0.0) {
            return Err(Error::InvalidArgument("sanity fraction must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketBy {
    Coverage,
    Selectivity,
}

impl BucketBy {
    pub fn name(self) -> &'static str {
        match self {
            BucketBy::Coverage => "coverage",
            BucketBy::Selectivity => "selectivity",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub by: BucketBy,
    pub bucket: usize,
    pub queries: usize,
    pub avg_coverage: f64,
    pub avg_selectivity: f64,
    pub avg_square_error: f64,
    pub avg_relative_error: f64,
}

/// Splits indices into `k` groups of consecutive sorted order, sizes differing by at most one.
/// Equal values keep their workload order.
pub fn bucket_indices(values: &[f64], k: usize) -> Vec<Vec<usize>> {
    assert!(k >= 1, "bucket count must be at least 1");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n = order.len();
    (0..k).map(|i| order[i * n / k..(i + 1) * n / k].to_vec()).collect()
}

pub fn summarize(metrics: &[QueryMetrics], by: BucketBy, k: usize) -> Vec<BucketRow> {
    let key: Vec<f64> = metrics
        .iter()
        .map(|m| match by {
            BucketBy::Coverage => m.coverage,
            BucketBy::Selectivity => m.selectivity,
        })
        .collect();
    bucket_indices(&key, k)
        .into_iter()
        .enumerate()
        .map(|(bucket, idx)| {
            let avg = |f: fn(&QueryMetrics) -> f64| {
                if idx.is_empty() {
                    f64::NAN
                } else {
                    idx.iter().map(|&i| f(&metrics[i])).sum::<f64>() / idx.len() as f64
                }
            };
            BucketRow {
                by,
                bucket,
                queries: idx.len(),
                avg_coverage: avg(|m| m.coverage),
                avg_selectivity: avg(|m| m.selectivity),
                avg_square_error: avg(|m| m.square_error),
                avg_relative_error: avg(|m| m.relative_error),
            }
        })
        .collect()
}

/// Results for one (method, ε) pair.
#[derive(Debug, Clone)]
pub struct BenchTable {
    pub method: String,
    pub epsilon: f64,
    pub lambda: f64,
    pub split: Vec<String>,
    pub rows: Vec<BucketRow>,
}

impl BenchTable {
    pub fn file_name(&self) -> String {
        format!("{}_eps{}.csv", self.method.replace('+', "plus"), self.epsilon)
    }

    pub fn rows_by(&self, by: BucketBy) -> impl Iterator<Item = &BucketRow> {
        self.rows.iter().filter(move |r| r.by == by)
    }

    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "method",
            "epsilon",
            "by",
            "bucket",
            "queries",
            "avg_coverage",
            "avg_selectivity",
            "avg_square_error",
            "avg_relative_error",
        ])?;
        for r in &self.rows {
            w.serialize((
                &self.method,
                self.epsilon,
                r.by.name(),
                r.bucket,
                r.queries,
                r.avg_coverage,
                r.avg_selectivity,
                r.avg_square_error,
                r.avg_relative_error,
            ))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub tables: Vec<BenchTable>,
    /// Data-generation notes plus a note on how averages are formed.
    pub notes: Vec<String>,
    pub tuple_count: u64,
    pub entries: usize,
}

/// Publishes once per (method, ε), answers a shared workload, and buckets the errors.
///
/// Seeds: the synthetic data uses `seed`, the workload and each ε's noise use
/// sub-seeds derived from it. All methods share the noise seed of a given ε.
pub fn run_benchmark(cfg: &BenchConfig, registry: &MechanismRegistry) -> Result<BenchReport> {
    cfg.validate()?;
    let mut notes = vec!["bucket averages are arithmetic means of raw values".to_owned()];
    let dataset = match &cfg.source {
        DataSource::Synthetic { n, m } => {
            let s = generate_synthetic(*n, *m, cfg.seed)?;
            notes.extend(s.notes);
            s.dataset
        }
        DataSource::Dataset(d) => d.clone(),
    };
    let exact = FrequencyMatrix::build(&dataset);
    let schema = exact.schema();
    let split = schema.resolve(&cfg.split)?;
    let sanity = cfg.sanity_fraction * exact.tuple_count().max(1) as f64;
    let workload = generate_workload(schema, cfg.queries, derive_seed(cfg.seed, 1));

    let mut tables = Vec::new();
    for name in &cfg.methods {
        let mechanism = registry.get(name)?;
        for (i, &epsilon) in cfg.epsilons.iter().enumerate() {
            let requested = if name == "privelet+" { split.as_slice() } else { &[] };
            let publisher = Publisher::new(mechanism.clone(), schema, epsilon, requested)?;
            let published = publisher.publish(&exact, derive_seed(cfg.seed, 2 + i as u64));
            let metrics = measure(&workload, &exact, &published.matrix, sanity);
            let mut rows = summarize(&metrics, BucketBy::Coverage, cfg.buckets);
            rows.extend(summarize(&metrics, BucketBy::Selectivity, cfg.buckets));
            tables.push(BenchTable {
                method: name.clone(),
                epsilon,
                lambda: publisher.budget().lambda,
                split: published.split,
                rows,
            });
        }
    }
    Ok(BenchReport {
        tables,
        notes,
        tuple_count: exact.tuple_count(),
        entries: exact.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimedMethod {
    Basic,
    Privelet,
}

impl TimedMethod {
    pub fn name(self) -> &'static str {
        match self {
            TimedMethod::Basic => "basic",
            TimedMethod::Privelet => "privelet+",
        }
    }
}

/// Median wall-clock seconds per phase.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub n: usize,
    pub m: usize,
    pub method: TimedMethod,
    pub ingest: f64,
    pub transform: f64,
    pub noise: f64,
    pub inverse: f64,
    pub total: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let k = xs.len();
    if k % 2 == 1 {
        xs[k / 2]
    } else {
        (xs[k / 2 - 1] + xs[k / 2]) / 2.0
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

/// One timed publication of a synthetic dataset: `[ingest, transform, noise, inverse]`.
pub fn time_once(data: &Dataset, method: TimedMethod, epsilon: f64, seed: u64) -> [f64; 4] {
    let (m, ingest) = timed(|| FrequencyMatrix::build(data));
    let mut noise = LaplaceSampler::new(seed);
    match method {
        TimedMethod::Basic => {
            let lambda = 2.0 / epsilon;
            let (out, t) = timed(|| m.entries().iter().map(|&e| e + noise.sample(lambda)).collect::<Vec<f64>>());
            std::hint::black_box(out);
            [ingest.as_secs_f64(), 0.0, t.as_secs_f64(), 0.0]
        }
        TimedMethod::Privelet => {
            let lambda = budget::lambda_for(epsilon, m.schema(), &[]);
            let plan = HnPlan::new(m.schema(), &[]);
            let (mut c, transform) = timed(|| plan.forward(&m));
            let ((), t_noise) = timed(|| {
                let weights = c.weights().to_vec();
                for (v, w) in c.values_mut().iter_mut().zip(weights) {
                    *v += noise.sample(lambda / w);
                }
            });
            let (out, inverse) = timed(|| plan.inverse_values(c));
            std::hint::black_box(out);
            [ingest.as_secs_f64(), transform.as_secs_f64(), t_noise.as_secs_f64(), inverse.as_secs_f64()]
        }
    }
}

/// Times every (n, m) grid point for both methods, `repeats` times each, reporting medians.
pub fn run_timing(ns: &[usize], ms: &[usize], seed: u64, repeats: usize) -> Result<Vec<TimingRow>> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &m in ms {
        for &n in ns {
            let data = generate_synthetic(n, m, seed)?.dataset;
            for method in [TimedMethod::Basic, TimedMethod::Privelet] {
                let runs: Vec<[f64; 4]> = (0..repeats).map(|r| time_once(&data, method, 1.0, derive_seed(seed, r as u64))).collect();
                let phase = |k: usize| median(runs.iter().map(|r| r[k]).collect());
                rows.push(TimingRow {
                    n,
                    m,
                    method,
                    ingest: phase(0),
                    transform: phase(1),
                    noise: phase(2),
                    inverse: phase(3),
                    total: median(runs.iter().map(|r| r.iter().sum()).collect()),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_timing_csv(writer: impl Write, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["n", "m", "method", "ingest_s", "transform_s", "noise_s", "inverse_s", "total_s"])?;
    for r in rows {
        w.serialize((r.n, r.m, r.method.name(), r.ingest, r.transform, r.noise, r.inverse, r.total))?;
    }
    w.flush()?;
    Ok(())
}
