//! Brute-force checks of the transforms' sensitivity, linearity and noise variance.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hn::HnPlan;
use crate::matrix::FrequencyMatrix;
use crate::mechanism::Publisher;
use crate::noise::{derive_seed, LaplaceSampler};
use crate::query::{format_query, PrefixSums, RangeQuery};
use crate::schema::Schema;

/// Largest matrix for exhaustive sensitivity measurement.
pub const EXHAUSTIVE_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityMode {
    Exhaustive,
    Sampled { positions: usize, seed: u64 },
}

impl SensitivityMode {
    /// Exhaustive up to [`EXHAUSTIVE_LIMIT`] entries, otherwise 256 sampled positions.
    pub fn auto(entries: usize, seed: u64) -> Self {
        if entries <= EXHAUSTIVE_LIMIT {
            SensitivityMode::Exhaustive
        } else {
            SensitivityMode::Sampled { positions: 256, seed }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntrySensitivity {
    pub entry: usize,
    /// `Σ W(c) |Δc|` for a `+1` perturbation.
    pub plus: f64,
    /// The same for `-1`.
    pub minus: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub measured_rho: f64,
    pub predicted_rho: f64,
    pub entries: Vec<EntrySensitivity>,
}

impl SensitivityReport {
    /// Never exceeds the closed form.
    pub fn holds(&self) -> bool {
        self.measured_rho <= self.predicted_rho + 1e-9
    }

    /// Equals the closed form.
    pub fn is_tight(&self) -> bool {
        (self.measured_rho - self.predicted_rho).abs() <= 1e-9
    }

    /// Largest difference between the `+1` and `-1` ratios of one entry.
    pub fn max_asymmetry(&self) -> f64 {
        self.entries.iter().map(|e| (e.plus - e.minus).abs()).fold(0.0, f64::max)
    }
}

impl fmt::Display for SensitivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "measured_rho={} predicted_rho={} positions={} asymmetry={:e}",
            self.measured_rho,
            self.predicted_rho,
            self.entries.len(),
            self.max_asymmetry()
        )
    }
}

/// Perturbs entries one at a time and measures the weighted coefficient change.
pub fn measure_sensitivity(plan: &HnPlan, mode: SensitivityMode) -> Result<SensitivityReport> {
    let m: usize = plan.input_dims().iter().product();
    let positions: Vec<usize> = match mode {
        SensitivityMode::Exhaustive => {
            if m > EXHAUSTIVE_LIMIT {
                return Err(Error::InvalidArgument(format!(
                    "exhaustive sensitivity needs at most {EXHAUSTIVE_LIMIT} entries, got {m}"
                )));
            }
            (0..m).collect()
        }
        SensitivityMode::Sampled { positions, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut p: Vec<usize> = rand::seq::index::sample(&mut rng, m, positions.min(m)).into_vec();
            p.sort_unstable();
            p
        }
    };
    let weighted_change = |entry: usize, delta: f64| {
        let mut v = vec![0.0; m];
        v[entry] = delta;
        let c = plan.forward_values(&v);
        c.values().iter().zip(c.weights()).map(|(x, w)| w * x.abs()).sum::<f64>() / delta.abs()
    };
    let entries: Vec<EntrySensitivity> = positions
        .par_iter()
        .map(|&entry| EntrySensitivity {
            entry,
            plus: weighted_change(entry, 1.0),
            minus: weighted_change(entry, -1.0),
        })
        .collect();
    let measured_rho = entries.iter().map(|e| e.plus.max(e.minus)).fold(0.0, f64::max);
    Ok(SensitivityReport {
        measured_rho,
        predicted_rho: plan.sensitivity(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearityReport {
    pub trials: usize,
    pub max_residual: f64,
}

impl LinearityReport {
    pub fn passed(&self) -> bool {
        self.max_residual < 1e-9
    }
}

impl fmt::Display for LinearityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trials={} max_residual={:e}", self.trials, self.max_residual)
    }
}

/// Relative residual of `forward(a) + forward(b)` against `forward(a + b)`.
pub fn linearity_residual(plan: &HnPlan, a: &[f64], b: &[f64]) -> f64 {
    let sum: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let (fa, fb, fs) = (plan.forward_values(a), plan.forward_values(b), plan.forward_values(&sum));
    let scale = fs.values().iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    fa.values()
        .iter()
        .zip(fb.values())
        .zip(fs.values())
        .map(|((x, y), s)| (x + y - s).abs() / scale)
        .fold(0.0, f64::max)
}

/// Random count matrices `M`, `M'`; checks additivity of the forward transform.
pub fn check_linearity(plan: &HnPlan, trials: usize, seed: u64) -> LinearityReport {
    let m: usize = plan.input_dims().iter().product();
    let max_residual = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let a: Vec<f64> = (0..m).map(|_| rng.gen_range(0..1000) as f64).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0..1000) as f64).collect();
            linearity_residual(plan, &a, &b)
        })
        .reduce(|| 0.0, f64::max);
    LinearityReport { trials, max_residual }
}

/// Exact noise variance of query answers, from the response of every query to
/// every coefficient's noise.
#[derive(Debug, Clone)]
pub struct VarianceOracle {
    schema: Arc<Schema>,
    /// Per-coefficient noise variance `2 (λ / W(c))²`.
    noise_variance: Vec<f64>,
    /// Entry-space image of each unit coefficient, as prefix sums.
    responses: Vec<PrefixSums>,
}

/// Largest `coefficients × entries` product the oracle will tabulate.
pub const VARIANCE_ORACLE_LIMIT: usize = 1 << 26;

impl VarianceOracle {
    pub fn new(publisher: &Publisher, schema: Arc<Schema>) -> Result<Self> {
        let plan = HnPlan::new(&schema, publisher.split());
        let k: usize = plan.output_dims().iter().product();
        let m: usize = plan.input_dims().iter().product();
        if k.saturating_mul(m) > VARIANCE_ORACLE_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "variance oracle table of {k} x {m} is too large"
            )));
        }
        let lambda = publisher.budget().lambda;
        let noise_variance = plan
            .weights()
            .iter()
            .map(|w| 2.0 * (lambda / w) * (lambda / w))
            .collect();
        let responses = (0..k)
            .into_par_iter()
            .map(|c| {
                let mut unit = vec![0.0; k];
                unit[c] = 1.0;
                let entries = plan.inverse_raw(&unit);
                PrefixSums::new(&FrequencyMatrix::from_entries(schema.clone(), entries, 0).expect("schema dims"))
            })
            .collect();
        Ok(VarianceOracle {
            schema,
            noise_variance,
            responses,
        })
    }

    pub fn variance(&self, q: &RangeQuery) -> f64 {
        let r = q.ranges(&self.schema);
        self.responses
            .iter()
            .zip(&self.noise_variance)
            .map(|(p, v)| {
                let a = p.sum(&r);
                a * a * v
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceReport {
    pub query: RangeQuery,
    pub trials: usize,
    pub sample_variance: f64,
    pub standard_error: f64,
    /// Exact variance from [`VarianceOracle`].
    pub expected: f64,
    /// Closed-form worst case for the configuration.
    pub bound: f64,
}

impl VarianceReport {
    /// Sample variance within `k` standard errors above the bound.
    pub fn within_bound(&self, k: f64) -> bool {
        self.sample_variance <= self.bound + k * self.standard_error
    }

    /// Sample variance within `k` standard errors of the exact variance.
    pub fn matches_expected(&self, k: f64) -> bool {
        (self.sample_variance - self.expected).abs() <= k * self.standard_error
    }

    pub fn render(&self, schema: &Schema) -> String {
        format!(
            "query={} trials={} sample_variance={:.6} se={:.6} expected={:.6} bound={:.6}",
            format_query(&self.query, schema),
            self.trials,
            self.sample_variance,
            self.standard_error,
            self.expected,
            self.bound
        )
    }
}

pub const MIN_VARIANCE_TRIALS: usize = 10_000;

/// Publishes `m` `trials` times under sub-seeds of `seed` and reports the sample
/// variance of each query's error.
pub fn estimate_query_variance(
    publisher: &Publisher,
    m: &FrequencyMatrix,
    queries: &[RangeQuery],
    trials: usize,
    seed: u64,
) -> Result<Vec<VarianceReport>> {
    if trials < MIN_VARIANCE_TRIALS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_VARIANCE_TRIALS} trials are needed, got {trials}"
        )));
    }
    let schema = m.schema();
    for q in queries {
        q.validate(schema)?;
    }
    let ranges: Vec<_> = queries.iter().map(|q| q.ranges(schema)).collect();
    let exact = PrefixSums::new(m);
    let exact: Vec<f64> = ranges.iter().map(|r| exact.sum(r)).collect();

    const BLOCK: usize = 1000;
    let blocks: Vec<Vec<[f64; 4]>> = (0..trials.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![[0.0; 4]; queries.len()];
            for t in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                let noisy = publisher.publish_with(m, &mut LaplaceSampler::new(derive_seed(seed, t as u64)));
                let noisy = PrefixSums::new(&noisy);
                for ((s, r), e) in sums.iter_mut().zip(&ranges).zip(&exact) {
                    let x = noisy.sum(r) - e;
                    let x2 = x * x;
                    s[0] += x;
                    s[1] += x2;
                    s[2] += x2 * x;
                    s[3] += x2 * x2;
                }
            }
            sums
        })
        .collect();

    let oracle = VarianceOracle::new(publisher, m.shared_schema()).ok();
    let bound = publisher.variance_bound(schema);
    let n = trials as f64;
    Ok(queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut s = [0.0; 4];
            for block in &blocks {
                for k in 0..4 {
                    s[k] += block[i][k];
                }
            }
            let mean = s[0] / n;
            let var = (s[1] - s[0] * mean) / (n - 1.0);
            let m2 = s[1] / n - mean * mean;
            let m4 = s[3] / n - 4.0 * mean * s[2] / n + 6.0 * mean * mean * s[1] / n - 3.0 * mean.powi(4);
            let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
            VarianceReport {
                query: q.clone(),
                trials,
                sample_variance: var,
                standard_error: se,
                expected: oracle.as_ref().map_or(f64::NAN, |o| o.variance(q)),
                bound,
            }
        })
        .collect())
}
