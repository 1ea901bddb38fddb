//! The self-check suite behind `privelet verify`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{layered_hierarchy, random_hierarchy};
use crate::hn::HnPlan;
use crate::matrix::FrequencyMatrix;
use crate::mechanism::{MechanismRegistry, Publisher};
use crate::noise::derive_seed;
use crate::oracle::{check_linearity, estimate_query_variance, measure_sensitivity, SensitivityMode, VarianceOracle};
use crate::query::{generate_workload, Predicate, RangeQuery};
use crate::schema::{AttributeSchema, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyLevel {
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn ord(name: &str, n: usize) -> AttributeSchema {
    AttributeSchema::ordinal_sized(name, n).expect("positive size")
}

fn nominal(name: &str, fanouts: &[usize]) -> AttributeSchema {
    AttributeSchema::nominal(name, layered_hierarchy(fanouts)).expect("valid hierarchy")
}

fn schema(attrs: Vec<AttributeSchema>) -> Arc<Schema> {
    Arc::new(Schema::new(attrs).expect("distinct names"))
}

fn privelet(s: &Schema, epsilon: f64) -> Publisher {
    Publisher::new(MechanismRegistry::builtin().get("privelet").expect("builtin"), s, epsilon, &[]).expect("valid")
}

fn random_counts(s: Arc<Schema>, rng: &mut impl Rng) -> FrequencyMatrix {
    let mut m = FrequencyMatrix::zeros(s);
    for i in 0..m.len() {
        if m.is_real(i) {
            m.entries_mut()[i] = rng.gen_range(0..50) as f64;
        }
    }
    m
}

/// Runs every check; the quick level uses fewer trials and smaller cases.
pub fn run_verification(level: VerifyLevel, seed: u64) -> Vec<Check> {
    let full = level == VerifyLevel::Full;
    let mut out = Vec::new();
    out.extend(round_trip_checks(if full { 200 } else { 20 }, seed));
    out.extend(sensitivity_checks());
    let lin_schema = schema(vec![ord("a", 8), nominal("n", &[2, 3]), ord("b", 5), nominal("c", &[3, 2, 2])]);
    let r = check_linearity(&HnPlan::new(&lin_schema, &[]), if full { 100 } else { 20 }, seed);
    out.push(check("linearity", r.passed(), r.to_string()));
    out.extend(variance_checks(if full { 100_000 } else { 10_000 }, seed));
    out
}

fn round_trip_checks(cases: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10));
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let d = rng.gen_range(1..=4);
        let mut attrs = Vec::new();
        let mut budget = 4096usize;
        for i in 0..d {
            let cap = (budget / 2).max(2);
            if rng.gen_bool(0.5) {
                let n = rng.gen_range(2..=cap.min(64));
                budget /= n.next_power_of_two();
                attrs.push(ord(&format!("o{i}"), n));
            } else {
                let h = random_hierarchy(&mut rng, 4, cap.min(24));
                budget /= h.leaf_count();
                attrs.push(AttributeSchema::nominal(format!("n{i}"), h).expect("valid"));
            }
            if budget < 2 {
                break;
            }
        }
        let s = schema(attrs);
        let m = random_counts(s.clone(), &mut rng);
        let plan = HnPlan::new(&s, &[]);
        let back = plan.inverse_values(plan.forward(&m));
        for (a, b) in back.iter().zip(m.entries()) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    vec![check("round-trip", worst < 1e-9, format!("cases={cases} max_relative_error={worst:e}"))]
}

fn sensitivity_checks() -> Vec<Check> {
    let cases: Vec<(String, Arc<Schema>, Vec<usize>)> = vec![
        ("haar m=2".into(), schema(vec![ord("a", 2)]), vec![]),
        ("haar m=8".into(), schema(vec![ord("a", 8)]), vec![]),
        ("haar m=64".into(), schema(vec![ord("a", 64)]), vec![]),
        ("nominal h=2".into(), schema(vec![nominal("n", &[5])]), vec![]),
        ("nominal h=3".into(), schema(vec![nominal("n", &[4, 3])]), vec![]),
        ("nominal h=4".into(), schema(vec![nominal("n", &[2, 3, 2])]), vec![]),
        ("hn ordinal x nominal".into(), schema(vec![ord("a", 16), nominal("n", &[3, 3])]), vec![]),
        (
            "hn ordinal x nominal x ordinal".into(),
            schema(vec![ord("a", 8), nominal("n", &[2, 3]), ord("b", 4)]),
            vec![],
        ),
        (
            "hn split".into(),
            schema(vec![ord("a", 8), nominal("n", &[2, 3]), ord("b", 4)]),
            vec![0],
        ),
    ];
    cases
        .into_iter()
        .map(|(name, s, split)| {
            let plan = HnPlan::new(&s, &split);
            match measure_sensitivity(&plan, SensitivityMode::Exhaustive) {
                Ok(r) => check(
                    format!("sensitivity {name}"),
                    r.is_tight() && r.max_asymmetry() <= 1e-9,
                    r.to_string(),
                ),
                Err(e) => check(format!("sensitivity {name}"), false, e.to_string()),
            }
        })
        .collect()
}

fn variance_checks(trials: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut run = |name: &str, s: Arc<Schema>, queries: Vec<RangeQuery>, stream: u64| {
        let p = privelet(&s, 1.0);
        let m = FrequencyMatrix::zeros(s.clone());
        match estimate_query_variance(&p, &m, &queries, trials, derive_seed(seed, stream)) {
            Ok(reports) => {
                let worst = reports
                    .iter()
                    .max_by(|a, b| {
                        ((a.sample_variance - a.bound) / a.standard_error)
                            .total_cmp(&((b.sample_variance - b.bound) / b.standard_error))
                    })
                    .expect("at least one query");
                out.push(check(
                    format!("variance bound {name}"),
                    reports.iter().all(|r| r.within_bound(3.0)),
                    format!("queries={} worst: {}", reports.len(), worst.render(&s)),
                ));
                let agree = reports.iter().all(|r| r.matches_expected(5.0));
                out.push(check(
                    format!("variance exact {name}"),
                    agree,
                    format!("sample variances within 5 standard errors of the exact variance: {agree}"),
                ));
            }
            Err(e) => out.push(check(format!("variance {name}"), false, e.to_string())),
        }
    };

    // Worst interval of a length-64 ordinal vector, located with the exact oracle.
    let s = schema(vec![ord("a", 64)]);
    let oracle = VarianceOracle::new(&privelet(&s, 1.0), s.clone()).expect("small");
    let worst = (0..64)
        .flat_map(|lo| (lo..64).map(move |hi| (lo, hi)))
        .map(|(lo, hi)| RangeQuery::new(&s, vec![Predicate::Interval { lo, hi }]).expect("in range"))
        .max_by(|a, b| oracle.variance(a).total_cmp(&oracle.variance(b)))
        .expect("non-empty");
    run("ordinal m=64 worst interval", s, vec![worst], 20);

    let s = schema(vec![nominal("n", &[8, 8])]);
    let nodes = s.attribute(0).hierarchy().expect("nominal").node_count();
    let queries = (0..nodes)
        .map(|id| RangeQuery::new(&s, vec![Predicate::Node(id)]).expect("valid node"))
        .collect();
    run("nominal 64 leaves every node", s, queries, 21);

    let s = schema(vec![ord("a", 16), nominal("n", &[3, 4])]);
    let queries = generate_workload(&s, 10, derive_seed(seed, 22));
    run("2-d mixed random queries", s, queries, 23);
    out
}
