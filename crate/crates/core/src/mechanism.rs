//! Publication mechanisms, selected by name at runtime.
//!
//! Every mechanism perturbs a frequency matrix with Laplace noise drawn from one
//! seeded stream, consumed in row-major order over the noised values. The
//! entry-wise method noises matrix entries directly; the wavelet methods noise
//! each coefficient with magnitude `λ / W(c)` and invert the transform.

use std::fmt;
use std::sync::Arc;

use crate::budget::{self, PrivacyBudget};
use crate::error::{Error, Result};
use crate::hn::HnPlan;
use crate::matrix::{FrequencyMatrix, MatrixFile};
use crate::noise::{LaplaceSampler, NoiseSampler};
use crate::schema::Schema;

pub trait Mechanism: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Dimensions left out of the wavelet transform for a requested split.
    fn resolve_split(&self, schema: &Schema, requested: &[usize]) -> Result<Vec<usize>>;

    /// Returns `m` with noise of magnitude `λ / W(c)` added to every noised value.
    fn perturb(
        &self,
        m: &FrequencyMatrix,
        lambda: f64,
        split: &[usize],
        noise: &mut dyn NoiseSampler,
    ) -> FrequencyMatrix;
}

/// Independent Laplace noise on every matrix entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct Basic;

impl Mechanism for Basic {
    fn name(&self) -> &'static str {
        "basic"
    }

    fn resolve_split(&self, schema: &Schema, requested: &[usize]) -> Result<Vec<usize>> {
        let all: Vec<usize> = (0..schema.len()).collect();
        if requested.is_empty() || requested == all.as_slice() {
            Ok(all)
        } else {
            Err(Error::InvalidArgument("basic does not take a split".into()))
        }
    }

    fn perturb(&self, m: &FrequencyMatrix, lambda: f64, _split: &[usize], noise: &mut dyn NoiseSampler) -> FrequencyMatrix {
        let entries = m.entries().iter().map(|&e| e + noise.sample(lambda)).collect();
        FrequencyMatrix::from_entries(m.shared_schema(), entries, 0).expect("dims unchanged")
    }
}

/// Wavelet transform on every dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct Privelet;

impl Mechanism for Privelet {
    fn name(&self) -> &'static str {
        "privelet"
    }

    fn resolve_split(&self, _schema: &Schema, requested: &[usize]) -> Result<Vec<usize>> {
        if requested.is_empty() {
            Ok(Vec::new())
        } else {
            Err(Error::InvalidArgument("privelet does not take a split; use privelet+".into()))
        }
    }

    fn perturb(&self, m: &FrequencyMatrix, lambda: f64, split: &[usize], noise: &mut dyn NoiseSampler) -> FrequencyMatrix {
        hybrid_perturb(m, lambda, split, noise)
    }
}

/// Wavelet transform on all dimensions except the split ones, along which the
/// matrix is treated as independent sub-matrices.
#[derive(Debug, Clone, Copy, Default)]
pub struct PriveletPlus;

impl Mechanism for PriveletPlus {
    fn name(&self) -> &'static str {
        "privelet+"
    }

    fn resolve_split(&self, schema: &Schema, requested: &[usize]) -> Result<Vec<usize>> {
        let mut split = requested.to_vec();
        split.sort_unstable();
        split.dedup();
        if let Some(&bad) = split.iter().find(|&&i| i >= schema.len()) {
            return Err(Error::InvalidArgument(format!("split dimension {bad} out of range")));
        }
        Ok(split)
    }

    fn perturb(&self, m: &FrequencyMatrix, lambda: f64, split: &[usize], noise: &mut dyn NoiseSampler) -> FrequencyMatrix {
        hybrid_perturb(m, lambda, split, noise)
    }
}

fn hybrid_perturb(m: &FrequencyMatrix, lambda: f64, split: &[usize], noise: &mut dyn NoiseSampler) -> FrequencyMatrix {
    let plan = HnPlan::new(m.schema(), split);
    let mut c = plan.forward(m);
    let weights = c.weights().to_vec();
    for (v, w) in c.values_mut().iter_mut().zip(weights) {
        *v += noise.sample(lambda / w);
    }
    FrequencyMatrix::from_entries(m.shared_schema(), plan.inverse_values(c), 0).expect("dims unchanged")
}

#[derive(Debug, Clone)]
pub struct MechanismRegistry {
    entries: Vec<Arc<dyn Mechanism>>,
}

impl MechanismRegistry {
    pub fn empty() -> Self {
        MechanismRegistry { entries: Vec::new() }
    }

    pub fn builtin() -> Self {
        let mut r = MechanismRegistry::empty();
        r.register(Arc::new(Basic));
        r.register(Arc::new(Privelet));
        r.register(Arc::new(PriveletPlus));
        r
    }

    /// Adds a mechanism, replacing any registered under the same name.
    pub fn register(&mut self, m: Arc<dyn Mechanism>) {
        self.entries.retain(|e| e.name() != m.name());
        self.entries.push(m);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Mechanism>> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .cloned()
            .ok_or_else(|| Error::UnknownMechanism(name.to_owned()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }
}

impl Default for MechanismRegistry {
    fn default() -> Self {
        MechanismRegistry::builtin()
    }
}

/// A mechanism bound to a schema, split and budget.
#[derive(Debug, Clone)]
pub struct Publisher {
    mechanism: Arc<dyn Mechanism>,
    split: Vec<usize>,
    budget: PrivacyBudget,
}

impl Publisher {
    /// Derives `λ = 2ρ/ε` from the resolved split.
    pub fn new(mechanism: Arc<dyn Mechanism>, schema: &Schema, epsilon: f64, split: &[usize]) -> Result<Self> {
        let split = mechanism.resolve_split(schema, split)?;
        let budget = PrivacyBudget::from_epsilon(epsilon, budget::rho(schema, &split))?;
        Ok(Publisher { mechanism, split, budget })
    }

    pub fn with_lambda(mechanism: Arc<dyn Mechanism>, schema: &Schema, lambda: f64, split: &[usize]) -> Result<Self> {
        let split = mechanism.resolve_split(schema, split)?;
        let budget = PrivacyBudget::from_lambda(lambda, budget::rho(schema, &split))?;
        Ok(Publisher { mechanism, split, budget })
    }

    pub fn mechanism(&self) -> &dyn Mechanism {
        self.mechanism.as_ref()
    }

    pub fn split(&self) -> &[usize] {
        &self.split
    }

    pub fn budget(&self) -> PrivacyBudget {
        self.budget
    }

    /// Worst-case query noise variance for this configuration.
    pub fn variance_bound(&self, schema: &Schema) -> f64 {
        budget::variance_bound(schema, &self.split, self.budget.epsilon)
    }

    pub fn publish_with(&self, m: &FrequencyMatrix, noise: &mut dyn NoiseSampler) -> FrequencyMatrix {
        self.mechanism.perturb(m, self.budget.lambda, &self.split, noise)
    }

    pub fn publish(&self, m: &FrequencyMatrix, seed: u64) -> Published {
        let matrix = self.publish_with(m, &mut LaplaceSampler::new(seed));
        let schema = m.schema();
        Published {
            matrix,
            method: self.mechanism.name().to_owned(),
            budget: self.budget,
            split: self.split.iter().map(|&i| schema.attribute(i).name().to_owned()).collect(),
            seed,
        }
    }
}

/// Noisy matrix plus the parameters that produced it.
#[derive(Debug, Clone)]
pub struct Published {
    pub matrix: FrequencyMatrix,
    pub method: String,
    pub budget: PrivacyBudget,
    pub split: Vec<String>,
    pub seed: u64,
}

impl Published {
    pub fn meta(&self) -> Vec<(String, String)> {
        vec![
            ("method".into(), self.method.clone()),
            ("epsilon".into(), self.budget.epsilon.to_string()),
            ("lambda".into(), self.budget.lambda.to_string()),
            ("split".into(), self.split.join(",")),
            ("seed".into(), self.seed.to_string()),
        ]
    }

    pub fn to_file(&self) -> MatrixFile {
        self.matrix.to_file(&self.meta())
    }
}

/// Resolves `method` in the builtin registry and publishes at privacy level `epsilon`.
pub fn publish(m: &FrequencyMatrix, method: &str, epsilon: f64, split: &[usize], seed: u64) -> Result<Published> {
    let mechanism = MechanismRegistry::builtin().get(method)?;
    Ok(Publisher::new(mechanism, m.schema(), epsilon, split)?.publish(m, seed))
}

pub fn basic_publish(m: &FrequencyMatrix, lambda: f64, seed: u64) -> FrequencyMatrix {
    Basic.perturb(m, lambda, &[], &mut LaplaceSampler::new(seed))
}

pub fn privelet_publish(m: &FrequencyMatrix, lambda: f64, seed: u64) -> FrequencyMatrix {
    privelet_plus_publish(m, lambda, &[], seed)
}

pub fn privelet_plus_publish(m: &FrequencyMatrix, lambda: f64, split: &[usize], seed: u64) -> FrequencyMatrix {
    let mut split = split.to_vec();
    split.sort_unstable();
    split.dedup();
    PriveletPlus.perturb(m, lambda, &split, &mut LaplaceSampler::new(seed))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::fixtures::{medical_records, two_by_three_hierarchy};
    use crate::hn::hn_weight_of;
    use crate::noise::NoNoise;
    use crate::schema::AttributeSchema;

    /// Records the magnitudes it is asked for.
    #[derive(Default)]
    struct Recorder(Vec<f64>);

    impl NoiseSampler for Recorder {
        fn sample(&mut self, magnitude: f64) -> f64 {
            self.0.push(magnitude);
            0.0
        }
    }

    fn mixed_schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(vec![
                AttributeSchema::ordinal_sized("a", 4).unwrap(),
                AttributeSchema::nominal("n", two_by_three_hierarchy()).unwrap(),
                AttributeSchema::ordinal_sized("b", 3).unwrap(),
            ])
            .unwrap(),
        )
    }

    fn random_matrix(schema: Arc<Schema>, rng: &mut impl Rng) -> FrequencyMatrix {
        let mut m = FrequencyMatrix::zeros(schema);
        for i in 0..m.len() {
            if m.is_real(i) {
                m.entries_mut()[i] = rng.gen_range(0..20) as f64;
            }
        }
        m
    }

    #[test]
    fn registry_lookup() {
        let r = MechanismRegistry::builtin();
        assert_eq!(r.names(), vec!["basic", "privelet", "privelet+"]);
        assert_eq!(r.get("privelet+").unwrap().name(), "privelet+");
        assert!(matches!(r.get("laplace"), Err(Error::UnknownMechanism(_))));
    }

    #[test]
    fn budget_from_split() {
        let s = mixed_schema();
        let r = MechanismRegistry::builtin();
        let p = Publisher::new(r.get("privelet").unwrap(), &s, 1.0, &[]).unwrap();
        assert_eq!(p.budget().rho, 3.0 * 3.0 * 3.0);
        let p = Publisher::new(r.get("privelet+").unwrap(), &s, 1.0, &[2, 0]).unwrap();
        assert_eq!(p.split(), &[0, 2]);
        assert_eq!(p.budget().rho, 3.0);
        assert_eq!(p.budget().lambda, 6.0);
        let p = Publisher::new(r.get("basic").unwrap(), &s, 1.0, &[]).unwrap();
        assert_eq!(p.budget().lambda, 2.0);
        assert!(Publisher::new(r.get("privelet").unwrap(), &s, 1.0, &[1]).is_err());
        assert!(Publisher::new(r.get("privelet+").unwrap(), &s, 1.0, &[3]).is_err());
        assert!(Publisher::new(r.get("basic").unwrap(), &s, -1.0, &[]).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = mixed_schema();
        for split in [vec![], vec![0], vec![1], vec![0, 2], vec![0, 1, 2]] {
            let m = random_matrix(s.clone(), &mut rng);
            let out = PriveletPlus.perturb(&m, 3.0, &split, &mut NoNoise);
            for (a, b) in out.entries().iter().zip(m.entries()) {
                assert!((a - b).abs() < 1e-9, "{split:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn ordinal_magnitudes_follow_weights() {
        let s = Schema::new(vec![AttributeSchema::ordinal_sized("a", 8).unwrap()]).unwrap();
        let m = FrequencyMatrix::zeros(s);
        let mut rec = Recorder::default();
        Privelet.perturb(&m, 16.0, &[], &mut rec);
        assert_eq!(rec.0, vec![2.0, 2.0, 4.0, 4.0, 8.0, 8.0, 8.0, 8.0]);
    }

    #[test]
    fn nominal_magnitudes_follow_weights() {
        let s = Schema::new(vec![AttributeSchema::nominal("n", two_by_three_hierarchy()).unwrap()]).unwrap();
        let m = FrequencyMatrix::zeros(s);
        let mut rec = Recorder::default();
        Privelet.perturb(&m, 1.0, &[], &mut rec);
        // Fanout 2 below the root, fanout 3 below each group.
        assert_eq!(rec.0, vec![1.0, 1.0, 1.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0, 4.0 / 3.0]);
    }

    #[test]
    fn mixed_magnitudes_match_stored_weights() {
        let s = mixed_schema();
        let m = FrequencyMatrix::zeros(s.clone());
        let mut rec = Recorder::default();
        Privelet.perturb(&m, 5.0, &[], &mut rec);
        let c = HnPlan::new(&s, &[]).forward(&m);
        let dims = c.dims().to_vec();
        let mut k = 0;
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for l in 0..dims[2] {
                    assert_eq!(rec.0[k], 5.0 / hn_weight_of(&c, &[i, j, l]));
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn full_split_equals_basic() {
        let m = FrequencyMatrix::build(&medical_records());
        let all: Vec<usize> = (0..m.schema().len()).collect();
        assert_eq!(
            privelet_plus_publish(&m, 2.0, &all, 77).entries(),
            basic_publish(&m, 2.0, 77).entries()
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let m = FrequencyMatrix::build(&medical_records());
        assert_eq!(privelet_publish(&m, 2.0, 1).entries(), privelet_publish(&m, 2.0, 1).entries());
        assert_ne!(privelet_publish(&m, 2.0, 1).entries(), privelet_publish(&m, 2.0, 2).entries());
        let a = publish(&m, "privelet+", 1.0, &[1], 3).unwrap();
        let b = publish(&m, "privelet+", 1.0, &[1], 3).unwrap();
        assert_eq!(a.to_file().render(), b.to_file().render());
        assert_eq!(a.to_file().meta("split"), Some("HasDiabetes"));
    }

    #[test]
    fn split_matches_explicit_sub_matrices() {
        // Oracle: cut the matrix along the split dimension, run the unsplit
        // transform on each slice, and compare coefficients and weights.
        let s = mixed_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = random_matrix(s.clone(), &mut rng);
        let c = HnPlan::new(&s, &[1]).forward(&m);
        let sub = Arc::new(
            Schema::new(vec![s.attribute(0).clone(), s.attribute(2).clone()]).unwrap(),
        );
        let sub_plan = HnPlan::new(&sub, &[]);
        for leaf in 0..6 {
            let mut slice = FrequencyMatrix::zeros(sub.clone());
            for i in 0..4 {
                for l in 0..4 {
                    slice.set(&[i, l], m.get(&[i, leaf, l]));
                }
            }
            let sc = sub_plan.forward(&slice);
            for i in 0..4 {
                for l in 0..4 {
                    let x = c.values()[c.offset(&[i, leaf, l])];
                    assert!((x - sc.values()[sc.offset(&[i, l])]).abs() < 1e-12);
                    assert_eq!(hn_weight_of(&c, &[i, leaf, l]), hn_weight_of(&sc, &[i, l]));
                }
            }
        }
    }
}
