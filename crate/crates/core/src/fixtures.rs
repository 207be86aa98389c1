//! Seeded random evaluation sets for property checks and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::evalset::{ClassCounts, Domain, EvalSet, Sample};

#[derive(Debug, Clone, Copy)]
pub struct RandomSetConfig {
    pub n_base: usize,
    pub n_new: usize,
    pub classes: ClassCounts,
    /// Probability that a base sample's domain-local argmax is right.
    pub p_base_correct: f64,
    pub p_new_correct: f64,
    /// Base scores are drawn from `U(1 - overlap, 1)`, new scores from
    /// `U(0, overlap)`. Values above 0.5 make the two ranges overlap.
    pub overlap: f64,
}

impl Default for RandomSetConfig {
    fn default() -> Self {
        Self {
            n_base: 50,
            n_new: 50,
            classes: ClassCounts::new(3, 3),
            p_base_correct: 0.7,
            p_new_correct: 0.6,
            overlap: 0.6,
        }
    }
}

/// Logits whose argmax is `label` when `correct`, and some other class otherwise.
pub(crate) fn domain_logits<R: Rng>(rng: &mut R, classes: usize, label: usize, correct: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..classes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let target = if correct || classes == 1 {
        label
    } else {
        (label + rng.gen_range(1..classes)) % classes
    };
    v[target] = 2.0;
    v
}

/// Random set with detector scores attached and no two scores equal.
pub fn random_scored_set(seed: u64, config: &RandomSetConfig) -> (EvalSet, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ClassCounts { c_base, c_new } = config.classes;
    let overlap = config.overlap.clamp(0.01, 1.0);
    let mut samples = Vec::with_capacity(config.n_base + config.n_new);
    let mut used = std::collections::HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| loop {
        let r: f64 = rng.gen_range(lo..hi);
        if used.insert(r.to_bits()) {
            return r;
        }
    };

    for i in 0..config.n_base {
        let label = rng.gen_range(0..c_base);
        let ok = rng.gen_bool(config.p_base_correct);
        let base_logits = domain_logits(&mut rng, c_base, label, ok);
        let new_logits = (0..c_new).map(|_| rng.gen_range(-2.0..1.0)).collect();
        let r = fresh(&mut rng, 1.0 - overlap, 1.0);
        samples.push(Sample {
            id: format!("b{i}"),
            domain: Domain::Base,
            label,
            base_logits,
            new_logits,
            detector_score: Some(r),
        });
    }
    for i in 0..config.n_new {
        let label = rng.gen_range(0..c_new);
        let ok = rng.gen_bool(config.p_new_correct);
        let new_logits = domain_logits(&mut rng, c_new, label, ok);
        let base_logits = (0..c_base).map(|_| rng.gen_range(-2.0..1.0)).collect();
        let r = fresh(&mut rng, 0.0, overlap);
        samples.push(Sample {
            id: format!("n{i}"),
            domain: Domain::New,
            label,
            base_logits,
            new_logits,
            detector_score: Some(r),
        });
    }
    let scores = samples.iter().map(|s| s.detector_score.unwrap()).collect();
    let set = EvalSet::new(samples, config.classes).expect("generated samples are valid");
    (set, scores)
}
