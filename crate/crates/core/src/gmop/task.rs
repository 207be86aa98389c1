use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalset::Domain;

/// Parameters of a synthetic open-world task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub c_base: usize,
    pub c_new: usize,
    pub dim: usize,
    /// Points per class in the train split (base classes only) and in the
    /// test split (every class).
    pub samples_per_class: usize,
    /// Per-coordinate standard deviation around each prototype.
    pub spread: f64,
    /// Size of the perturbation separating a class's embedding (what the
    /// zero-shot scorer sees) from its true prototype.
    pub text_noise: f64,
    pub seed: u64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            c_base: 6,
            c_new: 6,
            dim: 16,
            samples_per_class: 20,
            spread: 0.2,
            text_noise: 1.0,
            seed: 1,
        }
    }
}

impl TaskConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub x: Vec<f64>,
    pub domain: Domain,
    /// Class index local to `domain`.
    pub label: usize,
}

/// Gaussian clusters around unit-norm prototypes. Each class also has a
/// unit-norm embedding, a noisy copy of its prototype, which is all the
/// zero-shot scorer and the prompts know about the class. The train split
/// only contains base classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub config: TaskConfig,
    pub base_prototypes: Vec<Vec<f64>>,
    pub new_prototypes: Vec<Vec<f64>>,
    pub base_embeddings: Vec<Vec<f64>>,
    pub new_embeddings: Vec<Vec<f64>>,
    pub train: Vec<LabeledPoint>,
    pub test: Vec<LabeledPoint>,
}

impl SyntheticTask {
    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn c_base(&self) -> usize {
        self.config.c_base
    }

    pub fn c_new(&self) -> usize {
        self.config.c_new
    }
}

fn normalized(v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (norm > 1e-9).then(|| v.into_iter().map(|a| a / norm).collect())
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize, normal: &Normal<f64>) -> Vec<f64> {
    loop {
        if let Some(v) = normalized((0..dim).map(|_| normal.sample(rng)).collect()) {
            return v;
        }
    }
}

pub fn generate_task(config: TaskConfig) -> Result<SyntheticTask> {
    let TaskConfig {
        c_base,
        c_new,
        dim,
        samples_per_class,
        spread,
        text_noise,
        seed,
    } = config;
    if c_base == 0 || c_new == 0 || dim == 0 || samples_per_class == 0 {
        return Err(Error::InvalidArgument("task sizes must be positive".into()));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "spread must be nonnegative, got {spread}"
        )));
    }
    if !(text_noise >= 0.0 && text_noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "text noise must be nonnegative, got {text_noise}"
        )));
    }
    if dim == 1 && c_base + c_new > 2 {
        return Err(Error::InvalidArgument(
            "dim 1 holds at most 2 distinct prototypes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(c_base + c_new);
    while prototypes.len() < c_base + c_new {
        let p = unit_vector(&mut rng, dim, &unit);
        if !prototypes.contains(&p) {
            prototypes.push(p);
        }
    }
    let text_scale = text_noise / (dim as f64).sqrt();
    let mut embeddings: Vec<Vec<f64>> = prototypes
        .iter()
        .map(|p| loop {
            let noisy = p.iter().map(|&a| a + text_scale * unit.sample(&mut rng)).collect();
            if let Some(e) = normalized(noisy) {
                break e;
            }
        })
        .collect();
    let new_prototypes = prototypes.split_off(c_base);
    let base_prototypes = prototypes;
    let new_embeddings = embeddings.split_off(c_base);
    let base_embeddings = embeddings;

    let mut draw = |proto: &[f64], domain, label| LabeledPoint {
        x: proto.iter().map(|&p| p + spread * unit.sample(&mut rng)).collect(),
        domain,
        label,
    };

    let mut train = Vec::with_capacity(c_base * samples_per_class);
    for (label, p) in base_prototypes.iter().enumerate() {
        for _ in 0..samples_per_class {
            train.push(draw(p, Domain::Base, label));
        }
    }
    let mut test = Vec::with_capacity((c_base + c_new) * samples_per_class);
    for (label, p) in base_prototypes.iter().enumerate() {
        for _ in 0..samples_per_class {
            test.push(draw(p, Domain::Base, label));
        }
    }
    for (label, p) in new_prototypes.iter().enumerate() {
        for _ in 0..samples_per_class {
            test.push(draw(p, Domain::New, label));
        }
    }

    Ok(SyntheticTask {
        config,
        base_prototypes,
        new_prototypes,
        base_embeddings,
        new_embeddings,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let cfg = TaskConfig {
            c_base: 2,
            c_new: 2,
            dim: 2,
            samples_per_class: 50,
            spread: 0.2,
            text_noise: 0.5,
            seed: 11,
        };
        let task = generate_task(cfg).unwrap();
        assert_eq!(task.train.len(), 100);
        assert_eq!(task.test.len(), 200);
        assert!(task.train.iter().all(|p| p.domain == Domain::Base));
        assert_eq!(task.test.iter().filter(|p| p.domain == Domain::New).count(), 100);
        assert_eq!(generate_task(cfg).unwrap(), task);
        assert_ne!(generate_task(cfg.with_seed(12)).unwrap(), task);
    }

    #[test]
    fn prototypes_are_distinct_unit_vectors() {
        let task = generate_task(TaskConfig::default()).unwrap();
        let all: Vec<_> = task.base_prototypes.iter().chain(&task.new_prototypes).collect();
        for (i, p) in all.iter().enumerate() {
            let norm = p.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            for q in &all[i + 1..] {
                assert_ne!(p, q);
            }
        }
    }

    #[test]
    fn embeddings_are_unit_and_match_prototypes_without_noise() {
        let noisy = generate_task(TaskConfig::default()).unwrap();
        for e in noisy.base_embeddings.iter().chain(&noisy.new_embeddings) {
            assert!((e.iter().map(|a| a * a).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
        }
        assert_ne!(noisy.base_embeddings, noisy.base_prototypes);
        let clean = generate_task(TaskConfig {
            text_noise: 0.0,
            ..TaskConfig::default()
        })
        .unwrap();
        for (e, p) in clean.base_embeddings.iter().zip(&clean.base_prototypes) {
            for (a, b) in e.iter().zip(p) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_spread_points_sit_on_prototypes() {
        let task = generate_task(TaskConfig {
            spread: 0.0,
            ..TaskConfig::default()
        })
        .unwrap();
        for p in &task.test {
            let protos = match p.domain {
                Domain::Base => &task.base_prototypes,
                Domain::New => &task.new_prototypes,
            };
            assert_eq!(p.x, protos[p.label]);
        }
    }

    #[test]
    fn rejects_empty_sizes() {
        let bad = TaskConfig {
            samples_per_class: 0,
            ..TaskConfig::default()
        };
        assert!(generate_task(bad).is_err());
    }
}
