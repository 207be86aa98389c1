use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::partition::PseudoPartition;
use super::task::{LabeledPoint, SyntheticTask};
use crate::error::{Error, Result};
use crate::numeric::{argmax, sigmoid};

/// How a training pair is weighted by classifier confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// Sigmoid of the true-class logit.
    #[default]
    Sigmoid,
    /// 1 when the classifier's argmax is right, else 0.
    ZeroOne,
    /// Every pair weighs 1.
    Off,
}

impl FromStr for GateMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Self::Sigmoid),
            "zero-one" => Ok(Self::ZeroOne),
            "off" => Ok(Self::Off),
            _ => Err(Error::InvalidArgument(format!(
                "unknown gate '{s}' (expected sigmoid, zero-one or off)"
            ))),
        }
    }
}

impl fmt::Display for GateMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sigmoid => "sigmoid",
            Self::ZeroOne => "zero-one",
            Self::Off => "off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Each sub-detector owns one linear scorer per pseudo-base class of its
    /// partition: `r_k = sigmoid(max_c (w_kc . x + b_kc))`.
    #[default]
    Mixture,
    /// Same form, but the scorers are the base classifier's own rows.
    SinglePrompt,
}

impl FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(Self::Mixture),
            "single-prompt" => Ok(Self::SinglePrompt),
            _ => Err(Error::InvalidArgument(format!(
                "unknown architecture '{s}' (expected mixture or single-prompt)"
            ))),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mixture => "mixture",
            Self::SinglePrompt => "single-prompt",
        })
    }
}

/// Learnable context `A`, row-major `dim x dim`. A class with embedding `e`
/// gets scorer weights `w = e + A e`, so a zero context reproduces the
/// zero-shot scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub dim: usize,
    pub context: Vec<f64>,
}

impl Prompt {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            context: vec![0.0; dim * dim],
        }
    }

    pub fn class_weight(&self, embedding: &[f64]) -> Vec<f64> {
        self.context
            .chunks(self.dim)
            .zip(embedding)
            .map(|(row, e)| e + dot(row, embedding))
            .collect()
    }

    pub fn class_weights(&self, embeddings: &[Vec<f64>]) -> Vec<Vec<f64>> {
        embeddings.iter().map(|e| self.class_weight(e)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `temperature * (2 x.w - |w|^2)`, which ranks classes like the negative
/// squared distance from `x` to `w`.
pub fn prototype_logit(w: &[f64], x: &[f64], temperature: f64) -> f64 {
    temperature * (2.0 * dot(w, x) - dot(w, w))
}

/// Frozen zero-shot scorer over the class embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeScorer {
    pub base_embeddings: Vec<Vec<f64>>,
    pub new_embeddings: Vec<Vec<f64>>,
    pub temperature: f64,
}

impl PrototypeScorer {
    pub fn new_logits(&self, x: &[f64]) -> Vec<f64> {
        self.new_embeddings
            .iter()
            .map(|e| prototype_logit(e, x, self.temperature))
            .collect()
    }

    /// Scores against some of the base classes, used when those classes
    /// play the unseen role during training.
    pub fn subset_logits(&self, classes: &[usize], x: &[f64]) -> Vec<f64> {
        classes
            .iter()
            .map(|&c| prototype_logit(&self.base_embeddings[c], x, self.temperature))
            .collect()
    }
}

/// Mixture of pseudo open-set detectors, a base classifier and a frozen
/// zero-shot scorer for unseen classes. Every trainable head is a prompt over
/// the base-class embeddings. Sub-detector `k` scores
/// `sigmoid(max over its pseudo-base classes c of logit_c + detector_bias[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGmopModel {
    pub architecture: Architecture,
    pub partitions: Vec<PseudoPartition>,
    /// One prompt per partition. Empty for [`Architecture::SinglePrompt`],
    /// where the classifier prompt is reused.
    pub detectors: Vec<Prompt>,
    pub detector_bias: Vec<f64>,
    pub classifier: Prompt,
    pub zero_shot: PrototypeScorer,
}

const INIT_STD: f64 = 0.01;

/// Class weights of every prompt, resolved once for a batch of inputs.
pub struct Forward<'a> {
    model: &'a ToyGmopModel,
    classifier: Vec<Vec<f64>>,
    detectors: Vec<Vec<Vec<f64>>>,
}

impl Forward<'_> {
    pub fn base_logits(&self, x: &[f64]) -> Vec<f64> {
        let t = self.model.zero_shot.temperature;
        self.classifier.iter().map(|w| prototype_logit(w, x, t)).collect()
    }

    fn rows(&self, k: usize) -> &[Vec<f64>] {
        match self.model.architecture {
            Architecture::Mixture => &self.detectors[k],
            Architecture::SinglePrompt => &self.classifier,
        }
    }

    /// Pre-sigmoid value of sub-detector `k` and the class attaining it.
    fn winning(&self, k: usize, x: &[f64]) -> (f64, usize) {
        let t = self.model.zero_shot.temperature;
        let rows = self.rows(k);
        let mut best = (f64::NEG_INFINITY, 0);
        for &c in &self.model.partitions[k].pseudo_base {
            let z = prototype_logit(&rows[c], x, t);
            if z > best.0 {
                best = (z, c);
            }
        }
        (best.0 + self.model.detector_bias[k], best.1)
    }

    pub fn sub_score(&self, k: usize, x: &[f64]) -> f64 {
        sigmoid(self.winning(k, x).0)
    }

    /// Ensemble score: max over sub-detectors.
    pub fn detector_score(&self, x: &[f64]) -> f64 {
        (0..self.model.k())
            .map(|k| self.sub_score(k, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl ToyGmopModel {
    /// Contexts drawn near zero, so the untrained heads sit close to the
    /// zero-shot scorer. Detector biases start at `-temperature`.
    pub fn init(
        task: &SyntheticTask,
        partitions: Vec<PseudoPartition>,
        architecture: Architecture,
        temperature: f64,
        seed: u64,
    ) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one partition".into()));
        }
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let dim = task.dim();
        let mut prompt = || Prompt {
            dim,
            context: (0..dim * dim).map(|_| normal.sample(&mut rng)).collect(),
        };
        let detectors = match architecture {
            Architecture::Mixture => (0..partitions.len()).map(|_| prompt()).collect(),
            Architecture::SinglePrompt => Vec::new(),
        };
        let classifier = prompt();
        Ok(Self {
            architecture,
            detector_bias: vec![-temperature; partitions.len()],
            partitions,
            detectors,
            classifier,
            zero_shot: PrototypeScorer {
                base_embeddings: task.base_embeddings.clone(),
                new_embeddings: task.new_embeddings.clone(),
                temperature,
            },
        })
    }

    pub fn k(&self) -> usize {
        self.partitions.len()
    }

    pub fn dim(&self) -> usize {
        self.classifier.dim
    }

    pub fn forward(&self) -> Forward<'_> {
        let emb = &self.zero_shot.base_embeddings;
        Forward {
            model: self,
            classifier: self.classifier.class_weights(emb),
            detectors: self.detectors.iter().map(|p| p.class_weights(emb)).collect(),
        }
    }

    pub fn base_logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward().base_logits(x)
    }

    pub fn sub_score(&self, k: usize, x: &[f64]) -> f64 {
        self.forward().sub_score(k, x)
    }

    pub fn detector_score(&self, x: &[f64]) -> f64 {
        self.forward().detector_score(x)
    }

    pub fn n_params(&self) -> usize {
        let sq = self.dim() * self.dim();
        (self.detectors.len() + 1) * sq + self.detector_bias.len()
    }

    fn bias_offset(&self) -> usize {
        self.detectors.len() * self.dim() * self.dim()
    }

    fn classifier_offset(&self) -> usize {
        self.bias_offset() + self.detector_bias.len()
    }

    /// Trainable parameters: detector contexts, detector biases, then the
    /// classifier context. The zero-shot scorer is not included.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for p in &self.detectors {
            out.extend_from_slice(&p.context);
        }
        out.extend_from_slice(&self.detector_bias);
        out.extend_from_slice(&self.classifier.context);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::LengthMismatch {
                what: "parameters",
                expected: self.n_params(),
                found: params.len(),
            });
        }
        let sq = self.dim() * self.dim();
        let (ctx, rest) = params.split_at(self.bias_offset());
        for (p, chunk) in self.detectors.iter_mut().zip(ctx.chunks(sq)) {
            p.context.copy_from_slice(chunk);
        }
        let (bias, cls) = rest.split_at(self.detector_bias.len());
        self.detector_bias.copy_from_slice(bias);
        self.classifier.context.copy_from_slice(cls);
        Ok(())
    }
}

/// One pair's loss: `phi_b * (1 - r_b + r_n)^2 * phi_n`.
pub fn pair_term(phi_b: f64, r_b: f64, r_n: f64, phi_n: f64) -> f64 {
    let m = 1.0 - r_b + r_n;
    phi_b * m * m * phi_n
}

/// Sum of [`pair_term`] over every (base, new) pair, in linear time.
/// `base` holds `(phi, r)` and `new` holds `(psi, r)`.
pub fn pair_loss_sum(base: &[(f64, f64)], new: &[(f64, f64)]) -> f64 {
    let s = NewSums::of(new);
    base.iter()
        .map(|&(phi, r)| {
            let a = 1.0 - r;
            phi * (a * a * s.psi + 2.0 * a * s.r1 + s.r2)
        })
        .sum()
}

#[derive(Default)]
struct NewSums {
    psi: f64,
    r1: f64,
    r2: f64,
}

impl NewSums {
    fn of(new: &[(f64, f64)]) -> Self {
        let mut s = Self::default();
        for &(psi, r) in new {
            s.psi += psi;
            s.r1 += psi * r;
            s.r2 += psi * r * r;
        }
        s
    }
}

fn gate(mode: GateMode, logits: &[f64], target: usize) -> f64 {
    match mode {
        GateMode::Sigmoid => sigmoid(logits[target]),
        GateMode::ZeroOne => f64::from(u8::from(argmax(logits) == target)),
        GateMode::Off => 1.0,
    }
}

fn log_softmax_loss(logits: &[f64], target: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln() - logits[target]
}

/// Mean cross-entropy of the base classifier.
pub fn cross_entropy(model: &ToyGmopModel, train: &[LabeledPoint]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let fw = model.forward();
    let total: f64 = train
        .iter()
        .map(|p| log_softmax_loss(&fw.base_logits(&p.x), p.label))
        .sum();
    Ok(total / train.len() as f64)
}

/// Per-partition split of the training points into pseudo-base and
/// pseudo-new index lists.
fn split(part: &PseudoPartition, train: &[LabeledPoint]) -> Result<(Vec<usize>, Vec<usize>)> {
    let (b, n): (Vec<usize>, Vec<usize>) = (0..train.len()).partition(|&i| part.is_pseudo_base(train[i].label));
    if b.is_empty() || n.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "partition {:?} leaves a side without training samples",
            part.pseudo_base
        )));
    }
    Ok((b, n))
}

/// Gate on a pseudo-new sample, from the frozen zero-shot scorer restricted
/// to the partition's pseudo-new classes.
fn new_gate(model: &ToyGmopModel, part: &PseudoPartition, p: &LabeledPoint, gate_mode: GateMode) -> f64 {
    let logits = model.zero_shot.subset_logits(&part.pseudo_new, &p.x);
    let target = part
        .pseudo_new
        .iter()
        .position(|&c| c == p.label)
        .expect("pseudo-new label");
    gate(gate_mode, &logits, target)
}

/// Mean gated pair loss of sub-detector `k` on its partition.
pub fn gated_pair_loss(model: &ToyGmopModel, k: usize, train: &[LabeledPoint], gate_mode: GateMode) -> Result<f64> {
    let part = &model.partitions[k];
    let (bi, ni) = split(part, train)?;
    let fw = model.forward();
    let base: Vec<(f64, f64)> = bi
        .iter()
        .map(|&i| {
            let p = &train[i];
            (gate(gate_mode, &fw.base_logits(&p.x), p.label), fw.sub_score(k, &p.x))
        })
        .collect();
    let new: Vec<(f64, f64)> = ni
        .iter()
        .map(|&j| {
            (
                new_gate(model, part, &train[j], gate_mode),
                fw.sub_score(k, &train[j].x),
            )
        })
        .collect();
    Ok(pair_loss_sum(&base, &new) / (base.len() * new.len()) as f64)
}

/// Average of [`gated_pair_loss`] over partitions.
pub fn rank_loss(model: &ToyGmopModel, train: &[LabeledPoint], gate_mode: GateMode) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..model.k() {
        total += gated_pair_loss(model, k, train, gate_mode)?;
    }
    Ok(total / model.k() as f64)
}

/// `lambda * cross_entropy + rank_loss`.
pub fn objective(model: &ToyGmopModel, train: &[LabeledPoint], lambda: f64, gate_mode: GateMode) -> Result<f64> {
    Ok(lambda * cross_entropy(model, train)? + rank_loss(model, train, gate_mode)?)
}

/// Gradient with respect to each class weight vector `w` of each prompt,
/// stored as `sum of g * (x - w)`; the factor `2 * temperature` and the
/// chain through `w = e + A e` are applied at the end.
struct ClassGrads {
    rows: Vec<Vec<Vec<f64>>>,
}

impl ClassGrads {
    fn add(&mut self, prompt: usize, class: usize, x: &[f64], w: &[f64], g: f64) {
        for ((acc, xi), wi) in self.rows[prompt][class].iter_mut().zip(x).zip(w) {
            *acc += g * (xi - wi);
        }
    }

    /// `dA[i][j] = 2 t sum_c G_c[i] e_c[j]`, written into `out`.
    fn accumulate_context(&self, prompt: usize, embeddings: &[Vec<f64>], temperature: f64, out: &mut [f64]) {
        let dim = embeddings.first().map_or(0, Vec::len);
        for (g, e) in self.rows[prompt].iter().zip(embeddings) {
            for (i, gi) in g.iter().enumerate() {
                let row = &mut out[i * dim..(i + 1) * dim];
                for (o, ej) in row.iter_mut().zip(e) {
                    *o += 2.0 * temperature * gi * ej;
                }
            }
        }
    }
}

/// Objective and its analytic gradient in [`ToyGmopModel::params`] layout.
/// Gates built on the zero-shot scorer and 0/1 gates pass no gradient.
pub fn gradient(
    model: &ToyGmopModel,
    train: &[LabeledPoint],
    lambda: f64,
    gate_mode: GateMode,
) -> Result<(f64, Vec<f64>)> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let fw = model.forward();
    let dim = model.dim();
    let c_base = model.zero_shot.base_embeddings.len();
    let cls = model.detectors.len();
    let mut acc = ClassGrads {
        rows: vec![vec![vec![0.0; dim]; c_base]; cls + 1],
    };
    let mut bias_grad = vec![0.0; model.k()];
    let logits: Vec<Vec<f64>> = train.iter().map(|p| fw.base_logits(&p.x)).collect();
    let n = train.len() as f64;

    let mut ce = 0.0;
    for (p, s) in train.iter().zip(&logits) {
        ce += log_softmax_loss(s, p.label);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = exps.iter().sum();
        for (c, e) in exps.iter().enumerate() {
            let g = lambda * (e / z - f64::from(u8::from(c == p.label))) / n;
            acc.add(cls, c, &p.x, &fw.classifier[c], g);
        }
    }
    let mut value = lambda * ce / n;

    let kf = model.k() as f64;
    for (k, part) in model.partitions.iter().enumerate() {
        let (bi, ni) = split(part, train)?;
        let scale = 1.0 / (kf * bi.len() as f64 * ni.len() as f64);
        let prompt = match model.architecture {
            Architecture::Mixture => k,
            Architecture::SinglePrompt => cls,
        };

        // (gate, score, winning class)
        let base: Vec<(f64, f64, usize)> = bi
            .iter()
            .map(|&i| {
                let (z, c) = fw.winning(k, &train[i].x);
                (gate(gate_mode, &logits[i], train[i].label), sigmoid(z), c)
            })
            .collect();
        let new: Vec<(f64, f64, usize)> = ni
            .iter()
            .map(|&j| {
                let (z, c) = fw.winning(k, &train[j].x);
                (new_gate(model, part, &train[j], gate_mode), sigmoid(z), c)
            })
            .collect();

        let pairs_base: Vec<(f64, f64)> = base.iter().map(|&(phi, r, _)| (phi, r)).collect();
        let pairs_new: Vec<(f64, f64)> = new.iter().map(|&(psi, r, _)| (psi, r)).collect();
        value += scale * pair_loss_sum(&pairs_base, &pairs_new);
        let s = NewSums::of(&pairs_new);
        let (mut phi_sum, mut a1) = (0.0, 0.0);
        for &(phi, r) in &pairs_base {
            phi_sum += phi;
            a1 += phi * (1.0 - r);
        }

        let rows = fw.rows(k);
        let mut push_r = |acc: &mut ClassGrads, x: &[f64], r: f64, c: usize, d_r: f64| {
            let d_z = d_r * r * (1.0 - r);
            bias_grad[k] += d_z;
            acc.add(prompt, c, x, &rows[c], d_z);
        };
        for (&i, &(phi, r, c)) in bi.iter().zip(&base) {
            let a = 1.0 - r;
            let x = &train[i].x;
            push_r(&mut acc, x, r, c, scale * -2.0 * phi * (a * s.psi + s.r1));
            if gate_mode == GateMode::Sigmoid {
                let d_phi = scale * (a * a * s.psi + 2.0 * a * s.r1 + s.r2);
                let y = train[i].label;
                acc.add(cls, y, x, &fw.classifier[y], d_phi * phi * (1.0 - phi));
            }
        }
        for (&j, &(psi, r, c)) in ni.iter().zip(&new) {
            push_r(&mut acc, &train[j].x, r, c, scale * 2.0 * psi * (a1 + r * phi_sum));
        }
    }

    let mut grad = vec![0.0; model.n_params()];
    let sq = dim * dim;
    let t = model.zero_shot.temperature;
    let emb = &model.zero_shot.base_embeddings;
    for p in 0..cls {
        acc.accumulate_context(p, emb, t, &mut grad[p * sq..(p + 1) * sq]);
    }
    let b = model.bias_offset();
    grad[b..b + model.k()].copy_from_slice(&bias_grad);
    let c0 = model.classifier_offset();
    acc.accumulate_context(cls, emb, t, &mut grad[c0..c0 + sq]);
    Ok((value, grad))
}

/// Floor on the denominator of [`finite_difference_error`], so parameters
/// with near-zero gradient are compared in absolute terms.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-4;

/// Largest relative error between the analytic gradient and central
/// differences with step `1e-5`, over every parameter.
pub fn finite_difference_error(
    model: &ToyGmopModel,
    train: &[LabeledPoint],
    lambda: f64,
    gate_mode: GateMode,
) -> Result<f64> {
    let (_, analytic) = gradient(model, train, lambda, gate_mode)?;
    let base = model.params();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &g) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_params(&p)?;
        let up = objective(&probe, train, lambda, gate_mode)?;
        p[i] = base[i] - h;
        probe.set_params(&p)?;
        let down = objective(&probe, train, lambda, gate_mode)?;
        let numeric = (up - down) / (2.0 * h);
        let err = (g - numeric).abs() / g.abs().max(numeric.abs()).max(GRADIENT_CHECK_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmop::partition::make_partitions;
    use crate::gmop::task::{generate_task, TaskConfig};
    use proptest::prelude::*;

    fn small_task() -> SyntheticTask {
        generate_task(TaskConfig {
            c_base: 4,
            c_new: 3,
            dim: 3,
            samples_per_class: 6,
            spread: 0.4,
            text_noise: 0.5,
            seed: 3,
        })
        .unwrap()
    }

    fn random_model(task: &SyntheticTask, arch: Architecture, k: usize, seed: u64) -> ToyGmopModel {
        let parts = make_partitions(task.c_base(), k, seed).unwrap();
        let mut m = ToyGmopModel::init(task, parts, arch, 2.0, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let normal = Normal::new(0.0, 0.7).unwrap();
        let p: Vec<f64> = (0..m.n_params()).map(|_| normal.sample(&mut rng)).collect();
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn closed_form_matches_double_loop() {
        let base = [(0.9, 0.8), (0.2, 0.1), (0.0, 0.5)];
        let new = [(1.0, 0.3), (0.6, 0.95)];
        let direct: f64 = base
            .iter()
            .flat_map(|&(phi, rb)| new.iter().map(move |&(psi, rn)| pair_term(phi, rb, rn, psi)))
            .sum();
        assert!((pair_loss_sum(&base, &new) - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_gates_annihilate_pairs() {
        let base = [(0.0, 0.3), (0.0, 0.9)];
        let new = [(1.0, 0.7), (0.4, 0.2)];
        assert_eq!(pair_loss_sum(&base, &new), 0.0);
        let base = [(1.0, 0.3)];
        let new = [(0.0, 0.7)];
        assert_eq!(pair_loss_sum(&base, &new), 0.0);
    }

    #[test]
    fn value_from_gradient_matches_objective() {
        let task = small_task();
        for arch in [Architecture::Mixture, Architecture::SinglePrompt] {
            for gate in [GateMode::Sigmoid, GateMode::ZeroOne, GateMode::Off] {
                let m = random_model(&task, arch, 3, 9);
                let (v, _) = gradient(&m, &task.train, 0.7, gate).unwrap();
                let o = objective(&m, &task.train, 0.7, gate).unwrap();
                assert!((v - o).abs() < 1e-12, "{arch} {gate}: {v} vs {o}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let task = small_task();
        for arch in [Architecture::Mixture, Architecture::SinglePrompt] {
            for gate in [GateMode::Sigmoid, GateMode::Off] {
                for seed in 0..3 {
                    let m = random_model(&task, arch, 3, seed);
                    let err = finite_difference_error(&m, &task.train, 0.5, gate).unwrap();
                    assert!(err < 1e-5, "{arch} {gate} seed {seed}: {err}");
                }
            }
        }
    }

    #[test]
    fn objective_is_affine_in_lambda() {
        let task = small_task();
        let m = random_model(&task, Architecture::Mixture, 2, 4);
        let ce = cross_entropy(&m, &task.train).unwrap();
        let o1 = objective(&m, &task.train, 1.0, GateMode::Sigmoid).unwrap();
        let o3 = objective(&m, &task.train, 3.0, GateMode::Sigmoid).unwrap();
        assert!((o3 - o1 - 2.0 * ce).abs() < 1e-12);
    }

    #[test]
    fn zero_shot_scorer_gets_no_parameters() {
        let task = small_task();
        let m = random_model(&task, Architecture::Mixture, 2, 1);
        assert_eq!(m.n_params(), 3 * 9 + 2);
        let m = random_model(&task, Architecture::SinglePrompt, 2, 1);
        assert_eq!(m.n_params(), 9 + 2);
    }

    #[test]
    fn params_round_trip() {
        let task = small_task();
        let m = random_model(&task, Architecture::Mixture, 3, 2);
        let mut copy = ToyGmopModel::init(&task, m.partitions.clone(), Architecture::Mixture, 2.0, 77).unwrap();
        copy.set_params(&m.params()).unwrap();
        assert_eq!(copy, m);
        assert!(copy.set_params(&[1.0]).is_err());
    }

    #[test]
    fn prototype_scorer_ranks_by_distance() {
        let s = PrototypeScorer {
            base_embeddings: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            new_embeddings: vec![],
            temperature: 3.0,
        };
        let x = [0.9, 0.2];
        let l = s.subset_logits(&[0, 1], &x);
        assert!(l[0] > l[1]);
        // equal to the negative squared distance up to a term in x
        let d0 = (0.9f64 - 1.0).powi(2) + 0.2f64.powi(2);
        let d1 = 0.9f64.powi(2) + (0.2f64 - 1.0).powi(2);
        assert!(((l[0] - l[1]) - 3.0 * (d1 - d0)).abs() < 1e-12);
    }

    #[test]
    fn names_parse() {
        for g in [GateMode::Sigmoid, GateMode::ZeroOne, GateMode::Off] {
            assert_eq!(g.to_string().parse::<GateMode>().unwrap(), g);
        }
        for a in [Architecture::Mixture, Architecture::SinglePrompt] {
            assert_eq!(a.to_string().parse::<Architecture>().unwrap(), a);
        }
        assert!("soft".parse::<GateMode>().is_err());
    }

    proptest! {
        #[test]
        fn pair_loss_nonnegative(
            base in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..8),
            new in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..8),
        ) {
            prop_assert!(pair_loss_sum(&base, &new) >= 0.0);
        }
    }
}
