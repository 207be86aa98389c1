use serde::{Deserialize, Serialize};

use super::model::{gradient, Architecture, GateMode, ToyGmopModel};
use super::partition::make_partitions;
use super::task::{generate_task, SyntheticTask, TaskConfig};
use crate::detection::DetectorConfig;
use crate::error::{Error, Result};
use crate::evalset::{ClassCounts, EvalSet, Sample};
use crate::metrics::{report, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of pseudo partitions, one sub-detector each.
    pub k: usize,
    /// Weight of the classification loss.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub gate: GateMode,
    pub architecture: Architecture,
    /// Temperature of the frozen zero-shot scorer.
    pub temperature: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 3,
            lambda: 1.0,
            learning_rate: 0.5,
            epochs: 200,
            seed: 1,
            gate: GateMode::Sigmoid,
            architecture: Architecture::Mixture,
            temperature: 4.0,
        }
    }
}

/// Objective value before every update plus the final one, so a run of
/// `epochs` steps yields `epochs + 1` entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub config: TrainConfig,
    pub objectives: Vec<f64>,
    /// Index into `objectives` of the returned parameters.
    pub best_epoch: usize,
}

impl TrainTrace {
    pub fn best_objective(&self) -> f64 {
        self.objectives[self.best_epoch]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One training run on a generated task with test metrics before and after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub task: TaskConfig,
    pub trace: TrainTrace,
    pub untrained: MetricReport,
    pub trained: MetricReport,
}

impl TrainRun {
    pub fn execute(task: TaskConfig, config: &TrainConfig) -> Result<Self> {
        let t = generate_task(task)?;
        let untrained = evaluate(&untrained_model(&t, config)?, &t)?;
        let (model, trace) = train(&t, config)?;
        Ok(Self {
            task,
            trace,
            untrained,
            trained: evaluate(&model, &t)?,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Freshly initialised model with the partitions `train` would use.
pub fn untrained_model(task: &SyntheticTask, config: &TrainConfig) -> Result<ToyGmopModel> {
    if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be nonnegative, got {}",
            config.lambda
        )));
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be nonnegative, got {}",
            config.learning_rate
        )));
    }
    let parts = make_partitions(task.c_base(), config.k, config.seed)?;
    ToyGmopModel::init(task, parts, config.architecture, config.temperature, config.seed)
}

/// Full-batch gradient descent. Returns the iterate with the lowest
/// training objective.
pub fn train(task: &SyntheticTask, config: &TrainConfig) -> Result<(ToyGmopModel, TrainTrace)> {
    let mut model = untrained_model(task, config)?;
    let mut params = model.params();
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut objectives = Vec::with_capacity(config.epochs + 1);

    for epoch in 0..=config.epochs {
        model.set_params(&params)?;
        let (value, grad) = gradient(&model, &task.train, config.lambda, config.gate)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged(epoch));
        }
        objectives.push(value);
        if value < best.0 {
            best = (value, params.clone(), epoch);
        }
        if epoch < config.epochs {
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= config.learning_rate * g;
            }
        }
    }
    model.set_params(&best.1)?;
    let trace = TrainTrace {
        config: *config,
        objectives,
        best_epoch: best.2,
    };
    Ok((model, trace))
}

/// Test split as an evaluation set: classifier logits for the base head,
/// zero-shot logits for the new head and the ensemble detector score.
pub fn test_evalset(model: &ToyGmopModel, task: &SyntheticTask) -> Result<EvalSet> {
    let fw = model.forward();
    let samples = task
        .test
        .iter()
        .enumerate()
        .map(|(i, p)| Sample {
            id: format!("t{i}"),
            domain: p.domain,
            label: p.label,
            base_logits: fw.base_logits(&p.x),
            new_logits: model.zero_shot.new_logits(&p.x),
            detector_score: Some(fw.detector_score(&p.x)),
        })
        .collect();
    EvalSet::new(samples, ClassCounts::new(task.c_base(), task.c_new()))
}

pub fn evaluate(model: &ToyGmopModel, task: &SyntheticTask) -> Result<MetricReport> {
    report(&test_evalset(model, task)?, DetectorConfig::provided())
}
