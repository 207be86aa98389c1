use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::model::{Architecture, GateMode};
use super::task::{generate_task, TaskConfig};
use super::train::{evaluate, train, TrainConfig};
use crate::error::{Error, Result};
use crate::numeric::{mean, sample_variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationAxis {
    K,
    Lambda,
    Gate,
    SinglePrompt,
}

impl AblationAxis {
    pub fn default_grid(self) -> Vec<AblationValue> {
        match self {
            Self::K => [1, 2, 3].map(AblationValue::K).to_vec(),
            Self::Lambda => [0.0, 0.1, 1.0, 10.0].map(AblationValue::Lambda).to_vec(),
            Self::Gate => [GateMode::Sigmoid, GateMode::ZeroOne, GateMode::Off]
                .map(AblationValue::Gate)
                .to_vec(),
            Self::SinglePrompt => [Architecture::Mixture, Architecture::SinglePrompt]
                .map(AblationValue::Architecture)
                .to_vec(),
        }
    }
}

impl FromStr for AblationAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Self::K),
            "lambda" => Ok(Self::Lambda),
            "gate" => Ok(Self::Gate),
            "single-prompt" => Ok(Self::SinglePrompt),
            _ => Err(Error::InvalidArgument(format!(
                "unknown ablation axis '{s}' (expected k, lambda, gate or single-prompt)"
            ))),
        }
    }
}

impl fmt::Display for AblationAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::K => "k",
            Self::Lambda => "lambda",
            Self::Gate => "gate",
            Self::SinglePrompt => "single-prompt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AblationValue {
    K(usize),
    Lambda(f64),
    Gate(GateMode),
    Architecture(Architecture),
}

impl AblationValue {
    pub fn apply(self, config: TrainConfig) -> TrainConfig {
        match self {
            Self::K(k) => TrainConfig { k, ..config },
            Self::Lambda(lambda) => TrainConfig { lambda, ..config },
            Self::Gate(gate) => TrainConfig { gate, ..config },
            Self::Architecture(architecture) => TrainConfig { architecture, ..config },
        }
    }
}

impl fmt::Display for AblationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::K(k) => write!(f, "{k}"),
            Self::Lambda(l) => write!(f, "{l}"),
            Self::Gate(g) => write!(f, "{g}"),
            Self::Architecture(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub value: String,
    /// OpenworldAUC per seed, in seed order.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std_err: f64,
}

impl AblationRow {
    fn from_values(value: String, per_seed: Vec<f64>) -> Self {
        let m = mean(&per_seed);
        let se = if per_seed.len() > 1 {
            (sample_variance(&per_seed) / per_seed.len() as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value,
            per_seed,
            mean: m,
            std_err: se,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub axis: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, value: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.value == value)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(out, "# axis={} seeds={}", self.axis, seeds.join(";")).map_err(csv::Error::from)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["value", "mean_openworld_auc", "std_err", "per_seed"])?;
        for r in &self.rows {
            let per: Vec<String> = r.per_seed.iter().map(f64::to_string).collect();
            w.write_record([
                r.value.clone(),
                r.mean.to_string(),
                r.std_err.to_string(),
                per.join(";"),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut first = String::new();
        input.read_line(&mut first).map_err(csv::Error::from)?;
        let meta = first
            .trim()
            .strip_prefix("# ")
            .ok_or_else(|| Error::Malformed("ablation table lacks its '# axis=' line".into()))?;
        let mut axis = None;
        let mut seeds = None;
        for part in meta.split_whitespace() {
            if let Some(a) = part.strip_prefix("axis=") {
                axis = Some(a.to_string());
            } else if let Some(s) = part.strip_prefix("seeds=") {
                seeds = Some(
                    s.split(';')
                        .filter(|t| !t.is_empty())
                        .map(|t| {
                            t.parse::<u64>()
                                .map_err(|e| Error::Malformed(format!("seed '{t}': {e}")))
                        })
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        let (axis, seeds) = axis
            .zip(seeds)
            .ok_or_else(|| Error::Malformed("ablation header needs axis= and seeds=".into()))?;
        let mut rows = Vec::new();
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Malformed(format!("number '{s}': {e}")))
        };
        for rec in csv::Reader::from_reader(input).records() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Malformed(format!(
                    "ablation row has {} fields, expected 4",
                    rec.len()
                )));
            }
            let per_seed = rec[3]
                .split(';')
                .filter(|t| !t.is_empty())
                .map(num)
                .collect::<Result<Vec<_>>>()?;
            rows.push(AblationRow {
                value: rec[0].to_string(),
                per_seed,
                mean: num(&rec[1])?,
                std_err: num(&rec[2])?,
            });
        }
        Ok(Self { axis, seeds, rows })
    }
}

/// Trains every grid value on every seed and averages test OpenworldAUC.
/// Each seed draws its own task and is shared across grid values.
pub fn ablate(
    task: TaskConfig,
    base: TrainConfig,
    axis: AblationAxis,
    grid: &[AblationValue],
    seeds: &[u64],
) -> Result<AblationTable> {
    if grid.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("ablation grid or seed list"));
    }
    let tasks = seeds
        .iter()
        .map(|&s| generate_task(task.with_seed(s)))
        .collect::<Result<Vec<_>>>()?;
    let rows = grid
        .iter()
        .map(|v| {
            let per_seed = seeds
                .iter()
                .zip(&tasks)
                .map(|(&seed, t)| {
                    let cfg = v.apply(TrainConfig { seed, ..base });
                    let (model, _) = train(t, &cfg)?;
                    Ok(evaluate(&model, t)?.openworld_auc)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(AblationRow::from_values(v.to_string(), per_seed))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationTable {
        axis: axis.to_string(),
        seeds: seeds.to_vec(),
        rows,
    })
}
