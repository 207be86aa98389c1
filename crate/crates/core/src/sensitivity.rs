//! Metric sensitivity to the new/base sample ratio.
//!
//! Two harnesses change the domain mix of a fixed model's predictions:
//! [`sweep`] subsamples one side (the shrinking side is drawn uniformly
//! without replacement), and [`duplication_sweep`] replicates whole domains an
//! integer number of times. Under duplication every pairwise or per-domain
//! metric is unchanged bit for bit, while OverallAcc moves with the mix.

use std::io::{Read, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::detection::DetectorConfig;
use crate::error::{Error, Result};
use crate::evalset::{ClassCounts, Domain, EvalSet, Sample};
use crate::metrics::{report, MetricReport};
use crate::numeric::{mean, sample_variance};

/// New/base ratios 10, 5, 3, 2, 1, 0.7, 0.5, 0.3, 0.2, 0.1.
pub const DEFAULT_RATIOS: [f64; 10] = [10.0, 5.0, 3.0, 2.0, 1.0, 0.7, 0.5, 0.3, 0.2, 0.1];

pub const DEFAULT_SEEDS_PER_RATIO: usize = 5;

/// `(base_copies, new_copies)` realizing [`DEFAULT_RATIOS`] on a balanced set.
pub const DEFAULT_DUPLICATION_GRID: [(usize, usize); 10] = [
    (1, 10),
    (1, 5),
    (1, 3),
    (1, 2),
    (1, 1),
    (10, 7),
    (2, 1),
    (10, 3),
    (5, 1),
    (10, 1),
];

/// Columns in table order.
pub const SWEEP_COLUMNS: [&str; 6] = ["base_acc", "new_acc", "hm", "auroc", "overall_acc", "openworld_auc"];

/// One value per metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub base_acc: f64,
    pub new_acc: f64,
    pub hm: f64,
    pub auroc: f64,
    pub overall_acc: f64,
    pub openworld_auc: f64,
}

impl MetricValues {
    fn from_columns(c: [f64; 6]) -> Self {
        Self {
            base_acc: c[0],
            new_acc: c[1],
            hm: c[2],
            auroc: c[3],
            overall_acc: c[4],
            openworld_auc: c[5],
        }
    }

    /// Values in [`SWEEP_COLUMNS`] order.
    pub fn columns(&self) -> [f64; 6] {
        [
            self.base_acc,
            self.new_acc,
            self.hm,
            self.auroc,
            self.overall_acc,
            self.openworld_auc,
        ]
    }

    pub fn of(report: &MetricReport) -> Self {
        Self {
            base_acc: report.base_acc,
            new_acc: report.new_acc,
            hm: report.hm,
            auroc: report.auroc,
            overall_acc: report.overall_acc,
            openworld_auc: report.openworld_auc,
        }
    }

    fn per_column(rows: &[MetricValues], f: impl Fn(&[f64]) -> f64) -> Self {
        let mut out = [0.0; 6];
        for (i, slot) in out.iter_mut().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| r.columns()[i]).collect();
            *slot = f(&col);
        }
        Self::from_columns(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioSweepResult {
    pub ratios: Vec<f64>,
    /// Seed-averaged metrics, one entry per ratio.
    pub per_ratio: Vec<MetricValues>,
    /// Sample sizes realized at each ratio.
    pub sizes: Vec<(usize, usize)>,
    pub mean: MetricValues,
    /// Unbiased cross-ratio variance.
    pub variance: MetricValues,
    pub seed: u64,
}

impl RatioSweepResult {
    fn assemble(ratios: Vec<f64>, per_ratio: Vec<MetricValues>, sizes: Vec<(usize, usize)>, seed: u64) -> Self {
        let mean = MetricValues::per_column(&per_ratio, mean);
        let variance = MetricValues::per_column(&per_ratio, sample_variance);
        Self {
            ratios,
            per_ratio,
            sizes,
            mean,
            variance,
            seed,
        }
    }

    /// One row per ratio followed by `mean` and `variance` rows.
    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "# seed={}", self.seed).map_err(|e| Error::Csv(e.into()))?;
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["ratio"];
        header.extend(SWEEP_COLUMNS);
        header.extend(["n_base", "n_new"]);
        w.write_record(&header)?;
        for ((ratio, row), (nb, nn)) in self.ratios.iter().zip(&self.per_ratio).zip(&self.sizes) {
            let mut rec = vec![ratio.to_string()];
            rec.extend(row.columns().iter().map(f64::to_string));
            rec.extend([nb.to_string(), nn.to_string()]);
            w.write_record(&rec)?;
        }
        for (label, row) in [("mean", &self.mean), ("variance", &self.variance)] {
            let mut rec = vec![label.to_string()];
            rec.extend(row.columns().iter().map(f64::to_string));
            rec.extend([String::new(), String::new()]);
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(mut reader: R) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text).map_err(|e| Error::Csv(e.into()))?;
        let seed = text
            .lines()
            .find_map(|l| l.strip_prefix("# seed="))
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Malformed("sweep CSV lacks a '# seed=' header".into()))?;
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let parse =
            |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Malformed(format!("not a number: {s:?}"))) };
        let mut ratios = Vec::new();
        let mut per_ratio = Vec::new();
        let mut sizes = Vec::new();
        let mut mean = None;
        let mut variance = None;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 9 {
                return Err(Error::Malformed(format!(
                    "sweep row has {} fields, expected 9",
                    rec.len()
                )));
            }
            let mut cols = [0.0; 6];
            for (i, c) in cols.iter_mut().enumerate() {
                *c = parse(&rec[i + 1])?;
            }
            let values = MetricValues::from_columns(cols);
            match &rec[0] {
                "mean" => mean = Some(values),
                "variance" => variance = Some(values),
                ratio => {
                    ratios.push(parse(ratio)?);
                    per_ratio.push(values);
                    let size = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| Error::Malformed(format!("not a count: {s:?}")))
                    };
                    sizes.push((size(&rec[7])?, size(&rec[8])?));
                }
            }
        }
        Ok(Self {
            ratios,
            per_ratio,
            sizes,
            mean: mean.ok_or_else(|| Error::Malformed("missing mean row".into()))?,
            variance: variance.ok_or_else(|| Error::Malformed("missing variance row".into()))?,
            seed,
        })
    }
}

/// Subsamples one domain so that `N_new / N_base` approaches `ratio`.
///
/// For `ratio > 1` every new sample is kept and `round(N_new / ratio)` base
/// samples are drawn; otherwise every base sample is kept and
/// `round(N_base * ratio)` new samples are drawn. The target is capped at
/// the available count. Kept samples retain their original order.
pub fn resample_ratio(evalset: &EvalSet, ratio: f64, seed: u64) -> Result<EvalSet> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("ratio must be positive, got {ratio}")));
    }
    let (n_base, n_new) = (evalset.n_base(), evalset.n_new());
    let (shrink, target) = if ratio > 1.0 {
        (Domain::Base, (n_new as f64 / ratio).round() as usize)
    } else {
        (Domain::New, (n_base as f64 * ratio).round() as usize)
    };
    let available = evalset.n_domain(shrink);
    let target = target.min(available);
    if target == 0 || evalset.n_domain(other(shrink)) == 0 {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} leaves no {} samples (have {n_base} base, {n_new} new)",
            if target == 0 { shrink } else { other(shrink) }
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; available];
    for i in index::sample(&mut rng, available, target) {
        keep[i] = true;
    }
    let mut k = 0;
    let samples = evalset
        .samples()
        .iter()
        .filter(|s| {
            if s.domain != shrink {
                return true;
            }
            k += 1;
            keep[k - 1]
        })
        .cloned()
        .collect();
    EvalSet::new(samples, evalset.counts())
}

fn other(d: Domain) -> Domain {
    match d {
        Domain::Base => Domain::New,
        Domain::New => Domain::Base,
    }
}

/// Seed used for cell `(ratio_index, replicate)`.
fn cell_seed(seed: u64, ratio_index: usize, replicate: usize) -> u64 {
    seed.wrapping_mul(1_000_003)
        .wrapping_add(ratio_index as u64 * 1_009)
        .wrapping_add(replicate as u64)
}

/// Subsampling sweep: metrics are averaged over `seeds_per_ratio` draws at
/// each ratio, then summarized across ratios.
pub fn sweep(
    evalset: &EvalSet,
    ratios: &[f64],
    seeds_per_ratio: usize,
    seed: u64,
    config: DetectorConfig,
) -> Result<RatioSweepResult> {
    if ratios.is_empty() {
        return Err(Error::Empty("ratio grid"));
    }
    if seeds_per_ratio == 0 {
        return Err(Error::InvalidArgument("seeds_per_ratio must be at least 1".into()));
    }
    let mut per_ratio = Vec::with_capacity(ratios.len());
    let mut sizes = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let mut rows = Vec::with_capacity(seeds_per_ratio);
        let mut size = (0, 0);
        for s in 0..seeds_per_ratio {
            let sub = resample_ratio(evalset, ratio, cell_seed(seed, i, s))?;
            size = (sub.n_base(), sub.n_new());
            rows.push(MetricValues::of(&report(&sub, config)?));
        }
        per_ratio.push(MetricValues::per_column(&rows, mean));
        sizes.push(size);
    }
    Ok(RatioSweepResult::assemble(ratios.to_vec(), per_ratio, sizes, seed))
}

/// Replicates every base sample `base_copies` times and every new sample
/// `new_copies` times. Copies after the first get a `#k` id suffix.
pub fn duplicate(evalset: &EvalSet, base_copies: usize, new_copies: usize) -> Result<EvalSet> {
    if base_copies == 0 || new_copies == 0 {
        return Err(Error::InvalidArgument("copy counts must be at least 1".into()));
    }
    let mut samples = Vec::new();
    for s in evalset.samples() {
        let copies = match s.domain {
            Domain::Base => base_copies,
            Domain::New => new_copies,
        };
        for k in 0..copies {
            let mut c = s.clone();
            if k > 0 {
                c.id = format!("{}#{k}", s.id);
            }
            samples.push(c);
        }
    }
    EvalSet::new(samples, evalset.counts())
}

/// Exact-duplication sweep over `(base_copies, new_copies)` pairs.
pub fn duplication_sweep(
    evalset: &EvalSet,
    grid: &[(usize, usize)],
    config: DetectorConfig,
) -> Result<RatioSweepResult> {
    if grid.is_empty() {
        return Err(Error::Empty("duplication grid"));
    }
    evalset.require_both_domains()?;
    let mut ratios = Vec::with_capacity(grid.len());
    let mut per_ratio = Vec::with_capacity(grid.len());
    let mut sizes = Vec::with_capacity(grid.len());
    for &(b, n) in grid {
        let dup = duplicate(evalset, b, n)?;
        ratios.push(dup.n_new() as f64 / dup.n_base() as f64);
        sizes.push((dup.n_base(), dup.n_new()));
        per_ratio.push(MetricValues::of(&report(&dup, config)?));
    }
    Ok(RatioSweepResult::assemble(ratios, per_ratio, sizes, 0))
}

/// Parameters of the synthetic fixed-model fixture.
#[derive(Debug, Clone, Copy)]
pub struct FixtureConfig {
    pub n_base: usize,
    pub n_new: usize,
    pub classes: ClassCounts,
    /// Boost of the true-class logit for base samples (about 0.8 accuracy over 5 classes).
    pub base_boost: f64,
    /// Boost for new samples (about 0.55 accuracy over 5 classes).
    pub new_boost: f64,
    /// Mean offset of the wrong-domain logit block.
    pub domain_gap: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            n_base: 1000,
            n_new: 1000,
            classes: ClassCounts::new(5, 5),
            base_boost: 2.05,
            new_boost: 1.2,
            domain_gap: 1.0,
        }
    }
}

/// Predictions of a fixed model drawn from Gaussian logit clouds: every
/// logit is `N(0, 1)`, the true class gets `+boost` and the other domain's
/// block is shifted by `-domain_gap`.
pub fn synthetic_fixture(config: &FixtureConfig, seed: u64) -> Result<EvalSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let ClassCounts { c_base, c_new } = config.classes;
    let draw = |n: usize, shift: f64, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n).map(|_| noise.sample(rng) + shift).collect()
    };
    let mut samples = Vec::with_capacity(config.n_base + config.n_new);
    for i in 0..config.n_base {
        let label = i % c_base;
        let mut base_logits = draw(c_base, 0.0, &mut rng);
        base_logits[label] += config.base_boost;
        let new_logits = draw(c_new, -config.domain_gap, &mut rng);
        samples.push(Sample {
            id: format!("b{i}"),
            domain: Domain::Base,
            label,
            base_logits,
            new_logits,
            detector_score: None,
        });
    }
    for i in 0..config.n_new {
        let label = i % c_new;
        let base_logits = draw(c_base, -config.domain_gap, &mut rng);
        let mut new_logits = draw(c_new, 0.0, &mut rng);
        new_logits[label] += config.new_boost;
        samples.push(Sample {
            id: format!("n{i}"),
            domain: Domain::New,
            label,
            base_logits,
            new_logits,
            detector_score: None,
        });
    }
    EvalSet::new(samples, config.classes)
}
