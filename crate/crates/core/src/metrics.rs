//! Evaluation metrics for the two-stage open-world pipeline.
//!
//! Every pairwise metric here is computed from integer pair counts, so the
//! literal O(N_b * N_n) loops and the sort-based paths agree bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::detection::{score_all, DetectorConfig};
use crate::error::{Error, Result};
use crate::evalset::{classify_all, Domain, EvalSet, PredictionOutcome};
use crate::numeric::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// A tied pair contributes 0.
    #[default]
    Strict,
    /// A tied pair contributes 1/2.
    Half,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub base_acc: f64,
    pub new_acc: f64,
    pub hm: f64,
    pub overall_acc: f64,
    pub auroc: f64,
    pub openworld_auc: f64,
    pub n_base: usize,
    pub n_new: usize,
}

impl MetricReport {
    pub const METRIC_NAMES: [&'static str; 6] = ["base_acc", "new_acc", "hm", "overall_acc", "auroc", "openworld_auc"];

    /// Metric values in `METRIC_NAMES` order.
    pub fn values(&self) -> [f64; 6] {
        [
            self.base_acc,
            self.new_acc,
            self.hm,
            self.overall_acc,
            self.auroc,
            self.openworld_auc,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::METRIC_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values()[i])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check_aligned(evalset: &EvalSet, len: usize, what: &'static str) -> Result<()> {
    if len != evalset.len() {
        return Err(Error::LengthMismatch {
            what,
            expected: evalset.len(),
            found: len,
        });
    }
    Ok(())
}

fn check_finite(scores: &[f64]) -> Result<()> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(i) => Err(Error::NonFiniteScore(i)),
        None => Ok(()),
    }
}

/// Fraction of `domain` samples whose domain-local argmax is correct.
pub fn domain_acc(evalset: &EvalSet, outcomes: &[PredictionOutcome], domain: Domain) -> Result<f64> {
    check_aligned(evalset, outcomes.len(), "outcomes")?;
    let (mut total, mut hits) = (0usize, 0usize);
    for (s, o) in evalset.samples().iter().zip(outcomes) {
        if s.domain == domain {
            total += 1;
            hits += o.correct as usize;
        }
    }
    if total == 0 {
        return Err(Error::EmptyDomain(domain));
    }
    Ok(hits as f64 / total as f64)
}

pub fn base_acc(evalset: &EvalSet, outcomes: &[PredictionOutcome]) -> Result<f64> {
    domain_acc(evalset, outcomes, Domain::Base)
}

pub fn new_acc(evalset: &EvalSet, outcomes: &[PredictionOutcome]) -> Result<f64> {
    domain_acc(evalset, outcomes, Domain::New)
}

/// Harmonic mean, defined as 0 when both inputs are 0.
pub fn hm(base_acc: f64, new_acc: f64) -> f64 {
    let denom = base_acc + new_acc;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * base_acc * new_acc / denom
    }
}

/// Accuracy of the argmax over the concatenated `base ++ new` logits. New
/// labels live at offset `c_base` in that space.
pub fn overall_acc(evalset: &EvalSet) -> Result<f64> {
    if evalset.is_empty() {
        return Err(Error::Empty("evalset"));
    }
    let c_base = evalset.c_base();
    let mut joint = Vec::with_capacity(c_base + evalset.c_new());
    let hits = evalset
        .samples()
        .iter()
        .filter(|s| {
            joint.clear();
            joint.extend_from_slice(&s.base_logits);
            joint.extend_from_slice(&s.new_logits);
            let target = match s.domain {
                Domain::Base => s.label,
                Domain::New => c_base + s.label,
            };
            argmax(&joint) == target
        })
        .count();
    Ok(hits as f64 / evalset.len() as f64)
}

fn check_auroc_inputs(base: &[f64], new: &[f64]) -> Result<()> {
    if base.is_empty() {
        return Err(Error::Empty("base scores"));
    }
    if new.is_empty() {
        return Err(Error::Empty("new scores"));
    }
    check_finite(base)?;
    check_finite(new)
}

fn doubled_to_rate(doubled: u128, n_base: usize, n_new: usize) -> f64 {
    doubled as f64 / (2 * n_base as u128 * n_new as u128) as f64
}

/// `P[r_b > r_n]` over all base/new pairs by sorting the new scores and
/// ranking each base score against them. O((N_b + N_n) log N_n).
pub fn auroc(base: &[f64], new: &[f64], tie: TiePolicy) -> Result<f64> {
    check_auroc_inputs(base, new)?;
    let mut sorted = new.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut doubled: u128 = 0;
    for &b in base {
        let below = sorted.partition_point(|&n| n < b);
        doubled += 2 * below as u128;
        if tie == TiePolicy::Half {
            let at_or_below = sorted.partition_point(|&n| n <= b);
            doubled += (at_or_below - below) as u128;
        }
    }
    Ok(doubled_to_rate(doubled, base.len(), new.len()))
}

/// Literal double loop over every pair. Reference implementation for [`auroc`].
pub fn auroc_pairwise(base: &[f64], new: &[f64], tie: TiePolicy) -> Result<f64> {
    check_auroc_inputs(base, new)?;
    let mut doubled: u128 = 0;
    for &b in base {
        for &n in new {
            if b > n {
                doubled += 2;
            } else if b == n && tie == TiePolicy::Half {
                doubled += 1;
            }
        }
    }
    Ok(doubled_to_rate(doubled, base.len(), new.len()))
}

/// Splits aligned per-sample scores into (base, new) lists.
pub fn split_scores(evalset: &EvalSet, scores: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_aligned(evalset, scores.len(), "scores")?;
    let mut base = Vec::new();
    let mut new = Vec::new();
    for (s, &r) in evalset.samples().iter().zip(scores) {
        match s.domain {
            Domain::Base => base.push(r),
            Domain::New => new.push(r),
        }
    }
    Ok((base, new))
}

/// Per-domain `(score, correct)` pairs after validating alignment.
struct Scored {
    base: Vec<(f64, bool)>,
    new: Vec<(f64, bool)>,
}

impl Scored {
    fn collect(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome]) -> Result<Self> {
        check_aligned(evalset, scores.len(), "scores")?;
        check_aligned(evalset, outcomes.len(), "outcomes")?;
        check_finite(scores)?;
        let mut base = Vec::new();
        let mut new = Vec::new();
        for ((s, &r), o) in evalset.samples().iter().zip(scores).zip(outcomes) {
            match s.domain {
                Domain::Base => base.push((r, o.correct)),
                Domain::New => new.push((r, o.correct)),
            }
        }
        if base.is_empty() {
            return Err(Error::EmptyDomain(Domain::Base));
        }
        if new.is_empty() {
            return Err(Error::EmptyDomain(Domain::New));
        }
        Ok(Self { base, new })
    }

    fn correct_sorted(side: &[(f64, bool)]) -> Vec<f64> {
        let mut v: Vec<f64> = side.iter().filter(|(_, c)| *c).map(|(r, _)| *r).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Mean over all base/new pairs of `1[g correct] * 1[r_b > r_n] * 1[h correct]`.
pub fn openworld_auc_pairwise(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome]) -> Result<f64> {
    let d = Scored::collect(evalset, scores, outcomes)?;
    let mut hits: u128 = 0;
    for &(rb, gb) in &d.base {
        if !gb {
            continue;
        }
        for &(rn, hn) in &d.new {
            if hn && rb > rn {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / (d.base.len() as u128 * d.new.len() as u128) as f64)
}

/// Masking offset used when the caller does not pick one: 1e-6 of the score range.
pub fn default_epsilon(scores: &[f64]) -> f64 {
    let (lo, hi) = scores.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| {
        (lo.min(s), hi.max(s))
    });
    let range = hi - lo;
    if range.is_finite() && range > 0.0 {
        1e-6 * range
    } else {
        1e-6
    }
}

/// Masks misclassified samples, then takes a strict AUROC.
///
/// A misclassified new sample is pushed above every base score
/// (`max_base + epsilon`) and a misclassified base sample below every new
/// score (`min(min_new, max_base) - epsilon`). Both reference values come from
/// the unmasked scores. The extra `min` with `max_base` keeps a masked base
/// score below a masked new score when every new score already exceeds every
/// base score.
pub fn openworld_auc_efficient(
    evalset: &EvalSet,
    scores: &[f64],
    outcomes: &[PredictionOutcome],
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let d = Scored::collect(evalset, scores, outcomes)?;
    let max_base = d.base.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let min_new = d.new.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let new_mask = max_base + epsilon;
    let base_mask = min_new.min(max_base) - epsilon;

    let base: Vec<f64> = d.base.iter().map(|&(r, ok)| if ok { r } else { base_mask }).collect();
    let new: Vec<f64> = d.new.iter().map(|&(r, ok)| if ok { r } else { new_mask }).collect();
    auroc(&base, &new, TiePolicy::Strict)
}

/// `(MissRate_b(t), HitRate_n(t))`.
///
/// A base sample is missed when `r <= t` or when it is misclassified; a new
/// sample is hit when `r <= t` and it is correctly classified.
pub fn miss_hit_at(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome], t: f64) -> Result<(f64, f64)> {
    let d = Scored::collect(evalset, scores, outcomes)?;
    let missed = d.base.iter().filter(|&&(r, ok)| !ok || r <= t).count();
    let hit = d.new.iter().filter(|&&(r, ok)| ok && r <= t).count();
    Ok((missed as f64 / d.base.len() as f64, hit as f64 / d.new.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub miss_rate_b: f64,
    pub hit_rate_n: f64,
}

/// MissRate_b versus HitRate_n, swept over thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub area: f64,
}

/// Evaluates the curve at every distinct score plus one sentinel below the
/// smallest score and one above the largest.
///
/// The area is the step sum of `HitRate_n(t_i) * (MissRate_b(t_i) - MissRate_b(t_{i-1}))`.
pub fn curve(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome]) -> Result<Curve> {
    let d = Scored::collect(evalset, scores, outcomes)?;
    let (n_base, n_new) = (d.base.len(), d.new.len());
    let wrong_base = d.base.iter().filter(|p| !p.1).count();
    let correct_base = Scored::correct_sorted(&d.base);
    let correct_new = Scored::correct_sorted(&d.new);

    let mut thresholds = scores.to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let lo = thresholds[0] - 1.0;
    let hi = thresholds[thresholds.len() - 1] + 1.0;
    thresholds.insert(0, lo);
    thresholds.push(hi);

    let mut points = Vec::with_capacity(thresholds.len());
    let mut area_count: u128 = 0;
    let mut prev_base = 0usize;
    for (i, &t) in thresholds.iter().enumerate() {
        let base_below = correct_base.partition_point(|&r| r <= t);
        let new_below = correct_new.partition_point(|&r| r <= t);
        if i > 0 {
            area_count += (base_below - prev_base) as u128 * new_below as u128;
        }
        prev_base = base_below;
        points.push(CurvePoint {
            threshold: t,
            miss_rate_b: (wrong_base + base_below) as f64 / n_base as f64,
            hit_rate_n: new_below as f64 / n_new as f64,
        });
    }
    let area = area_count as f64 / (n_base as u128 * n_new as u128) as f64;
    Ok(Curve { points, area })
}

impl Curve {
    /// CSV with header `threshold,miss_rate_b,hit_rate_n`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    /// Reads points back; `area` is recomputed from the step sum.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let points = r.deserialize().collect::<std::result::Result<Vec<CurvePoint>, _>>()?;
        let area = points
            .windows(2)
            .map(|w| (w[1].miss_rate_b - w[0].miss_rate_b) * w[1].hit_rate_n)
            .sum();
        Ok(Curve { points, area })
    }
}

/// All metrics from precomputed scores and outcomes.
pub fn report_from_scores(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome]) -> Result<MetricReport> {
    evalset.require_both_domains()?;
    let base_acc = base_acc(evalset, outcomes)?;
    let new_acc = new_acc(evalset, outcomes)?;
    let (base_scores, new_scores) = split_scores(evalset, scores)?;
    Ok(MetricReport {
        base_acc,
        new_acc,
        hm: hm(base_acc, new_acc),
        overall_acc: overall_acc(evalset)?,
        auroc: auroc(&base_scores, &new_scores, TiePolicy::Strict)?,
        openworld_auc: openworld_auc_efficient(evalset, scores, outcomes, default_epsilon(scores))?,
        n_base: base_scores.len(),
        n_new: new_scores.len(),
    })
}

pub fn report(evalset: &EvalSet, config: DetectorConfig) -> Result<MetricReport> {
    let scores = score_all(evalset, config)?;
    let outcomes = classify_all(evalset);
    report_from_scores(evalset, &scores, &outcomes)
}
