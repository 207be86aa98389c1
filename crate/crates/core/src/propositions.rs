//! Constructive witnesses for why HM and linear aggregates of
//! (BaseAcc, NewAcc, AUROC) are inconsistent with two-stage performance, and
//! checks of the identities OpenworldAUC rests on.
//!
//! Each builder embeds a small hand-made perturbation in a background of
//! unambiguous samples: 8 base and 8 new, all correctly classified, base
//! scores near 1 and new scores near 0.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::detection::{score_all, DetectorConfig, DetectorMode};
use crate::error::Result;
use crate::evalset::{classify_all, ClassCounts, Domain, EvalSet, PredictionOutcome, Sample};
use crate::fixtures::{domain_logits, random_scored_set, RandomSetConfig};
use crate::metrics::{base_acc, new_acc, openworld_auc_pairwise, report_from_scores, MetricReport};

/// Tolerance for "equal" metrics and for the lower-bound slack.
pub const EQUAL_TOL: f64 = 1e-12;

const BACKGROUND: usize = 8;
const CLASSES: ClassCounts = ClassCounts { c_base: 3, c_new: 3 };

/// An evaluation set with detector scores and classifier outcomes attached.
#[derive(Debug, Clone)]
pub struct ScoredSystem {
    pub evalset: EvalSet,
    pub scores: Vec<f64>,
    pub outcomes: Vec<PredictionOutcome>,
}

impl ScoredSystem {
    pub fn from_detector(evalset: EvalSet, config: DetectorConfig) -> Result<Self> {
        let scores = score_all(&evalset, config)?;
        let outcomes = classify_all(&evalset);
        Ok(Self {
            evalset,
            scores,
            outcomes,
        })
    }

    pub fn report(&self) -> Result<MetricReport> {
        report_from_scores(&self.evalset, &self.scores, &self.outcomes)
    }
}

/// Two systems that a family of metrics cannot tell apart although the
/// perturbed one is strictly worse in the two-stage pipeline.
#[derive(Debug, Clone)]
pub struct CounterexamplePair {
    pub original: ScoredSystem,
    pub perturbed: ScoredSystem,
    /// Metrics that must agree to within [`EQUAL_TOL`].
    pub equal_metrics: Vec<&'static str>,
    /// Metrics that must be strictly lower for the perturbed system; the first is the headline one.
    pub separating_metrics: Vec<&'static str>,
    /// Lower bound on the headline gap (0 means merely positive).
    pub min_gap: f64,
}

#[derive(Debug, Clone)]
pub struct PairVerdict {
    pub passed: bool,
    /// Headline gap, original minus perturbed.
    pub gap: f64,
    pub failures: Vec<String>,
}

impl CounterexamplePair {
    pub fn separating_metric(&self) -> &'static str {
        self.separating_metrics[0]
    }

    /// `metric(original) - metric(perturbed)`.
    pub fn gap_of(&self, metric: &str) -> Result<f64> {
        let (a, b) = (self.original.report()?, self.perturbed.report()?);
        Ok(a.get(metric).expect("known metric") - b.get(metric).expect("known metric"))
    }

    pub fn gap(&self) -> Result<f64> {
        self.gap_of(self.separating_metric())
    }

    pub fn verify(&self) -> Result<PairVerdict> {
        let (a, b) = (self.original.report()?, self.perturbed.report()?);
        let mut failures = Vec::new();
        for &m in &self.equal_metrics {
            let (x, y) = (a.get(m).expect("known metric"), b.get(m).expect("known metric"));
            if (x - y).abs() > EQUAL_TOL {
                failures.push(format!("{m}: {x} vs {y} should be equal"));
            }
        }
        for &m in &self.separating_metrics {
            let (x, y) = (a.get(m).expect("known metric"), b.get(m).expect("known metric"));
            if x.partial_cmp(&y) != Some(std::cmp::Ordering::Greater) {
                failures.push(format!("{m}: perturbed {y} not below original {x}"));
            }
        }
        let head = self.separating_metric();
        let gap = a.get(head).expect("known metric") - b.get(head).expect("known metric");
        if self.min_gap > 0.0 && gap < self.min_gap - EQUAL_TOL {
            failures.push(format!("{head}: gap {gap} below required {}", self.min_gap));
        }
        Ok(PairVerdict {
            passed: failures.is_empty(),
            gap,
            failures,
        })
    }
}

fn base_background<R: Rng>(rng: &mut R) -> Vec<Sample> {
    (0..BACKGROUND)
        .map(|i| {
            let label = i % CLASSES.c_base;
            let mut base_logits = domain_logits(rng, CLASSES.c_base, label, true);
            base_logits[label] = rng.gen_range(3.0..4.0);
            Sample {
                id: format!("bg-b{i}"),
                domain: Domain::Base,
                label,
                base_logits,
                new_logits: (0..CLASSES.c_new).map(|_| rng.gen_range(-3.0..-2.0)).collect(),
                detector_score: Some(rng.gen_range(0.8..1.0)),
            }
        })
        .collect()
}

fn new_background<R: Rng>(rng: &mut R) -> Vec<Sample> {
    (0..BACKGROUND)
        .map(|i| {
            let label = i % CLASSES.c_new;
            let mut new_logits = domain_logits(rng, CLASSES.c_new, label, true);
            new_logits[label] = rng.gen_range(3.0..4.0);
            Sample {
                id: format!("bg-n{i}"),
                domain: Domain::New,
                label,
                base_logits: (0..CLASSES.c_base).map(|_| rng.gen_range(-3.0..-2.0)).collect(),
                new_logits,
                detector_score: Some(rng.gen_range(0.0..0.2)),
            }
        })
        .collect()
}

/// HM cannot see the detector.
///
/// One base sample stays correctly classified by its base classifier, but in
/// the perturbed system its new-domain logits are raised until the largest
/// one beats the largest base logit. HM (and both accuracies) are unchanged,
/// while OverallAcc drops and, under the implicit-margin detector, so does
/// OpenworldAUC: the sample now ranks below every new sample.
pub fn build_hm_counterexample(seed: u64) -> Result<CounterexamplePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = base_background(&mut rng);
    samples.extend(new_background(&mut rng));

    let label = rng.gen_range(0..CLASSES.c_base);
    let mut base_logits = domain_logits(&mut rng, CLASSES.c_base, label, true);
    base_logits[label] = rng.gen_range(2.0..3.0);
    let base_max = base_logits[label];
    let new_logits: Vec<f64> = (0..CLASSES.c_new).map(|_| base_max - rng.gen_range(1.0..2.0)).collect();
    let target = Sample {
        id: "target".into(),
        domain: Domain::Base,
        label,
        base_logits,
        new_logits,
        detector_score: None,
    };

    // background new margins are >= -7; push this one well below that
    let mut flipped = target.clone();
    let lift = base_max + 8.0 + rng.gen_range(0.0..1.0);
    let top = rng.gen_range(0..CLASSES.c_new);
    flipped.new_logits[top] = lift;

    let mut original = samples.clone();
    original.push(target);
    let mut perturbed = samples;
    perturbed.push(flipped);

    let config = DetectorConfig::new(DetectorMode::ImplicitMargin);
    Ok(CounterexamplePair {
        original: ScoredSystem::from_detector(EvalSet::new(original, CLASSES)?, config)?,
        perturbed: ScoredSystem::from_detector(EvalSet::new(perturbed, CLASSES)?, config)?,
        equal_metrics: vec!["base_acc", "new_acc", "hm"],
        separating_metrics: vec!["overall_acc", "openworld_auc"],
        min_gap: 0.0,
    })
}

/// Linear aggregates of (BaseAcc, NewAcc, AUROC) cannot see which samples
/// are both detected and classified correctly.
///
/// Two base samples (`b1` correct, `b2` wrong) and two new samples (`n1`
/// wrong, `n2` correct) are scored `r(b1) > r(n1) > r(b2) > r(n2)`. The
/// perturbed system swaps the scores within each domain (`b1 <-> b2`,
/// `n1 <-> n2`) and leaves every prediction alone. Per-domain score multisets
/// and accuracies are unchanged, so AUROC, BaseAcc and NewAcc all agree; the
/// pair `(b1, n2)` stops counting for OpenworldAUC, so the gap is at least
/// `1 / (N_b * N_n)`.
pub fn build_lin_counterexample(seed: u64) -> Result<CounterexamplePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = base_background(&mut rng);
    samples.extend(new_background(&mut rng));

    let mut s: Vec<f64> = Vec::with_capacity(4);
    while s.len() < 4 {
        let v = rng.gen_range(0.3..0.7);
        if !s.contains(&v) {
            s.push(v);
        }
    }
    s.sort_by(|a, b| b.total_cmp(a));

    let special = |id: &str, domain: Domain, correct: bool, rng: &mut ChaCha8Rng| {
        let (cb, cn) = (CLASSES.c_base, CLASSES.c_new);
        let label = rng.gen_range(0..CLASSES.classes(domain));
        let (base_logits, new_logits) = match domain {
            Domain::Base => (
                domain_logits(rng, cb, label, correct),
                (0..cn).map(|_| rng.gen_range(-2.0..0.0)).collect(),
            ),
            Domain::New => (
                (0..cb).map(|_| rng.gen_range(-2.0..0.0)).collect(),
                domain_logits(rng, cn, label, correct),
            ),
        };
        Sample {
            id: id.into(),
            domain,
            label,
            base_logits,
            new_logits,
            detector_score: None,
        }
    };
    let b1 = special("b1", Domain::Base, true, &mut rng);
    let b2 = special("b2", Domain::Base, false, &mut rng);
    let n1 = special("n1", Domain::New, false, &mut rng);
    let n2 = special("n2", Domain::New, true, &mut rng);

    let with = |sample: &Sample, r: f64| Sample {
        detector_score: Some(r),
        ..sample.clone()
    };
    let mut original = samples.clone();
    original.extend([with(&b1, s[0]), with(&n1, s[1]), with(&b2, s[2]), with(&n2, s[3])]);
    let mut perturbed = samples;
    perturbed.extend([with(&b2, s[0]), with(&n2, s[1]), with(&b1, s[2]), with(&n1, s[3])]);

    let original = ScoredSystem::from_detector(EvalSet::new(original, CLASSES)?, DetectorConfig::provided())?;
    let perturbed = ScoredSystem::from_detector(EvalSet::new(perturbed, CLASSES)?, DetectorConfig::provided())?;
    let n_pairs = (original.evalset.n_base() * original.evalset.n_new()) as f64;
    Ok(CounterexamplePair {
        original,
        perturbed,
        equal_metrics: vec!["base_acc", "new_acc", "auroc"],
        separating_metrics: vec!["openworld_auc"],
        min_gap: 1.0 / n_pairs,
    })
}

/// One row of the boolean identity `1 - g*r*h = !g + g*!r*h + !h`, where
/// `+` is disjunction.
///
/// Read arithmetically the right side is 2 when both classifiers fail, so
/// `rhs_sum` is only an upper bound on `lhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthRow {
    pub g: bool,
    pub r: bool,
    pub h: bool,
    pub lhs: u8,
    pub rhs: u8,
    pub rhs_sum: u8,
}

/// Rows in the order (1,1,1), (1,1,0), ..., (0,0,0).
pub fn truth_table() -> Vec<TruthRow> {
    let mut rows = Vec::with_capacity(8);
    for code in (0u8..8).rev() {
        let (g, r, h) = (code & 4 != 0, code & 2 != 0, code & 1 != 0);
        let (ig, ir, ih) = (g as u8, r as u8, h as u8);
        let lhs = 1 - ig * ir * ih;
        let rhs = (!g || (g && !r && h) || !h) as u8;
        let rhs_sum = (1 - ig) + ig * (1 - ir) * ih + (1 - ih);
        rows.push(TruthRow {
            g,
            r,
            h,
            lhs,
            rhs,
            rhs_sum,
        });
    }
    rows
}

pub fn verify_truth_table() -> bool {
    truth_table()
        .iter()
        .all(|row| row.lhs == row.rhs && row.rhs_sum >= row.lhs)
}

/// `1 - OpenworldAUC - (1 - BaseAcc)(1 - NewAcc)`; nonnegative when the bound holds.
pub fn lower_bound_slack(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome]) -> Result<f64> {
    let owauc = openworld_auc_pairwise(evalset, scores, outcomes)?;
    let miss_base = 1.0 - base_acc(evalset, outcomes)?;
    let miss_new = 1.0 - new_acc(evalset, outcomes)?;
    Ok(1.0 - owauc - miss_base * miss_new)
}

pub fn verify_lower_bound(evalset: &EvalSet, scores: &[f64], outcomes: &[PredictionOutcome]) -> Result<bool> {
    Ok(lower_bound_slack(evalset, scores, outcomes)? >= -EQUAL_TOL)
}

/// Outcome of one named check in [`verify_all`].
#[derive(Debug, Clone)]
pub struct PropCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs every witness: `seeds` seeds for each counterexample builder and
/// `instances` random sets for the lower bound.
pub fn verify_all(seeds: u64, instances: u64) -> Result<Vec<PropCheck>> {
    let mut checks = Vec::with_capacity(4);

    for (name, build) in [
        (
            "hm-blind-to-detection",
            build_hm_counterexample as fn(u64) -> Result<CounterexamplePair>,
        ),
        ("linear-aggregate-blind-to-joint-correctness", build_lin_counterexample),
    ] {
        let mut min_gap = f64::INFINITY;
        let mut failures = Vec::new();
        for seed in 1..=seeds {
            let pair = build(seed)?;
            let v = pair.verify()?;
            min_gap = min_gap.min(v.gap);
            failures.extend(v.failures.into_iter().map(|f| format!("seed {seed}: {f}")));
        }
        let head = build(1)?.separating_metric();
        checks.push(PropCheck {
            name,
            passed: failures.is_empty(),
            detail: if failures.is_empty() {
                format!("{seeds} seeds, min {head} gap {min_gap:.6}")
            } else {
                failures.join("; ")
            },
        });
    }

    let rows = truth_table();
    checks.push(PropCheck {
        name: "truth-table",
        passed: verify_truth_table(),
        detail: format!("{} rows", rows.len()),
    });

    let mut worst = f64::INFINITY;
    for seed in 0..instances {
        let (set, scores) = random_scored_set(seed, &random_bound_config(seed));
        let outcomes = classify_all(&set);
        worst = worst.min(lower_bound_slack(&set, &scores, &outcomes)?);
    }
    checks.push(PropCheck {
        name: "openworld-auc-lower-bound",
        passed: worst >= -EQUAL_TOL,
        detail: format!("{instances} instances, min slack {worst:.6}"),
    });
    Ok(checks)
}

/// Varies accuracies and overlap with the seed so the bound is tested near
/// its boundary cases as well as in the interior.
pub fn random_bound_config(seed: u64) -> RandomSetConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    RandomSetConfig {
        n_base: rng.gen_range(1..60),
        n_new: rng.gen_range(1..60),
        p_base_correct: rng.gen_range(0.0..=1.0),
        p_new_correct: rng.gen_range(0.0..=1.0),
        overlap: rng.gen_range(0.3..1.0),
        ..RandomSetConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hm_pair_seed_one() {
        let pair = build_hm_counterexample(1).unwrap();
        let v = pair.verify().unwrap();
        assert!(v.passed, "{:?}", v.failures);
        let (a, b) = (pair.original.report().unwrap(), pair.perturbed.report().unwrap());
        assert_eq!(a.hm, b.hm);
        assert!(a.overall_acc > b.overall_acc);
        assert!(a.openworld_auc > b.openworld_auc);
        assert_eq!(pair.equal_metrics, ["base_acc", "new_acc", "hm"]);
        // the target outranks 8 correct new samples originally and none afterwards
        let pairs = (a.n_base * a.n_new) as f64;
        assert!((pair.gap_of("openworld_auc").unwrap() - 8.0 / pairs).abs() < 1e-15);
    }

    #[test]
    fn lin_pair_gap_is_one_pair() {
        let pair = build_lin_counterexample(3).unwrap();
        let v = pair.verify().unwrap();
        assert!(v.passed, "{:?}", v.failures);
        assert_eq!(pair.equal_metrics, ["base_acc", "new_acc", "auroc"]);
        assert!((v.gap - 1.0 / 100.0).abs() < 1e-15);
        // the construction needs an inversion, so AUROC < 1
        assert!(pair.original.report().unwrap().auroc < 1.0);
    }

    #[test]
    fn builders_pass_for_many_seeds() {
        for seed in 0..20 {
            assert!(build_hm_counterexample(seed).unwrap().verify().unwrap().passed);
            let lin = build_lin_counterexample(seed).unwrap();
            assert!(lin.verify().unwrap().passed);
            assert!(lin.gap().unwrap() > 0.0);
        }
    }

    #[test]
    fn truth_table_rows() {
        let rows = truth_table();
        assert_eq!(rows.len(), 8);
        assert_eq!(
            (rows[0].g, rows[0].r, rows[0].h, rows[0].lhs, rows[0].rhs),
            (true, true, true, 0, 0)
        );
        assert_eq!(
            (rows[2].g, rows[2].r, rows[2].h, rows[2].lhs, rows[2].rhs),
            (true, false, true, 1, 1)
        );
        assert!(verify_truth_table());
        // both classifiers wrong: the arithmetic sum double counts
        assert_eq!(rows[7].rhs_sum, 2);
    }

    #[test]
    fn lower_bound_boundaries() {
        use crate::metrics::tests::scored_set;
        let (set, scores) = scored_set(&[(0.9, true)], &[(0.1, true)]);
        let o = classify_all(&set);
        assert_eq!(lower_bound_slack(&set, &scores, &o).unwrap(), 0.0);

        let (set, scores) = scored_set(&[(0.9, false)], &[(0.1, false)]);
        let o = classify_all(&set);
        assert_eq!(lower_bound_slack(&set, &scores, &o).unwrap(), 0.0);
        assert!(verify_lower_bound(&set, &scores, &o).unwrap());
    }

    #[test]
    fn verify_all_passes() {
        let checks = verify_all(5, 20).unwrap();
        assert_eq!(checks.len(), 4);
        for c in checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
