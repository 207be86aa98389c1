//! Base-to-new detection scores `r(x)` in `[0, 1]`; higher means "more likely base".

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalset::{EvalSet, Sample};
use crate::numeric::{max_value, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorMode {
    /// Largest softmax probability among the base channels.
    #[default]
    MaxSoftmax,
    /// `sigmoid(max base logit - max new logit)`, the detector implied by
    /// argmax over the concatenated class space.
    ImplicitMargin,
    /// Use the score stored on each sample.
    Provided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SoftmaxSpace {
    /// Softmax over `base_logits ++ new_logits`.
    #[default]
    Joint,
    BaseOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub mode: DetectorMode,
    pub softmax_space: SoftmaxSpace,
}

impl DetectorConfig {
    pub fn new(mode: DetectorMode) -> Self {
        Self {
            mode,
            softmax_space: SoftmaxSpace::default(),
        }
    }

    pub fn provided() -> Self {
        Self::new(DetectorMode::Provided)
    }
}

impl FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max-softmax" => Ok(Self::MaxSoftmax),
            "implicit-margin" => Ok(Self::ImplicitMargin),
            "provided" => Ok(Self::Provided),
            other => Err(Error::InvalidArgument(format!("unknown detector {other:?}"))),
        }
    }
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MaxSoftmax => "max-softmax",
            Self::ImplicitMargin => "implicit-margin",
            Self::Provided => "provided",
        })
    }
}

impl FromStr for SoftmaxSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "base-only" => Ok(Self::BaseOnly),
            other => Err(Error::InvalidArgument(format!("unknown softmax space {other:?}"))),
        }
    }
}

impl fmt::Display for SoftmaxSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Joint => "joint",
            Self::BaseOnly => "base-only",
        })
    }
}

/// `max base logit - max new logit`.
pub fn implicit_margin(sample: &Sample) -> f64 {
    max_value(&sample.base_logits) - max_value(&sample.new_logits)
}

pub fn detector_score(sample: &Sample, config: DetectorConfig) -> Result<f64> {
    match config.mode {
        DetectorMode::MaxSoftmax => {
            let base_max = max_value(&sample.base_logits);
            let shift = match config.softmax_space {
                SoftmaxSpace::Joint => base_max.max(max_value(&sample.new_logits)),
                SoftmaxSpace::BaseOnly => base_max,
            };
            let mut denom: f64 = sample.base_logits.iter().map(|v| (v - shift).exp()).sum();
            if config.softmax_space == SoftmaxSpace::Joint {
                denom += sample.new_logits.iter().map(|v| (v - shift).exp()).sum::<f64>();
            }
            Ok((base_max - shift).exp() / denom)
        }
        DetectorMode::ImplicitMargin => Ok(sigmoid(implicit_margin(sample))),
        DetectorMode::Provided => sample
            .detector_score
            .ok_or_else(|| Error::MissingDetectorScore(sample.id.clone())),
    }
}

/// Scores for every sample, aligned with `evalset.samples()`.
///
/// In provided mode the first sample lacking a score is reported.
pub fn score_all(evalset: &EvalSet, config: DetectorConfig) -> Result<Vec<f64>> {
    if config.mode == DetectorMode::Provided {
        let missing: Vec<String> = evalset
            .samples()
            .iter()
            .enumerate()
            .filter(|(_, s)| s.detector_score.is_none())
            .map(|(i, s)| match evalset.source_line(i) {
                Some(line) => format!("line {line}: sample {:?}", s.id),
                None => format!("sample {:?}", s.id),
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingDetectorScores(missing));
        }
    }
    evalset.samples().iter().map(|s| detector_score(s, config)).collect()
}

/// Final score of a mixture of sub-detectors: the largest sub-score.
pub fn ensemble_score(sub_scores: &[f64]) -> Result<f64> {
    if sub_scores.is_empty() {
        return Err(Error::Empty("sub-detector scores"));
    }
    Ok(sub_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalset::Domain;
    use proptest::prelude::*;

    fn sample(base: &[f64], new: &[f64]) -> Sample {
        Sample {
            id: "x".into(),
            domain: Domain::Base,
            label: 0,
            base_logits: base.to_vec(),
            new_logits: new.to_vec(),
            detector_score: None,
        }
    }

    #[test]
    fn joint_softmax_examples() {
        let cfg = DetectorConfig::default();
        let r = detector_score(&sample(&[1.0, 1.0], &[1.0]), cfg).unwrap();
        assert!((r - 1.0 / 3.0).abs() < 1e-15);

        let e10 = 10f64.exp();
        let r = detector_score(&sample(&[10.0, 0.0], &[0.0]), cfg).unwrap();
        assert!((r - e10 / (e10 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn base_only_ignores_new_logits() {
        let cfg = DetectorConfig {
            mode: DetectorMode::MaxSoftmax,
            softmax_space: SoftmaxSpace::BaseOnly,
        };
        let a = detector_score(&sample(&[2.0, 0.0], &[100.0]), cfg).unwrap();
        let b = detector_score(&sample(&[2.0, 0.0], &[-100.0]), cfg).unwrap();
        assert_eq!(a, b);
        assert!((a - 1.0 / (1.0 + (-2f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn provided_mode() {
        let mut s = sample(&[0.0], &[0.0]);
        let cfg = DetectorConfig::provided();
        assert!(matches!(detector_score(&s, cfg), Err(Error::MissingDetectorScore(_))));
        s.detector_score = Some(0.42);
        assert_eq!(detector_score(&s, cfg).unwrap(), 0.42);
    }

    #[test]
    fn ensemble_examples() {
        assert_eq!(ensemble_score(&[0.2, 0.9, 0.5]).unwrap(), 0.9);
        assert_eq!(ensemble_score(&[0.3]).unwrap(), 0.3);
        assert!(ensemble_score(&[]).is_err());
    }

    fn logits(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, n)
    }

    proptest! {
        #[test]
        fn max_softmax_bounded_and_monotone(
            base in logits(3), new in logits(2), which in 0usize..2, bump in 0.0..5.0f64
        ) {
            let cfg = DetectorConfig::default();
            let r = detector_score(&sample(&base, &new), cfg).unwrap();
            prop_assert!(r > 0.0 && r < 1.0);

            // raising a non-maximal base logit grows the denominator, so only
            // the leading base logit is monotone
            let mut up = base.clone();
            up[crate::numeric::argmax(&base)] += bump;
            prop_assert!(detector_score(&sample(&up, &new), cfg).unwrap() >= r - 1e-15);

            let mut nu = new.clone();
            nu[which] += bump;
            prop_assert!(detector_score(&sample(&base, &nu), cfg).unwrap() <= r + 1e-15);
        }

        #[test]
        fn implicit_margin_preserves_margin_order(
            bu in logits(3), nu in logits(2), bv in logits(3), nv in logits(2)
        ) {
            let (u, v) = (sample(&bu, &nu), sample(&bv, &nv));
            let cfg = DetectorConfig::new(DetectorMode::ImplicitMargin);
            let (ru, rv) = (detector_score(&u, cfg).unwrap(), detector_score(&v, cfg).unwrap());
            let (mu, mv) = (implicit_margin(&u), implicit_margin(&v));
            // margins within +-20 stay inside sigmoid's strictly increasing double range
            prop_assert_eq!(mu > mv, ru > rv);
            prop_assert_eq!(mu < mv, ru < rv);
        }

        #[test]
        fn ensemble_matches_scan_and_is_symmetric(
            mut scores in prop::collection::vec(0.0..=1.0f64, 1..20), rot in 0usize..20
        ) {
            let mut best = scores[0];
            for &s in &scores {
                if s > best {
                    best = s;
                }
            }
            prop_assert_eq!(ensemble_score(&scores).unwrap(), best);
            let k = rot % scores.len();
            scores.rotate_left(k);
            prop_assert_eq!(ensemble_score(&scores).unwrap(), best);
            let mut doubled = scores.clone();
            doubled.extend_from_slice(&scores);
            prop_assert_eq!(ensemble_score(&doubled).unwrap(), best);
        }
    }
}
