//! OpenworldAUC and companion metrics for open-world classification, where a
//! detector first routes each input to the base or the new domain and a
//! domain-specific classifier then labels it.
//!
//! - [`evalset`]: samples, validation and the prediction file format.
//! - [`detection`]: base-to-new detection scores.
//! - [`metrics`]: BaseAcc, NewAcc, HM, OverallAcc, AUROC, OpenworldAUC and the
//!   MissRate/HitRate curve.
//! - [`propositions`]: constructive witnesses for the metric comparisons.
//! - [`sensitivity`]: new/base ratio sweeps.
//! - [`gmop`]: a small gated mixture trainer that optimizes OpenworldAUC on
//!   synthetic Gaussian data.

pub mod detection;
pub mod error;
pub mod evalset;
pub mod fixtures;
pub mod gmop;
pub mod metrics;
pub mod numeric;
pub mod propositions;
pub mod sensitivity;

pub use detection::{detector_score, ensemble_score, DetectorConfig, DetectorMode, SoftmaxSpace};
pub use error::{Error, Result};
pub use evalset::{classify, ClassCounts, Domain, EvalSet, PredictionOutcome, Sample};
pub use metrics::{Curve, MetricReport, TiePolicy};
