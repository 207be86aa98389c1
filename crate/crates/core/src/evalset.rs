//! Data model for open-world evaluation and the line-delimited prediction file.
//!
//! A prediction file holds one JSON object per line:
//!
//! ```text
//! {"c_base":2,"c_new":1}
//! {"id":"a","domain":"base","label":0,"base_logits":[1.0,0.0],"new_logits":[0.0]}
//! {"id":"b","domain":"new","label":0,"base_logits":[0.1,0.2],"new_logits":[0.9],"detector_score":0.3}
//! ```
//!
//! The header line is optional; class counts may be supplied by the caller instead.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Base,
    New,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Base => f.write_str("base"),
            Domain::New => f.write_str("new"),
        }
    }
}

/// One evaluated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub domain: Domain,
    /// Class index local to `domain`.
    pub label: usize,
    pub base_logits: Vec<f64>,
    pub new_logits: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_score: Option<f64>,
}

impl Sample {
    /// Checks the per-sample invariants against the declared class counts.
    pub fn validate(&self, counts: ClassCounts) -> Result<()> {
        if self.base_logits.len() != counts.c_base {
            return Err(Error::LogitLength {
                id: self.id.clone(),
                field: "base_logits",
                expected: counts.c_base,
                found: self.base_logits.len(),
            });
        }
        if self.new_logits.len() != counts.c_new {
            return Err(Error::LogitLength {
                id: self.id.clone(),
                field: "new_logits",
                expected: counts.c_new,
                found: self.new_logits.len(),
            });
        }
        let classes = counts.classes(self.domain);
        if self.label >= classes {
            return Err(Error::LabelOutOfRange {
                id: self.id.clone(),
                domain: self.domain,
                label: self.label,
                classes,
            });
        }
        if self.base_logits.iter().chain(&self.new_logits).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogit(self.id.clone()));
        }
        if let Some(score) = self.detector_score {
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::ScoreOutOfRange {
                    id: self.id.clone(),
                    score,
                });
            }
        }
        Ok(())
    }

    /// Logits of the domain the sample belongs to.
    pub fn domain_logits(&self) -> &[f64] {
        match self.domain {
            Domain::Base => &self.base_logits,
            Domain::New => &self.new_logits,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCounts {
    pub c_base: usize,
    pub c_new: usize,
}

impl ClassCounts {
    pub fn new(c_base: usize, c_new: usize) -> Self {
        Self { c_base, c_new }
    }

    pub fn classes(&self, domain: Domain) -> usize {
        match domain {
            Domain::Base => self.c_base,
            Domain::New => self.c_new,
        }
    }
}

/// Validated, immutable collection of samples.
#[derive(Debug, Clone)]
pub struct EvalSet {
    samples: Vec<Sample>,
    counts: ClassCounts,
    /// File line of each sample when read from a prediction file.
    lines: Vec<usize>,
}

impl PartialEq for EvalSet {
    fn eq(&self, other: &Self) -> bool {
        self.samples == other.samples && self.counts == other.counts
    }
}

impl EvalSet {
    pub fn new(samples: Vec<Sample>, counts: ClassCounts) -> Result<Self> {
        if counts.c_base == 0 || counts.c_new == 0 {
            return Err(Error::ZeroClasses);
        }
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            s.validate(counts)?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        Ok(Self {
            samples,
            counts,
            lines: Vec::new(),
        })
    }

    /// Line in the source file of sample `index`, if it was loaded from one.
    pub fn source_line(&self, index: usize) -> Option<usize> {
        self.lines.get(index).copied()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn counts(&self) -> ClassCounts {
        self.counts
    }

    pub fn c_base(&self) -> usize {
        self.counts.c_base
    }

    pub fn c_new(&self) -> usize {
        self.counts.c_new
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_domain(&self, domain: Domain) -> usize {
        self.samples.iter().filter(|s| s.domain == domain).count()
    }

    pub fn n_base(&self) -> usize {
        self.n_domain(Domain::Base)
    }

    pub fn n_new(&self) -> usize {
        self.n_domain(Domain::New)
    }

    /// Fails unless both domains are represented.
    pub fn require_both_domains(&self) -> Result<()> {
        for domain in [Domain::Base, Domain::New] {
            if self.n_domain(domain) == 0 {
                return Err(Error::EmptyDomain(domain));
            }
        }
        Ok(())
    }

    /// Same samples with detector scores replaced.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self> {
        if scores.len() != self.samples.len() {
            return Err(Error::LengthMismatch {
                what: "scores",
                expected: self.samples.len(),
                found: scores.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(scores)
            .map(|(s, &r)| Sample {
                detector_score: Some(r),
                ..s.clone()
            })
            .collect();
        EvalSet::new(samples, self.counts)
    }
}

/// Result of the domain-local classifier on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionOutcome {
    pub domain: Domain,
    pub predicted_label: usize,
    pub correct: bool,
}

impl PredictionOutcome {
    /// `y_b = g(x_b)`; `None` for new-domain samples.
    pub fn base_correct(&self) -> Option<bool> {
        (self.domain == Domain::Base).then_some(self.correct)
    }

    /// `y_n = h(x_n)`; `None` for base-domain samples.
    pub fn new_correct(&self) -> Option<bool> {
        (self.domain == Domain::New).then_some(self.correct)
    }
}

/// Domain-local argmax: base logits for base samples, new logits for new ones.
pub fn classify(sample: &Sample) -> PredictionOutcome {
    let predicted_label = argmax(sample.domain_logits());
    PredictionOutcome {
        domain: sample.domain,
        predicted_label,
        correct: predicted_label == sample.label,
    }
}

pub fn classify_all(evalset: &EvalSet) -> Vec<PredictionOutcome> {
    evalset.samples().iter().map(classify).collect()
}

/// Reads a prediction file. `counts` may be omitted when the file carries a header line.
pub fn load_evalset(path: impl AsRef<Path>, counts: Option<ClassCounts>) -> Result<EvalSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_evalset(BufReader::new(file), counts)
}

pub fn read_evalset<R: BufRead>(reader: R, counts: Option<ClassCounts>) -> Result<EvalSet> {
    let mut header: Option<(usize, ClassCounts)> = None;
    let mut records: Vec<(usize, Sample)> = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Malformed(e.to_string()).at_line(lineno))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if header.is_none() && records.is_empty() {
            if let Ok(h) = serde_json::from_str::<ClassCounts>(trimmed) {
                header = Some((lineno, h));
                continue;
            }
        }
        let sample: Sample =
            serde_json::from_str(trimmed).map_err(|e| Error::Malformed(e.to_string()).at_line(lineno))?;
        records.push((lineno, sample));
    }

    let counts = match (header, counts) {
        (Some((_, h)), Some(c)) if h != c => {
            return Err(Error::ClassCountMismatch {
                header_base: h.c_base,
                header_new: h.c_new,
                base: c.c_base,
                new: c.c_new,
            })
        }
        (Some((_, h)), _) => h,
        (None, Some(c)) => c,
        (None, None) => return Err(Error::MissingClassCounts),
    };
    if counts.c_base == 0 || counts.c_new == 0 {
        return Err(Error::ZeroClasses);
    }

    let mut seen = HashSet::with_capacity(records.len());
    for (lineno, s) in &records {
        s.validate(counts).map_err(|e| e.at_line(*lineno))?;
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()).at_line(*lineno));
        }
    }
    let (lines, samples) = records.into_iter().unzip();
    let mut set = EvalSet::new(samples, counts)?;
    set.lines = lines;
    Ok(set)
}

/// Writes the header line followed by one record per sample.
pub fn write_evalset<W: Write>(mut writer: W, evalset: &EvalSet) -> Result<()> {
    let io = |e: std::io::Error| Error::Malformed(e.to_string());
    serde_json::to_writer(&mut writer, &evalset.counts())?;
    writer.write_all(b"\n").map_err(io)?;
    for s in evalset.samples() {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n").map_err(io)?;
    }
    writer.flush().map_err(io)
}

pub fn save_evalset(path: impl AsRef<Path>, evalset: &EvalSet) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_evalset(BufWriter::new(file), evalset)
}
