//! Dataset containers and input validation.
//!
//! Labels are stored dense as `u8` (0 or 1), one row per example. Predicted
//! probabilities are stored as an N×K `f64` matrix whose rows are *not*
//! normalized: classes are not mutually exclusive.

mod io;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use io::{
    fmt_f64, load_dataset, load_probs, load_probs_aligned, load_scores, read_features_csv,
    read_jsonl, read_labels_csv, save_scores, write_features_csv, write_jsonl, write_labels_csv,
    write_probs_csv, DatasetFormat, ScoreTable,
};

/// N×K binary given-label matrix, entries in {0, 1}.
pub type LabelMatrix = Matrix<u8>;
/// N×K predicted class probabilities, entries in [0, 1].
pub type ProbMatrix = Matrix<f64>;
/// N×D non-negative feature matrix (word counts for the synthetic data).
pub type FeatureMatrix = Matrix<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiLabelDataset {
    pub example_ids: Vec<String>,
    pub given_labels: LabelMatrix,
    /// Ground truth, only known for synthetic data.
    pub true_labels: Option<LabelMatrix>,
    pub features: Option<FeatureMatrix>,
}

impl MultiLabelDataset {
    pub fn new(example_ids: Vec<String>, given_labels: LabelMatrix) -> Result<Self> {
        if example_ids.len() != given_labels.n_rows() {
            return Err(Error::shape(
                "example ids vs label rows",
                given_labels.n_rows(),
                example_ids.len(),
            ));
        }
        Ok(MultiLabelDataset {
            example_ids,
            given_labels,
            true_labels: None,
            features: None,
        })
    }

    /// Dataset with ids `0..N` rendered as strings.
    pub fn with_default_ids(given_labels: LabelMatrix) -> Self {
        let ids = default_ids(given_labels.n_rows());
        MultiLabelDataset {
            example_ids: ids,
            given_labels,
            true_labels: None,
            features: None,
        }
    }

    pub fn n_examples(&self) -> usize {
        self.given_labels.n_rows()
    }

    pub fn n_classes(&self) -> usize {
        self.given_labels.n_cols()
    }

    /// Subset of rows, carrying every optional field along.
    pub fn select(&self, indices: &[usize]) -> Self {
        MultiLabelDataset {
            example_ids: indices.iter().map(|&i| self.example_ids[i].clone()).collect(),
            given_labels: self.given_labels.select_rows(indices),
            true_labels: self.true_labels.as_ref().map(|t| t.select_rows(indices)),
            features: self.features.as_ref().map(|f| f.select_rows(indices)),
        }
    }
}

pub fn default_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Issue {
    ShapeMismatch { what: String, expected: (usize, usize), actual: (usize, usize) },
    IdCount { expected: usize, actual: usize },
    DuplicateId { id: String },
    LabelOutOfDomain { row: usize, col: usize, value: u8 },
    ProbOutOfRange { row: usize, col: usize, value: f64 },
    ProbNonFinite { row: usize, col: usize },
    FeatureInvalid { row: usize, col: usize, value: f64 },
    ClassWithoutPositives { class: usize },
    ClassWithoutNegatives { class: usize },
}

impl Issue {
    pub fn severity(&self) -> Severity {
        match self {
            Issue::ClassWithoutPositives { .. } | Issue::ClassWithoutNegatives { .. } => {
                Severity::Warning
            }
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::ShapeMismatch { what, expected, actual } => write!(
                f,
                "shape mismatch: {what} expected {}x{}, got {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
            Issue::IdCount { expected, actual } => {
                write!(f, "shape mismatch: expected {expected} example ids, got {actual}")
            }
            Issue::DuplicateId { id } => write!(f, "duplicate example id `{id}`"),
            Issue::LabelOutOfDomain { row, col, value } => {
                write!(f, "label {value} not in {{0,1}} at ({row},{col})")
            }
            Issue::ProbOutOfRange { row, col, value } => {
                write!(f, "probability out of [0,1] at ({row},{col}): {value}")
            }
            Issue::ProbNonFinite { row, col } => {
                write!(f, "probability is NaN or infinite at ({row},{col})")
            }
            Issue::FeatureInvalid { row, col, value } => {
                write!(f, "feature must be finite and >= 0 at ({row},{col}): {value}")
            }
            Issue::ClassWithoutPositives { class } => {
                write!(f, "class {class} has zero positive examples")
            }
            Issue::ClassWithoutNegatives { class } => {
                write!(f, "class {class} has zero negative examples")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    /// True when there are no error-severity issues; warnings are allowed.
    pub fn is_ok(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity() == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Issue> {
        self.issues.iter().filter(|i| i.severity() == Severity::Warning)
    }
}

/// Checks a dataset on its own (labels, ids, truth and feature shapes).
pub fn validate_dataset(dataset: &MultiLabelDataset) -> ValidationReport {
    let mut issues = Vec::new();
    let labels = &dataset.given_labels;
    let (n, k) = labels.shape();

    if dataset.example_ids.len() != n {
        issues.push(Issue::IdCount {
            expected: n,
            actual: dataset.example_ids.len(),
        });
    }
    let mut seen = HashSet::with_capacity(dataset.example_ids.len());
    for id in &dataset.example_ids {
        if !seen.insert(id.as_str()) {
            issues.push(Issue::DuplicateId { id: id.clone() });
        }
    }

    check_labels(labels, &mut issues);
    if let Some(truth) = &dataset.true_labels {
        if truth.shape() != (n, k) {
            issues.push(Issue::ShapeMismatch {
                what: "true labels".into(),
                expected: (n, k),
                actual: truth.shape(),
            });
        } else {
            check_labels(truth, &mut issues);
        }
    }
    if let Some(features) = &dataset.features {
        if features.n_rows() != n {
            issues.push(Issue::ShapeMismatch {
                what: "features".into(),
                expected: (n, features.n_cols()),
                actual: features.shape(),
            });
        }
        for (i, row) in features.rows().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    issues.push(Issue::FeatureInvalid { row: i, col: j, value: v });
                }
            }
        }
    }

    for class in 0..k {
        let positives = labels.column(class).filter(|&b| b == 1).count();
        if positives == 0 {
            issues.push(Issue::ClassWithoutPositives { class });
        }
        if positives == n {
            issues.push(Issue::ClassWithoutNegatives { class });
        }
    }

    ValidationReport { issues }
}

/// Checks a dataset together with predicted probabilities. Never mutates
/// its inputs; every problem found is returned rather than raised.
pub fn validate(dataset: &MultiLabelDataset, probs: &ProbMatrix) -> ValidationReport {
    let mut report = validate_dataset(dataset);
    let expected = dataset.given_labels.shape();
    if probs.shape() != expected {
        report.issues.push(Issue::ShapeMismatch {
            what: "probabilities".into(),
            expected,
            actual: probs.shape(),
        });
    }
    check_probs(probs, &mut report.issues);
    report
}

fn check_labels(labels: &LabelMatrix, issues: &mut Vec<Issue>) {
    for (i, row) in labels.rows().enumerate() {
        for (j, &b) in row.iter().enumerate() {
            if b > 1 {
                issues.push(Issue::LabelOutOfDomain { row: i, col: j, value: b });
            }
        }
    }
}

fn check_probs(probs: &ProbMatrix, issues: &mut Vec<Issue>) {
    for (i, row) in probs.rows().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if !p.is_finite() {
                issues.push(Issue::ProbNonFinite { row: i, col: j });
            } else if !(0.0..=1.0).contains(&p) {
                issues.push(Issue::ProbOutOfRange { row: i, col: j, value: p });
            }
        }
    }
}

/// Fails with the first error-severity issue, if any.
pub(crate) fn ensure_probs(probs: &ProbMatrix) -> Result<()> {
    let mut issues = Vec::new();
    check_probs(probs, &mut issues);
    match issues.first() {
        None => Ok(()),
        Some(Issue::ProbNonFinite { .. }) => Err(Error::NonFinite("probabilities")),
        Some(issue) => Err(Error::param("probs", issue, "must lie in [0,1]")),
    }
}

pub(crate) fn ensure_same_shape(labels: &LabelMatrix, probs: &ProbMatrix) -> Result<()> {
    if labels.shape() != probs.shape() {
        return Err(Error::shape(
            "labels vs probabilities",
            format!("{:?}", labels.shape()),
            format!("{:?}", probs.shape()),
        ));
    }
    Ok(())
}
