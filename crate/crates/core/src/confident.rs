//! Confident Learning applied one class at a time.
//!
//! Every class `k` is treated as its own binary problem: given label
//! `b_i^k`, predicted probability `p_i^k` that the class applies. A binary
//! confident joint is built from per-side self-confidence thresholds and the
//! examples landing in its off-diagonal cells are flagged. An example is
//! reported as mislabeled if any of its classes is flagged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ensure_probs, ensure_same_shape, LabelMatrix, ProbMatrix};
use crate::error::Result;

/// Per-side self-confidence thresholds for one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassThresholds {
    /// Mean of `p` over examples given the class.
    pub t_pos: f64,
    /// Mean of `1 - p` over examples not given the class.
    pub t_neg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoPositives,
    NoNegatives,
    NoExamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSkip {
    pub class: usize,
    pub reason: SkipReason,
}

/// 2×2 counts `counts[given][confident_true]` for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryConfidentJoint {
    pub class_index: usize,
    pub counts: [[usize; 2]; 2],
    pub thresholds: ClassThresholds,
}

impl BinaryConfidentJoint {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn off_diagonal(&self) -> usize {
        self.counts[0][1] + self.counts[1][0]
    }

    /// Row-normalized joint, estimating `P(true = t | given = g)`.
    ///
    /// Rows are first rescaled so that row `g` sums to `given_counts[g]`
    /// and then normalized. A row with no confidently counted examples
    /// falls back to the identity row.
    pub fn noise_rates(&self, given_counts: [usize; 2]) -> [[f64; 2]; 2] {
        let mut out = [[1.0, 0.0], [0.0, 1.0]];
        for g in 0..2 {
            let row_total = (self.counts[g][0] + self.counts[g][1]) as f64;
            if row_total == 0.0 || given_counts[g] == 0 {
                continue;
            }
            let scale = given_counts[g] as f64 / row_total;
            let calibrated = [
                self.counts[g][0] as f64 * scale,
                self.counts[g][1] as f64 * scale,
            ];
            let sum = calibrated[0] + calibrated[1];
            out[g] = [calibrated[0] / sum, calibrated[1] / sum];
        }
        out
    }
}

/// Thresholds for class `k`, or the reason the class cannot be assessed.
pub fn class_thresholds(
    labels: &LabelMatrix,
    probs: &ProbMatrix,
    k: usize,
) -> std::result::Result<ClassThresholds, SkipReason> {
    let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0usize, 0.0, 0usize);
    for (b, p) in labels.column(k).zip(probs.column(k)) {
        if b == 1 {
            pos_sum += p;
            pos_n += 1;
        } else {
            neg_sum += 1.0 - p;
            neg_n += 1;
        }
    }
    match (pos_n, neg_n) {
        (0, 0) => Err(SkipReason::NoExamples),
        (0, _) => Err(SkipReason::NoPositives),
        (_, 0) => Err(SkipReason::NoNegatives),
        _ => Ok(ClassThresholds {
            t_pos: pos_sum / pos_n as f64,
            t_neg: neg_sum / neg_n as f64,
        }),
    }
}

/// Confidently estimated true binary label, or `None` when neither side
/// clears its threshold.
fn confident_label(given: u8, p: f64, t: ClassThresholds) -> Option<u8> {
    let pos = p >= t.t_pos;
    let neg = 1.0 - p >= t.t_neg;
    match (pos, neg) {
        (true, false) => Some(1),
        (false, true) => Some(0),
        (false, false) => None,
        (true, true) => {
            let q = 1.0 - p;
            if p > q {
                Some(1)
            } else if q > p {
                Some(0)
            } else {
                Some(given)
            }
        }
    }
}

pub fn binary_confident_joint(
    labels: &LabelMatrix,
    probs: &ProbMatrix,
    k: usize,
    thresholds: ClassThresholds,
) -> BinaryConfidentJoint {
    let mut counts = [[0usize; 2]; 2];
    for (b, p) in labels.column(k).zip(probs.column(k)) {
        if let Some(t) = confident_label(b, p, thresholds) {
            counts[b as usize][t as usize] += 1;
        }
    }
    BinaryConfidentJoint {
        class_index: k,
        counts,
        thresholds,
    }
}

/// Flags for one class: examples whose confident label disagrees with the
/// given one. A skipped class yields all-false flags and the skip reason.
pub fn flag_class(
    labels: &LabelMatrix,
    probs: &ProbMatrix,
    k: usize,
) -> (Vec<bool>, Option<SkipReason>) {
    match class_thresholds(labels, probs, k) {
        Err(reason) => (vec![false; labels.n_rows()], Some(reason)),
        Ok(t) => {
            let flags = labels
                .column(k)
                .zip(probs.column(k))
                .map(|(b, p)| confident_label(b, p, t).is_some_and(|c| c != b))
                .collect();
            (flags, None)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagReport {
    /// `per_class_flags[i][k]`.
    pub per_class_flags: Vec<Vec<bool>>,
    /// Union over classes.
    pub example_flags: Vec<bool>,
    pub per_class_error_counts: Vec<usize>,
    pub estimated_noise_rates: Vec<[[f64; 2]; 2]>,
    /// Confident joints for the classes that were not skipped.
    pub joints: Vec<BinaryConfidentJoint>,
    pub skipped: Vec<ClassSkip>,
}

impl FlagReport {
    pub fn n_flagged(&self) -> usize {
        self.example_flags.iter().filter(|&&f| f).count()
    }

    pub fn flagged_indices(&self) -> Vec<usize> {
        (0..self.example_flags.len())
            .filter(|&i| self.example_flags[i])
            .collect()
    }

    /// Classes flagged for example `i`.
    pub fn classes_flagged(&self, i: usize) -> Vec<usize> {
        (0..self.per_class_flags[i].len())
            .filter(|&k| self.per_class_flags[i][k])
            .collect()
    }

    /// JSON-friendly summary without the per-example tables.
    pub fn summary(&self) -> FlagSummary {
        FlagSummary {
            n_examples: self.example_flags.len(),
            n_flagged: self.n_flagged(),
            per_class_error_counts: self.per_class_error_counts.clone(),
            estimated_noise_rates: self.estimated_noise_rates.clone(),
            skipped: self.skipped.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagSummary {
    pub n_examples: usize,
    pub n_flagged: usize,
    pub per_class_error_counts: Vec<usize>,
    pub estimated_noise_rates: Vec<[[f64; 2]; 2]>,
    pub skipped: Vec<ClassSkip>,
}

/// Runs the per-class flagging for every class and takes the union.
/// Degenerate classes are skipped and recorded, never fatal.
pub fn flag_multilabel(labels: &LabelMatrix, probs: &ProbMatrix) -> Result<FlagReport> {
    ensure_same_shape(labels, probs)?;
    ensure_probs(probs)?;
    let (n, k) = labels.shape();

    struct ClassResult {
        flags: Vec<bool>,
        joint: Option<BinaryConfidentJoint>,
        skip: Option<SkipReason>,
        noise: [[f64; 2]; 2],
    }

    let per_class: Vec<ClassResult> = (0..k)
        .into_par_iter()
        .map(|class| match class_thresholds(labels, probs, class) {
            Err(reason) => ClassResult {
                flags: vec![false; n],
                joint: None,
                skip: Some(reason),
                noise: [[1.0, 0.0], [0.0, 1.0]],
            },
            Ok(t) => {
                let joint = binary_confident_joint(labels, probs, class, t);
                let positives = labels.column(class).filter(|&b| b == 1).count();
                let noise = joint.noise_rates([n - positives, positives]);
                let (flags, _) = flag_class(labels, probs, class);
                ClassResult {
                    flags,
                    joint: Some(joint),
                    skip: None,
                    noise,
                }
            }
        })
        .collect();

    let mut per_class_flags = vec![vec![false; k]; n];
    let mut per_class_error_counts = Vec::with_capacity(k);
    for (class, res) in per_class.iter().enumerate() {
        let mut count = 0;
        for (i, &f) in res.flags.iter().enumerate() {
            per_class_flags[i][class] = f;
            count += f as usize;
        }
        per_class_error_counts.push(count);
    }
    let example_flags = per_class_flags.iter().map(|row| row.iter().any(|&f| f)).collect();

    let mut joints = Vec::new();
    let mut skipped = Vec::new();
    let mut estimated_noise_rates = Vec::with_capacity(k);
    for (class, res) in per_class.into_iter().enumerate() {
        joints.extend(res.joint);
        if let Some(reason) = res.skip {
            skipped.push(ClassSkip { class, reason });
        }
        estimated_noise_rates.push(res.noise);
    }

    Ok(FlagReport {
        per_class_flags,
        example_flags,
        per_class_error_counts,
        estimated_noise_rates,
        joints,
        skipped,
    })
}
