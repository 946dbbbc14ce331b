//! Ranking metrics for label-quality scores against known label errors.
//!
//! Scores are ranked ascending (lowest = most suspicious). Ties are broken by
//! original index so that results are reproducible.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::LabelMatrix;
use crate::error::{Error, Result};

/// Which examples are truly mislabeled, and how badly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorTruth {
    pub error_flags: Vec<bool>,
    /// Number of wrong class annotations per example.
    pub error_counts: Vec<usize>,
}

impl ErrorTruth {
    pub fn from_counts(error_counts: Vec<usize>) -> Self {
        ErrorTruth {
            error_flags: error_counts.iter().map(|&c| c > 0).collect(),
            error_counts,
        }
    }

    pub fn from_labels(given: &LabelMatrix, truth: &LabelMatrix) -> Result<Self> {
        if given.shape() != truth.shape() {
            return Err(Error::shape(
                "given vs true labels",
                format!("{:?}", truth.shape()),
                format!("{:?}", given.shape()),
            ));
        }
        let counts = given
            .rows()
            .zip(truth.rows())
            .map(|(g, t)| g.iter().zip(t).filter(|(a, b)| a != b).count())
            .collect();
        Ok(Self::from_counts(counts))
    }

    pub fn len(&self) -> usize {
        self.error_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.error_counts.is_empty()
    }

    pub fn n_mislabeled(&self) -> usize {
        self.error_flags.iter().filter(|&&f| f).count()
    }

    /// Examples with at least `min_errors` wrong annotations.
    pub fn positives(&self, min_errors: usize) -> impl Iterator<Item = bool> + '_ {
        self.error_counts.iter().map(move |&c| c >= min_errors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    /// `None` when the metric is undefined for the input (e.g. Spearman on a
    /// constant vector).
    pub value: Option<f64>,
    pub t: Option<usize>,
    pub k: Option<usize>,
    pub n_positives: usize,
}

/// Stable ascending order of `scores`; ties keep index order.
pub fn rank_ascending(scores: &[f64]) -> Result<Vec<usize>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    Ok(order)
}

/// Average precision over the `t` lowest-scored examples, where an example is
/// positive if it has at least `min_errors` wrong annotations.
///
/// `AP@T = sum_{r<=T} P(r) rel(r) / max(1, sum_{r<=T} rel(r))`, so `AP@N`
/// is the usual average precision.
pub fn ap_at_t(scores: &[f64], truth: &ErrorTruth, t: usize, min_errors: usize) -> Result<MetricResult> {
    if scores.len() != truth.len() {
        return Err(Error::shape("scores vs truth", truth.len(), scores.len()));
    }
    if t < 1 || t > scores.len() {
        return Err(Error::param("T", t, "must satisfy 1 <= T <= N"));
    }
    if min_errors < 1 {
        return Err(Error::param("k", min_errors, "must be at least 1"));
    }
    let order = rank_ascending(scores)?;
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (r, &i) in order[..t].iter().enumerate() {
        if truth.error_counts[i] >= min_errors {
            hits += 1;
            precision_sum += hits as f64 / (r + 1) as f64;
        }
    }
    let name = match min_errors {
        1 => "ap_at_t".to_owned(),
        k => format!("ap{k}_at_t"),
    };
    Ok(MetricResult {
        metric: name,
        value: Some(precision_sum / hits.max(1) as f64),
        t: Some(t),
        k: Some(min_errors),
        n_positives: truth.positives(min_errors).filter(|&p| p).count(),
    })
}

/// Area under the precision-recall curve, taken as full-depth average
/// precision (identical to `ap_at_t` with `T = N`, `k = 1`).
pub fn auprc(scores: &[f64], truth: &ErrorTruth) -> Result<MetricResult> {
    if truth.n_mislabeled() == 0 {
        return Err(Error::Undefined("AUPRC needs at least one positive"));
    }
    let mut res = ap_at_t(scores, truth, scores.len(), 1)?;
    res.metric = "auprc".into();
    res.t = None;
    res.k = None;
    Ok(res)
}

/// 1-based ranks with ties sharing the mean of their rank range.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation (Pearson on average ranks). The raw signed value
/// is returned; `value` is `None` when either side is constant.
pub fn spearman_corr(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape("spearman inputs", a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::param("N", a.len(), "spearman needs at least 2 examples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("spearman input"));
    }
    Ok(pearson(&average_ranks(a), &average_ranks(b)))
}

/// Spearman correlation between scores and per-example error counts. Good
/// scorers give strongly negative values (low score, many errors).
pub fn spearman(scores: &[f64], error_counts: &[usize]) -> Result<MetricResult> {
    let counts: Vec<f64> = error_counts.iter().map(|&c| c as f64).collect();
    let value = spearman_corr(scores, &counts)?;
    Ok(MetricResult {
        metric: "spearman".into(),
        value,
        t: None,
        k: None,
        n_positives: error_counts.iter().filter(|&&c| c > 0).count(),
    })
}

/// Metric selector used by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    Auprc,
    /// Average `k`-precision at `T` = number of mislabeled examples.
    ApAtT { k: usize },
    Spearman,
}

impl Metric {
    pub fn standard_set() -> Vec<Metric> {
        vec![
            Metric::Auprc,
            Metric::ApAtT { k: 1 },
            Metric::ApAtT { k: 2 },
            Metric::ApAtT { k: 3 },
            Metric::Spearman,
        ]
    }

    /// Evaluates this metric with `T` = number of truly mislabeled examples.
    pub fn evaluate(&self, scores: &[f64], truth: &ErrorTruth) -> Result<MetricResult> {
        match *self {
            Metric::Auprc => auprc(scores, truth),
            Metric::ApAtT { k } => ap_at_t(scores, truth, truth.n_mislabeled(), k),
            Metric::Spearman => spearman(scores, &truth.error_counts),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Auprc => f.write_str("auprc"),
            Metric::ApAtT { k: 1 } => f.write_str("ap_at_t"),
            Metric::ApAtT { k } => write!(f, "ap{k}_at_t"),
            Metric::Spearman => f.write_str("spearman"),
        }
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "auprc" => Ok(Metric::Auprc),
            "ap_at_t" => Ok(Metric::ApAtT { k: 1 }),
            "spearman" => Ok(Metric::Spearman),
            _ => s
                .strip_prefix("ap")
                .and_then(|rest| rest.strip_suffix("_at_t"))
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k >= 1)
                .map(|k| Metric::ApAtT { k })
                .ok_or_else(|| format!("unknown metric `{s}`")),
        }
    }
}
