//! Per-class self-confidence scores and the poolers that reduce them to one
//! label-quality score per example.
//!
//! Lower pooled scores mean an example is more likely to carry at least one
//! wrong class annotation. Only the ordering of the pooled scores is
//! meaningful: log-transform and weighted-cumulative pooling are not confined
//! to `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ensure_probs, ensure_same_shape, LabelMatrix, ProbMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_BOTTOM_J: usize = 2;
pub const DEFAULT_SMA_PERIOD: usize = 2;

/// N×K matrix of per-class label-quality scores, every entry in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerClassScoreMatrix(Matrix<f64>);

impl PerClassScoreMatrix {
    pub fn new(values: Matrix<f64>) -> Result<Self> {
        if values.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param(
                "per-class scores",
                "matrix",
                "every entry must lie in [0,1]",
            ));
        }
        Ok(PerClassScoreMatrix(values))
    }

    pub fn as_matrix(&self) -> &Matrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix<f64> {
        self.0
    }

    pub fn n_examples(&self) -> usize {
        self.0.n_rows()
    }

    pub fn n_classes(&self) -> usize {
        self.0.n_cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PoolingMethod {
    Min,
    Max,
    Mean,
    Median,
    Ema { alpha: f64 },
    Softmin { tau: f64 },
    LogTransform { epsilon: f64 },
    CumAvgBottom { j: usize },
    WeightedCumAvg,
    MeanSma { period: usize },
}

impl PoolingMethod {
    /// Every pooler with its default parameters, in a fixed order.
    pub fn all_defaults() -> Vec<PoolingMethod> {
        use PoolingMethod::*;
        vec![
            Min,
            Max,
            Mean,
            Median,
            Ema { alpha: DEFAULT_ALPHA },
            Softmin { tau: DEFAULT_TAU },
            LogTransform { epsilon: DEFAULT_EPSILON },
            CumAvgBottom { j: DEFAULT_BOTTOM_J },
            WeightedCumAvg,
            MeanSma { period: DEFAULT_SMA_PERIOD },
        ]
    }

    pub fn name(&self) -> &'static str {
        use PoolingMethod::*;
        match self {
            Min => "min",
            Max => "max",
            Mean => "mean",
            Median => "median",
            Ema { .. } => "ema",
            Softmin { .. } => "softmin",
            LogTransform { .. } => "log",
            CumAvgBottom { .. } => "cumavg",
            WeightedCumAvg => "weighted_cumavg",
            MeanSma { .. } => "sma",
        }
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        use PoolingMethod::*;
        match *self {
            Ema { alpha } => vec![("alpha", alpha)],
            Softmin { tau } => vec![("tau", tau)],
            LogTransform { epsilon } => vec![("epsilon", epsilon)],
            CumAvgBottom { j } => vec![("j", j as f64)],
            MeanSma { period } => vec![("period", period as f64)],
            _ => Vec::new(),
        }
    }

    /// Convex poolers stay within `[min_k s, max_k s]` for every row.
    pub fn is_convex(&self) -> bool {
        !matches!(
            self,
            PoolingMethod::LogTransform { .. } | PoolingMethod::WeightedCumAvg
        )
    }

    /// Checks parameters against a class count `k`.
    pub fn check(&self, k: usize) -> Result<()> {
        use PoolingMethod::*;
        if k == 0 {
            return Err(Error::param("n_classes", 0, "pooling needs at least one class"));
        }
        match *self {
            // alpha = 1 is a degenerate but well-defined setting (pure min).
            Ema { alpha } if !(alpha > 0.0 && alpha <= 1.0) => {
                Err(Error::param("alpha", alpha, "must satisfy 0 < alpha <= 1"))
            }
            Softmin { tau } if !(tau > 0.0 && tau.is_finite()) => {
                Err(Error::param("tau", tau, "must be positive and finite"))
            }
            LogTransform { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => {
                Err(Error::param("epsilon", epsilon, "must be positive and finite"))
            }
            CumAvgBottom { j } if j < 1 || j > k => {
                Err(Error::param("j", j, "must satisfy 1 <= J <= K"))
            }
            MeanSma { period } if period < 1 || period > k => {
                Err(Error::param("period", period, "must satisfy 1 <= P <= K"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PoolingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        let params = self.params();
        if !params.is_empty() {
            let inner: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", inner.join(","))?;
        }
        Ok(())
    }
}

impl FromStr for PoolingMethod {
    type Err = String;

    /// Parses a method name; parameterized methods get their defaults.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        PoolingMethod::all_defaults()
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                let names: Vec<_> = PoolingMethod::all_defaults().iter().map(|m| m.name()).collect();
                format!("unknown pooling method `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// One pooled score per example, tagged with the method that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityScoreVector {
    pub values: Vec<f64>,
    pub method: PoolingMethod,
}

impl QualityScoreVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Scores mapped linearly onto `[0, 1]` for display. Ranking metrics
    /// should always use the raw values.
    pub fn min_max_rescaled(&self) -> Vec<f64> {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return vec![0.0; self.values.len()];
        }
        self.values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    }
}

/// Self-confidence: the predicted probability of the given binary label,
/// `s = p` when `b = 1` and `s = 1 - p` when `b = 0`.
pub fn self_confidence(labels: &LabelMatrix, probs: &ProbMatrix) -> Result<PerClassScoreMatrix> {
    ensure_same_shape(labels, probs)?;
    ensure_probs(probs)?;
    let data = labels
        .as_slice()
        .iter()
        .zip(probs.as_slice())
        .map(|(&b, &p)| if b == 1 { p } else { 1.0 - p })
        .collect();
    let (n, k) = labels.shape();
    Ok(PerClassScoreMatrix(Matrix::from_vec(n, k, data).expect("same shape")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Order {
    Ascending,
    Descending,
}

/// Fills `buf` with a sorted copy of `row`. The sort is stable, though every
/// pooler depends only on the multiset of values.
fn sorted_into(row: &[f64], order: Order, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend_from_slice(row);
    match order {
        Order::Ascending => buf.sort_by(|a, b| a.total_cmp(b)),
        Order::Descending => buf.sort_by(|a, b| b.total_cmp(a)),
    }
}

/// EMA recursion over scores already sorted in *descending* order:
/// `S_1 = x_1`, `S_t = alpha * x_t + (1 - alpha) * S_{t-1}`.
///
/// Linear in its input, so the weight of the k-th smallest score
/// (position `K - k + 1`) is `alpha * (1 - alpha)^(k-1)` for `k < K`.
pub fn ema_of_sorted(descending: &[f64], alpha: f64) -> f64 {
    let mut iter = descending.iter();
    let first = *iter.next().expect("at least one class");
    iter.fold(first, |acc, &x| alpha * x + (1.0 - alpha) * acc)
}

/// Weight that EMA pooling gives to the k-th smallest of `k_total` scores
/// (1-based `k`).
pub fn ema_weight(alpha: f64, k: usize, k_total: usize) -> f64 {
    assert!(k >= 1 && k <= k_total);
    if k == k_total {
        (1.0 - alpha).powi(k as i32 - 1)
    } else {
        alpha * (1.0 - alpha).powi(k as i32 - 1)
    }
}

fn pool_row(row: &[f64], method: PoolingMethod, buf: &mut Vec<f64>) -> f64 {
    use PoolingMethod::*;
    let k = row.len();
    match method {
        Min => row.iter().copied().fold(f64::INFINITY, f64::min),
        Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Mean => row.iter().sum::<f64>() / k as f64,
        Median => {
            sorted_into(row, Order::Ascending, buf);
            if k % 2 == 1 {
                buf[k / 2]
            } else {
                0.5 * (buf[k / 2 - 1] + buf[k / 2])
            }
        }
        Ema { alpha } => {
            sorted_into(row, Order::Descending, buf);
            ema_of_sorted(buf, alpha)
        }
        Softmin { tau } => {
            // softmax over (1 - s) / tau, shifted by its maximum
            let shift = row.iter().map(|&s| (1.0 - s) / tau).fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for &s in row {
                let w = ((1.0 - s) / tau - shift).exp();
                num += s * w;
                den += w;
            }
            num / den
        }
        LogTransform { epsilon } => row.iter().map(|&s| (s + epsilon).ln()).sum::<f64>() / k as f64,
        CumAvgBottom { j } => {
            sorted_into(row, Order::Ascending, buf);
            buf[..j].iter().sum::<f64>() / j as f64
        }
        WeightedCumAvg => {
            sorted_into(row, Order::Ascending, buf);
            let mut prefix = 0.0;
            let mut total = 0.0;
            for (idx, &s) in buf.iter().enumerate() {
                let depth = idx + 1;
                prefix += s;
                total += (1.0 - depth as f64).exp() * prefix / depth as f64;
            }
            total
        }
        MeanSma { period } => {
            sorted_into(row, Order::Ascending, buf);
            // each sorted score is covered by as many windows as contain it
            let windows = k - period + 1;
            let sum: f64 = buf
                .iter()
                .enumerate()
                .map(|(idx, &s)| {
                    let first = idx.saturating_sub(period - 1);
                    let last = idx.min(windows - 1);
                    s * (last + 1 - first) as f64
                })
                .sum();
            sum / (period * windows) as f64
        }
    }
}

/// Pools every row of `scores` with `method`.
pub fn pool(scores: &PerClassScoreMatrix, method: PoolingMethod) -> Result<QualityScoreVector> {
    method.check(scores.n_classes())?;
    let values = scores
        .0
        .rows()
        .collect::<Vec<_>>()
        .par_iter()
        .map_init(Vec::new, |buf, row| pool_row(row, method, buf))
        .collect();
    Ok(QualityScoreVector { values, method })
}

pub fn pool_min(scores: &PerClassScoreMatrix) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::Min)
}

pub fn pool_max(scores: &PerClassScoreMatrix) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::Max)
}

pub fn pool_mean(scores: &PerClassScoreMatrix) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::Mean)
}

pub fn pool_median(scores: &PerClassScoreMatrix) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::Median)
}

pub fn pool_ema(scores: &PerClassScoreMatrix, alpha: f64) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::Ema { alpha })
}

pub fn pool_softmin(scores: &PerClassScoreMatrix, tau: f64) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::Softmin { tau })
}

pub fn pool_log(scores: &PerClassScoreMatrix, epsilon: f64) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::LogTransform { epsilon })
}

pub fn pool_cumavg_bottom(scores: &PerClassScoreMatrix, j: usize) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::CumAvgBottom { j })
}

pub fn pool_weighted_cumavg(scores: &PerClassScoreMatrix) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::WeightedCumAvg)
}

pub fn pool_sma(scores: &PerClassScoreMatrix, period: usize) -> Result<QualityScoreVector> {
    pool(scores, PoolingMethod::MeanSma { period })
}

/// Self-confidence followed by the chosen pooler.
pub fn score_examples(
    labels: &LabelMatrix,
    probs: &ProbMatrix,
    method: PoolingMethod,
) -> Result<QualityScoreVector> {
    pool(&self_confidence(labels, probs)?, method)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_row(row: &[f64]) -> PerClassScoreMatrix {
        PerClassScoreMatrix::new(Matrix::from_rows(&[row]).unwrap()).unwrap()
    }

    fn pooled(row: &[f64], method: PoolingMethod) -> f64 {
        pool(&one_row(row), method).unwrap().values[0]
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn self_confidence_cases() {
        let labels = Matrix::from_rows(&[[1u8, 0, 0]]).unwrap();
        let probs = Matrix::from_rows(&[[0.9, 0.9, 0.0]]).unwrap();
        let s = self_confidence(&labels, &probs).unwrap();
        assert_eq!(s.as_matrix().get(0, 0), 0.9);
        assert!(close(s.as_matrix().get(0, 1), 0.1, 1e-15));
        assert_eq!(s.as_matrix().get(0, 2), 1.0);
    }

    #[test]
    fn self_confidence_shape_mismatch() {
        let labels: LabelMatrix = Matrix::zeros(2, 2);
        let probs: ProbMatrix = Matrix::filled(2, 3, 0.5);
        assert!(matches!(
            self_confidence(&labels, &probs),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn baseline_poolers() {
        use PoolingMethod::*;
        let s = [0.2, 0.8];
        assert_eq!(pooled(&s, Min), 0.2);
        assert_eq!(pooled(&s, Max), 0.8);
        assert_eq!(pooled(&s, Mean), 0.5);
        assert_eq!(pooled(&s, Median), 0.5);
        for m in [Min, Max, Mean, Median] {
            assert!(close(pooled(&[0.5, 0.5, 0.5], m), 0.5, 1e-15));
        }
        assert!(close(pooled(&[0.1, 0.4, 0.9, 1.0], Median), 0.65, 1e-15));
    }

    #[test]
    fn ema_cases() {
        assert!(close(pooled(&[0.9, 0.5], PoolingMethod::Ema { alpha: 0.8 }), 0.58, 1e-15));
        for alpha in [0.1, 0.5, 0.8, 1.0] {
            assert_eq!(pooled(&[0.4], PoolingMethod::Ema { alpha }), 0.4);
        }
        assert!(close(ema_weight(0.8, 3, 10), 0.032, 1e-15));
        assert!(close(ema_weight(0.8, 4, 10), 0.0064, 1e-15));
        let total: f64 = (1..=6).map(|k| ema_weight(0.3, k, 6)).sum();
        assert!(close(total, 1.0, 1e-15));
    }

    #[test]
    fn ema_alpha_bounds() {
        let s = one_row(&[0.1, 0.2]);
        assert!(pool_ema(&s, 0.0).is_err());
        assert!(pool_ema(&s, 1.5).is_err());
        assert!(pool_ema(&s, f64::NAN).is_err());
        assert!(pool_ema(&s, 1.0).is_ok());
    }

    #[test]
    fn softmin_cases() {
        assert!(close(pooled(&[0.3; 4], PoolingMethod::Softmin { tau: 0.1 }), 0.3, 1e-15));
        let expected = 1.0 / (10f64.exp() + 1.0);
        let got = pooled(&[0.0, 1.0], PoolingMethod::Softmin { tau: 0.1 });
        assert!(close(got, expected, 1e-15));
        assert!(close(expected, 4.5398e-5, 1e-9));
        let got = pooled(&[0.7, 0.2, 0.9], PoolingMethod::Softmin { tau: 1e-4 });
        assert!(close(got, 0.2, 1e-12));
        // tiny tau would overflow without the max shift
        let got = pooled(&[0.0, 0.5], PoolingMethod::Softmin { tau: 1e-6 });
        assert!(got.is_finite() && got == 0.0);
        assert!(pool_softmin(&one_row(&[0.5]), 0.0).is_err());
    }

    #[test]
    fn log_cases() {
        let eps = 1e-8;
        let m = PoolingMethod::LogTransform { epsilon: eps };
        assert!(close(pooled(&[1.0, 1.0], m), (1.0 + eps).ln(), 1e-18));
        let got = pooled(&[0.0, 1.0], m);
        assert!(close(got, (eps.ln() + (1.0 + eps).ln()) / 2.0, 1e-12));
        assert!(close(got, -9.2103, 1e-4));
        assert!(close(pooled(&[0.0, 0.0, 0.0], m), -18.420680743952367, 1e-12));
        assert!(pool_log(&one_row(&[0.5]), -1.0).is_err());
    }

    #[test]
    fn cumavg_cases() {
        let s = [0.9, 0.1, 0.3];
        assert!(close(pooled(&s, PoolingMethod::CumAvgBottom { j: 2 }), 0.2, 1e-15));
        assert_eq!(pooled(&s, PoolingMethod::CumAvgBottom { j: 1 }), 0.1);
        assert!(close(
            pooled(&s, PoolingMethod::CumAvgBottom { j: 3 }),
            pooled(&s, PoolingMethod::Mean),
            1e-15
        ));
        assert!(pool_cumavg_bottom(&one_row(&s), 0).is_err());
        assert!(pool_cumavg_bottom(&one_row(&s), 4).is_err());
    }

    #[test]
    fn weighted_cumavg_cases() {
        assert_eq!(pooled(&[0.5], PoolingMethod::WeightedCumAvg), 0.5);
        let got = pooled(&[1.0, 0.0], PoolingMethod::WeightedCumAvg);
        assert!(close(got, (-1f64).exp() / 2.0, 1e-15));
        assert!(close(got, 0.18394, 1e-5));
        let c = 0.37;
        let weight_sum: f64 = (1..=5).map(|j| (1.0 - j as f64).exp()).sum();
        assert!(close(pooled(&[c; 5], PoolingMethod::WeightedCumAvg), c * weight_sum, 1e-14));
    }

    #[test]
    fn sma_cases() {
        let s = [0.1, 0.3, 0.9];
        assert!(close(pooled(&s, PoolingMethod::MeanSma { period: 2 }), 0.4, 1e-15));
        assert!(close(
            pooled(&s, PoolingMethod::MeanSma { period: 1 }),
            pooled(&s, PoolingMethod::Mean),
            1e-15
        ));
        assert!(close(
            pooled(&s, PoolingMethod::MeanSma { period: 3 }),
            pooled(&s, PoolingMethod::Mean),
            1e-15
        ));
        for p in 1..=4 {
            assert!(close(pooled(&[0.6; 4], PoolingMethod::MeanSma { period: p }), 0.6, 1e-15));
        }
        assert!(pool_sma(&one_row(&s), 4).is_err());
    }

    #[test]
    fn empty_class_axis_is_an_error() {
        let s = PerClassScoreMatrix::new(Matrix::zeros(3, 0)).unwrap();
        for m in PoolingMethod::all_defaults() {
            assert!(pool(&s, m).is_err(), "{m}");
        }
    }

    #[test]
    fn dispatcher_records_method() {
        let labels = Matrix::from_rows(&[[1u8, 0]]).unwrap();
        let probs = Matrix::from_rows(&[[0.9, 0.2]]).unwrap();
        let q = score_examples(&labels, &probs, PoolingMethod::Min).unwrap();
        assert!(close(q.values[0], 0.8, 1e-15));
        assert_eq!(q.method, PoolingMethod::Min);

        let probs = Matrix::filled(1, 2, 0.5);
        let q = score_examples(&labels, &probs, PoolingMethod::Mean).unwrap();
        assert_eq!(q.values, vec![0.5]);
    }

    #[test]
    fn method_names_round_trip() {
        for m in PoolingMethod::all_defaults() {
            assert_eq!(m.name().parse::<PoolingMethod>().unwrap(), m);
        }
        assert!("nope".parse::<PoolingMethod>().is_err());
        assert_eq!(PoolingMethod::Ema { alpha: 0.8 }.to_string(), "ema(alpha=0.8)");
    }

    #[test]
    fn rescale_for_display() {
        let q = QualityScoreVector {
            values: vec![-4.0, 0.0, 4.0],
            method: PoolingMethod::WeightedCumAvg,
        };
        assert_eq!(q.min_max_rescaled(), vec![0.0, 0.5, 1.0]);
    }
}
