//! Independent reference implementations used as test oracles. Nothing here
//! calls into the library's numeric code.
#![allow(dead_code)]

use mlqc::matrix::Matrix;
use rand::Rng;

pub fn sorted_asc(row: &[f64]) -> Vec<f64> {
    let mut v = row.to_vec();
    // insertion sort, deliberately not the std sort the library uses
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    v
}

pub fn min(row: &[f64]) -> f64 {
    let mut m = f64::INFINITY;
    for &x in row {
        if x < m {
            m = x;
        }
    }
    m
}

pub fn max(row: &[f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for &x in row {
        if x > m {
            m = x;
        }
    }
    m
}

pub fn mean(row: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in row {
        s += x;
    }
    s / row.len() as f64
}

pub fn median(row: &[f64]) -> f64 {
    let v = sorted_asc(row);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

/// Closed-form weights on the ascending sort instead of the recursion.
pub fn ema(row: &[f64], alpha: f64) -> f64 {
    let v = sorted_asc(row);
    let k_total = v.len();
    let mut s = 0.0;
    for k in 1..=k_total {
        let w = if k == k_total {
            (1.0 - alpha).powi(k as i32 - 1)
        } else {
            alpha * (1.0 - alpha).powi(k as i32 - 1)
        };
        s += w * v[k - 1];
    }
    s
}

pub fn softmin(row: &[f64], tau: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &x in row {
        let w = ((1.0 - x) / tau).exp();
        num += x * w;
        den += w;
    }
    num / den
}

pub fn log_pool(row: &[f64], eps: f64) -> f64 {
    let mut s = 0.0;
    for &x in row {
        s += (x + eps).ln();
    }
    s / row.len() as f64
}

pub fn cumavg(row: &[f64], j: usize) -> f64 {
    let v = sorted_asc(row);
    let mut s = 0.0;
    for x in &v[..j] {
        s += x;
    }
    s / j as f64
}

pub fn weighted_cumavg(row: &[f64]) -> f64 {
    let v = sorted_asc(row);
    let mut total = 0.0;
    for j in 1..=v.len() {
        let mut inner = 0.0;
        for x in &v[..j] {
            inner += (1.0 - j as f64).exp() / j as f64 * x;
        }
        total += inner;
    }
    total
}

/// Double loop over the windows, as written.
pub fn sma(row: &[f64], p: usize) -> f64 {
    let v = sorted_asc(row);
    let k = v.len();
    let mut s = 0.0;
    for k2 in p..=k {
        for kk in (k2 - p + 1)..=k2 {
            s += v[kk - 1];
        }
    }
    s / (p * (k - p + 1)) as f64
}

pub fn self_confidence(b: u8, p: f64) -> f64 {
    if b == 1 {
        p
    } else {
        1.0 - p
    }
}

/// O(N^2) average precision at depth `t`: for every position, recount the
/// positives above it from scratch.
pub fn ap_at_t(scores: &[f64], counts: &[usize], t: usize, k: usize) -> f64 {
    let n = scores.len();
    // rank of each example: number strictly lower, plus lower-index ties
    let mut ranked = vec![0usize; n];
    for i in 0..n {
        let mut r = 0;
        for j in 0..n {
            if scores[j] < scores[i] || (scores[j] == scores[i] && j < i) {
                r += 1;
            }
        }
        ranked[r] = i;
    }
    let mut num = 0.0;
    let mut hits = 0usize;
    for pos in 0..t {
        if counts[ranked[pos]] >= k {
            hits += 1;
            let mut above = 0;
            for q in 0..=pos {
                if counts[ranked[q]] >= k {
                    above += 1;
                }
            }
            num += above as f64 / (pos + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        num / hits as f64
    }
}

/// Average ranks by counting: rank = #less + (#equal + 1) / 2.
pub fn avg_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            let less = v.iter().filter(|&&y| y < x).count() as f64;
            let equal = v.iter().filter(|&&y| y == x).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = avg_ranks(a);
    let rb = avg_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        None
    } else {
        Some(cov / (va * vb).sqrt())
    }
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, k: usize) -> Matrix<f64> {
    let data = (0..n * k).map(|_| rng.random::<f64>()).collect();
    Matrix::from_vec(n, k, data).unwrap()
}

/// Random matrix with deliberate ties and exact 0/1 entries.
pub fn random_matrix_with_ties(rng: &mut impl Rng, n: usize, k: usize) -> Matrix<f64> {
    let data = (0..n * k)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            2 => 0.5,
            _ => rng.random::<f64>(),
        })
        .collect();
    Matrix::from_vec(n, k, data).unwrap()
}

pub fn random_labels(rng: &mut impl Rng, n: usize, k: usize) -> Matrix<u8> {
    let data = (0..n * k).map(|_| rng.random_range(0..2u8)).collect();
    Matrix::from_vec(n, k, data).unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn pool_oracle(method: mlqc::scoring::PoolingMethod, row: &[f64]) -> f64 {
    use mlqc::scoring::PoolingMethod::*;
    match method {
        Min => min(row),
        Max => max(row),
        Mean => mean(row),
        Median => median(row),
        Ema { alpha } => ema(row, alpha),
        Softmin { tau } => softmin(row, tau),
        LogTransform { epsilon } => log_pool(row, epsilon),
        CumAvgBottom { j } => cumavg(row, j),
        WeightedCumAvg => weighted_cumavg(row),
        MeanSma { period } => sma(row, period),
    }
}
