//! One-vs-rest logistic regression and k-fold out-of-sample probabilities.
//!
//! Each class gets an independent L2-regularized logistic regression fit by
//! full-batch gradient descent. The L2 term is applied as a proximal
//! (implicit) shrinkage step, so the iteration stays stable for any
//! regularization strength at a fixed learning rate.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, LabelMatrix, MultiLabelDataset, ProbMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
    /// Apply `ln(1 + x)` to features before standardizing (for counts).
    pub log_transform: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 500,
            log_transform: true,
        }
    }
}

impl Hyperparams {
    fn check(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", self.learning_rate, "must be positive"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::param("l2", self.l2, "must be non-negative"));
        }
        Ok(())
    }
}

/// Per-feature standardization, fit on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub log_transform: bool,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureScaler {
    pub fn identity(d: usize) -> Self {
        FeatureScaler {
            log_transform: false,
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    fn pre(log_transform: bool, x: f64) -> f64 {
        if log_transform {
            x.ln_1p()
        } else {
            x
        }
    }

    pub fn fit(features: &FeatureMatrix, log_transform: bool) -> Result<Self> {
        let (n, d) = features.shape();
        if log_transform && features.as_slice().iter().any(|&v| v < 0.0) {
            return Err(Error::param("features", "negative", "log transform needs non-negative features"));
        }
        let mut mean = vec![0.0; d];
        for row in features.rows() {
            for (m, &x) in mean.iter_mut().zip(row) {
                *m += Self::pre(log_transform, x);
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in features.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                let z = Self::pre(log_transform, x) - m;
                *v += z * z;
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(FeatureScaler {
            log_transform,
            mean,
            std,
        })
    }

    pub fn transform(&self, features: &FeatureMatrix) -> Result<Matrix<f64>> {
        if features.n_cols() != self.mean.len() {
            return Err(Error::shape("feature width", self.mean.len(), features.n_cols()));
        }
        let mut out = features.clone();
        for i in 0..out.n_rows() {
            for (j, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = (Self::pre(self.log_transform, *x) - self.mean[j]) / self.std[j];
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear(row: &[f64], weights: &[f64], bias: f64) -> f64 {
    row.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>() + bias
}

/// Mean binary cross-entropy plus `l2 / 2 * |w|^2` (bias unpenalized).
pub fn objective(x: &Matrix<f64>, y: &[u8], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let n = x.n_rows() as f64;
    let data: f64 = x
        .rows()
        .zip(y)
        .map(|(row, &t)| softplus(linear(row, weights, bias)) - t as f64 * linear(row, weights, bias))
        .sum();
    data / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of the data term only, `((1/N) X^T (p - y), mean(p - y))`.
fn data_gradient(x: &Matrix<f64>, y: &[u8], weights: &[f64], bias: f64) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &t) in x.rows().zip(y) {
        let r = sigmoid(linear(row, weights, bias)) - t as f64;
        for (g, &xj) in gw.iter_mut().zip(row) {
            *g += r * xj;
        }
        gb += r;
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (gw, gb / n)
}

/// Analytic gradient of [`objective`] with respect to `(weights, bias)`.
pub fn gradient(x: &Matrix<f64>, y: &[u8], weights: &[f64], bias: f64, l2: f64) -> (Vec<f64>, f64) {
    let (mut gw, gb) = data_gradient(x, y, weights, bias);
    for (g, &w) in gw.iter_mut().zip(weights) {
        *g += l2 * w;
    }
    (gw, gb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFit {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective before the first step and after every epoch.
    pub losses: Vec<f64>,
}

/// Fits one class on already-scaled features. `class` only labels errors.
pub fn fit_binary(x: &Matrix<f64>, y: &[u8], hp: &Hyperparams, class: usize) -> Result<BinaryFit> {
    let d = x.n_cols();
    let n = y.len();
    let positives = y.iter().filter(|&&t| t == 1).count();
    if positives == 0 || positives == n {
        // bias-only fit, add-one smoothed so the probability stays off 0 and 1
        let rate = (positives as f64 + 1.0) / (n as f64 + 2.0);
        return Ok(BinaryFit {
            weights: vec![0.0; d],
            bias: (rate / (1.0 - rate)).ln(),
            losses: Vec::new(),
        });
    }

    let mut weights = vec![0.0; d];
    let mut bias = 0.0;
    let mut losses = Vec::with_capacity(hp.epochs + 1);
    losses.push(objective(x, y, &weights, bias, hp.l2));
    let shrink = 1.0 / (1.0 + hp.learning_rate * hp.l2);
    for epoch in 1..=hp.epochs {
        let (gw, gb) = data_gradient(x, y, &weights, bias);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w = (*w - hp.learning_rate * g) * shrink;
        }
        bias -= hp.learning_rate * gb;
        let loss = objective(x, y, &weights, bias, hp.l2);
        if !loss.is_finite() {
            return Err(Error::Diverged { class, epoch });
        }
        losses.push(loss);
    }
    Ok(BinaryFit {
        weights,
        bias,
        losses,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegModel {
    /// K×(D+1): per-class weights followed by the bias in the last column.
    pub weights: Matrix<f64>,
    pub scaler: FeatureScaler,
    pub hyperparams: Hyperparams,
}

impl LogRegModel {
    pub fn n_features(&self) -> usize {
        self.weights.n_cols() - 1
    }

    pub fn n_classes(&self) -> usize {
        self.weights.n_rows()
    }
}

pub fn train(features: &FeatureMatrix, labels: &LabelMatrix, hp: &Hyperparams) -> Result<LogRegModel> {
    hp.check()?;
    let (n, d) = features.shape();
    if n < 2 {
        return Err(Error::param("n_examples", n, "training needs at least 2 examples"));
    }
    if d < 1 {
        return Err(Error::param("n_features", d, "training needs at least 1 feature"));
    }
    if labels.n_rows() != n {
        return Err(Error::shape("label rows vs feature rows", n, labels.n_rows()));
    }
    let scaler = FeatureScaler::fit(features, hp.log_transform)?;
    let x = scaler.transform(features)?;
    let k = labels.n_cols();

    let fits: Vec<BinaryFit> = (0..k)
        .into_par_iter()
        .map(|class| {
            let y: Vec<u8> = labels.column(class).collect();
            fit_binary(&x, &y, hp, class)
        })
        .collect::<Result<_>>()?;

    let mut weights = Matrix::zeros(k, d + 1);
    for (class, fit) in fits.iter().enumerate() {
        let row = weights.row_mut(class);
        row[..d].copy_from_slice(&fit.weights);
        row[d] = fit.bias;
    }
    Ok(LogRegModel {
        weights,
        scaler,
        hyperparams: *hp,
    })
}

/// Independent sigmoid output per class; rows are not normalized.
pub fn predict_proba(model: &LogRegModel, features: &FeatureMatrix) -> Result<ProbMatrix> {
    let d = model.n_features();
    if features.n_cols() != d {
        return Err(Error::shape("feature width", d, features.n_cols()));
    }
    let x = model.scaler.transform(features)?;
    let k = model.n_classes();
    let mut out = Matrix::zeros(x.n_rows(), k);
    for (i, row) in x.rows().enumerate() {
        for class in 0..k {
            let w = model.weights.row(class);
            out.set(i, class, sigmoid(linear(row, &w[..d], w[d])));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvConfig {
    pub n_folds: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_folds: 5,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Fold index for every example. Folds are contiguous chunks of a (seeded)
/// permutation and differ in size by at most one.
pub fn fold_assignment(n: usize, cv: &CvConfig) -> Result<Vec<usize>> {
    if cv.n_folds < 2 || cv.n_folds > n {
        return Err(Error::param("n_folds", cv.n_folds, "must satisfy 2 <= folds <= N"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if cv.shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(cv.seed));
    }
    let mut folds = vec![0; n];
    for f in 0..cv.n_folds {
        for &i in &order[f * n / cv.n_folds..(f + 1) * n / cv.n_folds] {
            folds[i] = f;
        }
    }
    Ok(folds)
}

/// Out-of-sample probabilities for an explicit fold assignment.
pub fn cross_val_with_folds(
    features: &FeatureMatrix,
    labels: &LabelMatrix,
    folds: &[usize],
    hp: &Hyperparams,
) -> Result<ProbMatrix> {
    let n = features.n_rows();
    if labels.n_rows() != n || folds.len() != n {
        return Err(Error::shape("features / labels / folds rows", n, labels.n_rows().max(folds.len())));
    }
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    let per_fold: Vec<(Vec<usize>, ProbMatrix)> = (0..n_folds)
        .into_par_iter()
        .map(|f| {
            let (held, train_idx): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            let model = train(&features.select_rows(&train_idx), &labels.select_rows(&train_idx), hp)?;
            let probs = predict_proba(&model, &features.select_rows(&held))?;
            Ok((held, probs))
        })
        .collect::<Result<_>>()?;

    let mut out = Matrix::zeros(n, labels.n_cols());
    for (held, probs) in per_fold {
        for (row, &i) in held.iter().enumerate() {
            out.row_mut(i).copy_from_slice(probs.row(row));
        }
    }
    Ok(out)
}

/// Trains on the given (possibly noisy) labels with k-fold cross-validation
/// and returns held-out probabilities for every example.
pub fn cross_val_pred_probs(
    dataset: &MultiLabelDataset,
    cv: &CvConfig,
    hp: &Hyperparams,
) -> Result<ProbMatrix> {
    let features = dataset.features.as_ref().ok_or(Error::MissingFeatures)?;
    let folds = fold_assignment(dataset.n_examples(), cv)?;
    cross_val_with_folds(features, &dataset.given_labels, &folds, hp)
}
