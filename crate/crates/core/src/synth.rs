//! Synthetic multi-label bag-of-words data with class-conditional label noise.
//!
//! Each class owns a word distribution drawn from a flat Dirichlet over the
//! vocabulary. An example draws a Poisson number of distinct classes, a
//! Poisson document length, and then its words from the equal-weight mixture
//! of its classes' word distributions (uniform over the vocabulary when it has
//! no classes).
//!
//! Noise is injected per class through a 2×2 row-stochastic matrix whose
//! trace is sampled from a gamma-driven scheme, with a cap on the number of
//! flipped class annotations per example.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{default_ids, LabelMatrix, MultiLabelDataset};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub type NoiseMatrix = [[f64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_samples: usize,
    pub n_test: usize,
    /// Vocabulary size.
    pub n_features: usize,
    pub n_classes: usize,
    pub expected_labels_per_example: f64,
    pub expected_doc_length: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn small(seed: u64) -> Self {
        GenConfig {
            n_samples: 5000,
            n_test: 1000,
            n_features: 3,
            n_classes: 4,
            expected_labels_per_example: 2.0,
            expected_doc_length: 500.0,
            seed,
        }
    }

    pub fn large(seed: u64) -> Self {
        GenConfig {
            n_samples: 30000,
            n_test: 7500,
            n_features: 20,
            n_classes: 50,
            expected_labels_per_example: 5.0,
            expected_doc_length: 500.0,
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::param("n_samples", self.n_samples, "must be positive"));
        }
        if self.n_features == 0 {
            return Err(Error::param("n_features", self.n_features, "must be positive"));
        }
        if self.n_classes == 0 {
            return Err(Error::param("n_classes", self.n_classes, "must be positive"));
        }
        let lam = self.expected_labels_per_example;
        if !(lam > 0.0 && lam <= self.n_classes as f64) {
            return Err(Error::param(
                "expected_labels_per_example",
                lam,
                "must be positive and at most n_classes",
            ));
        }
        if !(self.expected_doc_length > 0.0 && self.expected_doc_length.is_finite()) {
            return Err(Error::param(
                "expected_doc_length",
                self.expected_doc_length,
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// Draws a point from the flat Dirichlet on the `d`-simplex.
fn flat_dirichlet(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Multinomial draw via sequential conditional binomials.
fn multinomial(rng: &mut impl Rng, trials: u64, probs: &[f64], out: &mut [f64]) {
    let mut remaining = trials;
    let mut mass = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        if j + 1 == probs.len() {
            out[j] = remaining as f64;
            break;
        }
        let c = if remaining == 0 || p <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(remaining, q).expect("q in [0,1]").sample(rng)
        };
        out[j] = c as f64;
        remaining -= c;
        mass -= p;
    }
}

fn generate(config: &GenConfig, n: usize) -> Result<(LabelMatrix, Matrix<f64>)> {
    config.check()?;
    let (k, d) = (config.n_classes, config.n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let word_dists: Vec<Vec<f64>> = (0..k).map(|_| flat_dirichlet(&mut rng, d)).collect();
    let label_count = Poisson::new(config.expected_labels_per_example)
        .map_err(|_| Error::param("expected_labels_per_example", config.expected_labels_per_example, "invalid Poisson mean"))?;
    let doc_length = Poisson::new(config.expected_doc_length)
        .map_err(|_| Error::param("expected_doc_length", config.expected_doc_length, "invalid Poisson mean"))?;
    let uniform = vec![1.0 / d as f64; d];

    let mut labels: LabelMatrix = Matrix::zeros(n, k);
    let mut features = Matrix::zeros(n, d);
    let mut mixture = vec![0.0; d];
    for i in 0..n {
        let count = loop {
            let c = label_count.sample(&mut rng) as usize;
            if c <= k {
                break c;
            }
        };
        let chosen = index::sample(&mut rng, k, count);
        for c in chosen.iter() {
            labels.set(i, c, 1);
        }

        let words = doc_length.sample(&mut rng) as u64;
        let dist = if count == 0 {
            &uniform
        } else {
            mixture.iter_mut().for_each(|m| *m = 0.0);
            for c in chosen.iter() {
                for (m, &w) in mixture.iter_mut().zip(&word_dists[c]) {
                    *m += w / count as f64;
                }
            }
            &mixture
        };
        multinomial(&mut rng, words, dist, features.row_mut(i));
    }
    Ok((labels, features))
}

/// Generates a clean dataset: `given_labels == true_labels`, with features.
pub fn gen_multilabel(config: &GenConfig) -> Result<MultiLabelDataset> {
    let (labels, features) = generate(config, config.n_samples)?;
    Ok(MultiLabelDataset {
        example_ids: default_ids(config.n_samples),
        true_labels: Some(labels.clone()),
        given_labels: labels,
        features: Some(features),
    })
}

/// Generates `n_samples` training and `n_test` held-out examples from one
/// underlying distribution (shared class word distributions).
pub fn gen_train_test(config: &GenConfig) -> Result<(MultiLabelDataset, MultiLabelDataset)> {
    let n = config.n_samples + config.n_test;
    let (labels, features) = generate(config, n)?;
    let all = MultiLabelDataset {
        example_ids: (0..n)
            .map(|i| {
                if i < config.n_samples {
                    i.to_string()
                } else {
                    format!("test_{}", i - config.n_samples)
                }
            })
            .collect(),
        true_labels: Some(labels.clone()),
        given_labels: labels,
        features: Some(features),
    };
    let train: Vec<usize> = (0..config.n_samples).collect();
    let test: Vec<usize> = (config.n_samples..n).collect();
    Ok((all.select(&train), all.select(&test)))
}

/// Trace of a class noise matrix from its gamma draw `x`, the draw's
/// 1-based ascending rank among all `k` draws.
pub fn trace_from_draw(x: f64, rank: usize, k: usize) -> f64 {
    // draws beyond 1 would push the trace past 2
    let x = x.clamp(0.0, 1.0);
    let kf = k as f64;
    let r = (rank as f64 - 1.0).powi(2);
    let y = (1.0 - x) * (1.0 - (-r / kf).exp() / (2.0 * kf));
    f64::max(2.0 * y, 2.0 - 2.0 * y)
}

/// Traces for pre-drawn gamma values.
pub fn traces_from_draws(draws: &[f64]) -> Vec<f64> {
    let k = draws.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| draws[a].total_cmp(&draws[b]));
    let mut rank = vec![0; k];
    for (pos, &idx) in order.iter().enumerate() {
        rank[idx] = pos + 1;
    }
    draws
        .iter()
        .zip(&rank)
        .map(|(&x, &r)| trace_from_draw(x, r, k))
        .collect()
}

pub fn sample_noise_traces(k: usize, shape: f64, scale: f64, seed: u64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::param("n_classes", k, "must be positive"));
    }
    let gamma = Gamma::new(shape, scale)
        .map_err(|_| Error::param("gamma", format!("({shape}, {scale})"), "shape and scale must be positive"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(&mut rng)).collect();
    Ok(traces_from_draws(&draws))
}

fn check_trace(trace: f64) -> Result<()> {
    if !(trace > 0.0 && trace <= 2.0) {
        return Err(Error::param("trace", trace, "must lie in (0, 2]"));
    }
    Ok(())
}

/// Symmetric 2×2 noise matrix with the given trace: `T/2` on the diagonal.
pub fn build_noise_matrix(trace: f64) -> Result<NoiseMatrix> {
    check_trace(trace)?;
    let d = trace / 2.0;
    Ok([[d, 1.0 - d], [1.0 - d, d]])
}

/// Noise matrix with the given trace and a uniformly random diagonal split.
pub fn build_noise_matrix_asymmetric(trace: f64, rng: &mut impl Rng) -> Result<NoiseMatrix> {
    check_trace(trace)?;
    let lo = (trace - 1.0).max(0.0);
    let hi = trace.min(1.0);
    let d0 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let d1 = trace - d0;
    Ok([[d0, 1.0 - d0], [1.0 - d1, d1]])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceSplit {
    #[default]
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub gamma_shape: f64,
    pub gamma_scale: f64,
    pub max_errors_per_example: usize,
    pub seed: u64,
    pub split: TraceSplit,
    pub traces: Vec<f64>,
    pub matrices: Vec<NoiseMatrix>,
}

impl NoiseSpec {
    /// Unsampled spec with the default gamma(2, 0.01) and a cap of 3 errors.
    pub fn new(seed: u64) -> Self {
        NoiseSpec {
            gamma_shape: 2.0,
            gamma_scale: 0.01,
            max_errors_per_example: 3,
            seed,
            split: TraceSplit::Symmetric,
            traces: Vec::new(),
            matrices: Vec::new(),
        }
    }

    /// Samples traces and builds the per-class matrices for `k` classes.
    pub fn sample(mut self, k: usize) -> Result<Self> {
        self.traces = sample_noise_traces(k, self.gamma_shape, self.gamma_scale, self.seed)?;
        self.matrices = match self.split {
            TraceSplit::Symmetric => self
                .traces
                .iter()
                .map(|&t| build_noise_matrix(t))
                .collect::<Result<_>>()?,
            TraceSplit::Asymmetric => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_a5a5);
                self.traces
                    .iter()
                    .map(|&t| build_noise_matrix_asymmetric(t, &mut rng))
                    .collect::<Result<_>>()?
            }
        };
        Ok(self)
    }
}

/// Flips each class annotation with the off-diagonal probability of its
/// class matrix (row = true label). When an example would receive more than
/// `max_errors` flips, a uniformly random subset of `max_errors` is kept.
pub fn inject_noise(
    true_labels: &LabelMatrix,
    matrices: &[NoiseMatrix],
    max_errors: usize,
    seed: u64,
) -> Result<LabelMatrix> {
    let k = true_labels.n_cols();
    if matrices.len() != k {
        return Err(Error::shape("noise matrices vs classes", k, matrices.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = true_labels.clone();
    let mut proposed = Vec::with_capacity(k);
    for i in 0..true_labels.n_rows() {
        proposed.clear();
        for (class, m) in matrices.iter().enumerate() {
            let b = true_labels.get(i, class) as usize;
            let flip_p = m[b][1 - b];
            if rng.random::<f64>() < flip_p {
                proposed.push(class);
            }
        }
        let row = noisy.row_mut(i);
        if proposed.len() > max_errors {
            for pick in index::sample(&mut rng, proposed.len(), max_errors).iter() {
                row[proposed[pick]] ^= 1;
            }
        } else {
            for &class in &proposed {
                row[class] ^= 1;
            }
        }
    }
    Ok(noisy)
}

/// Applies `spec` (already sampled) to a clean dataset, keeping the truth.
pub fn corrupt(dataset: &MultiLabelDataset, spec: &NoiseSpec) -> Result<MultiLabelDataset> {
    let truth = dataset.true_labels.as_ref().ok_or(Error::MissingTruth)?;
    let seed = crate::derive_seed(spec.seed, 1);
    let noisy = inject_noise(truth, &spec.matrices, spec.max_errors_per_example, seed)?;
    let mut out = dataset.clone();
    out.given_labels = noisy;
    Ok(out)
}
