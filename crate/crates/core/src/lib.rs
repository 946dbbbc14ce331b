//! Label error detection for multi-label classification data.
//!
//! Given the annotated labels of a multi-label dataset and out-of-sample
//! predicted class probabilities from any classifier, this crate
//!
//! * flags examples whose annotation is likely wrong by running Confident
//!   Learning separately for every class and taking the union
//!   ([`confident`]), and
//! * ranks examples by a single label-quality score obtained by pooling
//!   per-class self-confidence scores ([`scoring`]), with exponential moving
//!   average pooling as the recommended default.
//!
//! A synthetic benchmark ([`synth`], [`model`], [`eval`], [`bench`])
//! generates noisy bag-of-words datasets with known ground truth, produces
//! cross-validated logistic-regression probabilities, and compares poolers
//! with ranking metrics.
//!
//! ```
//! use mlqc::matrix::Matrix;
//! use mlqc::scoring::{score_examples, PoolingMethod};
//!
//! let labels = Matrix::from_rows(&[[1u8, 0], [0, 1]]).unwrap();
//! let probs = Matrix::from_rows(&[[0.9, 0.2], [0.1, 0.05]]).unwrap();
//! let scores = score_examples(&labels, &probs, PoolingMethod::Ema { alpha: 0.8 }).unwrap();
//! assert!(scores.values[1] < scores.values[0]);
//! ```

pub mod bench;
pub mod confident;
pub mod data;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod scoring;
pub mod synth;

pub use error::{Error, Result};

/// Derives an independent stream seed from a base seed (splitmix64 mix).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
