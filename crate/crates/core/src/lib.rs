//! Regression of discrete-valued intensity labels from per-frame feature vectors.
//!
//! A small fully connected head maps a feature vector to a score in
//! `[0, 5]`. Training minimizes a smooth-ℓ1 regression loss plus a center
//! loss that pulls hidden activations toward a learned per-class center.
//! Batches can be drawn class-balanced, and evaluation reports weighted
//! MAE/MSE that give each intensity level equal weight.
//!
//! ```
//! use painreg::{generate_synthetic, run_loso, LosoConfig, SynthConfig};
//!
//! let data = generate_synthetic(&SynthConfig {
//!     num_subjects: 3,
//!     frames_per_subject: 24,
//!     feature_dim: 4,
//!     ..Default::default()
//! })?;
//! let mut config = LosoConfig::default();
//! config.train.iterations = 50;
//! let outcome = run_loso(&data, &config)?;
//! let agg = outcome.aggregate().unwrap();
//! println!("wMAE {:.3} vs all-zeros {:.3}", agg.pooled.wmae, agg.baseline_all_zeros.wmae);
//! # Ok::<(), painreg::Error>(())
//! ```

pub mod baselines;
pub mod cli;
pub mod crossval;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod report;
pub mod sampler;
pub mod train;

pub use baselines::{all_zeros_predictor, compactness_diagnostic, linear_least_squares_oracle, CompactnessReport};
pub use crossval::{make_loso_folds, run_loso, run_loso_with_folds, write_loso_outputs, DedupScope, LosoConfig, LosoOutcome};
pub use data::{
    deduplicate, generate_synthetic, load_dataset, quantize_label, Dataset, LabelProfile, QuantizationMap, Sample,
    SynthConfig,
};
pub use error::{Error, ErrorKind, Result};
pub use losses::{joint_loss, CenterNorm, Centers, LossConfig, RegressionKind};
pub use metrics::{evaluate, weighted_metrics, Aggregation, LabeledPrediction, MetricsReport};
pub use model::{Activation, HeadConfig, RegressionHead};
pub use sampler::SamplerKind;
pub use train::{predict, train, TrainConfig, TrainedModel};
