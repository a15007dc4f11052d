//! SGD training of the head and the class centers, inference, and the JSON
//! checkpoint format.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::losses::{Centers, LossConfig};
use crate::model::{Activation, ForwardMode, HeadConfig, RegressionHead};
use crate::sampler::{build_class_index, next_balanced_batch, next_uniform_batch, SamplerKind};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CenterInit {
    #[default]
    Zero,
    /// Class means of the hidden features of the first batch.
    FirstBatchMeans,
}

/// Optimization settings. Every field has a default, so `{}` is a valid
/// JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Classical momentum coefficient; `0` is plain SGD.
    pub momentum: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub sampler: SamplerKind,
    pub head: HeadConfig,
    pub center_init: CenterInit,
    /// Iterations between training-log entries.
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            iterations: 5000,
            batch_size: 36,
            momentum: 0.9,
            seed: 0,
            loss: LossConfig::default(),
            sampler: SamplerKind::Balanced,
            head: HeadConfig::default(),
            center_init: CenterInit::Zero,
            log_interval: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be positive".into()));
        }
        self.loss.validate()?;
        self.head.validate()
    }
}

/// Batch-mean losses at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub total: f64,
    pub regression: f64,
    /// Unweighted center loss.
    pub center: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub head: RegressionHead,
    pub centers: Centers,
    pub training_log: Vec<LogEntry>,
    pub config: TrainConfig,
}

/// Runs `config.iterations` minibatch steps on `dataset`.
///
/// Gradients are batch means. Both head parameters and the centers move by
/// the same momentum update. Fails with [`Error::Divergence`] as soon as a
/// batch loss is not finite.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut head = RegressionHead::init(dataset.feature_dim(), config.head, &mut rng)?;
    let hidden_dim = config.head.hidden_dim;
    let mut centers = Centers::zeros(dataset.num_classes(), hidden_dim);

    let index = build_class_index(dataset);
    if config.sampler == SamplerKind::Balanced {
        let present = index.non_empty_classes();
        if present.len() < dataset.num_classes() {
            log::warn!(
                "balanced sampling over {} of {} classes; missing labels are not drawn",
                present.len(),
                dataset.num_classes()
            );
        }
    }

    let samples = dataset.samples();
    let mut velocity = vec![0.0; head.params().len()];
    let mut center_velocity = vec![0.0; centers.values().len()];
    let mut grad = vec![0.0; head.params().len()];
    let mut center_grad = vec![0.0; centers.values().len()];
    let mut log = Vec::new();

    for iteration in 0..config.iterations {
        let batch = match config.sampler {
            SamplerKind::Balanced => next_balanced_batch(&index, config.batch_size, &mut rng)?,
            SamplerKind::Uniform => next_uniform_batch(samples.len(), config.batch_size, &mut rng)?,
        };
        if iteration == 0 && config.center_init == CenterInit::FirstBatchMeans {
            centers = batch_class_means(&head, samples, &batch.positions, dataset.num_classes())?;
        }

        grad.iter_mut().for_each(|g| *g = 0.0);
        center_grad.iter_mut().for_each(|g| *g = 0.0);
        let (mut total, mut regression, mut center) = (0.0, 0.0, 0.0);
        for &p in &batch.positions {
            let sample = &samples[p];
            let diverged = |e: Error| match e {
                Error::NonFinite(_) => Error::Divergence {
                    iteration,
                    loss: f64::NAN,
                },
                other => other,
            };
            let fwd = head
                .forward(&sample.features, ForwardMode::Train(&mut rng))
                .map_err(diverged)?;
            let g = head
                .backward(&fwd.cache, sample.label, &centers, &config.loss)
                .map_err(diverged)?;
            for (acc, v) in grad.iter_mut().zip(&g.params) {
                *acc += v;
            }
            let row = &mut center_grad[g.center_label * hidden_dim..(g.center_label + 1) * hidden_dim];
            for (acc, v) in row.iter_mut().zip(&g.center_row) {
                *acc += v;
            }
            total += g.loss.total;
            regression += g.loss.regression;
            center += g.loss.center;
        }
        let n = batch.len() as f64;
        let (total, regression, center) = (total / n, regression / n, center / n);
        if !total.is_finite() {
            return Err(Error::Divergence {
                iteration,
                loss: total,
            });
        }
        if iteration % config.log_interval == 0 || iteration + 1 == config.iterations {
            log.push(LogEntry {
                iteration,
                total,
                regression,
                center,
            });
        }

        step(head.params_mut(), &mut velocity, &grad, n, config);
        step(centers.values_mut(), &mut center_velocity, &center_grad, n, config);
        if head.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration,
                loss: f64::NAN,
            });
        }
    }

    Ok(TrainedModel {
        head,
        centers,
        training_log: log,
        config: config.clone(),
    })
}

/// `v <- momentum * v + g / n; theta <- theta - lr * v`.
fn step(params: &mut [f64], velocity: &mut [f64], grad_sum: &[f64], n: f64, config: &TrainConfig) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad_sum) {
        *v = config.momentum * *v + g / n;
        *p -= config.learning_rate * *v;
    }
}

fn batch_class_means(
    head: &RegressionHead,
    samples: &[Sample],
    positions: &[usize],
    num_classes: usize,
) -> Result<Centers> {
    let h = head.hidden_dim();
    let mut sums = vec![vec![0.0; h]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for &p in positions {
        let hidden = head.hidden(&samples[p].features)?;
        let label = samples[p].label;
        counts[label] += 1;
        sums[label].iter_mut().zip(&hidden).for_each(|(s, v)| *s += v);
    }
    for (row, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            row.iter_mut().for_each(|v| *v /= c as f64);
        }
    }
    Centers::from_rows(sums)
}

/// Eval-mode predictions in input order.
pub fn predict(model: &TrainedModel, samples: &[Sample]) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| model.head.predict_one(&s.features))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub output_scale: f64,
}

/// On-disk form of a [`TrainedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub dims: CheckpointDims,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub loss: LossConfig,
    pub seed: u64,
    pub hidden_weights: Vec<Vec<f64>>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: f64,
    pub centers: Vec<Vec<f64>>,
    pub train_config: TrainConfig,
    pub training_log: Vec<LogEntry>,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let head = &self.head;
        Checkpoint {
            version: CHECKPOINT_VERSION,
            dims: CheckpointDims {
                input_dim: head.input_dim(),
                hidden_dim: head.hidden_dim(),
                num_classes: self.centers.num_classes(),
                output_scale: head.config().output_scale,
            },
            dropout_rate: head.config().dropout_rate,
            activation: head.config().activation,
            loss: self.config.loss,
            seed: self.config.seed,
            hidden_weights: head.w1_rows(),
            hidden_bias: head.b1().to_vec(),
            output_weights: head.w2().to_vec(),
            output_bias: head.b2(),
            centers: self.centers.rows(),
            train_config: self.config.clone(),
            training_log: self.training_log.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Domain(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        let head_config = HeadConfig {
            hidden_dim: ckpt.dims.hidden_dim,
            dropout_rate: ckpt.dropout_rate,
            activation: ckpt.activation,
            output_scale: ckpt.dims.output_scale,
        };
        let head = RegressionHead::from_parts(
            ckpt.dims.input_dim,
            head_config,
            &ckpt.hidden_weights,
            &ckpt.hidden_bias,
            &ckpt.output_weights,
            ckpt.output_bias,
        )?;
        let centers = Centers::from_rows(ckpt.centers)?;
        if centers.num_classes() != ckpt.dims.num_classes || centers.dim() != ckpt.dims.hidden_dim {
            return Err(Error::Shape {
                what: "centers",
                expected: ckpt.dims.num_classes * ckpt.dims.hidden_dim,
                got: centers.num_classes() * centers.dim(),
            });
        }
        let mut config = ckpt.train_config;
        config.head = head_config;
        config.loss = ckpt.loss;
        config.seed = ckpt.seed;
        Ok(Self {
            head,
            centers,
            training_log: ckpt.training_log,
            config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::report::write_json(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_checkpoint(ckpt)
    }
}
