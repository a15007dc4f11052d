//! The regression head: a hidden fully-connected layer with dropout feeding
//! a scalar output squashed into `(0, S)` by a scaled sigmoid.
//!
//! ```text
//! input (D) -> W1, b1 -> activation -> dropout -> w, b -> S * sigmoid -> pred
//!                             |
//!                             +-> hidden features (center loss acts here)
//! ```
//!
//! Parameters live in one flat vector laid out as `[W1 (H x D, row-major),
//! b1 (H), w (H), b]`, and gradients use the same layout. The center loss is
//! applied to the hidden activations before dropout, which are also the
//! features returned in evaluation mode.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{center_loss_grads, joint_loss, Centers, JointLoss, LossConfig};

pub const DEFAULT_HIDDEN_DIM: usize = 50;
pub const DEFAULT_INPUT_DIM: usize = 512;
pub const DEFAULT_OUTPUT_SCALE: f64 = 5.0;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, v: f64) -> f64 {
        match self {
            Activation::Relu => {
                if v > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Logistic function, evaluated without overflow for any finite `z`.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `S / (1 + exp(-z))`.
pub fn scaled_sigmoid(z: f64, scale: f64) -> f64 {
    scale * sigmoid(z)
}

/// Derivative of [`scaled_sigmoid`] with respect to `z`.
pub fn scaled_sigmoid_grad(z: f64, scale: f64) -> f64 {
    let s = sigmoid(z);
    scale * s * (1.0 - s)
}

/// Structural hyperparameters of a head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub activation: Activation,
    pub output_scale: f64,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self {
            hidden_dim: DEFAULT_HIDDEN_DIM,
            dropout_rate: DEFAULT_DROPOUT,
            activation: Activation::Relu,
            output_scale: DEFAULT_OUTPUT_SCALE,
        }
    }
}

impl HeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} must lie in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::Config("output_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionHead {
    input_dim: usize,
    config: HeadConfig,
    params: Vec<f64>,
    generation: u64,
}

/// Per-unit survivor scale factors: `0` for dropped units, `1 / (1 - rate)` otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn draw<R: Rng + ?Sized>(hidden_dim: usize, rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - rate);
        Self(
            (0..hidden_dim)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect(),
        )
    }
}

pub enum ForwardMode<'a> {
    Eval,
    /// Draws a fresh dropout mask from the generator.
    Train(&'a mut dyn RngCore),
    /// Uses the given mask, e.g. to replay a training pass.
    Masked(&'a DropoutMask),
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    hidden: Vec<f64>,
    mask: Option<DropoutMask>,
    logit: f64,
    pred: f64,
    generation: u64,
}

impl ForwardCache {
    pub fn mask(&self) -> Option<&DropoutMask> {
        self.mask.as_ref()
    }

    pub fn logit(&self) -> f64 {
        self.logit
    }
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub pred: f64,
    /// Activations of the hidden layer before dropout.
    pub hidden: Vec<f64>,
    pub cache: ForwardCache,
}

/// Gradients of the joint loss for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    /// Same layout as [`RegressionHead::params`].
    pub params: Vec<f64>,
    pub center_label: usize,
    /// Gradient with respect to `c_label`; other rows are zero.
    pub center_row: Vec<f64>,
    pub loss: JointLoss,
}

/// Glorot-uniform bound for a layer.
fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl RegressionHead {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, config: HeadConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        let h = config.hidden_dim;
        let mut params = vec![0.0; Self::param_count(input_dim, h)];
        let a1 = glorot(input_dim, h);
        for v in &mut params[..h * input_dim] {
            *v = rng.random_range(-a1..=a1);
        }
        let a2 = glorot(h, 1);
        let w_start = h * input_dim + h;
        for v in &mut params[w_start..w_start + h] {
            *v = rng.random_range(-a2..=a2);
        }
        Ok(Self {
            input_dim,
            config,
            params,
            generation: 0,
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(input_dim: usize, config: HeadConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            input_dim,
            config,
            params: vec![0.0; Self::param_count(input_dim, config.hidden_dim)],
            generation: 0,
        })
    }

    pub fn from_parts(
        input_dim: usize,
        config: HeadConfig,
        w1: &[Vec<f64>],
        b1: &[f64],
        w2: &[f64],
        b2: f64,
    ) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let shape = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(Error::Shape { what, expected, got })
            }
        };
        shape("hidden weight rows", h, w1.len())?;
        for row in w1 {
            shape("hidden weight columns", input_dim, row.len())?;
        }
        shape("hidden bias", h, b1.len())?;
        shape("output weights", h, w2.len())?;
        let mut params: Vec<f64> = w1.iter().flatten().copied().collect();
        params.extend_from_slice(b1);
        params.extend_from_slice(w2);
        params.push(b2);
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("head parameters"));
        }
        Ok(Self {
            input_dim,
            config,
            params,
            generation: 0,
        })
    }

    pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
        hidden_dim * input_dim + 2 * hidden_dim + 1
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let h = self.config.hidden_dim;
        let b1 = h * self.input_dim;
        (b1, b1 + h, b1 + 2 * h)
    }

    pub fn w1_row(&self, j: usize) -> &[f64] {
        &self.params[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn b1(&self) -> &[f64] {
        let (b1, w, _) = self.offsets();
        &self.params[b1..w]
    }

    pub fn w2(&self) -> &[f64] {
        let (_, w, b) = self.offsets();
        &self.params[w..b]
    }

    pub fn b2(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    pub fn w1_rows(&self) -> Vec<Vec<f64>> {
        (0..self.config.hidden_dim)
            .map(|j| self.w1_row(j).to_vec())
            .collect()
    }

    /// Hidden activations, no dropout.
    pub fn hidden(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let (pre, hidden) = self.hidden_layer(input);
        drop(pre);
        Ok(hidden)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim {
            return Err(Error::Shape {
                what: "input features",
                expected: self.input_dim,
                got: input.len(),
            });
        }
        Ok(())
    }

    fn hidden_layer(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b1 = self.b1();
        let pre: Vec<f64> = (0..self.config.hidden_dim)
            .map(|j| {
                let dot: f64 = self.w1_row(j).iter().zip(input).map(|(w, x)| w * x).sum();
                dot + b1[j]
            })
            .collect();
        let hidden = pre.iter().map(|&v| self.config.activation.apply(v)).collect();
        (pre, hidden)
    }

    pub fn forward(&self, input: &[f64], mode: ForwardMode<'_>) -> Result<Forward> {
        self.check_input(input)?;
        let (pre_activation, hidden) = self.hidden_layer(input);
        let rate = self.config.dropout_rate;
        let mask = match mode {
            ForwardMode::Eval => None,
            ForwardMode::Train(_) if rate == 0.0 => None,
            ForwardMode::Train(rng) => Some(DropoutMask::draw(hidden.len(), rate, rng)),
            ForwardMode::Masked(m) => {
                if m.0.len() != hidden.len() {
                    return Err(Error::Shape {
                        what: "dropout mask",
                        expected: hidden.len(),
                        got: m.0.len(),
                    });
                }
                Some(m.clone())
            }
        };
        let w2 = self.w2();
        let logit = self.b2()
            + match &mask {
                Some(m) => hidden
                    .iter()
                    .zip(&m.0)
                    .zip(w2)
                    .map(|((h, k), w)| h * k * w)
                    .sum::<f64>(),
                None => hidden.iter().zip(w2).map(|(h, w)| h * w).sum::<f64>(),
            };
        let pred = scaled_sigmoid(logit, self.config.output_scale);
        Ok(Forward {
            pred,
            hidden: hidden.clone(),
            cache: ForwardCache {
                input: input.to_vec(),
                pre_activation,
                hidden,
                mask,
                logit,
                pred,
                generation: self.generation,
            },
        })
    }

    /// Eval-mode prediction.
    pub fn predict_one(&self, input: &[f64]) -> Result<f64> {
        Ok(self.forward(input, ForwardMode::Eval)?.pred)
    }

    /// Exact gradients of the joint loss for the frame cached by `forward`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        label: usize,
        centers: &Centers,
        config: &LossConfig,
    ) -> Result<HeadGrads> {
        let h = self.config.hidden_dim;
        if cache.generation != self.generation
            || cache.input.len() != self.input_dim
            || cache.hidden.len() != h
        {
            return Err(Error::StaleCache);
        }
        if centers.dim() != h {
            return Err(Error::Shape {
                what: "center dimension",
                expected: h,
                got: centers.dim(),
            });
        }
        let loss = joint_loss(cache.pred, &cache.hidden, label, centers, config)?;
        let dpred = config.regression_grad(cache.pred, label as f64)?;
        let dlogit = dpred * scaled_sigmoid_grad(cache.logit, self.config.output_scale);
        let (center_x, center_c) = center_loss_grads(&cache.hidden, label, centers, config.norm)?;

        let mut grads = vec![0.0; self.params.len()];
        let (b1_off, w2_off, b2_off) = self.offsets();
        let w2 = self.w2();
        for j in 0..h {
            let keep = cache.mask.as_ref().map_or(1.0, |m| m.0[j]);
            grads[w2_off + j] = dlogit * cache.hidden[j] * keep;
            let dhidden = dlogit * w2[j] * keep + config.lambda * center_x[j];
            let dpre = dhidden * self.config.activation.derivative(cache.pre_activation[j]);
            grads[b1_off + j] = dpre;
            if dpre != 0.0 {
                let row = &mut grads[j * self.input_dim..(j + 1) * self.input_dim];
                for (g, x) in row.iter_mut().zip(&cache.input) {
                    *g = dpre * x;
                }
            }
        }
        grads[b2_off] = dlogit;
        Ok(HeadGrads {
            params: grads,
            center_label: label,
            center_row: center_c.iter().map(|g| config.lambda * g).collect(),
            loss,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(dropout_rate: f64, activation: Activation) -> HeadConfig {
        HeadConfig {
            hidden_dim: 5,
            dropout_rate,
            activation,
            output_scale: 5.0,
        }
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(scaled_sigmoid(0.0, 5.0), 2.5);
        assert!((scaled_sigmoid(40.0, 5.0) - 5.0).abs() < 1e-12);
        for z in [-700.0, -40.0, 40.0, 700.0] {
            let v = scaled_sigmoid(z, 5.0);
            assert!(v.is_finite() && (0.0..=5.0).contains(&v));
        }
        for z in [-3.0, -0.2, 0.0, 1.1, 4.0] {
            let h = 1e-5;
            let fd = (scaled_sigmoid(z + h, 5.0) - scaled_sigmoid(z - h, 5.0)) / (2.0 * h);
            assert!((fd - scaled_sigmoid_grad(z, 5.0)).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_head_predicts_midpoint() {
        let head = RegressionHead::zeros(4, config(0.0, Activation::Identity)).unwrap();
        let f = head.forward(&[1.0, -2.0, 3.0, 0.5], ForwardMode::Eval).unwrap();
        assert_eq!(f.pred, 2.5);
        assert!(f.hidden.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_dropout_train_equals_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = RegressionHead::init(7, config(0.0, Activation::Relu), &mut rng).unwrap();
        let x = [0.3, -1.0, 2.0, 0.1, 0.0, -0.7, 1.2];
        let eval = head.forward(&x, ForwardMode::Eval).unwrap();
        let train = head.forward(&x, ForwardMode::Train(&mut rng)).unwrap();
        assert!((eval.pred - train.pred).abs() < 1e-12);
        assert_eq!(eval.hidden, train.hidden);
    }

    #[test]
    fn dropout_mask_is_inverted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = DropoutMask::draw(1000, 0.5, &mut rng);
        assert!(m.0.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.0.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }

    #[test]
    fn shape_errors() {
        let head = RegressionHead::zeros(3, config(0.0, Activation::Relu)).unwrap();
        assert!(matches!(
            head.forward(&[1.0, 2.0], ForwardMode::Eval),
            Err(Error::Shape { .. })
        ));
        let bad = DropoutMask(vec![1.0; 2]);
        assert!(head.forward(&[1.0, 2.0, 3.0], ForwardMode::Masked(&bad)).is_err());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut head = RegressionHead::init(3, config(0.5, Activation::Relu), &mut rng).unwrap();
        let f = head.forward(&[1.0, 2.0, 3.0], ForwardMode::Train(&mut rng)).unwrap();
        let centers = Centers::zeros(6, 5);
        assert!(head.backward(&f.cache, 2, &centers, &LossConfig::default()).is_ok());
        head.params_mut()[0] += 0.1;
        assert!(matches!(
            head.backward(&f.cache, 2, &centers, &LossConfig::default()),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn gradients_vanish_at_joint_minimum() {
        // zero weights, hidden features at the zero center, sigmoid(b2) = 0.6
        let cfg = config(0.0, Activation::Identity);
        let b2 = (3.0f64 / 2.0).ln();
        let head = RegressionHead::from_parts(
            2,
            cfg,
            &vec![vec![0.0; 2]; 5],
            &[0.0; 5],
            &[0.0; 5],
            b2,
        )
        .unwrap();
        let f = head.forward(&[1.0, 1.0], ForwardMode::Eval).unwrap();
        assert!((f.pred - 3.0).abs() < 1e-12);
        let centers = Centers::zeros(6, 5);
        let g = head
            .backward(&f.cache, 3, &centers, &LossConfig::default())
            .unwrap();
        assert!(g.params.iter().all(|v| v.abs() < 1e-12));
        assert!(g.center_row.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lambda_zero_leaves_centers_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let head = RegressionHead::init(3, config(0.5, Activation::Relu), &mut rng).unwrap();
        let f = head.forward(&[1.0, -2.0, 0.5], ForwardMode::Train(&mut rng)).unwrap();
        let loss = LossConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let g = head.backward(&f.cache, 1, &Centers::zeros(6, 5), &loss).unwrap();
        assert!(g.center_row.iter().all(|v| *v == 0.0));
    }
}
