//! Regression losses, the center-loss regularizer and their analytic gradients.
//!
//! The joint per-frame objective is `L = L_R(pred, y) + lambda * L_C(x, c_y)`
//! where `L_R` is either the squared error or the smooth-l1 loss with turning
//! point `t`, and `L_C` is `||x - c_y||_p^p` for `p` in {1, 2}. Batch
//! objectives are means over frames.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CenterNorm {
    #[default]
    L1,
    /// Squared Euclidean distance.
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RegressionKind {
    Mse,
    #[default]
    SmoothL1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Turning point between the quadratic and linear pieces of smooth-l1.
    pub t: f64,
    /// Weight of the center loss.
    pub lambda: f64,
    pub norm: CenterNorm,
    pub kind: RegressionKind,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            lambda: 0.01,
            norm: CenterNorm::L1,
            kind: RegressionKind::SmoothL1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return Err(Error::Config(format!("turning point t = {} must be >= 0", self.t)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda = {} must be >= 0", self.lambda)));
        }
        Ok(())
    }

    pub fn regression_loss(&self, pred: f64, label: f64) -> Result<f64> {
        match self.kind {
            RegressionKind::Mse => mse_loss(pred, label),
            RegressionKind::SmoothL1 => smooth_l1_loss(pred, label, self.t),
        }
    }

    /// d L_R / d pred.
    pub fn regression_grad(&self, pred: f64, label: f64) -> Result<f64> {
        match self.kind {
            RegressionKind::Mse => mse_grad(pred, label),
            RegressionKind::SmoothL1 => smooth_l1_grad(pred, label, self.t),
        }
    }
}

/// One learnable center per class, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centers {
    num_classes: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Centers {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            values: vec![0.0; num_classes * dim],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_classes = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Shape {
                what: "center row",
                expected: dim,
                got: bad.len(),
            });
        }
        let values: Vec<f64> = rows.into_iter().flatten().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("centers"));
        }
        Ok(Self {
            num_classes,
            dim,
            values,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.dim.max(1)).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn checked_row(&self, x: &[f64], label: usize) -> Result<&[f64]> {
        if label >= self.num_classes {
            return Err(Error::Domain(format!(
                "label {label} outside [0, {}]",
                self.num_classes.saturating_sub(1)
            )));
        }
        if x.len() != self.dim {
            return Err(Error::Shape {
                what: "feature vector",
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self.row(label))
    }
}

fn check_pair(pred: f64, label: f64) -> Result<()> {
    ensure_finite(pred, "prediction")?;
    ensure_finite(label, "label")?;
    Ok(())
}

/// Sign with `sign(0) = 0`.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mse_loss(pred: f64, label: f64) -> Result<f64> {
    check_pair(pred, label)?;
    let e = pred - label;
    Ok(e * e)
}

pub fn mse_grad(pred: f64, label: f64) -> Result<f64> {
    check_pair(pred, label)?;
    Ok(2.0 * (pred - label))
}

/// `0.5 e^2` below the turning point `t`, `e - t + 0.5 t^2` from `t` on.
pub fn smooth_l1_loss(pred: f64, label: f64, t: f64) -> Result<f64> {
    check_pair(pred, label)?;
    ensure_finite(t, "turning point")?;
    let e = (pred - label).abs();
    Ok(if e < t { 0.5 * e * e } else { e - t + 0.5 * t * t })
}

/// Derivative of [`smooth_l1_loss`] with respect to `pred`.
///
/// At `|e| == t` the linear piece is used.
pub fn smooth_l1_grad(pred: f64, label: f64, t: f64) -> Result<f64> {
    check_pair(pred, label)?;
    ensure_finite(t, "turning point")?;
    let d = pred - label;
    Ok(if d.abs() < t { d } else { sign(d) })
}

/// `||x - c_label||_1` or `||x - c_label||_2^2`.
pub fn center_loss(x: &[f64], label: usize, centers: &Centers, norm: CenterNorm) -> Result<f64> {
    let c = centers.checked_row(x, label)?;
    let diffs = x.iter().zip(c).map(|(a, b)| a - b);
    Ok(match norm {
        CenterNorm::L1 => diffs.map(f64::abs).sum(),
        CenterNorm::L2 => diffs.map(|d| d * d).sum(),
    })
}

/// Gradients of [`center_loss`] with respect to `x` and to `c_label`.
///
/// Every other center row has zero gradient. The l1 subgradient at a zero
/// component is 0.
pub fn center_loss_grads(
    x: &[f64],
    label: usize,
    centers: &Centers,
    norm: CenterNorm,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = centers.checked_row(x, label)?;
    let grad_x: Vec<f64> = x
        .iter()
        .zip(c)
        .map(|(a, b)| match norm {
            CenterNorm::L1 => sign(a - b),
            CenterNorm::L2 => 2.0 * (a - b),
        })
        .collect();
    let grad_c = grad_x.iter().map(|g| -g).collect();
    Ok((grad_x, grad_c))
}

/// Per-frame joint objective and its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub total: f64,
    pub regression: f64,
    /// Unweighted center loss `L_C`.
    pub center: f64,
    /// `lambda * L_C`; `total == regression + weighted_center`.
    pub weighted_center: f64,
}

pub fn joint_loss(
    pred: f64,
    x: &[f64],
    label: usize,
    centers: &Centers,
    config: &LossConfig,
) -> Result<JointLoss> {
    let regression = config.regression_loss(pred, label as f64)?;
    let center = center_loss(x, label, centers, config.norm)?;
    let weighted_center = config.lambda * center;
    Ok(JointLoss {
        total: regression + weighted_center,
        regression,
        center,
        weighted_center,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn centers_with(row: usize, values: &[f64]) -> Centers {
        let mut c = Centers::zeros(6, values.len());
        c.row_mut(row).copy_from_slice(values);
        c
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(2.5, 2.5).unwrap(), 0.0);
        assert_eq!(mse_loss(3.0, 1.0).unwrap(), 4.0);
        assert_eq!(mse_loss(1.3, -0.4).unwrap(), mse_loss(-0.4, 1.3).unwrap());
        assert!(matches!(mse_loss(f64::NAN, 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1_loss(2.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(smooth_l1_loss(3.0, 2.0, 1.0).unwrap(), 0.5);
        assert_eq!(smooth_l1_loss(4.0, 1.0, 1.0).unwrap(), 2.5);
        for e in [0.0, 0.3, 1.7, 4.0] {
            assert_eq!(smooth_l1_loss(e, 0.0, 0.0).unwrap(), e);
        }
        assert!(smooth_l1_loss(f64::INFINITY, 0.0, 1.0).is_err());
    }

    #[test]
    fn smooth_l1_grad_examples() {
        assert_eq!(smooth_l1_grad(1.5, 1.5, 1.0).unwrap(), 0.0);
        assert_eq!(smooth_l1_grad(4.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(smooth_l1_grad(-2.0, 1.0, 1.0).unwrap(), -1.0);
        assert_eq!(smooth_l1_grad(1.4, 1.0, 1.0).unwrap(), 1.4 - 1.0);
        // boundary takes the linear piece
        assert_eq!(smooth_l1_grad(2.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(smooth_l1_grad(1.0, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn center_loss_examples() {
        let c = centers_with(2, &[1.0, 1.0]);
        assert_eq!(center_loss(&[1.0, 1.0], 2, &c, CenterNorm::L1).unwrap(), 0.0);
        assert_eq!(center_loss(&[1.0, 1.0], 2, &c, CenterNorm::L2).unwrap(), 0.0);
        assert_eq!(center_loss(&[4.0, 5.0], 2, &c, CenterNorm::L2).unwrap(), 25.0);
        let c3 = centers_with(0, &[0.0, 0.0, 0.0]);
        assert_eq!(center_loss(&[1.0, -2.0, 0.0], 0, &c3, CenterNorm::L1).unwrap(), 3.0);
    }

    #[test]
    fn center_loss_errors() {
        let c = Centers::zeros(6, 2);
        assert!(matches!(
            center_loss(&[1.0], 0, &c, CenterNorm::L1),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            center_loss(&[1.0, 1.0], 6, &c, CenterNorm::L1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn center_grad_examples() {
        let c = centers_with(1, &[1.0, -1.0]);
        let (gx, gc) = center_loss_grads(&[1.0, -1.0], 1, &c, CenterNorm::L1).unwrap();
        assert_eq!(gx, vec![0.0, 0.0]);
        assert!(gc.iter().all(|v| *v == 0.0));
        let (gx, gc) = center_loss_grads(&[4.0, 3.0], 1, &c, CenterNorm::L2).unwrap();
        assert_eq!(gx, vec![6.0, 8.0]);
        assert_eq!(gc, vec![-6.0, -8.0]);
        let (gx, gc) = center_loss_grads(&[0.0, 3.0], 1, &c, CenterNorm::L1).unwrap();
        assert_eq!(gx, vec![-1.0, 1.0]);
        assert_eq!(gc, vec![1.0, -1.0]);
    }

    #[test]
    fn joint_examples() {
        let c = centers_with(3, &[0.0, 0.0]);
        let off = LossConfig {
            lambda: 0.0,
            ..Default::default()
        };
        let j = joint_loss(1.0, &[5.0, 2.0], 3, &c, &off).unwrap();
        assert_eq!(j.total, j.regression);
        let on = LossConfig::default();
        let j = joint_loss(1.0, &[0.0, 0.0], 3, &c, &on).unwrap();
        assert_eq!(j.total, j.regression);
        // e = 1 sits on the linear piece: 1 - 1 + 0.5
        let l2 = LossConfig {
            norm: CenterNorm::L2,
            ..Default::default()
        };
        let j = joint_loss(4.0, &[3.0, 4.0], 3, &c, &l2).unwrap();
        assert_eq!(j.regression, 0.5);
        assert_eq!(j.center, 25.0);
        assert!((j.total - 0.75).abs() < 1e-15);
        assert_eq!(j.total, j.regression + j.weighted_center);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        let bad = LossConfig {
            t: -1.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let json = serde_json::to_string(&LossConfig::default()).unwrap();
        assert_eq!(json, r#"{"t":1.0,"lambda":0.01,"norm":"l1","kind":"smooth-l1"}"#);
        let partial: LossConfig = serde_json::from_str(r#"{"lambda":0}"#).unwrap();
        assert_eq!(partial.lambda, 0.0);
        assert_eq!(partial.t, 1.0);
    }
}
