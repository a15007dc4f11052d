//! Reference predictors and the hidden-feature compactness diagnostic.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::data::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::train::TrainedModel;

pub const LEAST_SQUARES_RIDGE: f64 = 1e-8;

/// Predicts intensity 0 for every frame.
pub fn all_zeros_predictor(samples: &[Sample]) -> Vec<f64> {
    vec![0.0; samples.len()]
}

/// Ridge-regularized linear fit `label ~ a . features + c`, clamped to the label range.
///
/// Features and labels are centered before solving, so the intercept is not
/// penalized and a single training frame yields a constant predictor.
pub fn linear_least_squares_oracle(train: &Dataset, test: &Dataset) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if train.feature_dim() != test.feature_dim() {
        return Err(Error::Shape {
            what: "test feature dimension",
            expected: train.feature_dim(),
            got: test.feature_dim(),
        });
    }
    let d = train.feature_dim();
    let n = train.len() as f64;
    let mut x_mean = DVector::<f64>::zeros(d);
    let mut y_mean = 0.0;
    for s in train.samples() {
        x_mean += DVector::from_column_slice(&s.features);
        y_mean += s.label as f64;
    }
    x_mean /= n;
    y_mean /= n;

    let mut gram = DMatrix::<f64>::identity(d, d) * LEAST_SQUARES_RIDGE;
    let mut rhs = DVector::<f64>::zeros(d);
    for s in train.samples() {
        let xc = DVector::from_column_slice(&s.features) - &x_mean;
        gram.ger(1.0, &xc, &xc, 1.0);
        rhs.axpy(s.label as f64 - y_mean, &xc, 1.0);
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal equations are not positive definite".into()))?;
    let weights = chol.solve(&rhs);
    if weights.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("least-squares solution is not finite".into()));
    }
    let intercept = y_mean - weights.dot(&x_mean);
    let top = (train.num_classes() - 1) as f64;
    Ok(test
        .samples()
        .iter()
        .map(|s| {
            let v: f64 = s.features.iter().zip(weights.iter()).map(|(x, w)| x * w).sum();
            (v + intercept).clamp(0.0, top)
        })
        .collect())
}

/// Expected clamped MAE of an exact linear readout on balanced synthetic data.
///
/// Along the signal direction a class-`k` frame sits at `k + (sigma / spacing) z`
/// with `z ~ N(0, 1)`. Interior classes contribute `E|e| = s sqrt(2/pi)`; the
/// two end classes are clamped on one side and contribute half of that.
pub fn synthetic_noise_floor_mae(noise_sigma: f64, anchor_spacing: f64, num_classes: usize) -> f64 {
    let full = noise_sigma / anchor_spacing * (2.0 / std::f64::consts::PI).sqrt();
    if num_classes < 2 {
        return 0.0;
    }
    full * (num_classes as f64 - 1.0) / num_classes as f64
}

/// Within-class spread of eval-mode hidden features.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactnessReport {
    /// Mean Euclidean distance to the class mean; `None` for absent classes.
    pub per_class: Vec<Option<f64>>,
    /// Mean of the present per-class values.
    pub overall: f64,
}

impl Serialize for CompactnessReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map: BTreeMap<String, Option<f64>> = self
            .per_class
            .iter()
            .enumerate()
            .map(|(k, v)| (k.to_string(), *v))
            .collect();
        map.insert("overall".into(), Some(self.overall));
        map.serialize(serializer)
    }
}

/// Groups hidden features by label and measures their distance to post-hoc class means.
pub fn compactness_diagnostic(model: &TrainedModel, dataset: &Dataset) -> Result<CompactnessReport> {
    let features = dataset
        .samples()
        .iter()
        .map(|s| model.head.hidden(&s.features))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<usize> = dataset.samples().iter().map(|s| s.label).collect();
    feature_compactness(&features, &labels, dataset.num_classes())
}

/// [`compactness_diagnostic`] on precomputed features.
pub fn feature_compactness(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
) -> Result<CompactnessReport> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = features[0].len();
    let mut sums = vec![vec![0.0; dim]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (f, &k) in features.iter().zip(labels) {
        counts[k] += 1;
        sums[k].iter_mut().zip(f).for_each(|(s, v)| *s += v);
    }
    let means: Vec<Vec<f64>> = sums
        .into_iter()
        .zip(&counts)
        .map(|(s, &c)| s.into_iter().map(|v| v / c.max(1) as f64).collect())
        .collect();
    let mut dist = vec![0.0; num_classes];
    for (f, &k) in features.iter().zip(labels) {
        dist[k] += f
            .iter()
            .zip(&means[k])
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|k| (counts[k] > 0).then(|| dist[k] / counts[k] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(CompactnessReport {
        overall: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, LabelProfile, SynthConfig};

    fn sample(label: usize, features: Vec<f64>, frame: u64) -> Sample {
        Sample {
            subject_id: "s".into(),
            sequence_id: "q".into(),
            frame_index: frame,
            features,
            label,
        }
    }

    #[test]
    fn zeros_everywhere() {
        let d = generate_synthetic(&SynthConfig {
            frames_per_subject: 10,
            feature_dim: 3,
            ..Default::default()
        })
        .unwrap();
        let p = all_zeros_predictor(d.samples());
        assert_eq!(p.len(), d.len());
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_recovers_exact_linear_signal() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            frames_per_subject: 60,
            ..Default::default()
        };
        let train = generate_synthetic(&cfg).unwrap();
        let test = generate_synthetic(&SynthConfig { seed: 9, ..cfg }).unwrap();
        let p = linear_least_squares_oracle(&train, &test).unwrap();
        let mae = p
            .iter()
            .zip(test.samples())
            .map(|(p, s)| (p - s.label as f64).abs())
            .sum::<f64>()
            / p.len() as f64;
        assert!(mae < 1e-6, "{mae}");
    }

    #[test]
    fn oracle_single_sample_is_constant() {
        let train = Dataset::new(vec![sample(3, vec![1.0, -2.0], 0)], 2, 6).unwrap();
        let test = Dataset::new(
            vec![sample(0, vec![9.0, 4.0], 0), sample(5, vec![-3.0, 0.5], 1)],
            2,
            6,
        )
        .unwrap();
        let p = linear_least_squares_oracle(&train, &test).unwrap();
        assert!(p.iter().all(|&v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn oracle_output_is_clamped() {
        let cfg = SynthConfig {
            noise_sigma: 2.0,
            frames_per_subject: 120,
            profile: LabelProfile::Balanced,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let p = linear_least_squares_oracle(&d, &d).unwrap();
        assert!(p.iter().all(|&v| (0.0..=5.0).contains(&v)));
    }

    #[test]
    fn compactness_identical_features() {
        let f = vec![vec![1.0, 2.0]; 4];
        let r = feature_compactness(&f, &[0, 0, 3, 3], 6).unwrap();
        assert_eq!(r.overall, 0.0);
        assert_eq!(r.per_class[0], Some(0.0));
        assert_eq!(r.per_class[1], None);
    }

    #[test]
    fn compactness_two_points() {
        let f = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![3.0, 4.0], vec![3.0, 4.0]];
        let r = feature_compactness(&f, &[1, 1, 2, 2], 6).unwrap();
        assert_eq!(r.overall, 0.0);
        let f = vec![vec![0.0, 0.0], vec![2.0, 0.0]];
        let r = feature_compactness(&f, &[0, 0], 6).unwrap();
        assert_eq!(r.per_class[0], Some(1.0));
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["0"], 1.0);
        assert!(json["5"].is_null());
        assert_eq!(json["overall"], 1.0);
    }
}
