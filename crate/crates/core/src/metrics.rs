//! Evaluation metrics.
//!
//! Unweighted MAE and MSE are averaged per sequence and then across
//! sequences by default ([`Aggregation::PerSequenceMean`]); PCC is computed
//! per sequence and averaged over the sequences where it is defined. The
//! weighted variants pool all frames, take the error per ground-truth class
//! and average over the classes present, so a class's weight does not
//! depend on how many frames it has.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{format_float, Sample};
use crate::error::{Error, Result};

/// One evaluated frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPrediction {
    pub subject_id: String,
    pub sequence_id: String,
    pub frame_index: u64,
    pub prediction: f64,
    pub label: usize,
}

impl LabeledPrediction {
    pub fn new(sample: &Sample, prediction: f64) -> Self {
        Self {
            subject_id: sample.subject_id.clone(),
            sequence_id: sample.sequence_id.clone(),
            frame_index: sample.frame_index,
            prediction,
            label: sample.label,
        }
    }

    fn error(&self) -> f64 {
        self.prediction - self.label as f64
    }
}

/// Pairs samples with predictions, in order.
pub fn label_predictions(samples: &[Sample], predictions: &[f64]) -> Result<Vec<LabeledPrediction>> {
    if samples.len() != predictions.len() {
        return Err(Error::Shape {
            what: "predictions",
            expected: samples.len(),
            got: predictions.len(),
        });
    }
    samples
        .iter()
        .zip(predictions)
        .map(|(s, &p)| {
            if p.is_finite() {
                Ok(LabeledPrediction::new(s, p))
            } else {
                Err(Error::NonFinite("prediction"))
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean within each (subject, sequence), then mean across sequences.
    #[default]
    PerSequenceMean,
    /// Mean over all frames.
    Pooled,
}

fn non_empty(preds: &[LabeledPrediction]) -> Result<()> {
    if preds.is_empty() {
        Err(Error::Domain("cannot evaluate an empty prediction list".into()))
    } else {
        Ok(())
    }
}

fn by_sequence(preds: &[LabeledPrediction]) -> BTreeMap<(&str, &str), Vec<&LabeledPrediction>> {
    let mut groups: BTreeMap<(&str, &str), Vec<&LabeledPrediction>> = BTreeMap::new();
    for p in preds {
        groups
            .entry((p.subject_id.as_str(), p.sequence_id.as_str()))
            .or_default()
            .push(p);
    }
    groups
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn aggregate_error(
    preds: &[LabeledPrediction],
    aggregation: Aggregation,
    per_frame: impl Fn(f64) -> f64 + Copy,
) -> Result<f64> {
    non_empty(preds)?;
    Ok(match aggregation {
        Aggregation::Pooled => mean(preds.iter().map(|p| per_frame(p.error()))),
        Aggregation::PerSequenceMean => mean(
            by_sequence(preds)
                .values()
                .map(|frames| mean(frames.iter().map(|p| per_frame(p.error())))),
        ),
    })
}

pub fn mae(preds: &[LabeledPrediction], aggregation: Aggregation) -> Result<f64> {
    aggregate_error(preds, aggregation, f64::abs)
}

pub fn mse(preds: &[LabeledPrediction], aggregation: Aggregation) -> Result<f64> {
    aggregate_error(preds, aggregation, |e| e * e)
}

/// Mean per-sequence Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PccSummary {
    /// `None` when every sequence was excluded.
    pub value: Option<f64>,
    pub included: usize,
    /// Sequences where predictions or labels are constant.
    pub excluded: usize,
}

fn is_constant(values: impl IntoIterator<Item = f64>) -> bool {
    let mut it = values.into_iter();
    match it.next() {
        Some(first) => it.all(|v| v == first),
        None => true,
    }
}

/// Pearson correlation of two equal-length series; `None` if either is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    debug_assert_eq!(x.len(), y.len());
    if is_constant(x.iter().copied()) || is_constant(y.iter().copied()) {
        return None;
    }
    let mx = mean(x.iter().copied());
    let my = mean(y.iter().copied());
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        return None;
    }
    Some((sxy / denom).clamp(-1.0, 1.0))
}

pub fn pcc(preds: &[LabeledPrediction]) -> Result<PccSummary> {
    non_empty(preds)?;
    let mut values = Vec::new();
    let mut excluded = 0;
    for frames in by_sequence(preds).values() {
        let p: Vec<f64> = frames.iter().map(|f| f.prediction).collect();
        let l: Vec<f64> = frames.iter().map(|f| f.label as f64).collect();
        match pearson(&p, &l) {
            Some(r) => values.push(r),
            None => excluded += 1,
        }
    }
    Ok(PccSummary {
        value: (!values.is_empty()).then(|| mean(values.iter().copied())),
        included: values.len(),
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: usize,
    pub frames: usize,
    /// `None` for classes absent from the evaluation set.
    pub mae: Option<f64>,
    pub mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub wmae: f64,
    pub wmse: f64,
    pub per_class: Vec<ClassMetrics>,
    pub missing_classes: Vec<usize>,
}

/// Class-averaged MAE and MSE over pooled frames.
pub fn weighted_metrics(preds: &[LabeledPrediction], num_classes: usize) -> Result<WeightedMetrics> {
    non_empty(preds)?;
    let mut abs = vec![0.0; num_classes];
    let mut sq = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for p in preds {
        if p.label >= num_classes {
            return Err(Error::Domain(format!(
                "label {} outside [0, {}]",
                p.label,
                num_classes - 1
            )));
        }
        let e = p.error();
        abs[p.label] += e.abs();
        sq[p.label] += e * e;
        counts[p.label] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..num_classes)
        .map(|k| {
            let n = counts[k];
            ClassMetrics {
                label: k,
                frames: n,
                mae: (n > 0).then(|| abs[k] / n as f64),
                mse: (n > 0).then(|| sq[k] / n as f64),
            }
        })
        .collect();
    let missing_classes = (0..num_classes).filter(|&k| counts[k] == 0).collect();
    Ok(WeightedMetrics {
        wmae: mean(per_class.iter().filter_map(|c| c.mae)),
        wmse: mean(per_class.iter().filter_map(|c| c.mse)),
        per_class,
        missing_classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub subject_id: String,
    pub sequence_id: String,
    pub frames: usize,
    pub mae: f64,
    pub mse: f64,
    pub pcc: Option<f64>,
}

/// Every metric for one evaluation set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub aggregation: Aggregation,
    pub frames: usize,
    pub mae: f64,
    pub mse: f64,
    pub pcc: Option<f64>,
    pub pcc_included_count: usize,
    pub pcc_excluded_count: usize,
    pub wmae: f64,
    pub wmse: f64,
    pub per_class: Vec<ClassMetrics>,
    pub missing_classes: Vec<usize>,
    pub per_sequence: Vec<SequenceMetrics>,
}

pub fn evaluate(
    preds: &[LabeledPrediction],
    num_classes: usize,
    aggregation: Aggregation,
) -> Result<MetricsReport> {
    let pcc_summary = pcc(preds)?;
    let weighted = weighted_metrics(preds, num_classes)?;
    let per_sequence = by_sequence(preds)
        .into_iter()
        .map(|((subject, sequence), frames)| {
            let p: Vec<f64> = frames.iter().map(|f| f.prediction).collect();
            let l: Vec<f64> = frames.iter().map(|f| f.label as f64).collect();
            SequenceMetrics {
                subject_id: subject.to_string(),
                sequence_id: sequence.to_string(),
                frames: frames.len(),
                mae: mean(frames.iter().map(|f| f.error().abs())),
                mse: mean(frames.iter().map(|f| f.error().powi(2))),
                pcc: pearson(&p, &l),
            }
        })
        .collect();
    Ok(MetricsReport {
        aggregation,
        frames: preds.len(),
        mae: mae(preds, aggregation)?,
        mse: mse(preds, aggregation)?,
        pcc: pcc_summary.value,
        pcc_included_count: pcc_summary.included,
        pcc_excluded_count: pcc_summary.excluded,
        wmae: weighted.wmae,
        wmse: weighted.wmse,
        per_class: weighted.per_class,
        missing_classes: weighted.missing_classes,
        per_sequence,
    })
}

/// Writes `subject_id,sequence_id,frame_index,label,prediction` rows.
pub fn write_predictions_csv<W: Write>(writer: W, preds: &[LabeledPrediction]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(["subject_id", "sequence_id", "frame_index", "label", "prediction"])?;
    for p in preds {
        w.write_record([
            p.subject_id.clone(),
            p.sequence_id.clone(),
            p.frame_index.to_string(),
            p.label.to_string(),
            format_float(p.prediction),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}
