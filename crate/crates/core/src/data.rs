//! Frame-level datasets: CSV ingestion, label quantization, run-length
//! de-duplication and a synthetic generator with a linearly decodable
//! intensity signal.
//!
//! The CSV layout is
//!
//! ```text
//! subject_id,sequence_id,frame_index,label,f0,...,f{D-1}
//! ```
//!
//! with one frame per row. Within a `(subject_id, sequence_id)` pair the
//! frame indices must be strictly increasing in file order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of intensity levels after quantization (0 = no pain .. 5 = severe).
pub const DEFAULT_NUM_CLASSES: usize = 6;

/// Largest value on the raw self-report scale.
pub const RAW_SCALE_MAX: u32 = 15;

/// Fraction of zero-intensity frames in the imbalanced synthetic profile.
pub const IMBALANCED_ZERO_FRACTION: f64 = 0.9135;

/// Default maximal run length kept in full by [`deduplicate`].
pub const DEFAULT_RUN_THRESHOLD: usize = 5;

const HEADER_PREFIX: [&str; 4] = ["subject_id", "sequence_id", "frame_index", "label"];
const ANCHOR_SEED: u64 = 0x005e_eda7_c40f_1a6e;

/// One video frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub subject_id: String,
    pub sequence_id: String,
    pub frame_index: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

/// An ordered collection of frames sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    feature_dim: usize,
    num_classes: usize,
}

type SequenceKey = (String, String);

/// Tracks key uniqueness and frame ordering while rows are appended.
#[derive(Default)]
struct KeyTracker {
    seen: HashSet<(String, String, u64)>,
    last_frame: HashMap<SequenceKey, u64>,
}

enum KeyViolation {
    Duplicate,
    OutOfOrder { previous: u64 },
}

impl KeyTracker {
    fn push(&mut self, sample: &Sample) -> std::result::Result<(), KeyViolation> {
        let key = (
            sample.subject_id.clone(),
            sample.sequence_id.clone(),
            sample.frame_index,
        );
        if self.seen.contains(&key) {
            return Err(KeyViolation::Duplicate);
        }
        let seq = (sample.subject_id.clone(), sample.sequence_id.clone());
        if let Some(&previous) = self.last_frame.get(&seq) {
            if sample.frame_index <= previous {
                return Err(KeyViolation::OutOfOrder { previous });
            }
        }
        self.last_frame.insert(seq, sample.frame_index);
        self.seen.insert(key);
        Ok(())
    }
}

fn check_sample_shape(sample: &Sample, feature_dim: usize, num_classes: usize) -> std::result::Result<(), String> {
    if sample.features.len() != feature_dim {
        return Err(format!(
            "expected {feature_dim} features, got {}",
            sample.features.len()
        ));
    }
    if let Some(j) = sample.features.iter().position(|v| !v.is_finite()) {
        return Err(format!("feature f{j} is not finite"));
    }
    if sample.label >= num_classes {
        return Err(format!(
            "label {} outside [0, {}]",
            sample.label,
            num_classes - 1
        ));
    }
    Ok(())
}

impl Dataset {
    /// Builds a dataset, checking every sample invariant.
    pub fn new(samples: Vec<Sample>, feature_dim: usize, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Domain("num_classes must be positive".into()));
        }
        let mut tracker = KeyTracker::default();
        for (i, sample) in samples.iter().enumerate() {
            check_sample_shape(sample, feature_dim, num_classes)
                .map_err(|m| Error::Domain(format!("sample {i}: {m}")))?;
            tracker.push(sample).map_err(|v| match v {
                KeyViolation::Duplicate => Error::Domain(format!(
                    "sample {i}: duplicate key ({}, {}, {})",
                    sample.subject_id, sample.sequence_id, sample.frame_index
                )),
                KeyViolation::OutOfOrder { previous } => Error::Domain(format!(
                    "sample {i}: frame {} follows frame {previous} in sequence ({}, {})",
                    sample.frame_index, sample.subject_id, sample.sequence_id
                )),
            })?;
        }
        Ok(Self {
            samples,
            feature_dim,
            num_classes,
        })
    }

    pub fn empty(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            samples: Vec::new(),
            feature_dim,
            num_classes,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of frames per label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Distinct subject ids in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.samples.iter().map(|s| s.subject_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// The samples at `positions`, in the given order.
    ///
    /// Positions must be increasing so the frame-order invariant carries over.
    pub fn subset(&self, positions: &[usize]) -> Self {
        debug_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        Self {
            samples: positions.iter().map(|&p| self.samples[p].clone()).collect(),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }

    /// Keeps the samples for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(&Sample) -> bool) -> Self {
        Self {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }

    /// Serializes the dataset in the feature CSV format.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let mut header: Vec<String> = HEADER_PREFIX.iter().map(|s| s.to_string()).collect();
        header.extend((0..self.feature_dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(4 + self.feature_dim);
        for s in &self.samples {
            record.clear();
            record.push(s.subject_id.clone());
            record.push(s.sequence_id.clone());
            record.push(s.frame_index.to_string());
            record.push(s.label.to_string());
            record.extend(s.features.iter().map(|v| format_float(*v)));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Shortest decimal representation that round-trips.
pub(crate) fn format_float(v: f64) -> String {
    // `{}` on f64 is the shortest round-trip form and platform independent.
    let s = format!("{v}");
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

/// Reads a feature CSV with `num_classes` intensity levels.
pub fn read_dataset<R: Read>(reader: R, feature_dim: usize, num_classes: usize) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    let expected_cols = 4 + feature_dim;
    match records.next() {
        None => return Ok(Dataset::empty(feature_dim, num_classes)),
        Some(header) => {
            let header = header?;
            let ok = header.len() == expected_cols
                && header.iter().take(4).eq(HEADER_PREFIX.iter().copied())
                && header
                    .iter()
                    .skip(4)
                    .enumerate()
                    .all(|(j, name)| name == format!("f{j}"));
            if !ok {
                return Err(Error::Parse {
                    line: 1,
                    message: format!(
                        "header must be subject_id,sequence_id,frame_index,label,f0..f{}",
                        feature_dim.saturating_sub(1)
                    ),
                });
            }
        }
    }

    let mut samples = Vec::new();
    let mut tracker = KeyTracker::default();
    for record in records {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |message: String| Error::Parse { line, message };
        if record.len() != expected_cols {
            return Err(parse_err(format!(
                "expected {expected_cols} columns, got {}",
                record.len()
            )));
        }
        let frame_index: u64 = record[2]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid frame_index {:?}", &record[2])))?;
        let label: i64 = record[3]
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("invalid label {:?}", &record[3])))?;
        if label < 0 || label as usize >= num_classes {
            return Err(parse_err(format!(
                "label {label} outside [0, {}]",
                num_classes - 1
            )));
        }
        let mut features = Vec::with_capacity(feature_dim);
        for (j, field) in record.iter().skip(4).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid feature f{j} {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("feature f{j} is not finite")));
            }
            features.push(v);
        }
        let sample = Sample {
            subject_id: record[0].to_string(),
            sequence_id: record[1].to_string(),
            frame_index,
            features,
            label: label as usize,
        };
        tracker.push(&sample).map_err(|v| match v {
            KeyViolation::Duplicate => Error::DuplicateKey {
                line,
                subject_id: sample.subject_id.clone(),
                sequence_id: sample.sequence_id.clone(),
                frame_index,
            },
            KeyViolation::OutOfOrder { previous } => parse_err(format!(
                "frame_index {frame_index} does not follow {previous} within its sequence"
            )),
        })?;
        samples.push(sample);
    }
    Ok(Dataset {
        samples,
        feature_dim,
        num_classes,
    })
}

/// Loads a feature CSV with the default six intensity levels.
pub fn load_dataset(path: impl AsRef<Path>, feature_dim: usize) -> Result<Dataset> {
    load_dataset_with_classes(path, feature_dim, DEFAULT_NUM_CLASSES)
}

pub fn load_dataset_with_classes(
    path: impl AsRef<Path>,
    feature_dim: usize,
    num_classes: usize,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), feature_dim, num_classes)
}

/// Feature dimension implied by a CSV header.
pub fn infer_feature_dim(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    match rdr.records().next() {
        Some(header) => {
            let header = header?;
            if header.len() < 4 || !header.iter().take(4).eq(HEADER_PREFIX.iter().copied()) {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing subject_id,sequence_id,frame_index,label header".into(),
                });
            }
            Ok(header.len() - 4)
        }
        None => Err(Error::Parse {
            line: 1,
            message: "empty file".into(),
        }),
    }
}

/// Maps the raw 0..=15 self-report scale onto the quantized intensity scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct QuantizationMap([u32; RAW_SCALE_MAX as usize + 1]);

impl QuantizationMap {
    /// Builds a map after checking it is total and monotone nondecreasing.
    pub fn new(table: [u32; RAW_SCALE_MAX as usize + 1]) -> Result<Self> {
        if table.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain(
                "quantization map must be monotone nondecreasing".into(),
            ));
        }
        Ok(Self(table))
    }

    pub fn table(&self) -> &[u32; RAW_SCALE_MAX as usize + 1] {
        &self.0
    }

    /// Largest quantized value the map produces.
    pub fn max_level(&self) -> u32 {
        self.0[RAW_SCALE_MAX as usize]
    }
}

impl Default for QuantizationMap {
    /// 0..=3 map to themselves, 4 and 5 map to 4, everything from 6 up maps to 5.
    fn default() -> Self {
        Self([0, 1, 2, 3, 4, 4, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5])
    }
}

impl TryFrom<Vec<u32>> for QuantizationMap {
    type Error = Error;

    fn try_from(v: Vec<u32>) -> Result<Self> {
        let table: [u32; RAW_SCALE_MAX as usize + 1] = v.try_into().map_err(|v: Vec<u32>| {
            Error::Domain(format!(
                "quantization map needs {} entries, got {}",
                RAW_SCALE_MAX + 1,
                v.len()
            ))
        })?;
        Self::new(table)
    }
}

impl From<QuantizationMap> for Vec<u32> {
    fn from(m: QuantizationMap) -> Self {
        m.0.to_vec()
    }
}

pub fn quantize_label(raw: i64, map: &QuantizationMap) -> Result<usize> {
    if !(0..=RAW_SCALE_MAX as i64).contains(&raw) {
        return Err(Error::Domain(format!(
            "raw intensity {raw} outside [0, {RAW_SCALE_MAX}]"
        )));
    }
    Ok(map.0[raw as usize] as usize)
}

/// Collapses long constant-label runs to their first frame.
///
/// Runs are maximal stretches of consecutive frames (in dataset order)
/// within one `(subject, sequence)` that share a label. A run longer than
/// `run_threshold` keeps only its first frame; shorter runs are kept whole.
pub fn deduplicate(dataset: &Dataset, run_threshold: usize) -> Dataset {
    let keep = dedup_keep_mask(dataset.samples(), run_threshold);
    let positions: Vec<usize> = keep
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect();
    dataset.subset(&positions)
}

fn dedup_keep_mask(samples: &[Sample], run_threshold: usize) -> Vec<bool> {
    let mut groups: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups
            .entry((s.subject_id.as_str(), s.sequence_id.as_str()))
            .or_default()
            .push(i);
    }
    let mut keep = vec![true; samples.len()];
    for positions in groups.values() {
        let mut start = 0;
        while start < positions.len() {
            let label = samples[positions[start]].label;
            let mut end = start + 1;
            while end < positions.len() && samples[positions[end]].label == label {
                end += 1;
            }
            if end - start > run_threshold {
                for &p in &positions[start + 1..end] {
                    keep[p] = false;
                }
            }
            start = end;
        }
    }
    keep
}

/// Label distribution of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LabelProfile {
    /// Every subject gets the same number of frames of each level (up to remainder).
    Balanced,
    /// Zero-intensity frames with probability 0.9135, the rest uniform over 1..K-1.
    Imbalanced,
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_subjects: usize,
    pub frames_per_subject: usize,
    pub feature_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    pub profile: LabelProfile,
    pub sequences_per_subject: usize,
    /// Distance between consecutive intensity anchors along the signal direction.
    pub anchor_spacing: f64,
    pub num_classes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_subjects: 5,
            frames_per_subject: 200,
            feature_dim: 32,
            noise_sigma: 0.5,
            seed: 0,
            profile: LabelProfile::Balanced,
            sequences_per_subject: 1,
            anchor_spacing: 2.0,
            num_classes: DEFAULT_NUM_CLASSES,
        }
    }
}

/// The class anchors `mu(k)` used by the generator.
///
/// `mu(k) = offset + (k - (K-1)/2) * spacing * u` with `u` a fixed unit
/// direction and `offset` a fixed vector orthogonal to `u` of norm `spacing`.
/// The anchors depend only on the dimension, class count and spacing, never
/// on the sampling seed.
pub fn synthetic_anchors(feature_dim: usize, num_classes: usize, spacing: f64) -> Vec<Vec<f64>> {
    let (direction, offset) = anchor_basis(feature_dim);
    let mid = (num_classes as f64 - 1.0) / 2.0;
    (0..num_classes)
        .map(|k| {
            let step = (k as f64 - mid) * spacing;
            direction
                .iter()
                .zip(&offset)
                .map(|(u, o)| spacing * o + step * u)
                .collect()
        })
        .collect()
}

/// Unit signal direction and unit offset direction orthogonal to it.
pub fn anchor_basis(feature_dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(ANCHOR_SEED);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..feature_dim)
            .map(|_| StandardNormal.sample(rng))
            .collect()
    };
    let mut u = draw(&mut rng);
    normalize(&mut u);
    let mut o = draw(&mut rng);
    if feature_dim < 2 {
        o.iter_mut().for_each(|v| *v = 0.0);
        return (u, o);
    }
    let proj: f64 = o.iter().zip(&u).map(|(a, b)| a * b).sum();
    o.iter_mut().zip(&u).for_each(|(a, b)| *a -= proj * b);
    normalize(&mut o);
    (u, o)
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Draws a dataset whose features are `mu(label) + noise_sigma * N(0, I)`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    if config.num_subjects == 0 || config.frames_per_subject == 0 {
        return Err(Error::Domain(
            "num_subjects and frames_per_subject must be positive".into(),
        ));
    }
    if config.feature_dim == 0 || config.num_classes == 0 || config.sequences_per_subject == 0 {
        return Err(Error::Domain(
            "feature_dim, num_classes and sequences_per_subject must be positive".into(),
        ));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::Domain("noise_sigma must be finite and nonnegative".into()));
    }
    if !(config.anchor_spacing > 0.0 && config.anchor_spacing.is_finite()) {
        return Err(Error::Domain("anchor_spacing must be positive".into()));
    }
    let k = config.num_classes;
    let anchors = synthetic_anchors(config.feature_dim, k, config.anchor_spacing);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.num_subjects * config.frames_per_subject);

    let width = config.num_subjects.to_string().len().max(2);
    for subject in 0..config.num_subjects {
        let labels: Vec<usize> = match config.profile {
            LabelProfile::Balanced => {
                let mut l: Vec<usize> = (0..config.frames_per_subject).map(|i| i % k).collect();
                l.shuffle(&mut rng);
                l
            }
            LabelProfile::Imbalanced => (0..config.frames_per_subject)
                .map(|_| {
                    if k == 1 || rng.random_bool(IMBALANCED_ZERO_FRACTION) {
                        0
                    } else {
                        rng.random_range(1..k)
                    }
                })
                .collect(),
        };
        let per_seq = config.frames_per_subject.div_ceil(config.sequences_per_subject);
        for (i, label) in labels.into_iter().enumerate() {
            let features = anchors[label]
                .iter()
                .map(|&m| {
                    if config.noise_sigma == 0.0 {
                        m
                    } else {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        m + config.noise_sigma * n
                    }
                })
                .collect();
            samples.push(Sample {
                subject_id: format!("S{subject:0width$}"),
                sequence_id: format!("Q{:02}", i / per_seq),
                frame_index: (i % per_seq) as u64,
                features,
                label,
            });
        }
    }
    Ok(Dataset {
        samples,
        feature_dim: config.feature_dim,
        num_classes: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seq: &str, frame: u64, label: usize) -> Sample {
        Sample {
            subject_id: "A".into(),
            sequence_id: seq.into(),
            frame_index: frame,
            features: vec![0.0; 2],
            label,
        }
    }

    fn labels_dataset(labels: &[usize]) -> Dataset {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| sample("q", i as u64, l))
            .collect();
        Dataset::new(samples, 2, DEFAULT_NUM_CLASSES).unwrap()
    }

    fn frames(d: &Dataset) -> Vec<u64> {
        d.samples().iter().map(|s| s.frame_index).collect()
    }

    const CSV3: &str = "subject_id,sequence_id,frame_index,label,f0,f1,f2,f3\n\
        s1,a,0,0,0.1,0.2,0.3,0.4\n\
        s1,a,1,3,1,2,3,4\n\
        s2,b,0,5,-1.5,0,0,1e-3\n";

    #[test]
    fn parses_valid_rows() {
        let d = read_dataset(CSV3.as_bytes(), 4, 6).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.samples()[1].label, 3);
        assert_eq!(d.samples()[2].features, vec![-1.5, 0.0, 0.0, 1e-3]);
    }

    #[test]
    fn label_out_of_range_names_line() {
        let text = CSV3.replace("s1,a,1,3", "s1,a,1,7");
        match read_dataset(text.as_bytes(), 4, 6) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn header_only_is_empty() {
        let d = read_dataset("subject_id,sequence_id,frame_index,label,f0\n".as_bytes(), 1, 6).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn rejects_bad_rows() {
        let wrong_cols = CSV3.replace("s2,b,0,5,-1.5,0,0,1e-3", "s2,b,0,5,-1.5,0,0");
        assert!(matches!(
            read_dataset(wrong_cols.as_bytes(), 4, 6),
            Err(Error::Parse { line: 4, .. })
        ));
        let nan = CSV3.replace("-1.5", "NaN");
        assert!(matches!(
            read_dataset(nan.as_bytes(), 4, 6),
            Err(Error::Parse { line: 4, .. })
        ));
        let dup = format!("{CSV3}s1,a,1,2,0,0,0,0\n");
        assert!(matches!(
            read_dataset(dup.as_bytes(), 4, 6),
            Err(Error::DuplicateKey { line: 5, .. })
        ));
        let order = format!("{CSV3}s2,b,0,2,0,0,0,0\ns1,a,0,2,0,0,0,0\n");
        assert!(read_dataset(order.as_bytes(), 4, 6).is_err());
        let bad_header = CSV3.replace("f3", "g3");
        assert!(matches!(
            read_dataset(bad_header.as_bytes(), 4, 6),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let d = generate_synthetic(&SynthConfig {
            num_subjects: 2,
            frames_per_subject: 13,
            feature_dim: 3,
            sequences_per_subject: 2,
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), 3, 6).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn default_quantization_map() {
        let m = QuantizationMap::default();
        assert_eq!(quantize_label(0, &m).unwrap(), 0);
        assert_eq!(quantize_label(3, &m).unwrap(), 3);
        assert_eq!(quantize_label(15, &m).unwrap(), 5);
        assert!(quantize_label(16, &m).is_err());
        assert!(quantize_label(-1, &m).is_err());
        // exhaustive: total and monotone
        let mut prev = 0;
        for raw in 0..=15 {
            let q = quantize_label(raw, &m).unwrap();
            assert!(q >= prev && q <= 5);
            prev = q;
        }
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(json, "[0,1,2,3,4,4,5,5,5,5,5,5,5,5,5,5]");
        assert_eq!(serde_json::from_str::<QuantizationMap>(&json).unwrap(), m);
        assert!(serde_json::from_str::<QuantizationMap>("[0,1,2]").is_err());
        assert!(serde_json::from_str::<QuantizationMap>("[0,2,1,3,4,4,5,5,5,5,5,5,5,5,5,5]").is_err());
    }

    #[test]
    fn dedup_examples() {
        let d = labels_dataset(&[0, 0, 0, 0, 0, 0, 0, 1, 1]);
        assert_eq!(frames(&deduplicate(&d, 5)), vec![0, 7, 8]);
        let d = labels_dataset(&[2, 2, 2, 2, 2]);
        assert_eq!(deduplicate(&d, 5).len(), 5);
        let d = labels_dataset(&[0, 1, 2, 3]);
        assert_eq!(deduplicate(&d, 5).len(), 4);
        assert!(deduplicate(&Dataset::empty(2, 6), 5).is_empty());
    }

    #[test]
    fn dedup_works_per_sequence() {
        // two interleaved sequences, each with a run of 6 zeros
        let mut samples = Vec::new();
        for f in 0..6 {
            samples.push(sample("x", f, 0));
            samples.push(sample("y", f, 0));
        }
        let d = Dataset::new(samples, 2, 6).unwrap();
        let out = deduplicate(&d, 5);
        assert_eq!(out.len(), 2);
        assert_eq!(out.samples()[0].sequence_id, "x");
        assert_eq!(out.samples()[1].sequence_id, "y");
    }

    #[test]
    fn synthetic_zero_noise_hits_anchors() {
        let cfg = SynthConfig {
            noise_sigma: 0.0,
            frames_per_subject: 60,
            ..Default::default()
        };
        let d = generate_synthetic(&cfg).unwrap();
        let anchors = synthetic_anchors(cfg.feature_dim, 6, cfg.anchor_spacing);
        for s in d.samples() {
            assert_eq!(s.features, anchors[s.label]);
        }
        assert_eq!(d.class_counts(), vec![50; 6]);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SynthConfig {
            seed: 1,
            ..Default::default()
        };
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_synthetic(&cfg).unwrap().write_csv(&mut a).unwrap();
        generate_synthetic(&cfg).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let other = SynthConfig { seed: 2, ..cfg };
        let mut c = Vec::new();
        generate_synthetic(&other).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn imbalanced_zero_fraction() {
        let d = generate_synthetic(&SynthConfig {
            num_subjects: 10,
            frames_per_subject: 1000,
            feature_dim: 4,
            profile: LabelProfile::Imbalanced,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let zeros = d.class_counts()[0] as f64 / d.len() as f64;
        assert!((zeros - IMBALANCED_ZERO_FRACTION).abs() < 0.01, "{zeros}");
    }

    #[test]
    fn synthetic_rejects_zero_counts() {
        let cfg = SynthConfig {
            num_subjects: 0,
            ..Default::default()
        };
        assert!(matches!(generate_synthetic(&cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn anchors_are_equally_spaced() {
        let (u, o) = anchor_basis(8);
        let dot: f64 = u.iter().zip(&o).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
        let a = synthetic_anchors(8, 6, 2.0);
        for k in 1..6 {
            let d: f64 = a[k]
                .iter()
                .zip(&a[k - 1])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!((d - 2.0).abs() < 1e-12);
        }
    }
}
