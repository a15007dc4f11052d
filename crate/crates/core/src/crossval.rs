//! Leave-one-subject-out cross-validation.
//!
//! Each fold holds out every frame of one subject, trains a fresh head on
//! the remaining subjects (optionally de-duplicated) and predicts the held-out
//! frames. Fold seeds are derived from the base seed and the subject id, so
//! a fold's result does not depend on which other subjects exist or on the
//! order in which folds run.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::all_zeros_predictor;
use crate::data::{deduplicate, Dataset, DEFAULT_RUN_THRESHOLD};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, label_predictions, Aggregation, LabeledPrediction, MetricsReport};
use crate::report::{create_dir, write_json, write_predictions};
use crate::train::{predict, train, TrainConfig, TrainedModel};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSpec {
    pub held_out_subject: String,
    pub train_positions: Vec<usize>,
    pub test_positions: Vec<usize>,
}

/// One fold per distinct subject, in subject-id order.
pub fn make_loso_folds(dataset: &Dataset) -> Result<Vec<FoldSpec>> {
    let subjects = dataset.subjects();
    if subjects.len() < 2 {
        return Err(Error::Domain(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .into_iter()
        .map(|subject| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.len())
                .partition(|&i| dataset.samples()[i].subject_id == subject);
            FoldSpec {
                held_out_subject: subject,
                train_positions: train,
                test_positions: test,
            }
        })
        .collect())
}

/// Which splits run-length de-duplication applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DedupScope {
    None,
    #[default]
    Train,
    /// Training and test splits.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LosoConfig {
    pub train: TrainConfig,
    pub dedup: DedupScope,
    pub run_threshold: usize,
    /// Full passes over the folds, each with its own seeds.
    pub repeats: usize,
    /// Folds trained concurrently.
    pub workers: usize,
    pub aggregation: Aggregation,
}

impl Default for LosoConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            dedup: DedupScope::Train,
            run_threshold: DEFAULT_RUN_THRESHOLD,
            repeats: 1,
            workers: 1,
            aggregation: Aggregation::PerSequenceMean,
        }
    }
}

/// Seed of the fold that holds out `subject` in pass `repeat`.
pub fn fold_seed(base_seed: u64, repeat: usize, subject: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(base_seed.to_le_bytes());
    hasher.update((repeat as u64).to_le_bytes());
    hasher.update(subject.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

#[derive(Debug)]
pub struct FoldResult {
    pub model: TrainedModel,
    pub metrics: MetricsReport,
    /// Dataset positions of the evaluated frames with their predictions.
    pub predictions: Vec<(usize, f64)>,
}

#[derive(Debug)]
pub struct FoldOutcome {
    pub repeat: usize,
    pub held_out_subject: String,
    pub seed: u64,
    pub train_frames: usize,
    pub test_frames: usize,
    pub result: Result<FoldResult>,
}

/// Fold metrics averaged with equal weight per fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMeanMetrics {
    pub mae: f64,
    pub mse: f64,
    /// Mean over folds where PCC is defined.
    pub pcc: Option<f64>,
    pub wmae: f64,
    pub wmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub repeat: usize,
    /// False when at least one fold failed; metrics then cover the others only.
    pub complete: bool,
    pub failed_folds: Vec<String>,
    /// Metrics over the pooled predictions of all folds (primary).
    pub pooled: MetricsReport,
    pub fold_mean: FoldMeanMetrics,
    /// The all-zeros predictor on the same frames.
    pub baseline_all_zeros: MetricsReport,
}

#[derive(Debug)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub folds: Vec<FoldOutcome>,
    pub aggregate: Option<AggregateReport>,
    /// Evaluated frames in dataset order.
    pub predictions: Vec<LabeledPrediction>,
}

#[derive(Debug)]
pub struct LosoOutcome {
    pub config: LosoConfig,
    pub repeats: Vec<RepeatOutcome>,
}

impl LosoOutcome {
    /// Aggregate of the first pass.
    pub fn aggregate(&self) -> Option<&AggregateReport> {
        self.repeats.first().and_then(|r| r.aggregate.as_ref())
    }

    pub fn predictions(&self) -> &[LabeledPrediction] {
        self.repeats.first().map_or(&[], |r| r.predictions.as_slice())
    }

    pub fn folds(&self) -> impl Iterator<Item = &FoldOutcome> {
        self.repeats.iter().flat_map(|r| r.folds.iter())
    }

    /// The first failed fold, if any, as an [`Error::Fold`].
    pub fn first_failure(&self) -> Option<Error> {
        self.folds().find_map(|f| match &f.result {
            Err(e) => Some(Error::Fold {
                subject: f.held_out_subject.clone(),
                source: Box::new(clone_error(e)),
            }),
            Ok(_) => None,
        })
    }
}

fn clone_error(e: &Error) -> Error {
    match e {
        Error::Divergence { iteration, loss } => Error::Divergence {
            iteration: *iteration,
            loss: *loss,
        },
        Error::Config(m) => Error::Config(m.clone()),
        other => Error::Domain(other.to_string()),
    }
}

pub fn run_loso(dataset: &Dataset, config: &LosoConfig) -> Result<LosoOutcome> {
    let folds = make_loso_folds(dataset)?;
    run_loso_with_folds(dataset, &folds, config)
}

/// Runs the given folds in the given order; results are reported in subject order.
pub fn run_loso_with_folds(dataset: &Dataset, folds: &[FoldSpec], config: &LosoConfig) -> Result<LosoOutcome> {
    config.train.validate()?;
    if config.repeats == 0 || config.workers == 0 {
        return Err(Error::Config("repeats and workers must be positive".into()));
    }
    let jobs: Vec<(usize, &FoldSpec)> = (0..config.repeats)
        .flat_map(|r| folds.iter().map(move |f| (r, f)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let mut outcomes: Vec<FoldOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(repeat, fold)| run_fold(dataset, fold, repeat, config))
            .collect()
    });
    outcomes.sort_by(|a, b| {
        (a.repeat, &a.held_out_subject).cmp(&(b.repeat, &b.held_out_subject))
    });

    let mut repeats = Vec::with_capacity(config.repeats);
    let mut outcomes = outcomes.into_iter().peekable();
    for repeat in 0..config.repeats {
        let mut folds = Vec::new();
        while let Some(f) = outcomes.next_if(|f| f.repeat == repeat) {
            folds.push(f);
        }
        let (aggregate, predictions) = aggregate_repeat(dataset, repeat, &folds, config)?;
        repeats.push(RepeatOutcome {
            repeat,
            folds,
            aggregate,
            predictions,
        });
    }
    Ok(LosoOutcome {
        config: config.clone(),
        repeats,
    })
}

fn run_fold(dataset: &Dataset, fold: &FoldSpec, repeat: usize, config: &LosoConfig) -> FoldOutcome {
    let seed = fold_seed(config.train.seed, repeat, &fold.held_out_subject);
    let mut train_set = dataset.subset(&fold.train_positions);
    if config.dedup != DedupScope::None {
        train_set = deduplicate(&train_set, config.run_threshold);
    }
    let test_positions: Vec<usize> = if config.dedup == DedupScope::All {
        // map kept frames back to dataset positions
        let test_set = dataset.subset(&fold.test_positions);
        let kept = deduplicate(&test_set, config.run_threshold);
        let mut it = kept.samples().iter().peekable();
        fold.test_positions
            .iter()
            .copied()
            .filter(|&p| {
                let keep = it.peek().is_some_and(|s| **s == dataset.samples()[p]);
                if keep {
                    it.next();
                }
                keep
            })
            .collect()
    } else {
        fold.test_positions.clone()
    };
    let train_frames = train_set.len();
    let result = (|| {
        let train_config = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let model = train(&train_set, &train_config)?;
        let test_samples: Vec<_> = test_positions
            .iter()
            .map(|&p| dataset.samples()[p].clone())
            .collect();
        let preds = predict(&model, &test_samples)?;
        let labeled = label_predictions(&test_samples, &preds)?;
        let metrics = evaluate(&labeled, dataset.num_classes(), config.aggregation)?;
        Ok(FoldResult {
            model,
            metrics,
            predictions: test_positions.iter().copied().zip(preds).collect(),
        })
    })();
    FoldOutcome {
        repeat,
        held_out_subject: fold.held_out_subject.clone(),
        seed,
        train_frames,
        test_frames: test_positions.len(),
        result,
    }
}

fn aggregate_repeat(
    dataset: &Dataset,
    repeat: usize,
    folds: &[FoldOutcome],
    config: &LosoConfig,
) -> Result<(Option<AggregateReport>, Vec<LabeledPrediction>)> {
    let mut rows: Vec<(usize, f64)> = folds
        .iter()
        .filter_map(|f| f.result.as_ref().ok())
        .flat_map(|r| r.predictions.iter().copied())
        .collect();
    rows.sort_by_key(|&(p, _)| p);
    let samples: Vec<_> = rows.iter().map(|&(p, _)| dataset.samples()[p].clone()).collect();
    let preds: Vec<f64> = rows.iter().map(|&(_, v)| v).collect();
    let labeled = label_predictions(&samples, &preds)?;
    if labeled.is_empty() {
        return Ok((None, labeled));
    }
    let k = dataset.num_classes();
    let pooled = evaluate(&labeled, k, config.aggregation)?;
    let zeros = label_predictions(&samples, &all_zeros_predictor(&samples))?;
    let baseline_all_zeros = evaluate(&zeros, k, config.aggregation)?;

    let reports: Vec<&MetricsReport> = folds
        .iter()
        .filter_map(|f| f.result.as_ref().ok().map(|r| &r.metrics))
        .collect();
    let mean_of = |f: &dyn Fn(&MetricsReport) -> f64| {
        reports.iter().map(|r| f(r)).sum::<f64>() / reports.len() as f64
    };
    let pccs: Vec<f64> = reports.iter().filter_map(|r| r.pcc).collect();
    let fold_mean = FoldMeanMetrics {
        mae: mean_of(&|r| r.mae),
        mse: mean_of(&|r| r.mse),
        pcc: (!pccs.is_empty()).then(|| pccs.iter().sum::<f64>() / pccs.len() as f64),
        wmae: mean_of(&|r| r.wmae),
        wmse: mean_of(&|r| r.wmse),
    };
    let failed_folds: Vec<String> = folds
        .iter()
        .filter(|f| f.result.is_err())
        .map(|f| f.held_out_subject.clone())
        .collect();
    Ok((
        Some(AggregateReport {
            repeat,
            complete: failed_folds.is_empty(),
            failed_folds,
            pooled,
            fold_mean,
            baseline_all_zeros,
        }),
        labeled,
    ))
}

/// Contents of `aggregate_metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateFile {
    pub config: LosoConfig,
    pub primary: String,
    pub reports: Vec<AggregateReport>,
    /// Pooled wMAE and wMSE averaged over repeats.
    pub mean_pooled_wmae: Option<f64>,
    pub mean_pooled_wmse: Option<f64>,
}

impl LosoOutcome {
    pub fn aggregate_file(&self) -> AggregateFile {
        let reports: Vec<AggregateReport> =
            self.repeats.iter().filter_map(|r| r.aggregate.clone()).collect();
        let n = reports.len() as f64;
        let mean = |f: fn(&AggregateReport) -> f64| {
            (!reports.is_empty()).then(|| reports.iter().map(f).sum::<f64>() / n)
        };
        AggregateFile {
            config: self.config.clone(),
            primary: "pooled".into(),
            mean_pooled_wmae: mean(|r| r.pooled.wmae),
            mean_pooled_wmse: mean(|r| r.pooled.wmse),
            reports,
        }
    }
}

#[derive(Serialize)]
struct FoldMetricsFile<'a> {
    held_out_subject: &'a str,
    repeat: usize,
    seed: u64,
    train_frames: usize,
    test_frames: usize,
    metrics: Option<&'a MetricsReport>,
    error: Option<String>,
}

/// Directory-name-safe form of a subject id.
pub fn fold_dir_name(subject: &str) -> String {
    let clean: String = subject
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("fold_{clean}")
}

/// Writes fold checkpoints and metrics, `aggregate_metrics.json` and `predictions.csv`.
///
/// With more than one repeat each pass goes to its own `repeat_<r>/`
/// subdirectory and the top-level aggregate lists every pass.
pub fn write_loso_outputs(dir: impl AsRef<Path>, outcome: &LosoOutcome) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    let nested = outcome.repeats.len() > 1;
    for rep in &outcome.repeats {
        let base = if nested {
            dir.join(format!("repeat_{}", rep.repeat))
        } else {
            dir.to_path_buf()
        };
        for fold in &rep.folds {
            let fold_dir = base.join(fold_dir_name(&fold.held_out_subject));
            create_dir(&fold_dir)?;
            if let Ok(r) = &fold.result {
                r.model.save(fold_dir.join("checkpoint.json"))?;
            }
            let file = FoldMetricsFile {
                held_out_subject: &fold.held_out_subject,
                repeat: fold.repeat,
                seed: fold.seed,
                train_frames: fold.train_frames,
                test_frames: fold.test_frames,
                metrics: fold.result.as_ref().ok().map(|r| &r.metrics),
                error: fold.result.as_ref().err().map(|e| e.to_string()),
            };
            write_json(fold_dir.join("metrics.json"), &file)?;
        }
        write_predictions(base.join("predictions.csv"), &rep.predictions)?;
        if nested {
            if let Some(a) = &rep.aggregate {
                write_json(base.join("aggregate_metrics.json"), a)?;
            }
        }
    }
    write_json(dir.join("aggregate_metrics.json"), &outcome.aggregate_file())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, Sample, SynthConfig};

    fn tiny(subjects: usize, frames: usize) -> Dataset {
        generate_synthetic(&SynthConfig {
            num_subjects: subjects,
            frames_per_subject: frames,
            feature_dim: 4,
            seed: 5,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick_config() -> LosoConfig {
        let mut c = LosoConfig::default();
        c.train.iterations = 40;
        c.train.head.hidden_dim = 6;
        c
    }

    #[test]
    fn two_subjects_two_folds() {
        let d = tiny(2, 3);
        let folds = make_loso_folds(&d).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].test_positions.len(), 3);
        assert_eq!(folds[1].test_positions.len(), 3);
        assert_eq!(folds[0].held_out_subject, "S00");
    }

    #[test]
    fn one_subject_is_rejected() {
        assert!(matches!(make_loso_folds(&tiny(1, 5)), Err(Error::Domain(_))));
    }

    #[test]
    fn fold_seed_depends_only_on_inputs() {
        assert_eq!(fold_seed(1, 0, "S00"), fold_seed(1, 0, "S00"));
        assert_ne!(fold_seed(1, 0, "S00"), fold_seed(1, 0, "S01"));
        assert_ne!(fold_seed(1, 0, "S00"), fold_seed(2, 0, "S00"));
        assert_ne!(fold_seed(1, 0, "S00"), fold_seed(1, 1, "S00"));
    }

    #[test]
    fn runs_every_fold_and_dumps_every_frame() {
        let d = tiny(3, 12);
        let out = run_loso(&d, &quick_config()).unwrap();
        assert_eq!(out.folds().count(), 3);
        assert!(out.folds().all(|f| f.result.is_ok()));
        assert_eq!(out.predictions().len(), d.len());
        let agg = out.aggregate().unwrap();
        assert!(agg.complete);
        assert_eq!(agg.baseline_all_zeros.pcc, None);
    }

    #[test]
    fn dedup_all_shrinks_test_split() {
        let samples: Vec<Sample> = (0..2)
            .flat_map(|s| {
                (0..8).map(move |f| Sample {
                    subject_id: format!("s{s}"),
                    sequence_id: "q".into(),
                    frame_index: f,
                    features: vec![f as f64, 1.0],
                    label: 0,
                })
            })
            .collect();
        let d = Dataset::new(samples, 2, 6).unwrap();
        let mut cfg = quick_config();
        cfg.dedup = DedupScope::All;
        let out = run_loso(&d, &cfg).unwrap();
        assert!(out.folds().all(|f| f.test_frames == 1 && f.train_frames == 1));
        assert_eq!(out.predictions().len(), 2);
    }

    #[test]
    fn repeats_use_distinct_seeds() {
        let d = tiny(2, 12);
        let mut cfg = quick_config();
        cfg.repeats = 2;
        let out = run_loso(&d, &cfg).unwrap();
        assert_eq!(out.repeats.len(), 2);
        let s0: Vec<u64> = out.repeats[0].folds.iter().map(|f| f.seed).collect();
        let s1: Vec<u64> = out.repeats[1].folds.iter().map(|f| f.seed).collect();
        assert_ne!(s0, s1);
        assert_eq!(out.aggregate_file().reports.len(), 2);
    }

    #[test]
    fn diverging_fold_is_named() {
        let d = tiny(2, 12);
        let mut cfg = quick_config();
        cfg.train.learning_rate = 1e300;
        cfg.train.loss.kind = crate::losses::RegressionKind::Mse;
        let out = run_loso(&d, &cfg).unwrap();
        match out.first_failure() {
            Some(Error::Fold { subject, source }) => {
                assert_eq!(subject, "S00");
                assert!(matches!(*source, Error::Divergence { .. }));
            }
            other => panic!("expected fold failure, got {other:?}"),
        }
    }

    #[test]
    fn dir_names_are_sanitized() {
        assert_eq!(fold_dir_name("S01"), "fold_S01");
        assert_eq!(fold_dir_name("../x y"), "fold_.._x_y");
    }
}
