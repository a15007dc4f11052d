//! The `painreg` command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O
//! error, 3 training divergence.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::all_zeros_predictor;
use crate::crossval::{run_loso, write_loso_outputs, AggregateReport, DedupScope, LosoConfig};
use crate::data::{
    deduplicate, generate_synthetic, infer_feature_dim, load_dataset_with_classes, Dataset, LabelProfile, SynthConfig,
    DEFAULT_NUM_CLASSES, DEFAULT_RUN_THRESHOLD,
};
use crate::error::{Error, ErrorKind, Result};
use crate::losses::{CenterNorm, RegressionKind};
use crate::metrics::{evaluate, label_predictions, Aggregation, MetricsReport};
use crate::model::Activation;
use crate::report::{create_dir, write_json, write_predictions};
use crate::sampler::SamplerKind;
use crate::train::{predict, train, TrainedModel};

#[derive(Debug, Parser)]
#[command(name = "painreg", version, about = "Intensity regression with center loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic feature CSV.
    Synth(SynthArgs),
    /// Train a head on a feature CSV.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline on a feature CSV.
    Eval(EvalArgs),
    /// Leave-one-subject-out cross-validation.
    Loso(LosoArgs),
    /// Drop long runs of constant-label frames.
    Dedup(DedupArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    #[arg(long, default_value_t = 200)]
    pub frames: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 2.0)]
    pub spacing: f64,
    #[arg(long, value_enum, default_value_t = LabelProfile::Balanced)]
    pub profile: LabelProfile,
    #[arg(long, default_value_t = 1)]
    pub sequences: usize,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    pub classes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Feature CSV: subject_id,sequence_id,frame_index,label,f0,...
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    pub classes: usize,
}

/// Settings shared by `train` and `loso`. Flags override the `--config` file.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON file with the same layout as the `config` block of `aggregate_metrics.json`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, value_enum)]
    pub center_norm: Option<CenterNorm>,
    #[arg(long, value_enum)]
    pub loss: Option<RegressionKind>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerKind>,
    #[arg(long, value_enum)]
    pub dedup: Option<DedupScope>,
    #[arg(long)]
    pub run_threshold: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, value_enum)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub log_interval: Option<usize>,
    #[arg(long, value_enum)]
    pub aggregation: Option<Aggregation>,
}

impl ConfigArgs {
    /// The file config (or defaults) with every given flag applied.
    pub fn resolve(&self) -> Result<LosoConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str::<LosoConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => LosoConfig::default(),
        };
        let t = &mut c.train;
        set(&mut t.loss.t, self.t);
        set(&mut t.loss.lambda, self.lambda);
        set(&mut t.loss.norm, self.center_norm);
        set(&mut t.loss.kind, self.loss);
        set(&mut t.sampler, self.sampler);
        set(&mut t.seed, self.seed);
        set(&mut t.learning_rate, self.lr);
        set(&mut t.iterations, self.iterations);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.momentum, self.momentum);
        set(&mut t.head.hidden_dim, self.hidden);
        set(&mut t.head.dropout_rate, self.dropout);
        set(&mut t.head.activation, self.activation);
        set(&mut t.log_interval, self.log_interval);
        set(&mut c.dedup, self.dedup);
        set(&mut c.run_threshold, self.run_threshold);
        set(&mut c.aggregation, self.aggregation);
        c.train.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Output directory for checkpoint.json and training_log.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    Zeros,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, required_unless_present = "baseline", conflicts_with = "baseline")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Output directory for metrics.json and predictions.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Aggregation::PerSequenceMean)]
    pub aggregation: Aggregation,
}

#[derive(Debug, Args)]
pub struct LosoArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RUN_THRESHOLD)]
    pub threshold: usize,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error.kind() {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Divergence => 3,
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Loso(a) => loso_cmd(a),
        Command::Dedup(a) => dedup_cmd(a),
    }
}

fn load(args: &DataArgs) -> Result<Dataset> {
    let dim = infer_feature_dim(&args.data)?;
    let d = load_dataset_with_classes(&args.data, dim, args.classes)?;
    log::info!("loaded {} frames, {} features from {}", d.len(), dim, args.data.display());
    Ok(d)
}

fn synth(a: SynthArgs) -> Result<()> {
    let d = generate_synthetic(&SynthConfig {
        num_subjects: a.subjects,
        frames_per_subject: a.frames,
        feature_dim: a.dim,
        noise_sigma: a.noise,
        seed: a.seed,
        profile: a.profile,
        sequences_per_subject: a.sequences,
        anchor_spacing: a.spacing,
        num_classes: a.classes,
    })?;
    d.save(&a.out)?;
    let zeros = d.class_counts()[0];
    println!(
        "wrote {} frames to {}; zero-label fraction {:.4}",
        d.len(),
        a.out.display(),
        zeros as f64 / d.len() as f64
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let config = a.config.resolve()?;
    let mut data = load(&a.data)?;
    if config.dedup != DedupScope::None {
        data = deduplicate(&data, config.run_threshold);
        log::info!("{} frames after de-duplication", data.len());
    }
    let model = train(&data, &config.train)?;
    create_dir(&a.out)?;
    model.save(a.out.join("checkpoint.json"))?;
    write_training_log(&a.out.join("training_log.csv"), &model)?;
    if let Some(last) = model.training_log.last() {
        println!(
            "trained {} iterations on {} frames; final loss {:.6} (regression {:.6}, center {:.6})",
            model.config.iterations,
            data.len(),
            last.total,
            last.regression,
            last.center
        );
    }
    Ok(())
}

fn write_training_log(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "total", "regression", "center"])?;
    for e in &model.training_log {
        w.write_record([
            e.iteration.to_string(),
            crate::data::format_float(e.total),
            crate::data::format_float(e.regression),
            crate::data::format_float(e.center),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct EvalFile<'a> {
    predictor: String,
    data: &'a Path,
    metrics: &'a MetricsReport,
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let data = load(&a.data)?;
    let (predictor, preds) = match (&a.checkpoint, a.baseline) {
        (_, Some(Baseline::Zeros)) => ("all-zeros".to_string(), all_zeros_predictor(data.samples())),
        (Some(path), None) => {
            let model = TrainedModel::load(path)?;
            (path.display().to_string(), predict(&model, data.samples())?)
        }
        (None, None) => return Err(Error::Config("either --checkpoint or --baseline is required".into())),
    };
    let labeled = label_predictions(data.samples(), &preds)?;
    let metrics = evaluate(&labeled, data.num_classes(), a.aggregation)?;
    create_dir(&a.out)?;
    write_predictions(a.out.join("predictions.csv"), &labeled)?;
    write_json(
        a.out.join("metrics.json"),
        &EvalFile {
            predictor: predictor.clone(),
            data: &a.data.data,
            metrics: &metrics,
        },
    )?;
    let mut table = table_header();
    table_row(&mut table, &predictor, &metrics);
    print!("{table}");
    Ok(())
}

fn loso_cmd(a: LosoArgs) -> Result<()> {
    let mut config = a.config.resolve()?;
    set(&mut config.repeats, a.repeats);
    set(&mut config.workers, a.workers);
    let data = load(&a.data)?;
    let outcome = run_loso(&data, &config)?;
    write_loso_outputs(&a.out, &outcome)?;
    for report in &outcome.aggregate_file().reports {
        print!("{}", render_comparison(report));
    }
    if let Some(failure) = outcome.first_failure() {
        return Err(failure);
    }
    Ok(())
}

fn dedup_cmd(a: DedupArgs) -> Result<()> {
    let data = load(&a.data)?;
    let kept = deduplicate(&data, a.threshold);
    kept.save(&a.out)?;
    println!("kept {} of {} frames", kept.len(), data.len());
    Ok(())
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{v:.4}"))
}

fn table_header() -> String {
    format!(
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
        "method", "MAE", "MSE", "PCC", "wMAE", "wMSE"
    )
}

fn table_row(out: &mut String, name: &str, m: &MetricsReport) {
    let _ = writeln!(
        out,
        "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}",
        name,
        fmt_metric(Some(m.mae)),
        fmt_metric(Some(m.mse)),
        fmt_metric(m.pcc),
        fmt_metric(Some(m.wmae)),
        fmt_metric(Some(m.wmse)),
    );
}

/// Model versus all-zeros table for one LOSO pass, as printed by `loso`.
pub fn render_comparison(report: &AggregateReport) -> String {
    let mut out = format!(
        "LOSO pass {} ({} frames, pooled{})\n",
        report.repeat,
        report.pooled.frames,
        if report.complete {
            String::new()
        } else {
            format!(", failed folds: {}", report.failed_folds.join(" "))
        }
    );
    out.push_str(&table_header());
    table_row(&mut out, "all-zeros", &report.baseline_all_zeros);
    table_row(&mut out, "model", &report.pooled);
    out
}
