//! Train the regression head on synthetic data, save it and reload it.

use painreg::data::{generate_synthetic, SynthConfig};
use painreg::metrics::{evaluate, label_predictions, Aggregation};
use painreg::train::{predict, train, TrainConfig, TrainedModel};

fn main() -> painreg::Result<()> {
    let train_set = generate_synthetic(&SynthConfig::default())?;
    let test_set = generate_synthetic(&SynthConfig {
        seed: 1,
        num_subjects: 2,
        ..Default::default()
    })?;

    let config = TrainConfig::default();
    let model = train(&train_set, &config)?;
    for entry in model.training_log.iter().step_by(10) {
        println!(
            "iter {:>5}  loss {:.4}  regression {:.4}  center {:.4}",
            entry.iteration, entry.total, entry.regression, entry.center
        );
    }

    let path = std::env::temp_dir().join("painreg_example_checkpoint.json");
    model.save(&path)?;
    let reloaded = TrainedModel::load(&path)?;
    let preds = predict(&reloaded, test_set.samples())?;
    let report = evaluate(&label_predictions(test_set.samples(), &preds)?, 6, Aggregation::PerSequenceMean)?;
    println!(
        "held-out: MAE {:.3} MSE {:.3} PCC {:.3} wMAE {:.3} wMSE {:.3}",
        report.mae,
        report.mse,
        report.pcc.unwrap_or(f64::NAN),
        report.wmae,
        report.wmse
    );
    Ok(())
}
