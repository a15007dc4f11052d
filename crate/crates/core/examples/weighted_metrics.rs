//! Why weighted metrics: the all-zeros predictor looks good on imbalanced data
//! under plain MAE and poor under wMAE.

use painreg::baselines::all_zeros_predictor;
use painreg::data::{generate_synthetic, LabelProfile, SynthConfig};
use painreg::metrics::{evaluate, label_predictions, Aggregation};

fn main() -> painreg::Result<()> {
    let data = generate_synthetic(&SynthConfig {
        profile: LabelProfile::Imbalanced,
        frames_per_subject: 500,
        sequences_per_subject: 4,
        feature_dim: 4,
        ..Default::default()
    })?;
    let zeros = label_predictions(data.samples(), &all_zeros_predictor(data.samples()))?;
    // predicts the true label plus a constant offset of 0.3
    let offset: Vec<f64> = data.samples().iter().map(|s| s.label as f64 + 0.3).collect();
    let offset = label_predictions(data.samples(), &offset)?;

    for (name, preds) in [("all-zeros", &zeros), ("label + 0.3", &offset)] {
        for agg in [Aggregation::PerSequenceMean, Aggregation::Pooled] {
            let m = evaluate(preds, 6, agg)?;
            println!(
                "{name:<12} {agg:?}: MAE {:.3} MSE {:.3} wMAE {:.3} wMSE {:.3} PCC {}",
                m.mae,
                m.mse,
                m.wmae,
                m.wmse,
                m.pcc.map_or("N/A".into(), |v| format!("{v:.3}"))
            );
        }
    }
    let m = evaluate(&zeros, 6, Aggregation::Pooled)?;
    for c in &m.per_class {
        println!("class {} ({} frames): MAE {:?}", c.label, c.frames, c.mae);
    }
    Ok(())
}
