//! Within-class spread of hidden features with and without the center loss.

use painreg::baselines::compactness_diagnostic;
use painreg::data::{generate_synthetic, SynthConfig};
use painreg::train::{train, TrainConfig};

fn main() -> painreg::Result<()> {
    let data = generate_synthetic(&SynthConfig::default())?;
    for lambda in [0.0, 0.01, 0.1] {
        let mut config = TrainConfig::default();
        config.loss.lambda = lambda;
        let model = train(&data, &config)?;
        let report = compactness_diagnostic(&model, &data)?;
        let per_class: Vec<String> = report
            .per_class
            .iter()
            .map(|v| v.map_or("-".into(), |v| format!("{v:.3}")))
            .collect();
        println!(
            "lambda {lambda:<5} overall {:.4}  per class [{}]",
            report.overall,
            per_class.join(", ")
        );
    }
    Ok(())
}
