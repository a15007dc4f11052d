//! Generate balanced and imbalanced synthetic feature sets and inspect them.
//!
//! Run with `cargo run --example synthetic_data`.

use painreg::data::{generate_synthetic, synthetic_anchors, LabelProfile, SynthConfig};

fn main() -> painreg::Result<()> {
    let balanced = generate_synthetic(&SynthConfig::default())?;
    println!(
        "balanced: {} frames, {} subjects, class counts {:?}",
        balanced.len(),
        balanced.subjects().len(),
        balanced.class_counts()
    );

    let imbalanced = generate_synthetic(&SynthConfig {
        frames_per_subject: 2000,
        profile: LabelProfile::Imbalanced,
        ..Default::default()
    })?;
    let counts = imbalanced.class_counts();
    println!(
        "imbalanced: class counts {counts:?}, zero fraction {:.4}",
        counts[0] as f64 / imbalanced.len() as f64
    );

    // consecutive anchors sit `spacing` apart along one direction
    let anchors = synthetic_anchors(32, 6, 2.0);
    for pair in anchors.windows(2) {
        let d: f64 = pair[0].iter().zip(&pair[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        print!("{d:.3} ");
    }
    println!();

    let mut csv = Vec::new();
    balanced.subset(&[0, 1, 2]).write_csv(&mut csv)?;
    let text = String::from_utf8(csv).expect("csv is utf-8");
    for line in text.lines() {
        println!("{}", &line[..line.len().min(72)]);
    }
    Ok(())
}
