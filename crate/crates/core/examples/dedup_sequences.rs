//! Collapse long constant-label runs before training.

use painreg::data::{deduplicate, Dataset, Sample};

fn sequence(subject: &str, labels: &[usize]) -> Vec<Sample> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| Sample {
            subject_id: subject.into(),
            sequence_id: "q".into(),
            frame_index: i as u64,
            features: vec![i as f64],
            label,
        })
        .collect()
}

fn main() -> painreg::Result<()> {
    let mut samples = sequence("a", &[0, 0, 0, 0, 0, 0, 0, 1, 1]);
    samples.extend(sequence("b", &[2, 2, 2, 2, 2, 3, 0, 0, 0, 0, 0, 0]));
    let data = Dataset::new(samples, 1, 6)?;

    for threshold in [5, 2] {
        let kept = deduplicate(&data, threshold);
        println!("threshold {threshold}: kept {} of {} frames", kept.len(), data.len());
        for s in kept.samples() {
            println!("  {} frame {:>2} label {}", s.subject_id, s.frame_index, s.label);
        }
    }
    Ok(())
}
