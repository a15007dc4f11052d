//! Compare class-balanced and uniform minibatches on heavily imbalanced labels.

use painreg::data::{generate_synthetic, LabelProfile, SynthConfig};
use painreg::sampler::{build_class_index, next_balanced_batch, next_uniform_batch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> painreg::Result<()> {
    let data = generate_synthetic(&SynthConfig {
        profile: LabelProfile::Imbalanced,
        frames_per_subject: 400,
        feature_dim: 4,
        ..Default::default()
    })?;
    let index = build_class_index(&data);
    println!("dataset class counts {:?}", data.class_counts());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mut balanced, mut uniform) = ([0usize; 6], [0usize; 6]);
    for _ in 0..1000 {
        for p in next_balanced_batch(&index, 36, &mut rng)?.positions {
            balanced[data.samples()[p].label] += 1;
        }
        for p in next_uniform_batch(data.len(), 36, &mut rng)?.positions {
            uniform[data.samples()[p].label] += 1;
        }
    }
    println!("drawn by balanced sampler {balanced:?}");
    println!("drawn by uniform sampler  {uniform:?}");

    // batch sizes must split evenly over the non-empty classes
    match next_balanced_batch(&index, 35, &mut rng) {
        Err(e) => println!("batch of 35: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
