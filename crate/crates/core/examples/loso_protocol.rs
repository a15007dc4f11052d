//! Leave-one-subject-out evaluation against the all-zeros baseline, with the
//! outputs written to a directory.
//!
//! Pass a directory as the first argument to keep the outputs.

use painreg::cli::render_comparison;
use painreg::crossval::{run_loso, write_loso_outputs, LosoConfig};
use painreg::data::{generate_synthetic, SynthConfig};

fn main() -> painreg::Result<()> {
    let data = generate_synthetic(&SynthConfig::default())?;
    let config = LosoConfig::default();
    let outcome = run_loso(&data, &config)?;

    for fold in outcome.folds() {
        let m = &fold.result.as_ref().expect("fold trained").metrics;
        println!(
            "held out {}: {} train / {} test frames, wMAE {:.3}",
            fold.held_out_subject, fold.train_frames, fold.test_frames, m.wmae
        );
    }
    let aggregate = outcome.aggregate().expect("at least one fold");
    print!("{}", render_comparison(aggregate));
    println!("mean of folds: wMAE {:.3}", aggregate.fold_mean.wmae);

    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("painreg_loso_example"));
    write_loso_outputs(&dir, &outcome)?;
    println!("outputs in {}", dir.display());
    Ok(())
}
