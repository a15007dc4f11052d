use std::collections::BTreeMap;

use painreg::crossval::make_loso_folds;
use painreg::data::{deduplicate, Dataset, Sample};
use painreg::metrics::{pcc, weighted_metrics, LabeledPrediction};
use painreg::sampler::{build_class_index, next_balanced_batch};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn frames() -> impl Strategy<Value = Vec<(u8, u8, usize)>> {
    // (subject, sequence, label) in dataset order
    prop::collection::vec((0u8..3, 0u8..2, 0usize..3), 0..80)
}

fn build(rows: &[(u8, u8, usize)]) -> Dataset {
    let mut next_frame: BTreeMap<(u8, u8), u64> = BTreeMap::new();
    let samples = rows
        .iter()
        .map(|&(s, q, label)| {
            let f = next_frame.entry((s, q)).or_default();
            *f += 1;
            Sample {
                subject_id: format!("s{s}"),
                sequence_id: format!("q{q}"),
                frame_index: *f,
                features: vec![f64::from(s), f64::from(q)],
                label,
            }
        })
        .collect();
    Dataset::new(samples, 2, 6).unwrap()
}

/// Keep flags computed sequence by sequence with explicit run scans.
fn dedup_oracle(rows: &[(u8, u8, usize)], threshold: usize) -> Vec<bool> {
    let mut keep = vec![false; rows.len()];
    for s in 0..3u8 {
        for q in 0..2u8 {
            let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].0 == s && rows[i].1 == q).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| rows[i].2).collect();
            for (j, &i) in idx.iter().enumerate() {
                let start = (0..=j).rev().take_while(|&m| labels[m] == labels[j]).last().unwrap();
                let end = (j..labels.len()).take_while(|&m| labels[m] == labels[j]).last().unwrap();
                keep[i] = j == start || end - start < threshold;
            }
        }
    }
    keep
}

fn predictions(rows: &[(u8, usize, f64)]) -> Vec<LabeledPrediction> {
    rows.iter()
        .enumerate()
        .map(|(i, &(seq, label, prediction))| LabeledPrediction {
            subject_id: "s".into(),
            sequence_id: format!("q{seq}"),
            frame_index: i as u64,
            prediction,
            label,
        })
        .collect()
}

proptest! {
    #[test]
    fn dedup_matches_oracle_across_interleaved_sequences(rows in frames(), threshold in 1usize..7) {
        let d = build(&rows);
        let kept = deduplicate(&d, threshold);
        let expected: Vec<&Sample> = d
            .samples()
            .iter()
            .zip(dedup_oracle(&rows, threshold))
            .filter_map(|(s, k)| k.then_some(s))
            .collect();
        prop_assert_eq!(kept.samples().iter().collect::<Vec<_>>(), expected);
        let twice = deduplicate(&kept, threshold);
        prop_assert_eq!(twice.samples(), kept.samples());
    }

    #[test]
    fn weighted_metrics_match_group_by(rows in prop::collection::vec((0u8..2, 0usize..6, 0.0f64..5.0), 1..60)) {
        let preds = predictions(&rows);
        let w = weighted_metrics(&preds, 6).unwrap();
        let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for p in &preds {
            groups.entry(p.label).or_default().push(p.prediction - p.label as f64);
        }
        let k = groups.len() as f64;
        let wmae: f64 = groups.values().map(|e| e.iter().map(|v| v.abs()).sum::<f64>() / e.len() as f64).sum::<f64>() / k;
        let wmse: f64 = groups.values().map(|e| e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64).sum::<f64>() / k;
        prop_assert!((w.wmae - wmae).abs() <= 1e-12);
        prop_assert!((w.wmse - wmse).abs() <= 1e-12);
        prop_assert_eq!(w.missing_classes.len(), 6 - groups.len());
    }

    #[test]
    fn pcc_is_invariant_under_positive_affine_maps(
        rows in prop::collection::vec((0u8..3, 0usize..6, 0.0f64..5.0), 2..60),
        a in 0.1f64..10.0,
        b in -5.0f64..5.0,
    ) {
        let preds = predictions(&rows);
        let mapped: Vec<LabeledPrediction> = preds
            .iter()
            .map(|p| LabeledPrediction { prediction: a * p.prediction + b, ..p.clone() })
            .collect();
        let (x, y) = (pcc(&preds).unwrap(), pcc(&mapped).unwrap());
        prop_assert_eq!(x.included, y.included);
        match (x.value, y.value) {
            (Some(u), Some(v)) => prop_assert!((u - v).abs() < 1e-9, "{} vs {}", u, v),
            (None, None) => {}
            other => prop_assert!(false, "definedness changed: {:?}", other),
        }
    }

    #[test]
    fn balanced_batches_are_exact(rows in frames(), quota in 1usize..6, seed: u64) {
        let d = build(&rows);
        let index = build_class_index(&d);
        prop_assert_eq!(index.total(), d.len());
        let present = index.non_empty_classes();
        prop_assume!(!present.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = next_balanced_batch(&index, quota * present.len(), &mut rng).unwrap();
        let mut counts = [0usize; 6];
        for &p in &batch.positions {
            counts[d.samples()[p].label] += 1;
        }
        for (k, &count) in counts.iter().enumerate() {
            prop_assert_eq!(count, if present.contains(&k) { quota } else { 0 });
        }
    }

    #[test]
    fn loso_folds_partition_the_data(rows in frames()) {
        let d = build(&rows);
        match make_loso_folds(&d) {
            Err(_) => prop_assert!(d.subjects().len() < 2),
            Ok(folds) => {
                let mut tested = vec![0; d.len()];
                for f in &folds {
                    prop_assert_eq!(f.train_positions.len() + f.test_positions.len(), d.len());
                    for &p in &f.test_positions {
                        prop_assert_eq!(&d.samples()[p].subject_id, &f.held_out_subject);
                        tested[p] += 1;
                    }
                    for &p in &f.train_positions {
                        prop_assert_ne!(&d.samples()[p].subject_id, &f.held_out_subject);
                    }
                }
                prop_assert!(tested.iter().all(|&t| t == 1));
            }
        }
    }
}
