use proptest::prelude::*;
use rankprompt::data::{batch_iter, generate_synthetic, DatasetSpec, Split};
use rankprompt::eval::{auc_macro_ovr, confusion_matrix, macro_f1, rank_monotonicity};
use rankprompt::numeric::{softmax_rows, LabelVector, Matrix, SimilarityMatrix};
use rankprompt::sms::{committed_from_parts, kernel_weights, CalibrationVariant, KernelSpec};

const K: usize = 4;

fn rows_and_labels() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..30).prop_flat_map(|m| {
        (
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, K), m),
            prop::collection::vec(0usize..K, m),
        )
    })
}

fn sim(rows: &[Vec<f64>]) -> SimilarityMatrix {
    SimilarityMatrix::from_rows(rows).unwrap()
}

proptest! {
    #[test]
    fn metrics_ignore_sample_order((rows, labels) in rows_and_labels(), rot in 0usize..30) {
        let truth = LabelVector::new(labels.clone(), K).unwrap();
        let n = rows.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let rows2: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let truth2 = LabelVector::new(perm.iter().map(|&i| labels[i]).collect(), K).unwrap();
        let pred = LabelVector::new(rows.iter().map(|r| argmax(r)).collect(), K).unwrap();
        let pred2 = LabelVector::new(rows2.iter().map(|r| argmax(r)).collect(), K).unwrap();
        prop_assert!((macro_f1(&pred, &truth, K).unwrap() - macro_f1(&pred2, &truth2, K).unwrap()).abs() < 1e-12);
        let (s1, s2) = (sim(&rows), sim(&rows2));
        if let (Ok(a), Ok(b)) = (
            auc_macro_ovr(&softmax_rows(&s1, 1.0).unwrap(), &truth, K),
            auc_macro_ovr(&softmax_rows(&s2, 1.0).unwrap(), &truth2, K),
        ) {
            prop_assert!((a.0 - b.0).abs() < 1e-12);
        }
        prop_assert_eq!(rank_monotonicity(&s1, &truth).unwrap(), rank_monotonicity(&s2, &truth2).unwrap());
    }

    #[test]
    fn auc_invariant_under_increasing_transform((rows, labels) in rows_and_labels()) {
        let truth = LabelVector::new(labels, K).unwrap();
        let scores = Matrix::from_rows(&rows).unwrap();
        let warped = Matrix::from_rows(
            &rows.iter().map(|r| r.iter().map(|v| (v * 0.7).exp() + 3.0 * v).collect::<Vec<_>>()).collect::<Vec<_>>(),
        ).unwrap();
        if let Ok((a, per)) = auc_macro_ovr(&scores, &truth, K) {
            let (b, per2) = auc_macro_ovr(&warped, &truth, K).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert_eq!(per, per2);
        }
    }

    #[test]
    fn monotonicity_invariant_under_shift_and_scale(
        (rows, labels) in rows_and_labels(), shift in -10.0f64..10.0, scale in 0.1f64..10.0,
    ) {
        let truth = LabelVector::new(labels, K).unwrap();
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| v * scale + shift).collect()).collect();
        prop_assert_eq!(
            rank_monotonicity(&sim(&rows), &truth).unwrap(),
            rank_monotonicity(&sim(&moved), &truth).unwrap()
        );
    }

    #[test]
    fn confusion_rows_sum_to_truth_counts(
        pairs in prop::collection::vec((0usize..K, 0usize..K), 1..50),
    ) {
        let pred = LabelVector::new(pairs.iter().map(|p| p.0).collect(), K).unwrap();
        let truth = LabelVector::new(pairs.iter().map(|p| p.1).collect(), K).unwrap();
        let cm = confusion_matrix(&pred, &truth, K).unwrap();
        for (row, count) in cm.iter().zip(truth.class_counts()) {
            prop_assert_eq!(row.iter().sum::<usize>(), count);
        }
        let f1 = macro_f1(&pred, &truth, K).unwrap();
        prop_assert!((0.0..=1.0).contains(&f1));
    }

    #[test]
    fn kernel_weights_normalize_and_mirror(k in 2usize..9, sigma in 0.1f64..5.0, include_self: bool, j in 0usize..9) {
        let j = j % k;
        let spec = KernelSpec { sigma, include_self, ..KernelSpec::default() };
        let w = kernel_weights(&spec, j, k).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mirrored = kernel_weights(&spec, k - 1 - j, k).unwrap();
        for (a, b) in w.iter().zip(mirrored.iter().rev()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for a in 0..k {
            for b in 0..k {
                prop_assert_eq!(spec.raw_weight(a, b), spec.raw_weight(b, a));
            }
        }
    }

    #[test]
    fn standard_calibration_is_affine_per_row(
        stats in prop::collection::vec((-2.0f64..2.0, 0.1f64..3.0, -2.0f64..2.0, 0.1f64..3.0), K * K),
        s in prop::collection::vec(-4.0f64..4.0, K),
        t in prop::collection::vec(-4.0f64..4.0, K),
        alpha in -2.0f64..2.0,
        class in 0usize..K,
    ) {
        let grid = |f: fn(&(f64, f64, f64, f64)) -> f64| -> Vec<Vec<f64>> {
            stats.chunks(K).map(|c| c.iter().map(f).collect()).collect()
        };
        let committed = committed_from_parts(grid(|x| x.0), grid(|x| x.1), grid(|x| x.2), grid(|x| x.3)).unwrap();
        let mix: Vec<f64> = s.iter().zip(&t).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let labels = LabelVector::new(vec![class; 3], K).unwrap();
        let out = committed
            .calibrate(&sim(&[s, t, mix]), &labels, CalibrationVariant::Standard)
            .unwrap();
        for j in 0..K {
            let expect = alpha * out.get(0, j) + (1.0 - alpha) * out.get(1, j);
            prop_assert!((out.get(2, j) - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn generated_counts_and_splits(samples in 40usize..400, rho in 1.0f64..30.0, seed: u64) {
        let spec = DatasetSpec { samples, imbalance_ratio: rho, feature_dim: 2, seed, ..DatasetSpec::default() };
        let counts = spec.class_counts().unwrap();
        prop_assert_eq!(counts.iter().sum::<usize>(), samples);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        let ds = generate_synthetic(&spec).unwrap();
        let (_, train) = ds.split(Split::Train);
        prop_assert!(train.class_counts().iter().all(|&c| c > 0));
        let batches = batch_iter(&ds, Split::Train, 7, seed, 3).unwrap();
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, ds.split_indices(Split::Train));
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = j;
        }
    }
    best
}
