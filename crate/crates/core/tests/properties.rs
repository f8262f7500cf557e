use std::path::PathBuf;

use proptest::prelude::*;
use sonoseg::data::{
    largest_remainder, make_adaptation_splits, stratified_split, AdaptationSplitSpec, BinaryMask,
    DatasetManifest, Label, ManifestEntry, Source, Split,
};
use sonoseg::ensemble::mean_tensors;
use sonoseg::interpret::{grad_cam_map, morphological_open, otsu_threshold, OTSU_BINS};
use sonoseg::metrics::{dice_score, iou_score};
use sonoseg::nn::ParamId;
use sonoseg::stats::{bootstrap_ci, wilcoxon_signed_rank};
use sonoseg::train::{clip_gradients, cosine_lr, global_norm, EarlyStopState};
use sonoseg_tensor::Tensor;

fn mask(h: usize, w: usize) -> impl Strategy<Value = BinaryMask> {
    proptest::collection::vec(any::<bool>(), h * w)
        .prop_map(move |b| BinaryMask::from_bools(h, w, &b))
}

fn manifest(counts: [usize; 3]) -> DatasetManifest {
    let entries = Label::ALL
        .iter()
        .flat_map(|&l| (0..counts[l.index()]).map(move |i| (l, i)))
        .map(|(label, i)| ManifestEntry {
            id: format!("{label}-{i}"),
            image_path: PathBuf::from(format!("{label}-{i}.png")),
            mask_paths: Vec::new(),
            label,
            source: Source::Busi,
        })
        .collect();
    DatasetManifest::new(PathBuf::new(), entries)
}

proptest! {
    #[test]
    fn dice_bounds_iou(p in mask(6, 7), g in mask(6, 7)) {
        let (d, j) = (dice_score(&p, &g).unwrap(), iou_score(&p, &g).unwrap());
        prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&j));
        prop_assert!(d >= j);
        prop_assert!((d - 2.0 * j / (1.0 + j)).abs() < 1e-12);
        prop_assert_eq!(d, dice_score(&g, &p).unwrap());
    }

    #[test]
    fn clipping_never_increases_norm(values in proptest::collection::vec(-50.0f64..50.0, 1..40), max in 0.01f64..10.0) {
        let half = values.len() / 2;
        let mut grads = vec![
            (ParamId(0), Tensor::new(&[half], values[..half].to_vec())),
            (ParamId(1), Tensor::new(&[values.len() - half], values[half..].to_vec())),
        ];
        let before = global_norm(&grads);
        prop_assert_eq!(clip_gradients(&mut grads, max), before);
        let after = global_norm(&grads);
        prop_assert!(after <= before + 1e-12);
        prop_assert!(after <= max * (1.0 + 1e-9));
    }

    #[test]
    fn cosine_schedule_decays(total in 1usize..200, eta_max in 1e-6f64..1.0, ratio in 0.0f64..1.0) {
        let eta_min = eta_max * ratio;
        let lrs: Vec<f64> = (0..total).map(|t| cosine_lr(t, total, eta_max, eta_min)).collect();
        prop_assert_eq!(lrs[0], eta_max);
        prop_assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(lrs.iter().all(|&l| l >= eta_min - 1e-15 && l <= eta_max));
    }

    #[test]
    fn opening_is_anti_extensive_and_idempotent(m in mask(9, 11), k in 1usize..3) {
        let once = morphological_open(&m, k);
        prop_assert!(once.is_subset_of(&m));
        prop_assert_eq!(morphological_open(&once, k), once);
    }

    #[test]
    fn otsu_threshold_lies_in_range(values in proptest::collection::vec(-3.0f64..3.0, 2..300)) {
        let r = otsu_threshold(&values, OTSU_BINS).unwrap();
        prop_assert!(r.threshold >= r.min && r.threshold <= r.max);
        if !r.degenerate {
            prop_assert!(values.iter().any(|&v| r.is_foreground(v)));
            prop_assert!(values.iter().any(|&v| !r.is_foreground(v)));
        }
    }

    #[test]
    fn grad_cam_is_non_negative(act in proptest::collection::vec(-5.0f64..5.0, 24), g in proptest::collection::vec(-5.0f64..5.0, 24)) {
        let (w, map) = grad_cam_map(&Tensor::new(&[2, 3, 4], act), &Tensor::new(&[2, 3, 4], g));
        prop_assert_eq!(w.len(), 2);
        prop_assert!(map.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn largest_remainder_apportions_exactly(total in 0usize..2000, a in 0.01f64..1.0, b in 0.01f64..1.0, c in 0.01f64..1.0) {
        let s = a + b + c;
        let parts = largest_remainder(total, &[a / s, b / s, c / s]);
        prop_assert_eq!(parts.iter().sum::<usize>(), total);
        for (p, f) in parts.iter().zip([a / s, b / s, c / s]) {
            prop_assert!((*p as f64 - f * total as f64).abs() < 1.0 + 1e-9);
        }
    }

    #[test]
    fn stratified_split_partitions(n in 3usize..40, b in 3usize..40, m in 3usize..40, seed in any::<u64>()) {
        let man = manifest([n, b, m]);
        let split = stratified_split(&man, (0.8, 0.1, 0.1), seed).unwrap();
        let total: usize = Split::ALL.iter().map(|&s| split.entries_in(s).len()).sum();
        prop_assert_eq!(total, man.len());
        prop_assert!(man.entries.iter().all(|e| split.split_of(&e.id).is_some()));
        let sizes = largest_remainder(man.len(), &[0.8, 0.1, 0.1]);
        for (k, s) in Split::ALL.into_iter().enumerate() {
            let counts = split.split_counts(s);
            prop_assert_eq!(counts.total(), sizes[k]);
            for (c, &total) in [n, b, m].iter().enumerate() {
                let ideal = total as f64 * sizes[k] as f64 / man.len() as f64;
                prop_assert!((counts.0[c] as f64 - ideal).abs() < 1.0);
            }
        }
    }

    #[test]
    fn adaptation_splits_are_nested(n in 1usize..60, b in 1usize..60, m in 1usize..60, seed in any::<u64>()) {
        let man = manifest([n, b, m]);
        let spec = make_adaptation_splits(&man, &AdaptationSplitSpec::default(), seed).unwrap();
        for w in spec.splits.windows(2) {
            prop_assert!(w[0].train.iter().all(|id| w[1].train.contains(id)));
        }
        for s in &spec.splits {
            prop_assert_eq!(s.train.len() + s.test.len(), man.len());
            prop_assert!(s.test.iter().all(|id| !s.train.contains(id)));
        }
    }

    #[test]
    fn bootstrap_interval_is_ordered(values in proptest::collection::vec(0.0f64..1.0, 2..30), seed in any::<u64>()) {
        let ci = bootstrap_ci(&values, 200, 0.9, seed).unwrap();
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        prop_assert!(ci.low <= ci.high);
        prop_assert!(ci.low >= lo && ci.high <= hi);
    }

    #[test]
    fn wilcoxon_ranks_sum_to_total(a in proptest::collection::vec(-3.0f64..3.0, 1..30), shift in -1.0f64..1.0) {
        let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v * 0.5 + shift + i as f64 * 0.01).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        let n = r.n as f64;
        prop_assert!((r.w_plus + r.w_minus - n * (n + 1.0) / 2.0).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert_eq!(r.statistic, r.w_plus.min(r.w_minus));
    }

    #[test]
    fn mean_of_identical_tensors_is_exact(values in proptest::collection::vec(-1e3f64..1e3, 1..20), k in 1usize..6) {
        let t = Tensor::new(&[values.len()], values);
        let copies = vec![t.clone(); k];
        let mean = mean_tensors(&copies);
        prop_assert_eq!(mean.data(), t.data());
    }

    #[test]
    fn early_stopping_waits_for_patience(metrics in proptest::collection::vec(0.0f64..1.0, 1..40), patience in 1usize..8) {
        let mut state = EarlyStopState::new(patience);
        let mut best = f64::NEG_INFINITY;
        let mut since = 0;
        for (epoch, &m) in metrics.iter().enumerate() {
            let d = state.update(epoch, m);
            if m > best {
                best = m;
                since = 0;
            } else {
                since += 1;
            }
            prop_assert_eq!(d.improved, since == 0);
            prop_assert_eq!(d.stop, since >= patience);
            if d.stop {
                break;
            }
        }
    }
}
