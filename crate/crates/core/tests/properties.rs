use std::collections::BTreeMap;

use hiergi::data::{build_folds, oversample_epoch};
use hiergi::hierarchy::{aggregate_logits, aggregate_probs, softmax};
use hiergi::losses::HierLoss;
use hiergi::metrics::{mcc, seg_scores};
use hiergi::{CategoryGrouping, ConfusionMatrix, LabelHierarchy, SegLoss};
use ndarray::{ArrayD, IxDyn};
use proptest::prelude::*;

const N_FIND: usize = 23;

fn logits(bound: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-bound..bound, N_FIND)
}

fn groupings() -> impl Strategy<Value = CategoryGrouping> {
    prop_oneof![Just(CategoryGrouping::Global), Just(CategoryGrouping::PerTract)]
}

#[test]
fn every_finding_sits_in_exactly_one_group_per_level() {
    let h = LabelHierarchy::default_taxonomy();
    for map in [
        h.tract_map(),
        h.category_map(CategoryGrouping::Global),
        h.category_map(CategoryGrouping::PerTract),
    ] {
        let mut seen = vec![0usize; h.n_find()];
        for members in &map.membership {
            for &k in members {
                seen[k] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c == 1), "{:?}", map.level);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aggregated_probabilities_are_conserved(raw in prop::collection::vec(1e-6f64..1.0, N_FIND), g in groupings()) {
        let h = LabelHierarchy::default_taxonomy();
        let s: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / s).collect();
        for map in [h.tract_map(), h.category_map(g)] {
            let q = aggregate_probs(&p, map).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn log_space_matches_probability_space(z in logits(50.0), g in groupings()) {
        let h = LabelHierarchy::default_taxonomy();
        let p = softmax(&z);
        for map in [h.tract_map(), h.category_map(g)] {
            let direct = aggregate_probs(&p, map).unwrap();
            let logs = aggregate_logits(&z, map).unwrap();
            for (l, d) in logs.iter().zip(&direct) {
                if *d > 1e-300 {
                    prop_assert!((l - d.ln()).abs() <= 1e-9 * d.ln().abs().max(1.0), "{} vs {}", l, d.ln());
                }
            }
        }
    }

    #[test]
    fn huge_logits_stay_finite(z in logits(1e4), g in groupings()) {
        let h = LabelHierarchy::default_taxonomy();
        for map in [h.tract_map(), h.category_map(g)] {
            prop_assert!(aggregate_logits(&z, map).unwrap().iter().all(|v| v.is_finite()));
        }
        let loss = HierLoss::with_grouping(&h, g);
        let (l, grad) = loss.loss_and_grad(&z, &loss.target(0).unwrap()).unwrap();
        prop_assert!(l.is_finite() && grad.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loss_is_non_negative_and_decomposes(z in logits(20.0), f in 0..N_FIND, g in groupings()) {
        let h = LabelHierarchy::default_taxonomy();
        let loss = HierLoss::with_grouping(&h, g);
        let t = loss.target(f).unwrap();
        let total = loss.loss(&z, &t).unwrap();
        prop_assert!(total >= 0.0);

        // Coarse terms recomputed from plain softmax sums.
        let p = softmax(&z);
        let mass = |members: &[usize]| members.iter().map(|&k| p[k]).sum::<f64>();
        let tract = -mass(&h.tract_map().membership[t.tract]).ln();
        let cat = -mass(&h.category_map(g).membership[t.category]).ln();
        let w = loss.weights;
        let coarse = total - w.finding * -p[f].ln();
        prop_assert!((coarse - (w.tract * tract + w.category * cat)).abs() < 1e-9 * total.max(1.0));
    }

    #[test]
    fn seg_loss_is_symmetric_in_the_heads(
        a in prop::collection::vec(-8.0f32..8.0, 64),
        b in prop::collection::vec(-8.0f32..8.0, 64),
        m in prop::collection::vec(any::<bool>(), 64),
    ) {
        let shape = IxDyn(&[1, 1, 8, 8]);
        let a = ArrayD::from_shape_vec(shape.clone(), a).unwrap();
        let b = ArrayD::from_shape_vec(shape.clone(), b).unwrap();
        let m = ArrayD::from_shape_vec(shape, m.into_iter().map(f32::from).collect()).unwrap();
        let l = SegLoss::default();
        let ab = l.loss(a.view(), b.view(), m.view()).unwrap();
        let ba = l.loss(b.view(), a.view(), m.view()).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn mcc_ignores_class_relabelling(
        pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200),
        perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let a = mcc(&ConfusionMatrix::from_labels(&t, &p, 5).unwrap()).unwrap();
        let t2: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
        let b = mcc(&ConfusionMatrix::from_labels(&t2, &p2, 5).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn seg_scores_are_bounded_and_consistent(
        pred in prop::collection::vec(any::<bool>(), 1..256),
        seed in any::<u64>(),
    ) {
        let n = pred.len();
        let gt: Vec<f32> = (0..n).map(|i| f32::from((seed >> (i % 64)) & 1 == 1)).collect();
        let pred = ArrayD::from_shape_vec(IxDyn(&[n]), pred.into_iter().map(f32::from).collect()).unwrap();
        let gt = ArrayD::from_shape_vec(IxDyn(&[n]), gt).unwrap();
        let s = seg_scores(&pred.view(), &gt.view()).unwrap();
        for v in [s.jaccard, s.f1, s.precision, s.recall] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(s.jaccard <= s.f1 + 1e-15);
        prop_assert!((s.f1 - 2.0 * s.jaccard / (1.0 + s.jaccard)).abs() < 1e-12);
    }

    #[test]
    fn oversampling_equalizes_class_counts(labels in prop::collection::vec(0usize..6, 1..120), seed in any::<u64>()) {
        let subset: Vec<usize> = (0..labels.len()).collect();
        let epoch = oversample_epoch(&labels, &subset, seed).unwrap();
        let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
        for &i in &epoch {
            *hist.entry(labels[i]).or_default() += 1;
        }
        let mut present: Vec<usize> = labels.clone();
        present.sort_unstable();
        present.dedup();
        let max = present.iter().map(|c| labels.iter().filter(|&&l| l == *c).count()).max().unwrap();
        prop_assert_eq!(hist.len(), present.len());
        prop_assert!(hist.values().all(|&c| c == max));
    }

    #[test]
    fn stratified_folds_partition_and_balance(labels in prop::collection::vec(0usize..4, 10..150), k in 2usize..6, seed in any::<u64>()) {
        let plan = build_folds(&labels, k, seed).unwrap();
        let mut all: Vec<usize> = (0..k).flat_map(|f| plan.fold_members(f)).collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        for c in 0..4 {
            let per_fold: Vec<usize> = (0..k)
                .map(|f| plan.fold_members(f).iter().filter(|&&i| labels[i] == c).count())
                .collect();
            let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
            prop_assert!(hi - lo <= 1, "class {} spread {:?}", c, per_fold);
        }
    }
}
