use std::collections::BTreeSet;

use ndarray::{Array1, Array2};
use proptest::prelude::*;

use metricforge::classify::make_bags;
use metricforge::dataset::{self, split_by_video, Format};
use metricforge::metrics::{eer, roc_auc};
use metricforge::metricspace::categorize;
use metricforge::projviz::pca2;
use metricforge::triplet::{batch_loss_only, triplet_loss, ProjectionHead};
use metricforge::{EmbeddingDataset, EmbeddingRecord, Label, Triplet, TripletCategory};

fn label() -> impl Strategy<Value = Label> {
    any::<bool>().prop_map(Label::from_fake)
}

/// Datasets with unique `(video, frame)` keys and one label per video.
fn dataset_strategy() -> impl Strategy<Value = EmbeddingDataset> {
    (1usize..6, prop::collection::vec((label(), 1usize..5), 1..8)).prop_flat_map(|(dim, videos)| {
        let n: usize = videos.iter().map(|v| v.1).sum();
        prop::collection::vec(prop::collection::vec(-1e6f32..1e6f32, dim), n).prop_map(move |vectors| {
            let mut it = vectors.into_iter();
            let mut records = Vec::new();
            for (vid, &(label, frames)) in videos.iter().enumerate() {
                for frame in 0..frames {
                    records.push(EmbeddingRecord {
                        label,
                        video_id: vid as u32 * 3,
                        frame_id: frame as u32,
                        vector: it.next().unwrap(),
                    });
                }
            }
            EmbeddingDataset::new(dim, records).unwrap()
        })
    })
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    prop::collection::vec((0i32..40, label()), 2..200)
        .prop_filter("both classes", |v| v.iter().any(|x| x.1.is_fake()) && v.iter().any(|x| !x.1.is_fake()))
        .prop_map(|v| v.into_iter().map(|(s, l)| (f64::from(s) / 8.0, l)).unzip())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trips(ds in dataset_strategy()) {
        for format in [Format::Binary, Format::Csv] {
            let bytes = dataset::to_bytes(&ds, format).unwrap();
            prop_assert_eq!(&dataset::from_bytes(&bytes, format).unwrap(), &ds);
            prop_assert_eq!(dataset::to_bytes(&ds, format).unwrap(), bytes);
        }
    }

    #[test]
    fn split_is_video_exclusive(ds in dataset_strategy(), frac in 0.05f64..0.95, seed in any::<u64>()) {
        prop_assume!(ds.video_ids().len() >= 2);
        let s = split_by_video(&ds, frac, seed).unwrap();
        let train: BTreeSet<u32> = s.train_indices.iter().map(|&i| ds.records[i].video_id).collect();
        let test: BTreeSet<u32> = s.test_indices.iter().map(|&i| ds.records[i].video_id).collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert!(!train.is_empty() && !test.is_empty());
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, ds.all_indices());
    }

    #[test]
    fn categories_partition_and_track_loss(d_ap in 0.0f64..10.0, d_an in 0.0f64..10.0, alpha in 1e-3f64..2.0) {
        let loss = (d_ap - d_an + alpha).max(0.0);
        match categorize(d_ap, d_an, alpha) {
            TripletCategory::Easy => prop_assert!(d_an >= d_ap + alpha && loss == 0.0),
            TripletCategory::SemiHard => prop_assert!(d_ap <= d_an && d_an < d_ap + alpha && loss > 0.0 && loss <= alpha),
            TripletCategory::Hard => prop_assert!(d_an < d_ap && loss > alpha),
        }
    }

    #[test]
    fn loss_is_nonnegative_and_zero_iff_easy(
        v in prop::collection::vec(-5.0f64..5.0, 9),
        alpha in 0.01f64..1.0,
    ) {
        let (a, p, n) = (&v[0..3], &v[3..6], &v[6..9]);
        let l = triplet_loss(a, p, n, alpha);
        prop_assert!(l >= 0.0);
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, w)| (u - w) * (u - w)).sum::<f64>();
        prop_assert_eq!(l == 0.0, d(a, n) >= d(a, p) + alpha);
    }

    #[test]
    fn loss_translation_invariant_without_normalization(
        xs in prop::collection::vec(-3.0f64..3.0, 12),
        shift in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let x = Array2::from_shape_vec((4, 3), xs).unwrap();
        let head = ProjectionHead::identity(3, false).unwrap();
        let moved = &x + &Array1::from(shift);
        let t = [Triplet { a: 0, p: 1, n: 2 }, Triplet { a: 3, p: 2, n: 0 }];
        let l0 = batch_loss_only(&head, x.view(), &t, 0.5).unwrap();
        let l1 = batch_loss_only(&head, moved.view(), &t, 0.5).unwrap();
        prop_assert!((l0 - l1).abs() < 1e-9);
    }

    #[test]
    fn auc_and_eer_invariant_under_monotone_maps((scores, labels) in scored()) {
        let auc = roc_auc(&scores, &labels).unwrap();
        let e = eer(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&auc) && (0.0..=1.0).contains(&e));
        for f in [|s: f64| 3.0 * s - 7.0, |s: f64| s.exp(), |s: f64| s.atan()] {
            let t: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            prop_assert_eq!(roc_auc(&t, &labels).unwrap(), auc);
            prop_assert_eq!(eer(&t, &labels).unwrap(), e);
        }
    }

    #[test]
    fn auc_complement_symmetry((scores, labels) in scored()) {
        let auc = roc_auc(&scores, &labels).unwrap();
        let swapped: Vec<Label> = labels.iter().map(|l| l.other()).collect();
        let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
        prop_assert_eq!(roc_auc(&negated, &swapped).unwrap(), auc);
        prop_assert!((roc_auc(&scores, &swapped).unwrap() - (1.0 - auc)).abs() < 1e-12);
    }

    #[test]
    fn bags_keep_minority_and_partition_majority(
        n_major in 3usize..20,
        n_minor in 1usize..6,
        k in prop::sample::select(vec![1usize, 3, 5, 7]),
        seed in any::<u64>(),
    ) {
        prop_assume!(n_major >= k && n_major > n_minor);
        let mut records = Vec::new();
        for v in 0..(n_major + n_minor) {
            for f in 0..2 {
                records.push(EmbeddingRecord {
                    label: Label::from_fake(v < n_major),
                    video_id: v as u32,
                    frame_id: f,
                    vector: vec![v as f32],
                });
            }
        }
        let ds = EmbeddingDataset::new(1, records).unwrap();
        let bags = make_bags(&ds, &ds.all_indices(), k, seed).unwrap();
        prop_assert_eq!(bags.len(), k);
        let minority: BTreeSet<usize> = (2 * n_major..ds.len()).collect();
        let mut majority_seen = Vec::new();
        for bag in &bags {
            let set: BTreeSet<usize> = bag.iter().copied().collect();
            prop_assert!(minority.is_subset(&set));
            majority_seen.extend(set.difference(&minority).copied());
        }
        majority_seen.sort_unstable();
        prop_assert_eq!(majority_seen, (0..2 * n_major).collect::<Vec<_>>());
    }

    #[test]
    fn pca_components_orthonormal(xs in prop::collection::vec(-10.0f64..10.0, 40)) {
        let x = Array2::from_shape_vec((10, 4), xs).unwrap();
        if let Ok(p) = pca2(x.view(), &[Label::Real; 10]) {
            for c in &p.components {
                prop_assert!((c.dot(c) - 1.0).abs() < 1e-9);
            }
            prop_assert!(p.components[0].dot(&p.components[1]).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&p.explained_fraction));
        }
    }

    #[test]
    fn head_round_trips(
        w in prop::collection::vec(-4.0f32..4.0, 6),
        b in prop::collection::vec(-1.0f32..1.0, 2),
        normalize in any::<bool>(),
    ) {
        let weights = Array2::from_shape_vec((2, 3), w.into_iter().map(f64::from).collect()).unwrap();
        let bias = Array1::from(b.into_iter().map(f64::from).collect::<Vec<_>>());
        let head = ProjectionHead::new(weights, bias, normalize).unwrap();
        let bytes = head.to_bytes().unwrap();
        prop_assert_eq!(ProjectionHead::from_bytes(&bytes).unwrap(), head);
    }
}
