use elastic_core::coding::{build_dual_rtrees, CodeBook, RtreeConfig};
use elastic_core::dataset::{Label, LabeledDataset, LabeledPoint};
use elastic_core::knn::{auc, classify, exact_knn, maintain_state, KnnQuery};
use proptest::prelude::*;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dataset() -> impl Strategy<Value = (LabeledDataset, Vec<Vec<f64>>)> {
    (1usize..4)
        .prop_flat_map(|dim| {
            let point = (prop::collection::vec(0.0f64..100.0, dim), any::<bool>()).prop_map(
                |(features, pos)| LabeledPoint {
                    features,
                    label: if pos {
                        Label::Positive
                    } else {
                        Label::Negative
                    },
                },
            );
            let queries = prop::collection::vec(prop::collection::vec(-10.0f64..110.0, dim), 1..6);
            (prop::collection::vec(point, 30..150), queries)
        })
        .prop_map(|(mut pts, queries)| {
            pts[0].label = Label::Positive;
            pts[1].label = Label::Negative;
            (LabeledDataset::new(pts).unwrap(), queries)
        })
}

fn book(train: &LabeledDataset, leaf: usize) -> CodeBook {
    let config = RtreeConfig {
        max_entries: 3,
        leaf_entries: Some(leaf),
        levels: None,
    };
    build_dual_rtrees(train, &config, 1).unwrap()
}

const K: usize = 3;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pruned_nodes_hold_no_exact_neighbour((train, queries) in dataset()) {
        let book = book(&train, 2);
        for q in &queries {
            let query = KnnQuery::new(q, K);
            let mut dists: Vec<f64> = train.points().iter().map(|p| sq(&p.features, q)).collect();
            dists.sort_by(f64::total_cmp);
            let kth = dists[K - 1];
            for code in book.codes().iter().filter(|c| c.len() >= K) {
                let r = classify(&book, code, &query, None).unwrap();
                let state = maintain_state(&book, code, &query, &r);
                for id in code.nodes.iter().filter(|id| !state.nodes.contains(id)) {
                    for m in book.members(*id) {
                        prop_assert!(sq(&train.points()[m].features, q) > kth);
                    }
                }
            }
        }
    }

    #[test]
    fn thresholds_shrink_and_deeper_states_scan_less((train, queries) in dataset()) {
        let book = book(&train, 2);
        let codes: Vec<_> = book.codes().iter().filter(|c| c.len() >= K).collect();
        prop_assume!(codes.len() >= 2);
        let last = codes[codes.len() - 1];
        for q in &queries {
            let query = KnnQuery::new(q, K);
            let fresh = codes.iter().map(|c| classify(&book, c, &query, None).unwrap()).collect::<Vec<_>>();
            for w in fresh.windows(2) {
                prop_assert!(w[1].threshold <= w[0].threshold);
            }
            let mut previous = fresh.last().unwrap().scanned;
            for (code, r) in codes.iter().zip(&fresh).take(codes.len() - 1) {
                let state = maintain_state(&book, code, &query, r);
                let refined = classify(&book, last, &query, Some(&state)).unwrap();
                prop_assert!(refined.scanned <= previous);
                prop_assert_eq!(&refined.neighbours, &fresh.last().unwrap().neighbours);
                previous = refined.scanned;
            }
        }
    }

    #[test]
    fn one_point_leaves_match_the_exact_classifier((train, queries) in dataset()) {
        let book = book(&train, 1);
        let leaves = book.codes().last().unwrap();
        for q in &queries {
            let query = KnnQuery::new(q, K);
            let approx = classify(&book, leaves, &query, None).unwrap();
            let exact = exact_knn(&train, &query).unwrap();
            prop_assert_eq!(approx.predicted, exact.predicted);
            prop_assert_eq!(approx.k_pos, exact.k_pos);
            prop_assert!((approx.threshold - exact.threshold).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_counts_concordant_pairs(raw in prop::collection::vec((0usize..=5, any::<bool>()), 2..120)) {
        let mut pts: Vec<(usize, usize, Label)> = raw
            .iter()
            .map(|&(kp, pos)| (kp, 5, if pos { Label::Positive } else { Label::Negative }))
            .collect();
        pts[0].2 = Label::Positive;
        pts[1].2 = Label::Negative;
        let (mut wins, mut pairs) = (0.0, 0.0);
        for p in pts.iter().filter(|p| p.2 == Label::Positive) {
            for n in pts.iter().filter(|p| p.2 == Label::Negative) {
                pairs += 1.0;
                wins += match p.0.cmp(&n.0) {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
        prop_assert!((auc(&pts).unwrap() - wins / pairs).abs() < 1e-12);
    }
}
