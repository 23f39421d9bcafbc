use elastic_core::dataset::{
    parse_libsvm, parse_ratings_csv, split_dataset, split_indices, write_libsvm, write_ratings_csv,
    Label, LabeledDataset, LabeledPoint, RatingMatrix, SplitSpec,
};
use proptest::prelude::*;

fn labelled() -> impl Strategy<Value = LabeledDataset> {
    (1usize..6).prop_flat_map(|dim| {
        let value = prop_oneof![
            Just(0.0),
            -1e6f64..1e6,
            any::<f64>().prop_filter("finite", |v| v.is_finite())
        ];
        let point =
            (prop::collection::vec(value, dim), any::<bool>()).prop_map(|(features, pos)| {
                LabeledPoint {
                    features,
                    label: if pos {
                        Label::Positive
                    } else {
                        Label::Negative
                    },
                }
            });
        prop::collection::vec(point, 1..40).prop_map(|pts| LabeledDataset::new(pts).unwrap())
    })
}

/// The last user and item always carry a rating so the file fixes the shape.
fn ratings() -> impl Strategy<Value = RatingMatrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(m, n)| {
        let triple = (
            0..m,
            0..n,
            prop_oneof![(1u8..=5).prop_map(f64::from), 0.5f64..5.0],
        );
        prop::collection::vec(triple, 0..60).prop_map(move |mut t| {
            t.push((m - 1, n - 1, 3.0));
            // rebuilding drops the duplicate count, which files do not carry
            let merged = RatingMatrix::from_triples(m, n, t).unwrap();
            RatingMatrix::from_triples(m, n, merged.triples()).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn libsvm_round_trip(ds in labelled()) {
        let mut buf = Vec::new();
        write_libsvm(&ds, &mut buf).unwrap();
        prop_assert_eq!(parse_libsvm(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn ratings_round_trip(m in ratings()) {
        let mut buf = Vec::new();
        write_ratings_csv(&m, &mut buf).unwrap();
        prop_assert_eq!(parse_ratings_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn splits_partition_and_repeat(
        (n, count) in (2usize..300).prop_flat_map(|n| (Just(n), 1..n)),
        seed in any::<u64>(),
    ) {
        let spec = SplitSpec::count(count, seed);
        let (train, test) = split_indices(n, &spec).unwrap();
        prop_assert_eq!(test.len(), count);
        prop_assert_eq!(train.len() + test.len(), n);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(n, &spec).unwrap(), (train, test));
    }
}

#[test]
fn dataset_split_is_seed_deterministic_for_a_hundred_seeds() {
    let pts: Vec<LabeledPoint> = (0..50)
        .map(|i| LabeledPoint {
            features: vec![i as f64, (i * 7 % 11) as f64],
            label: if i % 3 == 0 {
                Label::Positive
            } else {
                Label::Negative
            },
        })
        .collect();
    let ds = LabeledDataset::new(pts).unwrap();
    for seed in 0..100 {
        let spec = SplitSpec::count(12, seed);
        let (a_train, a_test) = split_dataset(&ds, &spec).unwrap();
        let (b_train, b_test) = split_dataset(&ds, &spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        assert_eq!(a_train.len() + a_test.len(), ds.len());
        assert!(a_test
            .points()
            .iter()
            .all(|p| !a_train.points().contains(p)));
    }
}
