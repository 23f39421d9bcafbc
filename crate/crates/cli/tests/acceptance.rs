//! End-to-end acceptance checks. Each test writes one `PASS`/`FAIL` line to
//! stderr (bypassing the test harness's capture) and then asserts.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use elastic_core::baselines::{
    anytime_knn_ranking, anytime_knn_rtree, rank_training_points, Descent,
};
use elastic_core::bench::{bench_knn, KnnAlgorithm, KnnBench, KnnMetric};
use elastic_core::cf::{
    exact_cf_predict, predict, predict_batch, rmse, train_incremental_svd, CfQuery, SvdConfig,
    UserFeatureMatrix,
};
use elastic_core::coding::{build_cf_codebook, build_dual_rtrees, CodeBook, RtreeConfig};
use elastic_core::dataset::{
    split_dataset, split_ratings, Label, LabeledDataset, RatingMatrix, SplitSpec, TestSize,
};
use elastic_core::elasticity::{
    audit_entropy_monotonicity, investment_elasticity, resolution, InvestmentSeries,
};
use elastic_core::knn::{accuracy, auc, classify, exact_knn, maintain_state, KnnQuery};
use elastic_core::planner::{
    fixed_plan, spot_availability, spot_plan, PlanQuery, PlannedResult, PriceSchedule, SpotOptions,
};
use elastic_core::synth::{
    colour_cube, four_regions, gaussian_mixture, latent_ratings, RatingShape,
};

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "{} criterion {id:>2} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Canonical two-class split: data seed 1, 100 test points drawn with seed 7.
fn fourclass() -> (LabeledDataset, LabeledDataset) {
    split_dataset(&four_regions(1).unwrap(), &SplitSpec::count(100, 7)).unwrap()
}

fn fourclass_config() -> RtreeConfig {
    RtreeConfig {
        max_entries: 4,
        leaf_entries: Some(3),
        levels: Some(5),
    }
}

fn fourclass_book(train: &LabeledDataset) -> CodeBook {
    build_dual_rtrees(train, &fourclass_config(), 7).unwrap()
}

fn twelve_users() -> (RatingMatrix, UserFeatureMatrix) {
    let ratings = [
        (1, 1, 5.0),
        (2, 1, 4.0),
        (3, 1, 5.0),
        (3, 3, 3.0),
        (4, 1, 3.0),
        (4, 2, 2.0),
        (5, 1, 2.0),
        (5, 3, 3.0),
        (6, 1, 3.0),
        (7, 3, 3.0),
        (7, 5, 2.0),
        (8, 3, 2.0),
        (8, 5, 3.0),
        (9, 4, 3.0),
        (9, 5, 3.0),
        (10, 3, 2.0),
        (10, 5, 1.0),
        (11, 5, 2.0),
        (12, 3, 2.0),
        (12, 5, 1.0),
    ];
    let matrix =
        RatingMatrix::from_triples(12, 5, ratings.iter().map(|&(u, i, r)| (u - 1, i - 1, r)))
            .unwrap()
            .with_scale(1.0, 5.0);
    let features = [
        [1.47, 2.60],
        [1.47, 2.20],
        [2.07, 2.20],
        [0.76, 2.60],
        [0.76, 1.80],
        [0.85, 1.80],
        [0.88, 0.70],
        [0.88, 0.20],
        [1.45, 0.20],
        [0.15, 1.18],
        [0.15, 0.78],
        [0.44, 0.78],
    ];
    let features =
        UserFeatureMatrix::from_rows(features.iter().map(|r| r.to_vec()).collect()).unwrap();
    (matrix, features)
}

#[test]
fn c01_node_aggregates() {
    let start = Instant::now();
    let (matrix, features) = twelve_users();
    let book = build_cf_codebook(&matrix, &features, &RtreeConfig::with_max_entries(3), 0).unwrap();
    let n1 = book
        .nodes()
        .iter()
        .find(|n| book.members(n.id) == [0, 1, 2])
        .expect("a node grouping u1, u2, u3");
    let agg = n1.ratings().unwrap();
    // oracle: u1..u3 rated i1 with 5, 4, 5; their overall means are 5, 4, 4
    let i1 = agg.get(0).unwrap();
    let i3 = agg.get(2).unwrap();
    let checks = [
        (
            (i1.rating - 14.0 / 3.0).abs() < 1e-12 && (i1.rating - 4.67).abs() <= 0.005,
            "i1 rating 4.67",
        ),
        (
            (i1.rater_mean - 13.0 / 3.0).abs() < 1e-12 && (i1.rater_mean - 4.33).abs() <= 0.005,
            "i1 rater mean 4.33",
        ),
        (
            (i3.rating - 3.0).abs() <= 0.005 && (i3.rater_mean - 4.0).abs() <= 0.005,
            "i3 3.00/4.00",
        ),
        (agg.get(1).is_none(), "i2 absent"),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.0).map(|c| c.1).collect();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "node aggregates",
        failed.is_empty() && secs < 1.0,
        format!(
            "i1 ({:.4}, {:.4}) i3 ({:.4}, {:.4}) in {secs:.3}s; failed {failed:?}",
            i1.rating, i1.rater_mean, i3.rating, i3.rater_mean
        ),
    );
}

#[test]
fn c02_auc_fixture() {
    // eight points ranked by score; positives hold ranks 2, 4, 5, 8
    let positives = [2, 4, 5, 8];
    let pts: Vec<(usize, usize, Label)> = (1..=8)
        .map(|r| {
            (
                r,
                8,
                if positives.contains(&r) {
                    Label::Positive
                } else {
                    Label::Negative
                },
            )
        })
        .collect();
    let a = auc(&pts).unwrap();
    let (mut wins, mut pairs) = (0.0, 0.0);
    for p in pts.iter().filter(|p| p.2 == Label::Positive) {
        for n in pts.iter().filter(|p| p.2 == Label::Negative) {
            pairs += 1.0;
            wins += if p.0 > n.0 {
                1.0
            } else if p.0 == n.0 {
                0.5
            } else {
                0.0
            };
        }
    }
    let oracle = wins / pairs;
    verdict(
        2,
        "AUC fixture",
        (a - 0.5625).abs() < 1e-12 && (oracle - a).abs() < 1e-12,
        format!("auc {a} pair-count {oracle}"),
    );
}

#[test]
fn c03_resolution_fixture() {
    // one integer among 100; the code narrows it to 50 candidates
    let r = resolution(&[(1, 1, 50.0, 50)], 1, 100, 10.0).unwrap();
    let (h, hc, res) = (
        r.prior_entropy,
        r.codes[0].cond_entropy,
        r.codes[0].resolution,
    );
    let exact = (h - 2.0).abs() < 1e-9
        && (hc - 50f64.log10()).abs() < 1e-9
        && (res - 2f64.log10()).abs() < 1e-9;
    let printed = (hc - 1.70).abs() < 0.005 && (res - 0.30).abs() < 0.005;
    verdict(
        3,
        "resolution fixture",
        exact && printed,
        format!("H(S) {h:.9} H(S|c) {hc:.9} R {res:.9}"),
    );
}

#[test]
fn c04_entropy_monotonicity() {
    let start = Instant::now();
    let mut violations = Vec::new();
    let mut audits = 0;
    for seed in 1..=3u64 {
        let sets = [
            ("fourclass", four_regions(seed).unwrap()),
            ("skin", colour_cube(5000, seed).unwrap()),
            ("mixture", gaussian_mixture(2000, 4, 3, seed).unwrap()),
        ];
        for (name, data) in sets {
            let book = build_dual_rtrees(&data, &RtreeConfig::default(), seed).unwrap();
            let audit = audit_entropy_monotonicity(&book, data.len() as u64, None, 2.0).unwrap();
            // independent recheck of both sequences
            let vols: Vec<f64> = book
                .codes()
                .iter()
                .map(|c| book.total_mbr_volume(c))
                .collect();
            let res: Vec<f64> = audit.report.codes.iter().map(|c| c.resolution).collect();
            let bad = vols.windows(2).any(|w| w[1] > w[0] + 1e-9 * w[0].abs())
                || res
                    .windows(2)
                    .any(|w| w[1] < w[0] - 1e-9 * w[0].abs().max(1.0));
            if bad || !audit.passed() {
                violations.push(format!("{name}/seed {seed}"));
            }
            audits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        4,
        "entropy monotonicity",
        violations.is_empty() && secs < 30.0,
        format!("{audits} codebooks, violations {violations:?}, {secs:.2}s"),
    );
}

#[test]
fn c05_pruning_safety() {
    let start = Instant::now();
    let (train, test) = fourclass();
    let book = fourclass_book(&train);
    let k = 5;
    let mut violations = 0;
    let mut pruned_total = 0;
    for q in test.points() {
        let query = KnnQuery::new(&q.features, k);
        let mut d: Vec<f64> = train
            .points()
            .iter()
            .map(|p| sq(&p.features, &q.features))
            .collect();
        d.sort_by(f64::total_cmp);
        let kth = d[k - 1];
        for code in book.codes() {
            let r = classify(&book, code, &query, None).unwrap();
            let state = maintain_state(&book, code, &query, &r);
            for id in code.nodes.iter().filter(|id| !state.nodes.contains(id)) {
                pruned_total += 1;
                violations += book
                    .members(*id)
                    .iter()
                    .filter(|&&m| sq(&train.points()[m].features, &q.features) <= kth)
                    .count();
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        "pruning safety",
        violations == 0 && secs < 60.0,
        format!(
            "{} queries, {pruned_total} pruned nodes, {violations} violations, {secs:.2}s",
            test.len()
        ),
    );
}

#[test]
fn c06_threshold_and_accumulative_monotonicity() {
    let (train, test) = fourclass();
    let book = fourclass_book(&train);
    let codes = book.codes();
    let deepest = codes.last().unwrap();
    let mut threshold_violations = 0;
    let mut cost_violations = 0;
    let mut mean_costs = vec![0.0; codes.len()];
    for q in test.points() {
        let query = KnnQuery::new(&q.features, 5);
        let fresh: Vec<_> = codes
            .iter()
            .map(|c| classify(&book, c, &query, None).unwrap())
            .collect();
        threshold_violations += fresh
            .windows(2)
            .filter(|w| w[1].threshold > w[0].threshold)
            .count();
        // cost of the deepest result from the initial state, then from s_ar1 .. s_ar4
        let mut costs = vec![fresh.last().unwrap().scanned];
        for (code, r) in codes.iter().zip(&fresh).take(codes.len() - 1) {
            let state = maintain_state(&book, code, &query, r);
            costs.push(
                classify(&book, deepest, &query, Some(&state))
                    .unwrap()
                    .scanned,
            );
        }
        cost_violations += costs.windows(2).filter(|w| w[1] > w[0]).count();
        for (m, c) in mean_costs.iter_mut().zip(&costs) {
            *m += *c as f64 / test.len() as f64;
        }
    }
    verdict(
        6,
        "threshold and accumulative monotonicity",
        threshold_violations == 0 && cost_violations == 0,
        format!(
            "threshold violations {threshold_violations}, cost violations {cost_violations}, mean costs {:?}",
            mean_costs.iter().map(|c| format!("{c:.1}")).collect::<Vec<_>>()
        ),
    );
}

fn depth_accuracies(book: &CodeBook, test: &LabeledDataset) -> Vec<f64> {
    let actual: Vec<Label> = test.points().iter().map(|p| p.label).collect();
    book.codes()
        .iter()
        .map(|c| {
            let pred: Vec<Label> = test
                .points()
                .iter()
                .map(|p| {
                    classify(book, c, &KnnQuery::new(&p.features, 5), None)
                        .unwrap()
                        .predicted
                })
                .collect();
            accuracy(&pred, &actual).unwrap()
        })
        .collect()
}

#[test]
fn c07_exact_knn_quality() {
    let start = Instant::now();
    let (train, test) = fourclass();
    let book = fourclass_book(&train);
    let actual: Vec<Label> = test.points().iter().map(|p| p.label).collect();
    let exact: Vec<Label> = test
        .points()
        .iter()
        .map(|p| {
            exact_knn(&train, &KnnQuery::new(&p.features, 5))
                .unwrap()
                .predicted
        })
        .collect();
    let exact_acc = accuracy(&exact, &actual).unwrap();
    let elastic_acc = *depth_accuracies(&book, &test).last().unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        7,
        "exact kNN quality",
        exact_acc >= 0.97 && (elastic_acc - exact_acc).abs() <= 0.03 && secs < 30.0,
        format!("exact {exact_acc:.3}, elastic deepest {elastic_acc:.3}, {secs:.2}s"),
    );
}

#[test]
fn c08_quality_monotonicity() {
    let start = Instant::now();
    let (train, test) = fourclass();
    let book = fourclass_book(&train);
    let acc = depth_accuracies(&book, &test);
    let worst_dip = acc.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        8,
        "quality monotonicity",
        acc.len() == 5 && worst_dip <= 0.02 + 1e-12 && acc[4] >= acc[0] && secs < 60.0,
        format!("accuracy per depth {acc:?}, worst dip {worst_dip:.3}, {secs:.2}s"),
    );
}

#[test]
fn c09_leaf_equivalence() {
    let start = Instant::now();
    let (train, test) = fourclass();
    let one_per_leaf = RtreeConfig {
        max_entries: 4,
        leaf_entries: Some(1),
        levels: None,
    };
    let book = build_dual_rtrees(&train, &one_per_leaf, 7).unwrap();
    let leaves = book.codes().last().unwrap();
    let mut knn_mismatch = 0;
    for p in test.points() {
        let q = KnnQuery::new(&p.features, 5);
        let a = classify(&book, leaves, &q, None).unwrap();
        let e = exact_knn(&train, &q).unwrap();
        knn_mismatch +=
            usize::from((a.predicted, a.k_pos, a.k_neg) != (e.predicted, e.k_pos, e.k_neg));
    }

    let shape = RatingShape {
        users: 150,
        items: 200,
        max_ratings: 6000,
        ..RatingShape::default()
    };
    let ratings = latent_ratings(&shape, 1).unwrap();
    let split = split_ratings(&ratings, TestSize::Fraction(0.3), 0.2, 7).unwrap();
    let features = train_incremental_svd(&split.train, &SvdConfig::default())
        .unwrap()
        .users;
    let cf_one_per_leaf = RtreeConfig {
        max_entries: 4,
        leaf_entries: Some(1),
        levels: None,
    };
    let cf_book = build_cf_codebook(&split.train, &features, &cf_one_per_leaf, 7).unwrap();
    let cf_leaves = cf_book.codes().last().unwrap();
    let queries: Vec<_> = split
        .test
        .iter()
        .filter(|&&(u, i, _)| u < split.train.num_users() && i < split.train.num_items())
        .take(100)
        .collect();
    let mut cf_mismatch = 0;
    for &&(u, i, _) in &queries {
        let q = CfQuery::from_matrix(&split.train, u, i).unwrap();
        let a = predict(&cf_book, cf_leaves, &q, None).unwrap();
        let e = exact_cf_predict(&split.train, &q);
        cf_mismatch += usize::from(
            a.prediction.to_bits() != e.prediction.to_bits() || a.fallback != e.fallback,
        );
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        9,
        "leaf equivalence",
        knn_mismatch == 0
            && cf_mismatch == 0
            && queries.len() == 100
            && test.len() == 100
            && secs < 60.0,
        format!(
            "kNN {knn_mismatch}/{} mismatches, CF {cf_mismatch}/{} mismatches, {secs:.2}s",
            test.len(),
            queries.len()
        ),
    );
}

const TABLE_41: [(f64, f64); 8] = [
    (0.38, 1.0),
    (0.52, 2.0),
    (0.64, 3.0),
    (0.72, 4.0),
    (0.80, 5.0),
    (0.88, 6.0),
    (0.92, 7.0),
    (1.00, 8.0),
];

#[test]
fn c10_elasticity_fixtures() {
    let table = investment_elasticity(&InvestmentSeries::from_pairs(&TABLE_41)).unwrap();
    let first = table.pairs[0].elasticity.unwrap();
    // oracle: (0.52 - 0.38) / 0.38 over (2 - 1) / 1
    let oracle = (0.52 - 0.38) / 0.38;
    let argmax = table
        .argmax
        .map(|j| (table.pairs[j].from, table.pairs[j].to));
    let sequences: Vec<Vec<f64>> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&p| {
            investment_elasticity(&InvestmentSeries::from_resources(&TABLE_41, p))
                .unwrap()
                .pairs
                .iter()
                .map(|e| e.elasticity.unwrap())
                .collect()
        })
        .collect();
    let invariant = sequences.iter().all(|s| {
        s.iter()
            .zip(&sequences[1])
            .all(|(a, b)| (a - b).abs() < 1e-12)
    });
    verdict(
        10,
        "elasticity fixtures",
        (first - 0.368).abs() <= 0.001
            && (first - oracle).abs() < 1e-12
            && argmax == Some((7, 8))
            && invariant,
        format!("E(ar1->ar2) {first:.6}, argmax {argmax:?}, price-invariant {invariant}"),
    );
}

fn spot_schedule() -> PriceSchedule {
    let spot = [
        0.10, 0.11, 0.12, 0.14, 0.16, 0.18, 0.20, 0.22, 0.24, 0.26, 0.28, 0.30, 0.30, 0.28, 0.26,
        0.24, 0.22, 0.20, 0.18, 0.16, 0.14, 0.12, 0.11, 0.10,
    ];
    PriceSchedule::new(0.5, spot).unwrap()
}

/// Quality and cumulative execution hours of four sequential results.
const RESULTS: [(f64, f64); 4] = [(0.60, 5.0), (0.80, 10.6), (0.86, 22.24), (0.91, 40.0)];

fn planned() -> Vec<PlannedResult> {
    RESULTS
        .iter()
        .map(|&(quality, cumulative_hours)| PlannedResult {
            quality,
            cumulative_hours,
        })
        .collect()
}

#[test]
fn c11_planner_fixtures() {
    let start = Instant::now();
    let s = spot_schedule();
    let r = planned();
    let two_days = SpotOptions {
        deadline_hours: 48.0,
        initial_bid: None,
        overhead_per_cycle: 0.0,
    };
    let hours = spot_availability(&s, 0.16).per_day;
    let s1 = fixed_plan(
        &r,
        0.5,
        &PlanQuery::MinInvestmentForQuality {
            quality: 0.8,
            budget: Some(20.0),
        },
    )
    .unwrap();
    let s4 = spot_plan(
        &r,
        &s,
        &PlanQuery::MinInvestmentForQuality {
            quality: 0.8,
            budget: Some(20.0),
        },
        &two_days,
    )
    .unwrap();
    let s5 = spot_plan(
        &r,
        &s,
        &PlanQuery::MinInvestmentForQuality {
            quality: 0.91,
            budget: Some(20.0),
        },
        &two_days,
    )
    .unwrap();
    let s6 = spot_plan(
        &r,
        &s,
        &PlanQuery::ElasticityConstrained {
            floor: 0.1,
            budget: Some(20.0),
        },
        &two_days,
    )
    .unwrap();
    let bid3 = s6.steps.iter().find(|st| st.result == 3).map(|st| st.price);
    let near = |v: Option<f64>, target: f64| v.is_some_and(|x| (x - target).abs() <= 0.005);
    let checks = [
        hours == 10,
        near(s1.investment, 5.3),
        near(s4.price, 0.12),
        near(s4.investment, 1.44),
        near(s5.price, 0.26),
        near(s5.investment, 10.4),
        near(bid3, 0.20),
    ];
    let secs = start.elapsed().as_secs_f64();
    verdict(
        11,
        "planner fixtures",
        checks.iter().all(|&c| c) && secs < 1.0,
        format!(
            "0.16 -> {hours} h/day; S1 {:?}; S4 {:?}/{:?}; S5 {:?}/{:?}; S6 ar3 bid {bid3:?}; checks {checks:?}",
            s1.investment, s4.price, s4.investment, s5.price, s5.investment
        ),
    );
}

#[test]
fn c12_cf_quality_monotonicity() {
    let start = Instant::now();
    let ratings = latent_ratings(&RatingShape::default(), 1).unwrap();
    let split = split_ratings(&ratings, TestSize::Fraction(0.2), 0.2, 7).unwrap();
    let features = train_incremental_svd(&split.train, &SvdConfig::default())
        .unwrap()
        .users;
    let config = RtreeConfig {
        max_entries: 4,
        leaf_entries: Some(2),
        levels: None,
    };
    let book = build_cf_codebook(&split.train, &features, &config, 7).unwrap();
    let test: Vec<_> = split
        .test
        .iter()
        .copied()
        .filter(|&(u, i, _)| u < split.train.num_users() && i < split.train.num_items())
        .collect();
    let actual: Vec<f64> = test.iter().map(|t| t.2).collect();
    let mut per_depth = Vec::new();
    for code in book.codes() {
        let rows = predict_batch(&book, code.depth, None, &test).unwrap();
        let pred: Vec<f64> = rows.iter().map(|r| r.prediction).collect();
        let fallback = rows.iter().filter(|r| r.fallback).count() as f64 / rows.len() as f64;
        per_depth.push((code.len(), rmse(&pred, &actual).unwrap(), fallback));
    }
    let worst_rise = per_depth
        .windows(2)
        .map(|w| w[1].1 - w[0].1)
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        12,
        "CF quality monotonicity",
        ratings.num_ratings() <= 100_000 && per_depth.len() == 5 && worst_rise <= 0.01 && secs < 600.0,
        format!(
            "{} ratings, {} held out; (length, rmse, fallback rate) {:?}; worst rise {worst_rise:.4}, {secs:.1}s",
            ratings.num_ratings(),
            test.len(),
            per_depth
                .iter()
                .map(|(l, r, f)| format!("({l}, {r:.4}, {f:.4})"))
                .collect::<Vec<_>>()
        ),
    );
}

#[test]
fn c13_svd_rank_one() {
    let u = [1.0, 1.2, 1.5, 2.0];
    let v = [1.0, 1.5, 2.0, 2.5];
    let mut triples = Vec::new();
    for (a, x) in u.iter().enumerate() {
        for (b, y) in v.iter().enumerate() {
            triples.push((a, b, x * y));
        }
    }
    let matrix = RatingMatrix::from_triples(4, 4, triples.clone()).unwrap();
    let cfg = SvdConfig {
        features: 1,
        learning_rate: 0.001,
        epochs: 2000,
        seed: 1,
    };
    let model = train_incremental_svd(&matrix, &cfg).unwrap();
    let pred: Vec<f64> = triples
        .iter()
        .map(|&(a, b, _)| model.predict(a, b))
        .collect();
    let obs: Vec<f64> = triples.iter().map(|t| t.2).collect();
    let e = rmse(&pred, &obs).unwrap();
    verdict(
        13,
        "SVD rank-1 sanity",
        e < 0.05,
        format!("reconstruction RMSE {e:.5}"),
    );
}

#[test]
fn c14_baseline_harness() {
    let start = Instant::now();
    let (train, test) = fourclass();
    let book = fourclass_book(&train);
    let cfg = KnnBench {
        dataset: "fourclass",
        book: &book,
        train: &train,
        test: &test,
        k: 5,
        seed: 7,
        metrics: vec![KnnMetric::Accuracy],
        timing: false,
    };
    let rows = bench_knn(&cfg, &KnnAlgorithm::ALL).unwrap();
    let final_acc = |name: &str| {
        rows.iter()
            .rev()
            .find(|r| r.algorithm == name)
            .and_then(|r| r.metric_value)
    };
    let elastic = final_acc("elastic").unwrap();
    let baselines: Vec<(String, Option<f64>)> = KnnAlgorithm::ALL[1..]
        .iter()
        .map(|a| (a.name(), final_acc(&a.name())))
        .collect();
    let beaten = baselines
        .iter()
        .all(|(_, v)| v.is_some_and(|v| elastic >= v - 0.02));

    let ranking = rank_training_points(&train);
    let mut full_mismatch = 0;
    for p in test.points() {
        let q = KnnQuery::new(&p.features, 5);
        let e = exact_knn(&train, &q).unwrap();
        let key = |r: &elastic_core::knn::KnnApproxResult| (r.predicted, r.k_pos, r.k_neg);
        let mut runs = vec![anytime_knn_ranking(&train, &ranking, &q, train.len()).unwrap()];
        for d in [Descent::Bfs, Descent::Dfs, Descent::Ofs] {
            runs.push(anytime_knn_rtree(&book, &train, &q, usize::MAX, d).unwrap());
        }
        full_mismatch += runs.iter().filter(|r| key(r) != key(&e)).count();
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        14,
        "baseline harness",
        beaten && full_mismatch == 0 && rows.len() == 25 && secs < 120.0,
        format!(
            "elastic final {elastic:.3}, baselines {baselines:?}, full-budget mismatches {full_mismatch}, {secs:.2}s"
        ),
    );
}

const BIN: &str = env!("CARGO_BIN_EXE_elastic-mine");

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("ELASTIC_MINE_SEED")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

/// The `# command:` line of an output, split back into arguments.
fn echoed_args(text: &str) -> Vec<String> {
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("# command: "))
        .expect("header echoes the command");
    let mut words = line.split(' ').map(str::to_string);
    assert_eq!(words.next().as_deref(), Some("elastic-mine"));
    words.collect()
}

/// Runs a command, then re-runs its echoed command line twice; the output
/// file (or stdout when `file` is None) must be byte-identical every time.
fn reproduces(dir: &Path, args: &[&str], file: Option<&str>) -> Result<String, String> {
    let mut outputs = Vec::new();
    let mut argv: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    for _ in 0..3 {
        let refs: Vec<&str> = argv.iter().map(String::as_str).collect();
        let out = run_in(dir, &refs);
        if !out.status.success() {
            return Err(format!(
                "{args:?} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        let bytes = match file {
            Some(f) => std::fs::read(dir.join(f)).map_err(|e| e.to_string())?,
            None => out.stdout,
        };
        argv = echoed_args(&String::from_utf8_lossy(&bytes));
        outputs.push(bytes);
    }
    if outputs.windows(2).all(|w| w[0] == w[1]) {
        Ok(String::from_utf8_lossy(&outputs[0]).into_owned())
    } else {
        Err(format!("{args:?} differs across runs"))
    }
}

#[test]
fn c15_cli_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("table41.csv"),
        "quality,investment\n.38,1\n.52,2\n.64,3\n.72,4\n.80,5\n.88,6\n.92,7\n1.00,8\n",
    )
    .unwrap();
    let mut spot = String::from("hour,price\n");
    for (h, p) in spot_schedule().spot.iter().enumerate() {
        spot.push_str(&format!("{h},{p}\n"));
    }
    std::fs::write(d.join("spot.csv"), spot).unwrap();
    let mut results = String::from("quality,cumulative_hours\n");
    for (q, h) in RESULTS {
        results.push_str(&format!("{q},{h}\n"));
    }
    std::fs::write(d.join("results.csv"), results).unwrap();

    let steps: Vec<(Vec<&str>, Option<&str>)> = vec![
        (
            vec![
                "data",
                "synth",
                "--kind",
                "fourclass",
                "--seed",
                "1",
                "--out",
                "fc.libsvm",
            ],
            Some("fc.libsvm"),
        ),
        (
            vec![
                "data",
                "split",
                "--input",
                "fc.libsvm",
                "--test-count",
                "100",
                "--train-out",
                "tr.libsvm",
                "--test-out",
                "te.libsvm",
            ],
            Some("te.libsvm"),
        ),
        (
            vec![
                "code",
                "build",
                "--task",
                "knn",
                "--input",
                "tr.libsvm",
                "--max-entries",
                "4",
                "--leaf-entries",
                "3",
                "--levels",
                "5",
                "--out",
                "fc.ecb",
            ],
            None,
        ),
        (
            vec![
                "mine",
                "knn",
                "--book",
                "fc.ecb",
                "--test",
                "te.libsvm",
                "--k",
                "5",
                "--budget-nodes",
                "30",
                "--out",
                "b30.csv",
            ],
            Some("b30.csv"),
        ),
        (
            vec![
                "mine",
                "knn",
                "--book",
                "fc.ecb",
                "--test",
                "te.libsvm",
                "--depth",
                "5",
                "--from-state",
                "3",
                "--threads",
                "3",
                "--out",
                "d5.csv",
            ],
            Some("d5.csv"),
        ),
        (
            vec![
                "mine",
                "baseline",
                "--algorithm",
                "ranking",
                "--train",
                "tr.libsvm",
                "--test",
                "te.libsvm",
                "--budget-nodes",
                "60",
                "--out",
                "rank.csv",
            ],
            Some("rank.csv"),
        ),
        (
            vec!["report", "quality", "b30.csv", "d5.csv", "--out", "q.csv"],
            Some("q.csv"),
        ),
        (
            vec![
                "report",
                "resolution",
                "--book",
                "fc.ecb",
                "--out",
                "res.csv",
            ],
            Some("res.csv"),
        ),
        (
            vec![
                "report",
                "elasticity",
                "--series",
                "table41.csv",
                "--out",
                "el.csv",
            ],
            Some("el.csv"),
        ),
        (
            vec![
                "plan",
                "--results",
                "results.csv",
                "--spot",
                "spot.csv",
                "--query",
                "min-investment",
                "--quality",
                "0.8",
                "--budget",
                "20",
                "--out",
                "plan.csv",
            ],
            Some("plan.csv"),
        ),
        (
            vec![
                "plan",
                "--results",
                "results.csv",
                "--spot",
                "spot.csv",
                "--scheme",
                "spot",
                "--query",
                "min-bid",
                "--deadline-hours",
                "0.1",
                "--out",
                "late.csv",
            ],
            Some("late.csv"),
        ),
        (
            vec![
                "bench",
                "--task",
                "knn",
                "--train",
                "tr.libsvm",
                "--test",
                "te.libsvm",
                "--max-entries",
                "4",
                "--leaf-entries",
                "3",
                "--levels",
                "5",
                "--metrics",
                "accuracy,auc",
                "--out",
                "bench.csv",
            ],
            Some("bench.csv"),
        ),
        (
            vec![
                "data",
                "synth",
                "--kind",
                "ratings",
                "--users",
                "120",
                "--items",
                "150",
                "--max-ratings",
                "4000",
                "--out",
                "r.csv",
            ],
            Some("r.csv"),
        ),
        (
            vec![
                "data",
                "split",
                "--ratings",
                "--input",
                "r.csv",
                "--train-out",
                "rtr.csv",
                "--test-out",
                "rte.csv",
            ],
            Some("rte.csv"),
        ),
        (
            vec![
                "code",
                "build",
                "--task",
                "cf",
                "--input",
                "rtr.csv",
                "--features",
                "3",
                "--lr",
                "0.001",
                "--epochs",
                "120",
                "--out",
                "cf.ecb",
            ],
            None,
        ),
        (
            vec![
                "mine", "cf", "--book", "cf.ecb", "--user", "5", "--item", "3", "--depth", "2",
            ],
            None,
        ),
        (
            vec![
                "mine", "cf", "--book", "cf.ecb", "--test", "rte.csv", "--depth", "2", "--out",
                "cf2.csv",
            ],
            Some("cf2.csv"),
        ),
        (
            vec![
                "bench",
                "--task",
                "cf",
                "--book",
                "cf.ecb",
                "--test",
                "rte.csv",
                "--out",
                "cfbench.csv",
            ],
            Some("cfbench.csv"),
        ),
    ];
    let mut failures = Vec::new();
    let mut texts = std::collections::HashMap::new();
    for (args, file) in &steps {
        match reproduces(d, args, *file) {
            Ok(text) => {
                texts.insert(file.map_or_else(|| args.join(" "), str::to_string), text);
            }
            Err(e) => failures.push(e),
        }
    }
    // the codebook file itself must also be stable
    let book_a = std::fs::read(d.join("fc.ecb")).unwrap();
    let again = run_in(
        d,
        &[
            "code",
            "build",
            "--task",
            "knn",
            "--input",
            "tr.libsvm",
            "--max-entries",
            "4",
            "--leaf-entries",
            "3",
            "--levels",
            "5",
            "--out",
            "fc2.ecb",
        ],
    );
    if !again.status.success() || std::fs::read(d.join("fc2.ecb")).unwrap() != book_a {
        failures.push("codebook file differs across builds".into());
    }

    let lookup = |key: &str| texts.get(key).cloned().unwrap_or_default();
    let b30 = lookup("b30.csv");
    if !b30.contains("# depth: 2 (length 15, budget 30 nodes)") {
        failures.push("budget 30 does not select the 15-node code".into());
    }
    if !lookup("el.csv").contains("# argmax: ar7->ar8") {
        failures.push("elasticity argmax is not ar7->ar8".into());
    }
    if !lookup("res.csv").contains("# verdict: pass") {
        failures.push("resolution audit did not pass".into());
    }
    let plan = lookup("plan.csv");
    if !plan
        .lines()
        .any(|l| l.starts_with("fixed,true,,2,0.800000,0.500000,5.300000"))
        || !plan
            .lines()
            .any(|l| l.starts_with("spot,true,,2,0.800000,0.120000,1.440000"))
    {
        failures.push(format!("scenario plans wrong:\n{plan}"));
    }
    if !lookup("late.csv")
        .lines()
        .any(|l| l.starts_with("spot,false,"))
    {
        failures.push("a 0.1 h deadline is not reported infeasible".into());
    }

    // errors exit nonzero with the selection error text
    let small = run_in(
        d,
        &[
            "mine",
            "knn",
            "--book",
            "fc.ecb",
            "--test",
            "te.libsvm",
            "--budget-nodes",
            "3",
        ],
    );
    let stderr = String::from_utf8_lossy(&small.stderr);
    if small.status.success() || !stderr.contains("smaller than the shortest code") {
        failures.push(format!(
            "too-small budget: status {:?}, stderr {stderr}",
            small.status.code()
        ));
    }
    // the environment seed is echoed into the header and the command line
    let env = Command::new(BIN)
        .args(["data", "synth", "--kind", "fourclass"])
        .env("ELASTIC_MINE_SEED", "3")
        .output()
        .unwrap();
    let text = String::from_utf8_lossy(&env.stdout);
    if !text.contains("# seed: 3") || !text.contains("# command: ELASTIC_MINE_SEED=3 elastic-mine")
    {
        failures.push("ELASTIC_MINE_SEED not honoured".into());
    }

    verdict(
        15,
        "CLI reproducibility",
        failures.is_empty(),
        format!("{} commands x 3 runs; failures {failures:?}", steps.len()),
    );
}
