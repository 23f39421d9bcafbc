//! Side-by-side runs of the elastic algorithms and the baselines under the
//! same budgets. Budgets are node counts taken from the elastic algorithm's
//! own per-result costs, per query.

use std::io::Write;
use std::time::Instant;

use log::warn;
use rayon::prelude::*;

use crate::baselines::{
    anytime_knn_ranking, anytime_knn_rtree, cf_clustering, cf_sampling, rank_training_points,
    ClusterConfig, ClusterModel, Descent, UserSample,
};
use crate::cf::{
    exact_cf_predict, maintain_cf_state, predict, relative_error, rmse, CfApproxResult, CfQuery,
    UserFeatureMatrix,
};
use crate::coding::CodeBook;
use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::knn::{accuracy, auc_from_scores, classify, maintain_state, KnnApproxResult, KnnQuery};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub dataset: String,
    pub algorithm: String,
    pub seed: u64,
    /// Mean per-query node budget.
    pub budget: f64,
    pub metric_name: String,
    /// `None` when the algorithm failed at this budget.
    pub metric_value: Option<f64>,
    pub scanned: usize,
    pub wall_ms: Option<f64>,
}

pub const BENCH_CSV_HEADER: &str =
    "dataset,algorithm,seed,budget,metric_name,metric_value,scanned,wall_ms";

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> Result<()> {
    writeln!(out, "{BENCH_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.3},{},{},{},{}",
            r.dataset,
            r.algorithm,
            r.seed,
            r.budget,
            r.metric_name,
            r.metric_value
                .map_or_else(|| "failed".to_string(), |v| format!("{v:.6}")),
            r.scanned,
            r.wall_ms.map_or_else(String::new, |v| format!("{v:.3}"))
        )?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnnAlgorithm {
    Elastic,
    Ranking,
    Rtree(Descent),
}

impl KnnAlgorithm {
    pub const ALL: [KnnAlgorithm; 5] = [
        KnnAlgorithm::Elastic,
        KnnAlgorithm::Ranking,
        KnnAlgorithm::Rtree(Descent::Bfs),
        KnnAlgorithm::Rtree(Descent::Dfs),
        KnnAlgorithm::Rtree(Descent::Ofs),
    ];

    pub fn name(self) -> String {
        match self {
            KnnAlgorithm::Elastic => "elastic".into(),
            KnnAlgorithm::Ranking => "ranking".into(),
            KnnAlgorithm::Rtree(d) => format!("rtree-{}", d.name()),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown kNN algorithm {name:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnnMetric {
    Accuracy,
    Auc,
}

impl KnnMetric {
    pub fn name(self) -> &'static str {
        match self {
            KnnMetric::Accuracy => "accuracy",
            KnnMetric::Auc => "auc",
        }
    }

    fn eval(self, results: &[KnnApproxResult], actual: &[Label]) -> Result<f64> {
        match self {
            KnnMetric::Accuracy => {
                let pred: Vec<Label> = results.iter().map(|r| r.predicted).collect();
                accuracy(&pred, actual)
            }
            KnnMetric::Auc => {
                let scored: Vec<(f64, Label)> = results
                    .iter()
                    .map(|r| r.score())
                    .zip(actual.iter().copied())
                    .collect();
                auc_from_scores(&scored)
            }
        }
    }
}

/// Per-query elastic results at every code, refining sequentially, with
/// cumulative scanned counts.
pub fn elastic_knn_trace(book: &CodeBook, query: &KnnQuery) -> Result<Vec<KnnApproxResult>> {
    let mut out = Vec::with_capacity(book.codes().len());
    let mut state = None;
    let mut spent = 0;
    for code in book.codes() {
        let mut r = classify(book, code, query, state.as_ref())?;
        state = Some(maintain_state(book, code, query, &r));
        spent += r.scanned;
        r.scanned = spent;
        out.push(r);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct KnnBench<'a> {
    pub dataset: &'a str,
    pub book: &'a CodeBook,
    pub train: &'a LabeledDataset,
    pub test: &'a LabeledDataset,
    pub k: usize,
    pub seed: u64,
    pub metrics: Vec<KnnMetric>,
    pub timing: bool,
}

/// One row per (algorithm, budget, metric).
pub fn bench_knn(cfg: &KnnBench, algorithms: &[KnnAlgorithm]) -> Result<Vec<BenchRow>> {
    let queries: Vec<&[f64]> = cfg
        .test
        .points()
        .iter()
        .map(|p| p.features.as_slice())
        .collect();
    let actual: Vec<Label> = cfg.test.points().iter().map(|p| p.label).collect();
    let traces: Vec<Vec<KnnApproxResult>> = queries
        .par_iter()
        .map(|q| elastic_knn_trace(cfg.book, &KnnQuery::new(q, cfg.k)))
        .collect::<Result<_>>()?;
    let ranking = algorithms
        .contains(&KnnAlgorithm::Ranking)
        .then(|| rank_training_points(cfg.train));
    let mut rows = Vec::new();
    for &alg in algorithms {
        for j in 0..cfg.book.codes().len() {
            let budgets: Vec<usize> = traces.iter().map(|t| t[j].scanned).collect();
            let mean_budget = budgets.iter().sum::<usize>() as f64 / budgets.len().max(1) as f64;
            let start = Instant::now();
            let results: Result<Vec<KnnApproxResult>> = match alg {
                KnnAlgorithm::Elastic => Ok(traces.iter().map(|t| t[j].clone()).collect()),
                KnnAlgorithm::Ranking => queries
                    .par_iter()
                    .zip(&budgets)
                    .map(|(q, &b)| {
                        let ranking = ranking.as_ref().expect("ranking computed");
                        anytime_knn_ranking(cfg.train, ranking, &KnnQuery::new(q, cfg.k), b)
                    })
                    .collect(),
                KnnAlgorithm::Rtree(d) => queries
                    .par_iter()
                    .zip(&budgets)
                    .map(|(q, &b)| {
                        anytime_knn_rtree(cfg.book, cfg.train, &KnnQuery::new(q, cfg.k), b, d)
                    })
                    .collect(),
            };
            let wall_ms = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
            for &metric in &cfg.metrics {
                let (value, scanned) = match &results {
                    Ok(rs) => match metric.eval(rs, &actual) {
                        Ok(v) => (Some(v), rs.iter().map(|r| r.scanned).sum()),
                        Err(e) => {
                            warn!("{} at budget {}: {e}", alg.name(), j + 1);
                            (None, 0)
                        }
                    },
                    Err(e) => {
                        warn!("{} at budget {}: {e}", alg.name(), j + 1);
                        (None, 0)
                    }
                };
                rows.push(BenchRow {
                    dataset: cfg.dataset.to_string(),
                    algorithm: alg.name(),
                    seed: cfg.seed,
                    budget: mean_budget,
                    metric_name: metric.name().to_string(),
                    metric_value: value,
                    scanned,
                    wall_ms,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CfAlgorithm {
    Elastic,
    Sampling,
    Clustering,
    RectTree,
}

impl CfAlgorithm {
    pub const ALL: [CfAlgorithm; 4] = [
        CfAlgorithm::Elastic,
        CfAlgorithm::Sampling,
        CfAlgorithm::Clustering,
        CfAlgorithm::RectTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CfAlgorithm::Elastic => "elastic",
            CfAlgorithm::Sampling => "sampling",
            CfAlgorithm::Clustering => "clustering",
            CfAlgorithm::RectTree => "recttree",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown CF algorithm {name:?}")))
    }
}

/// The cluster hierarchy a clustering baseline uses at node budget `b`:
/// `m / b` flat clusters, or the RectTree level count whose bottom clusters
/// hold about `b` users. `None` for algorithms without a model.
pub fn cf_cluster_model(
    alg: CfAlgorithm,
    features: &UserFeatureMatrix,
    budget: usize,
    branching: usize,
    iterations: usize,
    seed: u64,
) -> Result<Option<ClusterModel>> {
    let m = features.num_users();
    let b = budget.clamp(1, m.max(1));
    match alg {
        CfAlgorithm::Elastic | CfAlgorithm::Sampling => Ok(None),
        CfAlgorithm::Clustering => {
            let k = ((m as f64 / b as f64).round() as usize).clamp(1, m);
            ClusterModel::flat(features, k, iterations, seed).map(Some)
        }
        CfAlgorithm::RectTree => {
            let ratio = (m as f64 / b as f64).ln() / (branching.max(2) as f64).ln();
            let config = ClusterConfig {
                branching,
                levels: 1 + ratio.round().max(0.0) as usize,
                iterations,
                seed,
            };
            ClusterModel::rect_tree(features, config).map(Some)
        }
    }
}

/// Per-query elastic CF results at every code, refining sequentially.
pub fn elastic_cf_trace(book: &CodeBook, query: &CfQuery) -> Result<Vec<CfApproxResult>> {
    let mut out = Vec::with_capacity(book.codes().len());
    let mut state = None;
    let mut spent = 0;
    for code in book.codes() {
        let mut r = predict(book, code, query, state.as_ref())?;
        state = Some(maintain_cf_state(code, &r));
        spent += r.scanned;
        r.scanned = spent;
        out.push(r);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct CfBench<'a> {
    pub dataset: &'a str,
    pub book: &'a CodeBook,
    /// 0-based `(user, item, rating)` held-out ratings.
    pub test: &'a [(usize, usize, f64)],
    pub seed: u64,
    pub branching: usize,
    pub iterations: usize,
    pub timing: bool,
}

/// Rows of RMSE and relative error against the exact predictor. A node
/// budget `b` maps to `b` sampled users, `m / b` flat clusters, and the
/// hierarchy level whose clusters hold about `b` users.
pub fn bench_cf(cfg: &CfBench, algorithms: &[CfAlgorithm]) -> Result<Vec<BenchRow>> {
    let matrix = cfg
        .book
        .ratings()
        .ok_or_else(|| Error::invalid("codebook carries no ratings"))?;
    let features = cfg
        .book
        .features()
        .ok_or_else(|| Error::invalid("codebook carries no user features"))?;
    let m = matrix.num_users();
    let queries: Vec<CfQuery> = cfg
        .test
        .iter()
        .map(|&(u, i, _)| CfQuery::from_matrix(matrix, u, i))
        .collect::<Result<_>>()?;
    let actual: Vec<f64> = cfg.test.iter().map(|t| t.2).collect();
    let exact: Vec<f64> = queries
        .par_iter()
        .map(|q| exact_cf_predict(matrix, q).prediction)
        .collect();
    let exact_rmse = rmse(&exact, &actual)?;
    let traces: Vec<Vec<CfApproxResult>> = queries
        .par_iter()
        .map(|q| elastic_cf_trace(cfg.book, q))
        .collect::<Result<_>>()?;
    let sample = UserSample::new(m, cfg.seed);
    let mut rows = Vec::new();
    for &alg in algorithms {
        for j in 0..cfg.book.codes().len() {
            let mean_budget = traces.iter().map(|t| t[j].scanned).sum::<usize>() as f64
                / traces.len().max(1) as f64;
            let b = (mean_budget.round() as usize).clamp(1, m);
            let start = Instant::now();
            let results: Result<Vec<CfApproxResult>> = match alg {
                CfAlgorithm::Elastic => Ok(traces.iter().map(|t| t[j].clone()).collect()),
                CfAlgorithm::Sampling => queries
                    .par_iter()
                    .map(|q| cf_sampling(matrix, &sample, q, b))
                    .collect(),
                CfAlgorithm::Clustering | CfAlgorithm::RectTree => {
                    cf_cluster_model(alg, features, b, cfg.branching, cfg.iterations, cfg.seed)
                        .and_then(|model| {
                            let model = model.expect("clustering baselines have a model");
                            queries
                                .par_iter()
                                .map(|q| cf_clustering(matrix, features, &model, q))
                                .collect()
                        })
                }
            };
            let wall_ms = cfg.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
            let (rmse_v, re_v, scanned) = match &results {
                Ok(rs) => {
                    let p: Vec<f64> = rs.iter().map(|r| r.prediction).collect();
                    let v = rmse(&p, &actual)?;
                    (
                        Some(v),
                        relative_error(v, exact_rmse).ok(),
                        rs.iter().map(|r| r.scanned).sum(),
                    )
                }
                Err(e) => {
                    warn!("{} at budget {}: {e}", alg.name(), j + 1);
                    (None, None, 0)
                }
            };
            for (name, value) in [("rmse", rmse_v), ("re", re_v)] {
                rows.push(BenchRow {
                    dataset: cfg.dataset.to_string(),
                    algorithm: alg.name().to_string(),
                    seed: cfg.seed,
                    budget: mean_budget,
                    metric_name: name.to_string(),
                    metric_value: value,
                    scanned,
                    wall_ms,
                });
            }
        }
    }
    Ok(rows)
}
