//! Neighbourhood collaborative filtering over codes of aggregated-rating
//! nodes, with refinement from the state of a shallower result.

mod svd;

use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use svd::{train_incremental_svd, SvdConfig, SvdModel, UserFeatureMatrix};

use crate::coding::{AggregatedRatings, Code, CodeBook, NodeId};
use crate::dataset::RatingMatrix;
use crate::error::{Error, Result};

/// The active user's known ratings and the item to predict.
#[derive(Clone, Debug, PartialEq)]
pub struct CfQuery {
    pub user: usize,
    /// Sorted by item.
    pub ratings: Vec<(usize, f64)>,
    pub mean: f64,
    /// The user had no ratings; `mean` is the global mean.
    pub cold_user: bool,
    pub item: usize,
}

impl CfQuery {
    /// Query for `user` using their row in `matrix`.
    pub fn from_matrix(matrix: &RatingMatrix, user: usize, item: usize) -> Result<Self> {
        if user >= matrix.num_users() || item >= matrix.num_items() {
            return Err(Error::invalid(format!(
                "query ({}, {}) outside a {}x{} matrix",
                user + 1,
                item + 1,
                matrix.num_users(),
                matrix.num_items()
            )));
        }
        let (mean, cold_user) = match matrix.user_mean(user) {
            Some(m) => (m, false),
            None => (matrix.global_mean(), true),
        };
        Ok(Self {
            user,
            ratings: matrix.user_ratings(user).to_vec(),
            mean,
            cold_user,
            item,
        })
    }
}

/// Outcome of a correlation between the active user and a neighbour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    Defined(f64),
    /// Co-rated items exist but one side has zero variance.
    Degenerate,
    NoOverlap,
}

impl Weight {
    pub fn value(self) -> Option<f64> {
        match self {
            Weight::Defined(w) => Some(w),
            _ => None,
        }
    }
}

/// Pearson-style correlation of paired deviations.
fn correlation(pairs: impl Iterator<Item = (f64, f64)>) -> Weight {
    let (mut num, mut su, mut sn, mut any) = (0.0, 0.0, 0.0, false);
    for (du, dn) in pairs {
        num += du * dn;
        su += du * du;
        sn += dn * dn;
        any = true;
    }
    if !any {
        return Weight::NoOverlap;
    }
    let den = su.sqrt() * sn.sqrt();
    if den == 0.0 {
        Weight::Degenerate
    } else {
        Weight::Defined(num / den)
    }
}

/// Correlation between the active user and a node over their co-rated items.
pub fn node_weight(query: &CfQuery, node: &AggregatedRatings) -> Weight {
    correlation(query.ratings.iter().filter_map(|&(j, r)| {
        node.get(j)
            .map(|a| (r - query.mean, a.rating - a.rater_mean))
    }))
}

/// Correlation between the active user and another user of `matrix`.
pub fn user_weight(query: &CfQuery, matrix: &RatingMatrix, other: usize) -> Weight {
    let Some(other_mean) = matrix.user_mean(other) else {
        return Weight::NoOverlap;
    };
    correlation(query.ratings.iter().filter_map(|&(j, r)| {
        matrix
            .rating(other, j)
            .map(|s| (r - query.mean, s - other_mean))
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfApproxResult {
    /// Code depth, or `None` for a user-level prediction.
    pub depth: Option<usize>,
    /// Neighbours (nodes or users) that rated the item with a defined weight.
    pub raters: Vec<usize>,
    pub weights: Vec<f64>,
    /// Every candidate that rated the item, degenerate weights included.
    pub rated: Vec<usize>,
    pub prediction: f64,
    pub fallback: bool,
    pub clamped: bool,
    pub cold_user: bool,
    pub scanned: usize,
}

/// Nodes of a code that rated the item, retained for refinement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfState {
    pub depth: usize,
    pub nodes: Vec<NodeId>,
}

/// `(weight, deviation)` terms of the weighted-average prediction.
struct Terms {
    raters: Vec<usize>,
    weights: Vec<f64>,
    rated: Vec<usize>,
    terms: Vec<(f64, f64)>,
}

impl Terms {
    fn new() -> Self {
        Self {
            raters: Vec::new(),
            weights: Vec::new(),
            rated: Vec::new(),
            terms: Vec::new(),
        }
    }

    fn push(&mut self, id: usize, weight: Weight, deviation: f64) {
        self.rated.push(id);
        if let Weight::Defined(w) = weight {
            self.raters.push(id);
            self.weights.push(w);
            self.terms.push((w, deviation));
        }
    }

    /// Sums in a canonical order so the value does not depend on the order
    /// in which neighbours were visited.
    fn finish(
        mut self,
        query: &CfQuery,
        scale: (f64, f64),
        depth: Option<usize>,
        scanned: usize,
    ) -> CfApproxResult {
        self.terms
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let num: f64 = self.terms.iter().map(|(w, d)| w * d).sum();
        let den: f64 = self.terms.iter().map(|(w, _)| w.abs()).sum();
        let (raw, fallback) = if den > 0.0 {
            (query.mean + num / den, false)
        } else {
            (query.mean, true)
        };
        let prediction = raw.clamp(scale.0, scale.1);
        CfApproxResult {
            depth,
            raters: self.raters,
            weights: self.weights,
            rated: self.rated,
            prediction,
            fallback,
            clamped: prediction != raw,
            cold_user: query.cold_user,
            scanned,
        }
    }
}

/// Predicts from the nodes of `code`; with a state, only nodes whose
/// ancestor at the state's depth was retained are considered.
pub fn predict(
    book: &CodeBook,
    code: &Code,
    query: &CfQuery,
    state: Option<&CfState>,
) -> Result<CfApproxResult> {
    let matrix = book
        .ratings()
        .ok_or_else(|| Error::invalid("codebook carries no ratings"))?;
    if let Some(s) = state {
        if s.depth >= code.depth {
            return Err(Error::invalid(format!(
                "state depth {} must be shallower than code depth {}",
                s.depth, code.depth
            )));
        }
        if s.nodes.is_empty() {
            warn!("empty state prunes every node at depth {}", code.depth);
        }
    }
    let mut terms = Terms::new();
    let mut scanned = 0;
    for &id in &code.nodes {
        if let Some(s) = state {
            let anc = book
                .ancestor_at(id, s.depth)
                .expect("state depth is shallower");
            if s.nodes.binary_search(&anc).is_err() {
                continue;
            }
        }
        scanned += 1;
        let Some(agg) = book.node(id).ratings() else {
            return Err(Error::invalid(
                "node without aggregated ratings in a CF code",
            ));
        };
        if let Some(a) = agg.get(query.item) {
            terms.push(id, node_weight(query, agg), a.rating - a.rater_mean);
        }
    }
    Ok(terms.finish(query, matrix.scale(), Some(code.depth), scanned))
}

pub fn maintain_cf_state(code: &Code, result: &CfApproxResult) -> CfState {
    let mut nodes = result.rated.clone();
    nodes.sort_unstable();
    CfState {
        depth: code.depth,
        nodes,
    }
}

/// User-level prediction over every user who rated the item.
pub fn exact_cf_predict(matrix: &RatingMatrix, query: &CfQuery) -> CfApproxResult {
    predict_over_users(
        matrix,
        query,
        matrix.item_ratings(query.item).iter().map(|&(v, _)| v),
    )
}

/// User-level prediction restricted to `users`.
pub fn predict_over_users(
    matrix: &RatingMatrix,
    query: &CfQuery,
    users: impl Iterator<Item = usize>,
) -> CfApproxResult {
    let mut terms = Terms::new();
    let mut scanned = 0;
    for v in users {
        scanned += 1;
        if let (Some(r), Some(mean)) = (matrix.rating(v, query.item), matrix.user_mean(v)) {
            terms.push(v, user_weight(query, matrix, v), r - mean);
        }
    }
    terms.finish(query, matrix.scale(), None, scanned)
}

pub fn rmse(predictions: &[f64], actuals: &[f64]) -> Result<f64> {
    if predictions.len() != actuals.len() {
        return Err(Error::DimensionMismatch {
            expected: actuals.len(),
            actual: predictions.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sse: f64 = predictions
        .iter()
        .zip(actuals)
        .map(|(p, r)| (p - r) * (p - r))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

pub fn relative_error(rmse_approx: f64, rmse_exact: f64) -> Result<f64> {
    if rmse_exact == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    Ok((rmse_approx - rmse_exact) / rmse_exact)
}

/// One row of batch prediction output.
#[derive(Clone, Debug, PartialEq)]
pub struct CfRow {
    pub user: usize,
    pub item: usize,
    pub depth: usize,
    pub scanned: usize,
    pub prediction: f64,
    pub actual: f64,
    pub fallback: bool,
}

/// Predicts every `(user, item, actual)` at `depth`, optionally refining
/// from the state obtained at `from_depth`. Output keeps input order.
pub fn predict_batch(
    book: &CodeBook,
    depth: usize,
    from_depth: Option<usize>,
    test: &[(usize, usize, f64)],
) -> Result<Vec<CfRow>> {
    let matrix = book
        .ratings()
        .ok_or_else(|| Error::invalid("codebook carries no ratings"))?;
    let code = book.code_at_depth(depth)?;
    let from = from_depth.map(|d| book.code_at_depth(d)).transpose()?;
    test.par_iter()
        .map(|&(user, item, actual)| {
            let query = CfQuery::from_matrix(matrix, user, item)?;
            let state = match from {
                Some(c) => Some(maintain_cf_state(c, &predict(book, c, &query, None)?)),
                None => None,
            };
            let r = predict(book, code, &query, state.as_ref())?;
            Ok(CfRow {
                user,
                item,
                depth,
                scanned: r.scanned,
                prediction: r.prediction,
                actual,
                fallback: r.fallback || r.cold_user,
            })
        })
        .collect()
}

pub const CF_CSV_HEADER: &str = "user,item,depth,scanned_nodes,prediction,actual,fallback_flag";

/// Rows as CSV with 1-based ids.
pub fn write_cf_rows<W: Write>(rows: &[CfRow], mut out: W) -> Result<()> {
    writeln!(out, "{CF_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.9},{},{}",
            r.user + 1,
            r.item + 1,
            r.depth,
            r.scanned,
            r.prediction,
            r.actual,
            u8::from(r.fallback)
        )?;
    }
    Ok(())
}
