//! Elastic k-nearest-neighbour classification over codes of R-tree nodes.
//!
//! All distance comparisons use squared distances; reported distances are
//! Euclidean.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{Code, CodeBook, CoderKind, Mbr, NodeId};
use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};

pub fn dist_max(q: &[f64], mbr: &Mbr) -> Result<f64> {
    mbr.dist_max(q)
}

pub fn dist_min(q: &[f64], mbr: &Mbr) -> Result<f64> {
    mbr.dist_min(q)
}

#[derive(Clone, Copy, Debug)]
pub struct KnnQuery<'a> {
    pub point: &'a [f64],
    pub k: usize,
}

impl<'a> KnnQuery<'a> {
    pub fn new(point: &'a [f64], k: usize) -> Self {
        Self { point, k }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnApproxResult {
    /// Code depth, or `None` for a result over raw training points.
    pub depth: Option<usize>,
    /// Node ids (or point indices), nearest first.
    pub neighbours: Vec<usize>,
    pub distances: Vec<f64>,
    pub k_pos: usize,
    pub k_neg: usize,
    pub predicted: Label,
    /// Largest distance among the neighbours.
    pub threshold: f64,
    pub scanned: usize,
}

impl KnnApproxResult {
    /// Estimated probability of the positive class.
    pub fn score(&self) -> f64 {
        self.k_pos as f64 / (self.k_pos + self.k_neg) as f64
    }
}

/// Code nodes retained for refinement, sorted by id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnState {
    pub depth: usize,
    pub nodes: Vec<NodeId>,
}

/// Picks the `k` smallest `(squared distance, id)` pairs, ordered.
pub(crate) fn select_k(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<(f64, usize)> {
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cands.len() {
        cands.select_nth_unstable_by(k - 1, cmp);
        cands.truncate(k);
    }
    cands.sort_by(cmp);
    cands
}

/// Votes with `(squared distance, id)` neighbours; ties go negative.
pub(crate) fn vote(
    chosen: &[(f64, usize)],
    label_of: impl Fn(usize) -> Label,
    depth: Option<usize>,
    scanned: usize,
) -> KnnApproxResult {
    let k_pos = chosen
        .iter()
        .filter(|&&(_, id)| label_of(id).is_positive())
        .count();
    let k_neg = chosen.len() - k_pos;
    KnnApproxResult {
        depth,
        neighbours: chosen.iter().map(|&(_, id)| id).collect(),
        distances: chosen.iter().map(|&(d, _)| d.sqrt()).collect(),
        k_pos,
        k_neg,
        predicted: if k_pos > k_neg {
            Label::Positive
        } else {
            Label::Negative
        },
        threshold: chosen.last().map_or(0.0, |&(d, _)| d.sqrt()),
        scanned,
    }
}

fn check_query(book: &CodeBook, query: &KnnQuery) -> Result<()> {
    if book.kind() != CoderKind::RtreeDual {
        return Err(Error::invalid("kNN needs a dual R-tree codebook"));
    }
    if query.point.len() != book.dim() {
        return Err(Error::DimensionMismatch {
            expected: book.dim(),
            actual: query.point.len(),
        });
    }
    if query.k == 0 {
        return Err(Error::invalid("k must be positive"));
    }
    Ok(())
}

/// Whether `id` survives the filter of `state`.
fn retained(book: &CodeBook, state: Option<&KnnState>, id: NodeId) -> bool {
    state.is_none_or(|s| {
        let anc = book
            .ancestor_at(id, s.depth)
            .expect("state depth is shallower");
        s.nodes.binary_search(&anc).is_ok()
    })
}

/// Linear scan of the (state-filtered) code for the `k` nodes of smallest
/// maximal distance.
pub fn classify(
    book: &CodeBook,
    code: &Code,
    query: &KnnQuery,
    state: Option<&KnnState>,
) -> Result<KnnApproxResult> {
    check_query(book, query)?;
    if let Some(s) = state {
        if s.depth >= code.depth {
            return Err(Error::invalid(format!(
                "state depth {} must be shallower than code depth {}",
                s.depth, code.depth
            )));
        }
    }
    let cands: Vec<(f64, usize)> = code
        .nodes
        .iter()
        .filter(|&&id| retained(book, state, id))
        .map(|&id| (book.node(id).mbr.max_dist_sq(query.point), id))
        .collect();
    if cands.len() < query.k {
        return Err(Error::InsufficientCandidates {
            available: cands.len(),
            k: query.k,
        });
    }
    let scanned = cands.len();
    let chosen = select_k(cands, query.k);
    Ok(vote(
        &chosen,
        |id| {
            book.node(id)
                .label()
                .expect("dual R-tree nodes carry labels")
        },
        Some(code.depth),
        scanned,
    ))
}

/// Keeps every code node whose minimal distance does not exceed the
/// result's threshold.
pub fn maintain_state(
    book: &CodeBook,
    code: &Code,
    query: &KnnQuery,
    result: &KnnApproxResult,
) -> KnnState {
    let thr_sq = result.threshold * result.threshold;
    // The threshold went through a square root; compare against the
    // largest stored squared distance so result nodes are always kept.
    let thr_sq = result
        .neighbours
        .iter()
        .map(|&id| book.node(id).mbr.max_dist_sq(query.point))
        .fold(thr_sq, f64::max);
    KnnState {
        depth: code.depth,
        nodes: code
            .nodes
            .iter()
            .copied()
            .filter(|&id| book.node(id).mbr.min_dist_sq(query.point) <= thr_sq)
            .collect(),
    }
}

/// Brute-force kNN over the raw training points.
pub fn exact_knn(train: &LabeledDataset, query: &KnnQuery) -> Result<KnnApproxResult> {
    if query.point.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: query.point.len(),
        });
    }
    if query.k == 0 || query.k > train.len() {
        return Err(Error::invalid(format!(
            "k = {} must lie in 1..={}",
            query.k,
            train.len()
        )));
    }
    let cands: Vec<(f64, usize)> = train
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| (sq_dist(&p.features, query.point), i))
        .collect();
    let chosen = select_k(cands, query.k);
    Ok(vote(
        &chosen,
        |i| train.points()[i].label,
        None,
        train.len(),
    ))
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn accuracy(predicted: &[Label], actual: &[Label]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            actual: predicted.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(correct as f64 / predicted.len() as f64)
}

/// Rank-sum AUC over `(k_pos, k, actual)` triples scored by `k_pos / k`,
/// with tied scores sharing their average rank.
pub fn auc(points: &[(usize, usize, Label)]) -> Result<f64> {
    let scored: Vec<(f64, Label)> = points
        .iter()
        .map(|&(kp, k, l)| (kp as f64 / k as f64, l))
        .collect();
    auc_from_scores(&scored)
}

pub fn auc_from_scores(scored: &[(f64, Label)]) -> Result<f64> {
    let n_pos = scored.iter().filter(|(_, l)| l.is_positive()).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 {
        return Err(Error::UndefinedAuc("positive"));
    }
    if n_neg == 0 {
        return Err(Error::UndefinedAuc("negative"));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scored[order[end + 1]].0 == scored[order[start]].0 {
            end += 1;
        }
        // ranks are 1-based: positions start..=end share the mean rank
        let mean_rank = (start + end) as f64 / 2.0 + 1.0;
        let pos_in_run = order[start..=end]
            .iter()
            .filter(|&&i| scored[i].1.is_positive())
            .count();
        pos_rank_sum += mean_rank * pos_in_run as f64;
        start = end + 1;
    }
    let np = n_pos as f64;
    Ok((pos_rank_sum - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// One row of batch classification output.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnRow {
    pub query_id: usize,
    pub depth: usize,
    pub scanned: usize,
    pub k_pos: usize,
    pub k_neg: usize,
    pub predicted: Label,
    pub actual: Label,
}

/// Classifies every test point at `depth`, optionally refining from the
/// state obtained at `from_depth`. Output keeps input order.
pub fn classify_batch(
    book: &CodeBook,
    test: &LabeledDataset,
    k: usize,
    depth: usize,
    from_depth: Option<usize>,
) -> Result<Vec<KnnRow>> {
    let code = book.code_at_depth(depth)?;
    let from = from_depth.map(|d| book.code_at_depth(d)).transpose()?;
    test.points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let q = KnnQuery::new(&p.features, k);
            let state = match from {
                Some(c) => Some(maintain_state(book, c, &q, &classify(book, c, &q, None)?)),
                None => None,
            };
            let r = classify(book, code, &q, state.as_ref())?;
            Ok(KnnRow {
                query_id: i + 1,
                depth,
                scanned: r.scanned,
                k_pos: r.k_pos,
                k_neg: r.k_neg,
                predicted: r.predicted,
                actual: p.label,
            })
        })
        .collect()
}

pub const KNN_CSV_HEADER: &str = "query_id,depth,scanned_nodes,k_P,k_N,predicted,actual";

pub fn write_knn_rows<W: Write>(rows: &[KnnRow], mut out: W) -> Result<()> {
    writeln!(out, "{KNN_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.query_id,
            r.depth,
            r.scanned,
            r.k_pos,
            r.k_neg,
            r.predicted.as_libsvm(),
            r.actual.as_libsvm()
        )?;
    }
    Ok(())
}
