//! Comparison algorithms: anytime kNN by point ranking or by R-tree descent,
//! and time-adaptive collaborative filtering by sampling, flat clustering
//! and a recursive cluster hierarchy.

use std::collections::{BinaryHeap, HashSet, VecDeque};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cf::{predict_over_users, CfApproxResult, CfQuery, UserFeatureMatrix};
use crate::coding::kmeans::{kmeans, nearest_centroid, sq_dist};
use crate::coding::{CodeBook, CoderKind, NodeId};
use crate::dataset::{Label, LabeledDataset, RatingMatrix};
use crate::error::{Error, Result};
use crate::knn::{select_k, vote, KnnApproxResult, KnnQuery};

#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// Point indices, most important first.
    pub order: Vec<usize>,
    /// Distance to the nearest same-class point, per point index.
    pub keys: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Orders points by their distance to the closest other point of the same
/// class, ascending; ties keep index order.
pub fn rank_training_points(train: &LabeledDataset) -> Ranking {
    let pts = train.points();
    let mut keys = vec![f64::INFINITY; pts.len()];
    for (i, p) in pts.iter().enumerate() {
        for (j, o) in pts.iter().enumerate() {
            if i != j && o.label == p.label {
                keys[i] = keys[i].min(sq_dist(&p.features, &o.features));
            }
        }
    }
    let mut warnings = Vec::new();
    for (i, k) in keys.iter_mut().enumerate() {
        if k.is_finite() {
            *k = k.sqrt();
        } else {
            let msg = format!("point {} is alone in its class and is ranked last", i + 1);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]).then(a.cmp(&b)));
    Ranking {
        order,
        keys,
        warnings,
    }
}

/// Scans the `budget` highest-ranked points and votes with the nearest `k`.
pub fn anytime_knn_ranking(
    train: &LabeledDataset,
    ranking: &Ranking,
    query: &KnnQuery,
    budget: usize,
) -> Result<KnnApproxResult> {
    if budget < query.k {
        return Err(Error::InsufficientBudget {
            budget,
            required: query.k,
        });
    }
    if query.point.len() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            actual: query.point.len(),
        });
    }
    let take = budget.min(train.len());
    if take < query.k {
        return Err(Error::invalid(format!(
            "k = {} exceeds the training set",
            query.k
        )));
    }
    let cands: Vec<(f64, usize)> = ranking.order[..take]
        .iter()
        .map(|&i| (sq_dist(&train.points()[i].features, query.point), i))
        .collect();
    let chosen = select_k(cands, query.k);
    Ok(vote(&chosen, |i| train.points()[i].label, None, take))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Descent {
    /// Expand the oldest frontier node.
    Bfs,
    /// Expand the most recently added frontier node.
    Dfs,
    /// Expand the frontier node of smallest maximal distance.
    Ofs,
}

impl Descent {
    pub fn name(self) -> &'static str {
        match self {
            Descent::Bfs => "bfs",
            Descent::Dfs => "dfs",
            Descent::Ofs => "ofs",
        }
    }
}

/// Expandable frontier nodes of one tree under a descent strategy.
enum Pending {
    Queue(VecDeque<NodeId>),
    Stack(Vec<NodeId>),
    Heap(BinaryHeap<std::cmp::Reverse<(OrdF64, NodeId)>>),
}

/// Total order on distances; they are never NaN.
#[derive(Clone, Copy)]
struct OrdF64(f64);

impl PartialEq for OrdF64 {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other).is_eq()
    }
}

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Pending {
    fn new(strategy: Descent) -> Self {
        match strategy {
            Descent::Bfs => Pending::Queue(VecDeque::new()),
            Descent::Dfs => Pending::Stack(Vec::new()),
            Descent::Ofs => Pending::Heap(BinaryHeap::new()),
        }
    }

    /// Adds sibling nodes given in construction order.
    fn extend(&mut self, nodes: &[(NodeId, f64)]) {
        match self {
            Pending::Queue(q) => q.extend(nodes.iter().map(|&(id, _)| id)),
            // reversed so the first sibling is expanded first
            Pending::Stack(s) => s.extend(nodes.iter().rev().map(|&(id, _)| id)),
            Pending::Heap(h) => h.extend(
                nodes
                    .iter()
                    .map(|&(id, d)| std::cmp::Reverse((OrdF64(d), id))),
            ),
        }
    }

    fn peek(&self) -> Option<NodeId> {
        match self {
            Pending::Queue(q) => q.front().copied(),
            Pending::Stack(s) => s.last().copied(),
            Pending::Heap(h) => h.peek().map(|r| r.0 .1),
        }
    }

    fn pop(&mut self) {
        match self {
            Pending::Queue(q) => {
                q.pop_front();
            }
            Pending::Stack(s) => {
                s.pop();
            }
            Pending::Heap(h) => {
                h.pop();
            }
        }
    }
}

/// Anytime kNN over the dual R-trees: starting from the depth-1 nodes, each
/// round expands one node per tree (leaves expand into their points) until
/// the next expansion would exceed `budget` scanned items. The `k` nearest
/// frontier items by maximal distance vote.
pub fn anytime_knn_rtree(
    book: &CodeBook,
    train: &LabeledDataset,
    query: &KnnQuery,
    budget: usize,
    strategy: Descent,
) -> Result<KnnApproxResult> {
    if book.kind() != CoderKind::RtreeDual {
        return Err(Error::invalid(
            "R-tree descent needs a dual R-tree codebook",
        ));
    }
    if query.point.len() != book.dim() {
        return Err(Error::DimensionMismatch {
            expected: book.dim(),
            actual: query.point.len(),
        });
    }
    let start_depth = book.height().min(1);
    let mut pending: Vec<Pending> = (0..book.roots().len())
        .map(|_| Pending::new(strategy))
        .collect();
    let mut frontier_nodes: Vec<NodeId> = Vec::new();
    for (tree, queue) in pending.iter_mut().enumerate() {
        let nodes: Vec<(NodeId, f64)> = book
            .nodes()
            .iter()
            .filter(|n| n.tree == tree && n.depth == start_depth)
            .map(|n| (n.id, n.mbr.max_dist_sq(query.point)))
            .collect();
        frontier_nodes.extend(nodes.iter().map(|&(id, _)| id));
        queue.extend(&nodes);
    }
    let mut scanned = frontier_nodes.len();
    if budget < scanned {
        return Err(Error::InsufficientBudget {
            budget,
            required: scanned,
        });
    }
    let mut expanded: HashSet<NodeId> = HashSet::new();
    let mut points: Vec<usize> = Vec::new();
    'rounds: loop {
        let mut progressed = false;
        for p in pending.iter_mut() {
            let Some(id) = p.peek() else { continue };
            let node = book.node(id);
            let cost = if node.is_leaf() {
                node.entries.len()
            } else {
                node.children.len()
            };
            if scanned + cost > budget {
                break 'rounds;
            }
            p.pop();
            expanded.insert(id);
            scanned += cost;
            progressed = true;
            if node.is_leaf() {
                points.extend_from_slice(&node.entries);
            } else {
                let kids: Vec<(NodeId, f64)> = node
                    .children
                    .iter()
                    .map(|&c| (c, book.node(c).mbr.max_dist_sq(query.point)))
                    .collect();
                frontier_nodes.extend(node.children.iter().copied());
                p.extend(&kids);
            }
        }
        if !progressed {
            break;
        }
    }
    // nodes are keyed after points so that a fully descended frontier
    // reproduces brute-force tie breaking
    let n_points = train.len();
    let mut cands: Vec<(f64, usize)> = points
        .iter()
        .map(|&i| (sq_dist(&train.points()[i].features, query.point), i))
        .collect();
    cands.extend(
        frontier_nodes
            .iter()
            .filter(|id| !expanded.contains(id))
            .map(|&id| (book.node(id).mbr.max_dist_sq(query.point), n_points + id)),
    );
    if cands.len() < query.k {
        return Err(Error::InsufficientCandidates {
            available: cands.len(),
            k: query.k,
        });
    }
    let chosen = select_k(cands, query.k);
    let label_of = |key: usize| -> Label {
        if key < n_points {
            train.points()[key].label
        } else {
            book.node(key - n_points)
                .label()
                .expect("dual R-tree nodes carry labels")
        }
    };
    Ok(vote(&chosen, label_of, None, scanned))
}

/// A seeded permutation of users; a sample of size `s` is its prefix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UserSample {
    order: Vec<usize>,
}

impl UserSample {
    pub fn new(num_users: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..num_users).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Self { order }
    }

    pub fn prefix(&self, size: usize) -> &[usize] {
        &self.order[..size.min(self.order.len())]
    }
}

/// User-level prediction restricted to a seeded random subset of users.
pub fn cf_sampling(
    matrix: &RatingMatrix,
    sample: &UserSample,
    query: &CfQuery,
    sample_size: usize,
) -> Result<CfApproxResult> {
    if sample_size == 0 || sample_size > matrix.num_users() {
        return Err(Error::invalid(format!(
            "sample size {sample_size} must lie in 1..={}",
            matrix.num_users()
        )));
    }
    Ok(predict_over_users(
        matrix,
        query,
        sample.prefix(sample_size).iter().copied(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterNode {
    /// Sorted user ids.
    pub members: Vec<usize>,
    pub centroid: Vec<f64>,
    /// Indices into the next level.
    pub children: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub branching: usize,
    pub levels: usize,
    pub iterations: usize,
    pub seed: u64,
}

/// Levels of user clusters; level 0 is the whole user set and each level
/// partitions the users, refining the level above.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub config: ClusterConfig,
    pub levels: Vec<Vec<ClusterNode>>,
}

fn centroid_of(features: &UserFeatureMatrix, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; features.dim()];
    for &u in members {
        for (s, v) in c.iter_mut().zip(features.row(u)) {
            *s += v;
        }
    }
    c.iter_mut().for_each(|s| *s /= members.len() as f64);
    c
}

impl ClusterModel {
    /// Recursive k-means hierarchy with `config.levels` levels.
    pub fn rect_tree(features: &UserFeatureMatrix, config: ClusterConfig) -> Result<Self> {
        if config.levels == 0 {
            return Err(Error::invalid("at least one level is required"));
        }
        if config.branching == 0 {
            return Err(Error::invalid("branching must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let all: Vec<usize> = (0..features.num_users()).collect();
        let mut levels = vec![vec![ClusterNode {
            centroid: centroid_of(features, &all),
            members: all,
            children: Vec::new(),
        }]];
        for _ in 1..config.levels {
            let mut next = Vec::new();
            let parents = levels.last_mut().expect("root level exists");
            for parent in parents.iter_mut() {
                let groups = if parent.members.len() > 1 && config.branching <= parent.members.len()
                {
                    let pts: Vec<&[f64]> =
                        parent.members.iter().map(|&u| features.row(u)).collect();
                    kmeans(&pts, config.branching, config.iterations, &mut rng)?
                        .clusters()
                        .into_iter()
                        .map(|g| g.into_iter().map(|i| parent.members[i]).collect::<Vec<_>>())
                        .collect()
                } else {
                    vec![parent.members.clone()]
                };
                for g in groups {
                    parent.children.push(next.len());
                    next.push(ClusterNode {
                        centroid: centroid_of(features, &g),
                        members: g,
                        children: Vec::new(),
                    });
                }
            }
            levels.push(next);
        }
        Ok(Self { config, levels })
    }

    /// One round of k-means into `k` flat clusters.
    pub fn flat(
        features: &UserFeatureMatrix,
        k: usize,
        iterations: usize,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || k > features.num_users() {
            return Err(Error::invalid(format!(
                "cluster count {k} must lie in 1..={}",
                features.num_users()
            )));
        }
        Self::rect_tree(
            features,
            ClusterConfig {
                branching: k,
                levels: if k == 1 { 1 } else { 2 },
                iterations,
                seed,
            },
        )
    }

    /// Path of cluster indices from the root to `depth` by nearest centroid.
    pub fn route(&self, vector: &[f64], depth: usize) -> Vec<usize> {
        let depth = depth.min(self.levels.len() - 1);
        let mut path = vec![0];
        for level in 1..=depth {
            let parent = &self.levels[level - 1][*path.last().expect("non-empty path")];
            let centroids: Vec<Vec<f64>> = parent
                .children
                .iter()
                .map(|&c| self.levels[level][c].centroid.clone())
                .collect();
            path.push(parent.children[nearest_centroid(&centroids, vector)]);
        }
        path
    }

    /// Members of the bottom cluster the vector routes to.
    pub fn bottom_members(&self, vector: &[f64]) -> &[usize] {
        let depth = self.levels.len() - 1;
        let idx = *self.route(vector, depth).last().expect("non-empty path");
        &self.levels[depth][idx].members
    }
}

/// User-level prediction over the active user's cluster.
pub fn cf_clustering(
    matrix: &RatingMatrix,
    features: &UserFeatureMatrix,
    model: &ClusterModel,
    query: &CfQuery,
) -> Result<CfApproxResult> {
    if features.num_users() != matrix.num_users() {
        return Err(Error::DimensionMismatch {
            expected: matrix.num_users(),
            actual: features.num_users(),
        });
    }
    let members = model.bottom_members(features.row(query.user));
    Ok(predict_over_users(matrix, query, members.iter().copied()))
}

/// RectTree prediction: identical to [`cf_clustering`] over a hierarchy.
pub fn cf_recttree(
    matrix: &RatingMatrix,
    features: &UserFeatureMatrix,
    model: &ClusterModel,
    query: &CfQuery,
) -> Result<CfApproxResult> {
    cf_clustering(matrix, features, model, query)
}
