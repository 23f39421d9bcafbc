//! Hierarchical coders and their codebooks.
//!
//! A codebook holds one or two depth-balanced trees. The nodes at one depth
//! (across all trees) form a *code*: a lossy summary of the training data
//! whose length is the node count. Deeper codes are longer and finer.

pub mod kmeans;
mod mbr;
mod tiling;

use std::collections::BTreeMap;
use std::io::{Read, Write};

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use mbr::Mbr;

use crate::cf::UserFeatureMatrix;
use crate::dataset::{Label, LabeledDataset, RatingMatrix};
use crate::error::{Error, Result};

pub type NodeId = usize;

pub const FORMAT_NAME: &str = "elastic-mine-codebook";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoderKind {
    RtreeDual,
    RtreeCf,
    KmeansDivisive,
}

impl CoderKind {
    pub fn is_rtree(self) -> bool {
        matches!(self, CoderKind::RtreeDual | CoderKind::RtreeCf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtreeConfig {
    /// Fan-out limit of internal nodes.
    pub max_entries: usize,
    /// Points per leaf; defaults to `max_entries`.
    pub leaf_entries: Option<usize>,
    /// Levels above the leaves; defaults to the smallest height that fits.
    pub levels: Option<usize>,
}

impl Default for RtreeConfig {
    fn default() -> Self {
        Self {
            max_entries: 4,
            leaf_entries: None,
            levels: None,
        }
    }
}

impl RtreeConfig {
    pub fn with_max_entries(max_entries: usize) -> Self {
        Self {
            max_entries,
            ..Self::default()
        }
    }

    fn leaf_capacity(&self) -> usize {
        self.leaf_entries.unwrap_or(self.max_entries)
    }

    fn validate(&self) -> Result<()> {
        if self.max_entries < 2 {
            return Err(Error::invalid("max_entries must be at least 2"));
        }
        if self.leaf_capacity() == 0 {
            return Err(Error::invalid("leaf_entries must be at least 1"));
        }
        Ok(())
    }

    /// Height needed for `n` points under this configuration.
    fn natural_height(&self, n: usize) -> usize {
        tiling::natural_height(n.div_ceil(self.leaf_capacity()).max(1), self.max_entries)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub branching: usize,
    /// Number of levels including the root.
    pub depth_limit: usize,
    pub iterations: usize,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self {
            branching: 2,
            depth_limit: 6,
            iterations: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "coder", rename_all = "kebab-case")]
pub enum CoderConfig {
    Rtree(RtreeConfig),
    Kmeans(KmeansConfig),
}

/// One item's summary over a node's raters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemAggregate {
    pub item: usize,
    /// Mean rating the node's raters gave the item.
    pub rating: f64,
    /// Mean of those raters' overall average ratings.
    pub rater_mean: f64,
    pub raters: usize,
}

/// Per-item aggregates of a node, sorted by item; unrated items are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRatings {
    items: Vec<ItemAggregate>,
}

impl AggregatedRatings {
    /// Aggregates the rows of `users`, summing in the given order.
    pub fn from_users(matrix: &RatingMatrix, users: &[usize]) -> Self {
        let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for &u in users {
            let Some(mean) = matrix.user_mean(u) else {
                continue;
            };
            for &(item, r) in matrix.user_ratings(u) {
                let slot = acc.entry(item).or_insert((0.0, 0.0, 0));
                slot.0 += r;
                slot.1 += mean;
                slot.2 += 1;
            }
        }
        let items = acc
            .into_iter()
            .map(|(item, (sum_r, sum_mean, n))| ItemAggregate {
                item,
                rating: sum_r / n as f64,
                rater_mean: sum_mean / n as f64,
                raters: n,
            })
            .collect();
        Self { items }
    }

    pub fn items(&self) -> &[ItemAggregate] {
        &self.items
    }

    pub fn get(&self, item: usize) -> Option<&ItemAggregate> {
        self.items
            .binary_search_by_key(&item, |a| a.item)
            .ok()
            .map(|i| &self.items[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Class { label: Label },
    Ratings(AggregatedRatings),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodeNode {
    pub id: NodeId,
    /// Index of the tree within the codebook.
    pub tree: usize,
    pub depth: usize,
    pub mbr: Mbr,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    /// Point or user indices held by a leaf; empty for internal nodes.
    pub entries: Vec<usize>,
    /// Points or users enclosed by the subtree.
    pub count: usize,
    pub payload: Payload,
}

impl CodeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn label(&self) -> Option<Label> {
        match &self.payload {
            Payload::Class { label } => Some(*label),
            Payload::Ratings(_) => None,
        }
    }

    pub fn ratings(&self) -> Option<&AggregatedRatings> {
        match &self.payload {
            Payload::Ratings(r) => Some(r),
            Payload::Class { .. } => None,
        }
    }
}

/// All nodes at one depth, ordered by node id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Code {
    pub depth: usize,
    pub nodes: Vec<NodeId>,
}

impl Code {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct CodeBook {
    kind: CoderKind,
    config: CoderConfig,
    seed: u64,
    dim: usize,
    height: usize,
    roots: Vec<NodeId>,
    nodes: Vec<CodeNode>,
    codes: Vec<Code>,
    features: Option<UserFeatureMatrix>,
    ratings: Option<RatingMatrix>,
    warnings: Vec<String>,
}

/// On-disk layout; field order is the serialization order.
#[derive(Serialize, Deserialize)]
struct CodeBookFile {
    format: String,
    version: u32,
    tool_version: String,
    kind: CoderKind,
    config: CoderConfig,
    seed: u64,
    dim: usize,
    height: usize,
    roots: Vec<NodeId>,
    warnings: Vec<String>,
    nodes: Vec<CodeNode>,
    features: Option<UserFeatureMatrix>,
    ratings: Option<RatingMatrix>,
}

/// Parts of a codebook assembled outside the builders.
#[derive(Clone, Debug)]
pub struct CodeBookParts {
    pub kind: CoderKind,
    pub config: CoderConfig,
    pub seed: u64,
    pub dim: usize,
    pub roots: Vec<NodeId>,
    pub nodes: Vec<CodeNode>,
    pub features: Option<UserFeatureMatrix>,
    pub ratings: Option<RatingMatrix>,
    pub warnings: Vec<String>,
}

fn malformed(msg: impl Into<String>) -> Error {
    Error::Codebook(msg.into())
}

impl CodeBook {
    /// Validates structure (ids, parent links, depth balance, counts) and
    /// materialises the codes. Enclosure is not enforced here; see
    /// [`CodeBook::enclosure_violations`].
    pub fn from_parts(parts: CodeBookParts) -> Result<Self> {
        let CodeBookParts {
            kind,
            config,
            seed,
            dim,
            roots,
            nodes,
            features,
            ratings,
            mut warnings,
        } = parts;
        let expected_roots = if kind == CoderKind::RtreeDual { 2 } else { 1 };
        if roots.len() != expected_roots {
            return Err(malformed(format!(
                "{kind:?} needs {expected_roots} trees, found {}",
                roots.len()
            )));
        }
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(malformed(format!(
                    "node at position {i} has id {}",
                    node.id
                )));
            }
            if node.mbr.dim() != dim {
                return Err(malformed(format!(
                    "node {i} has a {}-d MBR in a {dim}-d book",
                    node.mbr.dim()
                )));
            }
            let payload_ok = matches!(
                (&node.payload, kind),
                (Payload::Class { .. }, CoderKind::RtreeDual)
                    | (
                        Payload::Ratings(_),
                        CoderKind::RtreeCf | CoderKind::KmeansDivisive
                    )
            );
            if !payload_ok {
                return Err(malformed(format!(
                    "node {i} carries a payload foreign to {kind:?}"
                )));
            }
            for &c in &node.children {
                let child = nodes
                    .get(c)
                    .ok_or_else(|| malformed(format!("node {i} lists missing child {c}")))?;
                if child.parent != Some(i)
                    || child.depth != node.depth + 1
                    || child.tree != node.tree
                {
                    return Err(malformed(format!(
                        "child {c} is inconsistent with parent {i}"
                    )));
                }
            }
            if let Some(p) = node.parent {
                let parent = nodes
                    .get(p)
                    .ok_or_else(|| malformed(format!("node {i} has missing parent {p}")))?;
                if !parent.children.contains(&i) {
                    return Err(malformed(format!("node {p} does not list child {i}")));
                }
            }
            let expected_count = if node.is_leaf() {
                node.entries.len()
            } else {
                if !node.entries.is_empty() {
                    return Err(malformed(format!("internal node {i} holds entries")));
                }
                node.children.iter().map(|&c| nodes[c].count).sum()
            };
            if node.count != expected_count || node.count == 0 {
                return Err(malformed(format!(
                    "node {i} count {} should be {expected_count} and positive",
                    node.count
                )));
            }
        }
        for (t, &r) in roots.iter().enumerate() {
            let root = nodes
                .get(r)
                .ok_or_else(|| malformed(format!("missing root {r}")))?;
            if root.depth != 0 || root.parent.is_some() || root.tree != t {
                return Err(malformed(format!(
                    "node {r} is not a depth-0 root of tree {t}"
                )));
            }
        }
        if nodes
            .iter()
            .any(|n| n.parent.is_none() && !roots.contains(&n.id))
        {
            return Err(malformed("a parentless node is not a root"));
        }
        let leaf_depths: Vec<usize> = nodes
            .iter()
            .filter(|n| n.is_leaf())
            .map(|n| n.depth)
            .collect();
        let height = leaf_depths.first().copied().unwrap_or(0);
        if leaf_depths.iter().any(|&d| d != height) {
            return Err(malformed("leaves sit at different depths"));
        }

        let mut by_depth = vec![Vec::new(); height + 1];
        for n in &nodes {
            by_depth[n.depth].push(n.id);
        }
        let mut codes = Vec::new();
        for depth in 1..=height {
            let deeper_same = depth < height && by_depth[depth].len() >= by_depth[depth + 1].len();
            if deeper_same {
                let msg = format!(
                    "code at depth {depth} is no shorter than depth {} and is dropped",
                    depth + 1
                );
                if !warnings.contains(&msg) {
                    warnings.push(msg);
                }
                continue;
            }
            codes.push(Code {
                depth,
                nodes: by_depth[depth].clone(),
            });
        }
        if codes.is_empty() {
            let msg = "no usable code: every tree is a single root".to_string();
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
        }
        if kind != CoderKind::RtreeDual && ratings.is_none() {
            return Err(malformed(
                "a collaborative-filtering book needs its rating matrix",
            ));
        }
        Ok(Self {
            kind,
            config,
            seed,
            dim,
            height,
            roots,
            nodes,
            codes,
            features,
            ratings,
            warnings,
        })
    }

    pub fn kind(&self) -> CoderKind {
        self.kind
    }

    pub fn config(&self) -> &CoderConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Depth of the leaves.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn roots(&self) -> &[NodeId] {
        &self.roots
    }

    pub fn nodes(&self) -> &[CodeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &CodeNode {
        &self.nodes[id]
    }

    /// Usable codes in increasing depth (and length).
    pub fn codes(&self) -> &[Code] {
        &self.codes
    }

    pub fn features(&self) -> Option<&UserFeatureMatrix> {
        self.features.as_ref()
    }

    pub fn ratings(&self) -> Option<&RatingMatrix> {
        self.ratings.as_ref()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn code_at_depth(&self, depth: usize) -> Result<&Code> {
        if depth == 0 {
            return Err(Error::RootDepth);
        }
        self.codes
            .iter()
            .find(|c| c.depth == depth)
            .ok_or(Error::DepthNotFound(depth))
    }

    /// The longest code whose length does not exceed `length_budget`.
    pub fn select_code(&self, length_budget: usize) -> Result<&Code> {
        let shortest = self.codes.first().map(Code::len).unwrap_or(0);
        self.codes
            .iter()
            .rev()
            .find(|c| c.len() <= length_budget)
            .ok_or(Error::BudgetTooSmall {
                budget: length_budget,
                shortest,
            })
    }

    pub fn total_mbr_volume(&self, code: &Code) -> f64 {
        code.nodes
            .iter()
            .map(|&id| self.nodes[id].mbr.volume())
            .sum()
    }

    /// The ancestor of `id` at `depth` (the node itself at its own depth).
    pub fn ancestor_at(&self, mut id: NodeId, depth: usize) -> Option<NodeId> {
        if depth > self.nodes[id].depth {
            return None;
        }
        while self.nodes[id].depth > depth {
            id = self.nodes[id].parent?;
        }
        Some(id)
    }

    /// Entries enclosed by the subtree rooted at `id`, sorted ascending.
    pub fn members(&self, id: NodeId) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes[id].count);
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            out.extend_from_slice(&node.entries);
            stack.extend(node.children.iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// (parent, child) pairs whose rectangles break containment.
    pub fn enclosure_violations(&self) -> Vec<(NodeId, NodeId)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.children
                    .iter()
                    .filter(|&&c| !n.mbr.contains(&self.nodes[c].mbr))
                    .map(move |&c| (n.id, c))
            })
            .collect()
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let file = CodeBookFile {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            kind: self.kind,
            config: self.config.clone(),
            seed: self.seed,
            dim: self.dim,
            height: self.height,
            roots: self.roots.clone(),
            warnings: self.warnings.clone(),
            nodes: self.nodes.clone(),
            features: self.features.clone(),
            ratings: self.ratings.clone(),
        };
        serde_json::to_writer_pretty(out, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let file: CodeBookFile = serde_json::from_reader(input)?;
        if file.format != FORMAT_NAME {
            return Err(malformed(format!("unknown format {:?}", file.format)));
        }
        if file.version != FORMAT_VERSION {
            return Err(malformed(format!("unsupported version {}", file.version)));
        }
        let book = Self::from_parts(CodeBookParts {
            kind: file.kind,
            config: file.config,
            seed: file.seed,
            dim: file.dim,
            roots: file.roots,
            nodes: file.nodes,
            features: file.features,
            ratings: file.ratings,
            warnings: file.warnings,
        })?;
        if book.height != file.height {
            return Err(malformed("stored height disagrees with the node table"));
        }
        Ok(book)
    }
}

/// Builds one R-tree per planned shape and appends its nodes with ids
/// assigned bottom-up (leaves first, root last) after `first_id`.
fn append_rtree(
    coords: &[&[f64]],
    mut items: Vec<usize>,
    config: &RtreeConfig,
    height: usize,
    tree: usize,
    nodes: &mut Vec<CodeNode>,
    payload: impl Fn(&[usize]) -> Payload,
) -> NodeId {
    let plan = tiling::plan(
        items.len(),
        config.leaf_capacity(),
        config.max_entries,
        height,
    );
    let mut protos = Vec::new();
    tiling::realize(&plan, &mut items, coords, 0, &mut protos);
    let first_id = nodes.len();
    let mut order: Vec<usize> = (0..protos.len()).collect();
    order.sort_by_key(|&p| std::cmp::Reverse(protos[p].depth));
    let mut id_of = vec![0; protos.len()];
    for (offset, &p) in order.iter().enumerate() {
        id_of[p] = first_id + offset;
    }
    let mut parent_of = vec![None; protos.len()];
    for (p, proto) in protos.iter().enumerate() {
        for &c in &proto.children {
            parent_of[c] = Some(id_of[p]);
        }
    }
    let mut counts = vec![0; protos.len()];
    for &p in &order {
        counts[p] = if protos[p].children.is_empty() {
            protos[p].entries.len()
        } else {
            protos[p].children.iter().map(|&c| counts[c]).sum()
        };
    }
    let mut built: Vec<CodeNode> = Vec::with_capacity(protos.len());
    for &p in &order {
        let proto = &protos[p];
        let mut members = Vec::new();
        collect_entries(&protos, p, &mut members);
        members.sort_unstable();
        built.push(CodeNode {
            id: id_of[p],
            tree,
            depth: proto.depth,
            mbr: proto.mbr.clone(),
            parent: parent_of[p],
            children: proto.children.iter().map(|&c| id_of[c]).collect(),
            entries: proto.entries.clone(),
            count: counts[p],
            payload: payload(&members),
        });
    }
    nodes.extend(built);
    nodes.len() - 1
}

fn collect_entries(protos: &[tiling::ProtoNode], at: usize, out: &mut Vec<usize>) {
    out.extend_from_slice(&protos[at].entries);
    for &c in &protos[at].children {
        collect_entries(protos, c, out);
    }
}

/// Positive and negative R-trees over `train`, aligned to a common height.
pub fn build_dual_rtrees(
    train: &LabeledDataset,
    config: &RtreeConfig,
    seed: u64,
) -> Result<CodeBook> {
    config.validate()?;
    let coords: Vec<&[f64]> = train
        .points()
        .iter()
        .map(|p| p.features.as_slice())
        .collect();
    let class_items = |label: Label| -> Vec<usize> {
        (0..train.len())
            .filter(|&i| train.points()[i].label == label)
            .collect()
    };
    let pos = class_items(Label::Positive);
    let neg = class_items(Label::Negative);
    if pos.is_empty() {
        return Err(Error::ClassMissing("positive"));
    }
    if neg.is_empty() {
        return Err(Error::ClassMissing("negative"));
    }
    let natural = config
        .natural_height(pos.len())
        .max(config.natural_height(neg.len()));
    let height = match config.levels {
        Some(levels) if levels < natural => {
            return Err(Error::invalid(format!(
                "{levels} levels cannot hold the training set; at least {natural} are needed"
            )))
        }
        Some(levels) => levels,
        None => natural,
    };
    let mut warnings = Vec::new();
    if config.natural_height(pos.len()) != config.natural_height(neg.len()) {
        let msg = format!("class trees padded to a common height of {height}");
        warn!("{msg}");
        warnings.push(msg);
    }
    let mut nodes = Vec::new();
    let pos_root = append_rtree(&coords, pos, config, height, 0, &mut nodes, |_| {
        Payload::Class {
            label: Label::Positive,
        }
    });
    let neg_root = append_rtree(&coords, neg, config, height, 1, &mut nodes, |_| {
        Payload::Class {
            label: Label::Negative,
        }
    });
    let book = CodeBook::from_parts(CodeBookParts {
        kind: CoderKind::RtreeDual,
        config: CoderConfig::Rtree(config.clone()),
        seed,
        dim: train.dim(),
        roots: vec![pos_root, neg_root],
        nodes,
        features: None,
        ratings: None,
        warnings,
    })?;
    for w in book
        .warnings()
        .iter()
        .filter(|w| w.starts_with("no usable") || w.starts_with("code at"))
    {
        warn!("{w}");
    }
    Ok(book)
}

fn check_features(matrix: &RatingMatrix, features: &UserFeatureMatrix) -> Result<()> {
    if matrix.num_ratings() == 0 {
        return Err(Error::invalid("the rating matrix is empty"));
    }
    if features.num_users() != matrix.num_users() {
        return Err(Error::DimensionMismatch {
            expected: matrix.num_users(),
            actual: features.num_users(),
        });
    }
    Ok(())
}

/// One R-tree over user feature vectors; every node aggregates its users'
/// ratings from `matrix`.
pub fn build_cf_codebook(
    matrix: &RatingMatrix,
    features: &UserFeatureMatrix,
    config: &RtreeConfig,
    seed: u64,
) -> Result<CodeBook> {
    config.validate()?;
    check_features(matrix, features)?;
    let coords: Vec<&[f64]> = (0..features.num_users()).map(|u| features.row(u)).collect();
    let natural = config.natural_height(coords.len());
    let height = match config.levels {
        Some(levels) if levels < natural => {
            return Err(Error::invalid(format!(
                "{levels} levels cannot hold {} users; at least {natural} are needed",
                coords.len()
            )))
        }
        Some(levels) => levels,
        None => natural,
    };
    let mut nodes = Vec::new();
    let root = append_rtree(
        &coords,
        (0..coords.len()).collect(),
        config,
        height,
        0,
        &mut nodes,
        |users| Payload::Ratings(AggregatedRatings::from_users(matrix, users)),
    );
    CodeBook::from_parts(CodeBookParts {
        kind: CoderKind::RtreeCf,
        config: CoderConfig::Rtree(config.clone()),
        seed,
        dim: features.dim(),
        roots: vec![root],
        nodes,
        features: Some(features.clone()),
        ratings: Some(matrix.clone()),
        warnings: Vec::new(),
    })
}

/// Divisive k-means hierarchy over user feature vectors, ids in
/// breadth-first order. Clusters that cannot be split get a single
/// pass-through child so that all leaves share the last level.
pub fn build_kmeans_codebook(
    matrix: &RatingMatrix,
    features: &UserFeatureMatrix,
    config: &KmeansConfig,
    seed: u64,
) -> Result<CodeBook> {
    if config.branching < 2 {
        return Err(Error::invalid("branching must be at least 2"));
    }
    if config.iterations == 0 {
        return Err(Error::invalid("iterations must be at least 1"));
    }
    if config.depth_limit == 0 {
        return Err(Error::invalid("depth_limit must be at least 1"));
    }
    check_features(matrix, features)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let last_depth = config.depth_limit - 1;
    // (members, depth, parent)
    let mut pending: std::collections::VecDeque<(Vec<usize>, usize, Option<NodeId>)> =
        std::collections::VecDeque::from([((0..matrix.num_users()).collect(), 0, None)]);
    let mut nodes: Vec<CodeNode> = Vec::new();
    while let Some((members, depth, parent)) = pending.pop_front() {
        let id = nodes.len();
        if let Some(p) = parent {
            nodes[p].children.push(id);
        }
        let mbr = Mbr::bounding(members.iter().map(|&u| features.row(u)))
            .expect("clusters are non-empty");
        nodes.push(CodeNode {
            id,
            tree: 0,
            depth,
            mbr,
            parent,
            children: Vec::new(),
            entries: if depth == last_depth {
                members.clone()
            } else {
                Vec::new()
            },
            count: members.len(),
            payload: Payload::Ratings(AggregatedRatings::from_users(matrix, &members)),
        });
        if depth == last_depth {
            continue;
        }
        let groups = split_cluster(features, &members, config, &mut rng, id, &mut warnings)?;
        for g in groups {
            pending.push_back((g, depth + 1, Some(id)));
        }
    }
    for w in &warnings {
        warn!("{w}");
    }
    CodeBook::from_parts(CodeBookParts {
        kind: CoderKind::KmeansDivisive,
        config: CoderConfig::Kmeans(config.clone()),
        seed,
        dim: features.dim(),
        roots: vec![0],
        nodes,
        features: Some(features.clone()),
        ratings: Some(matrix.clone()),
        warnings,
    })
}

fn split_cluster(
    features: &UserFeatureMatrix,
    members: &[usize],
    config: &KmeansConfig,
    rng: &mut ChaCha8Rng,
    id: NodeId,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vec<usize>>> {
    if members.len() == 1 {
        return Ok(vec![members.to_vec()]);
    }
    if config.branching > members.len() {
        warnings.push(format!(
            "cluster {id} has {} users, fewer than k = {}; not split",
            members.len(),
            config.branching
        ));
        return Ok(vec![members.to_vec()]);
    }
    let points: Vec<&[f64]> = members.iter().map(|&u| features.row(u)).collect();
    let fit = kmeans::kmeans(&points, config.branching, config.iterations, rng)?;
    let groups: Vec<Vec<usize>> = fit
        .clusters()
        .into_iter()
        .map(|g| g.into_iter().map(|i| members[i]).collect())
        .collect();
    if groups.len() < config.branching {
        warnings.push(format!(
            "cluster {id}: {} of {} k-means clusters were empty and dropped",
            config.branching - groups.len(),
            config.branching
        ));
    }
    Ok(groups)
}
