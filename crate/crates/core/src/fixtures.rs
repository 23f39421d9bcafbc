//! Small hand-built inputs shared by unit tests.

use crate::cf::UserFeatureMatrix;
use crate::coding::{
    build_cf_codebook, CodeBook, CodeBookParts, CodeNode, CoderConfig, CoderKind, Mbr, NodeId,
    Payload, RtreeConfig,
};
use crate::dataset::{Label, RatingMatrix};

/// 12 users x 5 items, 19 ratings.
pub fn twelve_user_ratings() -> RatingMatrix {
    let one_based = [
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
    RatingMatrix::from_triples(12, 5, one_based.iter().map(|&(u, i, r)| (u - 1, i - 1, r)))
        .unwrap()
        .with_scale(1.0, 5.0)
}

/// Two-dimensional user vectors matching the ratings above.
pub fn twelve_user_features() -> UserFeatureMatrix {
    let rows = [
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
    UserFeatureMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

/// Three-entry R-tree over the twelve users: four leaves of three users
/// under two depth-1 nodes.
pub fn twelve_user_book() -> CodeBook {
    build_cf_codebook(
        &twelve_user_ratings(),
        &twelve_user_features(),
        &RtreeConfig::with_max_entries(3),
        0,
    )
    .unwrap()
}

/// The node whose subtree holds exactly `users` (0-based).
pub fn node_holding(book: &CodeBook, users: &[usize]) -> NodeId {
    book.nodes()
        .iter()
        .find(|n| book.members(n.id) == users)
        .unwrap_or_else(|| panic!("no node holds {users:?}"))
        .id
}

fn boxed(lo: [f64; 2], hi: [f64; 2]) -> Mbr {
    Mbr::new(lo.to_vec(), hi.to_vec()).unwrap()
}

/// Dual-tree book with the layout of the refinement example, numbered
/// N1..N23 as ids 0..22. Positive tree: N11 -> {N8, N9, N10},
/// N8 -> {N1, N2}, N9 -> {N3, N4, N5}, N10 -> {N6, N7}. Negative tree:
/// N23 -> {N20, N21, N22}, N20 -> {N12, N13}, N21 -> {N14, N15, N16},
/// N22 -> {N17, N18, N19}. All boxes lie in y in [0, 1] and are spread
/// along x so that for a query at the origin N9, N10, N21 are nearest,
/// N8 overlaps the threshold ball, and N20, N22 lie outside it.
pub fn refinement_book() -> CodeBook {
    let x = |lo: f64, hi: f64| boxed([lo, 0.0], [hi, 1.0]);
    // (children, x-range) per depth-1 node; leaves split the range evenly.
    let pos: [(&[usize], (f64, f64)); 3] = [
        (&[0, 1], (3.5, 10.0)),
        (&[2, 3, 4], (1.0, 2.0)),
        (&[5, 6], (2.0, 3.0)),
    ];
    let neg: [(&[usize], (f64, f64)); 3] = [
        (&[11, 12], (6.0, 8.0)),
        (&[13, 14, 15], (3.0, 4.0)),
        (&[16, 17, 18], (-9.0, -7.0)),
    ];
    let mut nodes: Vec<Option<CodeNode>> = vec![None; 23];
    let mut add_tree = |tree: usize,
                        label: Label,
                        groups: &[(&[usize], (f64, f64)); 3],
                        first_mid: usize,
                        root: usize| {
        let payload = Payload::Class { label };
        let mut root_lo = f64::INFINITY;
        let mut root_hi = f64::NEG_INFINITY;
        let mut total = 0;
        for (g, (leaves, (lo, hi))) in groups.iter().enumerate() {
            let mid = first_mid + g;
            let step = (hi - lo) / leaves.len() as f64;
            for (j, &leaf) in leaves.iter().enumerate() {
                let a = lo + step * j as f64;
                nodes[leaf] = Some(CodeNode {
                    id: leaf,
                    tree,
                    depth: 2,
                    mbr: x(a, a + step),
                    parent: Some(mid),
                    children: vec![],
                    entries: vec![leaf],
                    count: 1,
                    payload: payload.clone(),
                });
            }
            nodes[mid] = Some(CodeNode {
                id: mid,
                tree,
                depth: 1,
                mbr: x(*lo, *hi),
                parent: Some(root),
                children: leaves.to_vec(),
                entries: vec![],
                count: leaves.len(),
                payload: payload.clone(),
            });
            root_lo = root_lo.min(*lo);
            root_hi = root_hi.max(*hi);
            total += leaves.len();
        }
        nodes[root] = Some(CodeNode {
            id: root,
            tree,
            depth: 0,
            mbr: x(root_lo, root_hi),
            parent: None,
            children: (first_mid..first_mid + 3).collect(),
            entries: vec![],
            count: total,
            payload,
        });
    };
    add_tree(0, Label::Positive, &pos, 7, 10);
    add_tree(1, Label::Negative, &neg, 19, 22);
    CodeBook::from_parts(CodeBookParts {
        kind: CoderKind::RtreeDual,
        config: CoderConfig::Rtree(RtreeConfig::default()),
        seed: 0,
        dim: 2,
        roots: vec![10, 22],
        nodes: nodes.into_iter().map(Option::unwrap).collect(),
        features: None,
        ratings: None,
        warnings: vec![],
    })
    .unwrap()
}

/// A single-class pair of trees whose per-depth node counts (summed over
/// both trees) are `lengths`. Every box is the unit square, so the
/// geometry is meaningless; only the shape matters.
pub fn layered_book(lengths: &[usize]) -> CodeBook {
    let mut nodes: Vec<CodeNode> = Vec::new();
    let mut roots = Vec::new();
    for (tree, label) in [(0, Label::Positive), (1, Label::Negative)] {
        let per_depth: Vec<usize> = lengths.iter().map(|&l| (l + 1 - tree) / 2).collect();
        let root = nodes.len();
        roots.push(root);
        nodes.push(CodeNode {
            id: root,
            tree,
            depth: 0,
            mbr: boxed([0.0, 0.0], [1.0, 1.0]),
            parent: None,
            children: vec![],
            entries: vec![],
            count: 0,
            payload: Payload::Class { label },
        });
        let mut level = vec![root];
        for (d, &count) in per_depth.iter().enumerate() {
            let first = nodes.len();
            for j in 0..count {
                // near-even assignment of children to the previous level
                let parent = level[j * level.len() / count];
                let id = first + j;
                nodes.push(CodeNode {
                    id,
                    tree,
                    depth: d + 1,
                    mbr: boxed([0.0, 0.0], [1.0, 1.0]),
                    parent: Some(parent),
                    children: vec![],
                    entries: vec![],
                    count: 0,
                    payload: Payload::Class { label },
                });
                nodes[parent].children.push(id);
            }
            level = (first..first + count).collect();
        }
        for &leaf in &level {
            nodes[leaf].entries = vec![leaf];
        }
    }
    // counts bottom-up: children always have larger ids than parents
    for id in (0..nodes.len()).rev() {
        nodes[id].count = if nodes[id].children.is_empty() {
            nodes[id].entries.len()
        } else {
            nodes[id].children.iter().map(|&c| nodes[c].count).sum()
        };
    }
    CodeBook::from_parts(CodeBookParts {
        kind: CoderKind::RtreeDual,
        config: CoderConfig::Rtree(RtreeConfig::default()),
        seed: 0,
        dim: 2,
        roots,
        nodes,
        features: None,
        ratings: None,
        warnings: vec![],
    })
    .unwrap()
}
