//! Bulk loading by sort-tile-recursive partitioning.
//!
//! The tree shape (node counts per level) is planned bottom-up so that every
//! node respects the fan-out limit and all leaves share one depth. Points are
//! then partitioned top-down: at each node the children's point budgets are
//! laid out as slabs along the widest axis, then recursively along the
//! remaining axes. Sibling rectangles therefore have disjoint interiors.

use super::mbr::Mbr;

/// Planned subtree: the number of points it holds and its child plans.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plan {
    pub size: usize,
    pub children: Vec<Plan>,
}

/// Sizes of `parts` consecutive groups of `n` items; the first `n % parts`
/// groups get one extra item.
pub(crate) fn near_even(n: usize, parts: usize) -> Vec<usize> {
    let base = n / parts;
    let extra = n % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

/// Smallest height `h` with `fanout^h >= leaves`.
pub(crate) fn natural_height(leaves: usize, fanout: usize) -> usize {
    let mut h = 0;
    let mut cap = 1usize;
    while cap < leaves {
        cap = cap.saturating_mul(fanout);
        h += 1;
    }
    h
}

/// Node count for the next level up when `levels_left` levels remain above
/// `n` nodes. Spreads the reduction geometrically across the remaining
/// levels while never exceeding `fanout` children per node.
fn parent_count(n: usize, levels_left: usize, fanout: usize) -> usize {
    if levels_left <= 1 {
        return 1;
    }
    let by_fanout = n.div_ceil(fanout);
    let geometric =
        ((n as f64).powf((levels_left - 1) as f64 / levels_left as f64) - 1e-9).ceil() as usize;
    by_fanout.max(geometric).clamp(1, n)
}

/// Plans a tree of exactly `height` levels above the leaves over `n` points.
/// Requires `fanout^height >= ceil(n / leaf_entries)`.
pub(crate) fn plan(n: usize, leaf_entries: usize, fanout: usize, height: usize) -> Plan {
    let leaves = n.div_ceil(leaf_entries).max(1);
    debug_assert!(natural_height(leaves, fanout) <= height);
    let mut level: Vec<Plan> = near_even(n, leaves)
        .into_iter()
        .map(|size| Plan {
            size,
            children: Vec::new(),
        })
        .collect();
    for left in (1..=height).rev() {
        let parents = parent_count(level.len(), left, fanout);
        let groups = near_even(level.len(), parents);
        let mut rest = level.into_iter();
        level = groups
            .into_iter()
            .map(|take| {
                let children: Vec<Plan> = rest.by_ref().take(take).collect();
                Plan {
                    size: children.iter().map(|c| c.size).sum(),
                    children,
                }
            })
            .collect();
    }
    debug_assert_eq!(level.len(), 1);
    level.pop().expect("plan has a root")
}

/// Reorders `items` so that consecutive runs of `sizes` form spatial tiles.
pub(crate) fn tile(items: &mut [usize], sizes: &[usize], coords: &[&[f64]], dims: &[usize]) {
    if sizes.len() <= 1 || items.len() <= 1 || dims.is_empty() {
        return;
    }
    let axis = widest_axis(items, coords, dims);
    items.sort_by(|&a, &b| coords[a][axis].total_cmp(&coords[b][axis]).then(a.cmp(&b)));
    if dims.len() == 1 {
        return;
    }
    let slabs = (((sizes.len() as f64).powf(1.0 / dims.len() as f64) - 1e-9).ceil() as usize)
        .clamp(1, sizes.len());
    let rest: Vec<usize> = dims.iter().copied().filter(|&d| d != axis).collect();
    let mut group = 0;
    let mut offset = 0;
    for count in near_even(sizes.len(), slabs) {
        let slab_sizes = &sizes[group..group + count];
        let len: usize = slab_sizes.iter().sum();
        tile(&mut items[offset..offset + len], slab_sizes, coords, &rest);
        group += count;
        offset += len;
    }
}

/// Axis with the largest coordinate spread; lowest axis index on ties.
fn widest_axis(items: &[usize], coords: &[&[f64]], dims: &[usize]) -> usize {
    let mut best = dims[0];
    let mut best_spread = f64::NEG_INFINITY;
    for &d in dims {
        let (lo, hi) = items
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(coords[i][d]), hi.max(coords[i][d]))
            });
        if hi - lo > best_spread {
            best = d;
            best_spread = hi - lo;
        }
    }
    best
}

/// A realised node before ids are assigned.
#[derive(Debug)]
pub(crate) struct ProtoNode {
    pub depth: usize,
    pub mbr: Mbr,
    pub children: Vec<usize>,
    pub entries: Vec<usize>,
}

/// Partitions `items` according to `plan`, appending nodes in pre-order.
/// Returns the index of the subtree's root within `out`.
pub(crate) fn realize(
    plan: &Plan,
    items: &mut [usize],
    coords: &[&[f64]],
    depth: usize,
    out: &mut Vec<ProtoNode>,
) -> usize {
    debug_assert_eq!(plan.size, items.len());
    let at = out.len();
    out.push(ProtoNode {
        depth,
        mbr: Mbr::bounding(items.iter().map(|&i| coords[i])).expect("planned nodes are non-empty"),
        children: Vec::new(),
        entries: Vec::new(),
    });
    if plan.children.is_empty() {
        out[at].entries = items.to_vec();
        return at;
    }
    let sizes: Vec<usize> = plan.children.iter().map(|c| c.size).collect();
    let dims: Vec<usize> = (0..coords[items[0]].len()).collect();
    tile(items, &sizes, coords, &dims);
    let mut offset = 0;
    let mut children = Vec::with_capacity(sizes.len());
    for (child, &len) in plan.children.iter().zip(&sizes) {
        children.push(realize(
            child,
            &mut items[offset..offset + len],
            coords,
            depth + 1,
            out,
        ));
        offset += len;
    }
    out[at].children = children;
    at
}
