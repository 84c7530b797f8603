//! CART regression trees grown best-first, used as the boosting weak learner.
//!
//! A fitted tree is the piecewise-constant function `f(x) = Σ v_i · 1[x ∈ R_i]`
//! over the axis-aligned leaf regions `R_i`. Internal nodes send `x[f] <= t`
//! left and `x[f] > t` right.

use std::fmt::Write as _;

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::kv::{fmt_f64, parse_f64};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        value: f64,
        region_id: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeConfig {
    pub max_leaves: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_leaves: 8,
            max_depth: 4,
            min_samples_leaf: 5,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_leaves == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return Err(Error::InvalidConfig(
                "max_leaves, max_depth and min_samples_leaf must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Half-open interval `(lower, upper]` per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRegion {
    pub region_id: usize,
    pub value: f64,
    pub bounds: Vec<(f64, f64)>,
}

impl LeafRegion {
    pub fn contains(&self, row: &[f64]) -> bool {
        self.bounds
            .iter()
            .zip(row)
            .all(|((lo, hi), x)| *x > *lo && *x <= *hi)
    }
}

impl TreeNode {
    pub fn leaf(value: f64) -> Self {
        TreeNode::Leaf { value, region_id: 0 }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Smallest row width the tree can be evaluated on.
    pub fn required_width(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal {
                feature_index,
                left,
                right,
                ..
            } => (feature_index + 1)
                .max(left.required_width())
                .max(right.required_width()),
        }
    }

    fn find_leaf(&self, row: &[f64]) -> &TreeNode {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { .. } => return node,
                TreeNode::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature_index] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Leaf value without the width check.
    pub(crate) fn eval(&self, row: &[f64]) -> f64 {
        match self.find_leaf(row) {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    pub fn leaf_id(&self, row: &[f64]) -> usize {
        match self.find_leaf(row) {
            TreeNode::Leaf { region_id, .. } => *region_id,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    /// Numbers leaves 0.. in preorder.
    fn renumber(&mut self, next: &mut usize) {
        match self {
            TreeNode::Leaf { region_id, .. } => {
                *region_id = *next;
                *next += 1;
            }
            TreeNode::Internal { left, right, .. } => {
                left.renumber(next);
                right.renumber(next);
            }
        }
    }

    /// Replaces each leaf value with `f(region_id)`.
    pub fn set_leaf_values(&mut self, f: &impl Fn(usize) -> f64) {
        match self {
            TreeNode::Leaf { value, region_id } => *value = f(*region_id),
            TreeNode::Internal { left, right, .. } => {
                left.set_leaf_values(f);
                right.set_leaf_values(f);
            }
        }
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.collect_regions(&mut Vec::new(), usize::MAX, &mut |r| out.push(r.value));
        out
    }

    /// The leaf regions over `n_features` dimensions, in preorder.
    pub fn leaf_regions(&self, n_features: usize) -> Vec<LeafRegion> {
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n_features];
        let mut out = Vec::new();
        self.collect_regions(&mut bounds, n_features, &mut |r| out.push(r));
        out
    }

    fn collect_regions(&self, bounds: &mut Vec<(f64, f64)>, n_features: usize, sink: &mut dyn FnMut(LeafRegion)) {
        match self {
            TreeNode::Leaf { value, region_id } => sink(LeafRegion {
                region_id: *region_id,
                value: *value,
                bounds: bounds.clone(),
            }),
            TreeNode::Internal {
                feature_index,
                threshold,
                left,
                right,
            } => {
                if *feature_index >= n_features.min(bounds.len()) {
                    left.collect_regions(bounds, n_features, sink);
                    right.collect_regions(bounds, n_features, sink);
                    return;
                }
                let saved = bounds[*feature_index];
                bounds[*feature_index].1 = saved.1.min(*threshold);
                left.collect_regions(bounds, n_features, sink);
                bounds[*feature_index] = (saved.0.max(*threshold), saved.1);
                right.collect_regions(bounds, n_features, sink);
                bounds[*feature_index] = saved;
            }
        }
    }

    /// Preorder encoding, one node per line: `N <feature> <threshold>` or
    /// `L <value>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.write_lines(&mut out);
        out
    }

    fn write_lines(&self, out: &mut String) {
        match self {
            TreeNode::Leaf { value, .. } => {
                let _ = writeln!(out, "L {}", fmt_f64(*value));
            }
            TreeNode::Internal {
                feature_index,
                threshold,
                left,
                right,
            } => {
                let _ = writeln!(out, "N {feature_index} {}", fmt_f64(*threshold));
                left.write_lines(out);
                right.write_lines(out);
            }
        }
    }

    /// Parses one tree from the front of `lines`, consuming its nodes.
    pub fn parse_lines<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut tree = Self::parse_node(lines)?;
        tree.renumber(&mut 0);
        Ok(tree)
    }

    fn parse_node<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse("unexpected end of tree".into()))?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            ["L", v] => Ok(TreeNode::leaf(parse_f64(v)?)),
            ["N", f, t] => {
                let feature_index = f
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad feature index {f:?}")))?;
                let threshold = parse_f64(t)?;
                let left = Box::new(Self::parse_node(lines)?);
                let right = Box::new(Self::parse_node(lines)?);
                Ok(TreeNode::Internal {
                    feature_index,
                    threshold,
                    left,
                    right,
                })
            }
            _ => Err(Error::Parse(format!("bad tree line {line:?}"))),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let tree = Self::parse_lines(&mut lines)?;
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after tree".into()));
        }
        Ok(tree)
    }
}

pub fn predict_tree(tree: &TreeNode, row: &[f64]) -> Result<f64> {
    let width = tree.required_width();
    if row.len() < width {
        return Err(Error::DimensionMismatch {
            expected: width,
            actual: row.len(),
        });
    }
    Ok(tree.eval(row))
}

#[derive(Debug, Clone)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

struct Growing {
    samples: Vec<usize>,
    depth: usize,
    split: Option<Split>,
}

enum Slot {
    Leaf(usize),
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Fits a tree on a row-major `n x n_features` slice.
///
/// Growth is best-first: of all current leaves, the one whose best split
/// removes the most squared error is split next, until `max_leaves` is
/// reached or no leaf has a split with positive gain within the depth and
/// `min_samples_leaf` limits. Thresholds are midpoints between consecutive
/// distinct values. Gain ties go to the lower feature index, then the lower
/// threshold, then the older leaf. Leaves predict their target mean.
pub fn fit_tree_dense(data: &[f64], n_features: usize, targets: &[f64], config: &TreeConfig) -> Result<TreeNode> {
    if data.len() != targets.len() * n_features {
        return Err(Error::DimensionMismatch {
            expected: targets.len() * n_features,
            actual: data.len(),
        });
    }
    let sorted = SortedColumns::new(data, n_features, targets.len());
    fit_tree_sorted(data, n_features, targets, config, &sorted)
}

/// Row indices of a dense matrix ordered by each column (ties by index).
/// Building this once lets repeated fits on the same features, as in
/// boosting, skip the per-node sorts.
#[derive(Debug, Clone)]
pub struct SortedColumns {
    n_rows: usize,
    order: Vec<Vec<usize>>,
}

impl SortedColumns {
    pub fn new(data: &[f64], n_features: usize, n_rows: usize) -> Self {
        let order = (0..n_features)
            .map(|f| {
                let mut idx: Vec<usize> = (0..n_rows).collect();
                idx.sort_by(|&a, &b| data[a * n_features + f].total_cmp(&data[b * n_features + f]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { n_rows, order }
    }
}

/// [`fit_tree_dense`] with precomputed column orders for `data`.
pub fn fit_tree_sorted(
    data: &[f64],
    n_features: usize,
    targets: &[f64],
    config: &TreeConfig,
    sorted: &SortedColumns,
) -> Result<TreeNode> {
    config.validate()?;
    if sorted.order.len() != n_features || sorted.n_rows != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            actual: sorted.n_rows,
        });
    }
    let n = targets.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if data.len() != n * n_features {
        return Err(Error::DimensionMismatch {
            expected: n * n_features,
            actual: data.len(),
        });
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Parse("targets must be finite".into()));
    }
    let search = SplitSearch {
        data,
        n_features,
        targets,
        config,
        sorted,
    };

    let root_samples: Vec<usize> = (0..n).collect();
    let mut leaves = vec![Growing {
        split: search.best_split(&root_samples, 0),
        samples: root_samples,
        depth: 0,
    }];
    let mut slots = vec![Slot::Leaf(0)];
    // leaf index -> slot index
    let mut leaf_slot = vec![0usize];
    let mut n_leaves = 1;

    while n_leaves < config.max_leaves {
        let mut chosen: Option<usize> = None;
        for (i, leaf) in leaves.iter().enumerate() {
            if let Some(s) = &leaf.split {
                let better = match chosen {
                    None => true,
                    Some(c) => s.gain > leaves[c].split.as_ref().map_or(0.0, |b| b.gain),
                };
                if better {
                    chosen = Some(i);
                }
            }
        }
        let Some(i) = chosen else { break };
        let split = leaves[i].split.take().expect("chosen leaf has a split");
        let depth = leaves[i].depth + 1;
        let left_leaf = leaves.len();
        let right_leaf = left_leaf + 1;
        leaves.push(Growing {
            split: search.best_split(&split.left, depth),
            samples: split.left,
            depth,
        });
        leaves.push(Growing {
            split: search.best_split(&split.right, depth),
            samples: split.right,
            depth,
        });
        leaves[i].samples = Vec::new();
        let left_slot = slots.len();
        slots.push(Slot::Leaf(left_leaf));
        slots.push(Slot::Leaf(right_leaf));
        leaf_slot.push(left_slot);
        leaf_slot.push(left_slot + 1);
        slots[leaf_slot[i]] = Slot::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left: left_slot,
            right: left_slot + 1,
        };
        n_leaves += 1;
    }

    let means: Vec<f64> = leaves
        .iter()
        .map(|l| {
            if l.samples.is_empty() {
                0.0
            } else {
                l.samples.iter().map(|&s| targets[s]).sum::<f64>() / l.samples.len() as f64
            }
        })
        .collect();
    let mut tree = assemble(&slots, 0, &means);
    tree.renumber(&mut 0);
    Ok(tree)
}

fn assemble(slots: &[Slot], at: usize, means: &[f64]) -> TreeNode {
    match &slots[at] {
        Slot::Leaf(l) => TreeNode::leaf(means[*l]),
        Slot::Internal {
            feature,
            threshold,
            left,
            right,
        } => TreeNode::Internal {
            feature_index: *feature,
            threshold: *threshold,
            left: Box::new(assemble(slots, *left, means)),
            right: Box::new(assemble(slots, *right, means)),
        },
    }
}

struct SplitSearch<'a> {
    data: &'a [f64],
    n_features: usize,
    targets: &'a [f64],
    config: &'a TreeConfig,
    sorted: &'a SortedColumns,
}

impl SplitSearch<'_> {
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.data[sample * self.n_features + feature]
    }

    fn best_split(&self, samples: &[usize], depth: usize) -> Option<Split> {
        let n = samples.len();
        let min_leaf = self.config.min_samples_leaf;
        if depth >= self.config.max_depth || n < 2 * min_leaf || n < 2 {
            return None;
        }
        let first = self.targets[samples[0]];
        if samples.iter().all(|&s| self.targets[s] == first) {
            return None;
        }
        let total: f64 = samples.iter().map(|&s| self.targets[s]).sum();
        let nf = n as f64;
        let mut best: Option<(usize, usize, f64, f64)> = None; // feature, cut, threshold, gain
        let mut member = vec![false; self.sorted.n_rows];
        for &s in samples {
            member[s] = true;
        }
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for f in 0..self.n_features {
            order.clear();
            order.extend(self.sorted.order[f].iter().copied().filter(|&s| member[s]));
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += self.targets[order[k - 1]];
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let lo = self.value(order[k - 1], f);
                let hi = self.value(order[k], f);
                if lo == hi {
                    continue;
                }
                let (nl, nr) = (k as f64, (n - k) as f64);
                let diff = left_sum / nl - (total - left_sum) / nr;
                // squared error removed by the split
                let gain = nl * nr / nf * diff * diff;
                if gain > 0.0 && best.map_or(true, |b| gain > b.3) {
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((f, k, threshold, gain));
                }
            }
        }
        let (feature, _, threshold, gain) = best?;
        let (left, right): (Vec<usize>, Vec<usize>) =
            samples.iter().partition(|&&s| self.value(s, feature) <= threshold);
        Some(Split {
            feature,
            threshold,
            gain,
            left,
            right,
        })
    }
}

pub fn fit_tree(x: &FeatureMatrix, targets: &[f64], config: &TreeConfig) -> Result<TreeNode> {
    if x.n_rows() != targets.len() {
        return Err(Error::LengthMismatch {
            expected: x.n_rows(),
            actual: targets.len(),
        });
    }
    fit_tree_dense(x.as_slice(), x.n_cols(), targets, config)
}

/// Sum of squared deviations from the mean (two-pass).
pub fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

/// Training SSE of the partition a tree induces on `data`.
pub fn partition_sse(tree: &TreeNode, data: &[f64], n_features: usize, targets: &[f64]) -> f64 {
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); tree.n_leaves()];
    for (i, t) in targets.iter().enumerate() {
        groups[tree.leaf_id(&data[i * n_features..(i + 1) * n_features])].push(*t);
    }
    groups.iter().map(|g| sse(g)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(max_leaves: usize) -> TreeConfig {
        TreeConfig {
            max_leaves,
            max_depth: 8,
            min_samples_leaf: 1,
        }
    }

    #[test]
    fn single_leaf_predicts_mean() {
        let t = fit_tree_dense(&[1.0, 2.0, 3.0], 1, &[1.0, 2.0, 6.0], &cfg(1)).unwrap();
        assert_eq!(t, TreeNode::leaf(3.0));
        assert_eq!(predict_tree(&t, &[100.0]).unwrap(), 3.0);
        assert_eq!(predict_tree(&t, &[]).unwrap(), 3.0);
    }

    #[test]
    fn two_point_split() {
        let t = fit_tree_dense(&[0.0, 1.0], 1, &[0.0, 10.0], &cfg(2)).unwrap();
        match &t {
            TreeNode::Internal { feature_index, threshold, .. } => {
                assert_eq!(*feature_index, 0);
                assert_eq!(*threshold, 0.5);
            }
            _ => panic!("expected a split"),
        }
        assert_eq!(predict_tree(&t, &[0.4]).unwrap(), 0.0);
        assert_eq!(predict_tree(&t, &[0.6]).unwrap(), 10.0);
        assert_eq!(partition_sse(&t, &[0.0, 1.0], 1, &[0.0, 10.0]), 0.0);
    }

    #[test]
    fn constant_targets_do_not_split() {
        let data: Vec<f64> = (0..20).map(f64::from).collect();
        let t = fit_tree_dense(&data, 1, &[0.1; 20], &cfg(8)).unwrap();
        assert_eq!(t.n_leaves(), 1);
    }

    #[test]
    fn respects_limits() {
        let data: Vec<f64> = (0..64).map(f64::from).collect();
        let targets: Vec<f64> = (0..64).map(|i| ((i * 37) % 17) as f64).collect();
        let t = fit_tree_dense(
            &data,
            1,
            &targets,
            &TreeConfig {
                max_leaves: 20,
                max_depth: 3,
                min_samples_leaf: 5,
            },
        )
        .unwrap();
        assert!(t.depth() <= 3);
        assert!(t.n_leaves() <= 8);
        for region in t.leaf_regions(1) {
            let count = data.iter().filter(|x| region.contains(&[**x])).count();
            assert!(count >= 5);
        }
    }

    #[test]
    fn tie_breaks_on_lowest_feature() {
        // both features separate the targets identically
        let data = [0.0, 5.0, 1.0, 6.0];
        let t = fit_tree_dense(&data, 2, &[0.0, 1.0], &cfg(2)).unwrap();
        assert!(matches!(t, TreeNode::Internal { feature_index: 0, .. }));
    }

    #[test]
    fn regions_partition_rows() {
        let data: Vec<f64> = (0..60).map(|i| ((i * 13) % 29) as f64 * 0.5).collect();
        let targets: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
        let t = fit_tree_dense(&data, 2, &targets, &cfg(6)).unwrap();
        let regions = t.leaf_regions(2);
        assert_eq!(regions.len(), t.n_leaves());
        for probe in 0..200 {
            let row = [probe as f64 * 0.08 - 1.0, (probe * 7 % 31) as f64 * 0.5];
            let hits: Vec<usize> = regions.iter().filter(|r| r.contains(&row)).map(|r| r.region_id).collect();
            assert_eq!(hits, vec![t.leaf_id(&row)]);
        }
    }

    #[test]
    fn text_round_trip() {
        let data: Vec<f64> = (0..40).map(|i| ((i * 13) % 29) as f64 * 0.37).collect();
        let targets: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64 / 3.0).collect();
        let t = fit_tree_dense(&data, 2, &targets, &cfg(5)).unwrap();
        assert_eq!(TreeNode::from_text(&t.to_text()).unwrap(), t);
        assert!(TreeNode::from_text("N 0 1.0\nL 1\n").is_err());
    }

    #[test]
    fn errors() {
        assert!(matches!(fit_tree_dense(&[], 1, &[], &cfg(2)), Err(Error::EmptyInput)));
        let t = fit_tree_dense(&[0.0, 0.0, 1.0, 1.0], 2, &[0.0, 10.0], &cfg(2)).unwrap();
        assert!(matches!(predict_tree(&t, &[]), Err(Error::DimensionMismatch { .. })));
    }
}
