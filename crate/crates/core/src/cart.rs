//! Binary axis-aligned regression trees shared by the forest and the boosted
//! ensemble.
//!
//! Split search is exact and greedy. Every feature column is presorted once
//! per tree and the sorted position lists are partitioned stably as the tree
//! grows, so each level costs `O(rows * features)`. Thresholds sit at the
//! midpoint between consecutive distinct values and rows go left when
//! `value <= threshold`.

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng::StreamRng;

/// Relative margin a candidate gain must clear to replace the incumbent.
/// Candidates inside the margin count as ties, which go to the lower feature
/// index and then the lower threshold.
pub const GAIN_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum CartError {
    #[error("row width {got} does not match tree width {expected}")]
    WidthMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitCriterion {
    /// Mean-squared-error reduction.
    Variance,
    /// Second-order gain from gradient/hessian sums.
    Newton { lambda: f64, gamma: f64 },
}

impl SplitCriterion {
    pub fn newton_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, lambda: f64, gamma: f64) -> f64 {
        let g = g_left + g_right;
        let h = h_left + h_right;
        0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda)
            - g * g / (h + lambda))
            - gamma
    }

    pub fn newton_leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
        -g / (h + lambda)
    }
}

/// How many candidate features each node draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    Sqrt,
    Log2,
    All,
    Fraction(f64),
}

impl FeatureSubsample {
    pub fn count(&self, n_features: usize) -> usize {
        if n_features == 0 {
            return 0;
        }
        let k = match *self {
            FeatureSubsample::Sqrt => (n_features as f64).sqrt().floor() as usize,
            FeatureSubsample::Log2 => (n_features as f64).log2().floor() as usize,
            FeatureSubsample::All => n_features,
            FeatureSubsample::Fraction(p) => (p * n_features as f64).round() as usize,
        };
        k.clamp(1, n_features)
    }
}

/// Accepts an integer, `null` or the string `"none"` (TOML has no null).
pub fn deserialize_depth<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Depth {
        N(usize),
        S(String),
    }
    match Option::<Depth>::deserialize(d)? {
        None => Ok(None),
        Some(Depth::N(n)) => Ok(Some(n)),
        Some(Depth::S(s)) if s.eq_ignore_ascii_case("none") => Ok(None),
        Some(Depth::S(s)) => Err(serde::de::Error::custom(format!("invalid max_depth {s:?}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until another stopping rule fires.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: FeatureSubsample,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_split: 2, min_samples_leaf: 1, max_features: FeatureSubsample::All }
    }
}

/// Per-row training signal, indexed by matrix row.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Values(&'a [f64]),
    GradHess { grad: &'a [f64], hess: &'a [f64] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Internal {
        feature: usize,
        threshold: f64,
        gain: f64,
        n_samples: usize,
        left: usize,
        right: usize,
    },
}

impl TreeNode {
    pub fn n_samples(&self) -> usize {
        match *self {
            TreeNode::Leaf { n_samples, .. } | TreeNode::Internal { n_samples, .. } => n_samples,
        }
    }
}

/// Nodes are stored in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn leaf(value: f64, n_samples: usize, n_features: usize) -> Self {
        Self { n_features, nodes: vec![TreeNode::Leaf { value, n_samples }] }
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64, CartError> {
        if row.len() != self.n_features {
            return Err(CartError::WidthMismatch { expected: self.n_features, got: row.len() });
        }
        Ok(self.predict_unchecked(row))
    }

    #[inline]
    pub fn predict_unchecked(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value, .. } => value,
            TreeNode::Internal { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { .. } => return at,
                TreeNode::Internal { feature, threshold, left, right, .. } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, TreeNode::Leaf { .. })).count()
    }

    /// `(n_node / n_root) * gain` summed per split feature.
    pub fn weighted_gain_by_feature(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        let total = self.nodes[0].n_samples().max(1) as f64;
        for node in &self.nodes {
            if let TreeNode::Internal { feature, gain, n_samples, .. } = *node {
                out[feature] += n_samples as f64 / total * gain;
            }
        }
        out
    }

    /// Raw gain summed per split feature.
    pub fn gain_by_feature(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let TreeNode::Internal { feature, gain, .. } = *node {
                out[feature] += gain;
            }
        }
        out
    }
}

/// Signal of one training position.
#[derive(Clone, Copy)]
enum Signal {
    Value(f64),
    GradHess(f64, f64),
}

/// Training rows gathered by position: one contiguous column per used
/// feature plus the target signal.
struct SampleView {
    cols: Vec<Vec<f64>>,
    a: Vec<f64>,
    hess: Option<Vec<f64>>,
    targets_are_values: bool,
}

impl SampleView {
    fn new(x: &Matrix, rows: &[usize], targets: Targets<'_>, features: &[usize]) -> Self {
        let mut cols = vec![Vec::new(); x.n_cols()];
        for &f in features {
            cols[f] = rows.iter().map(|&r| x.get(r, f)).collect();
        }
        let (a, hess, targets_are_values) = match targets {
            Targets::Values(y) => (rows.iter().map(|&r| y[r]).collect(), None, true),
            Targets::GradHess { grad, hess } => {
                (rows.iter().map(|&r| grad[r]).collect(), Some(rows.iter().map(|&r| hess[r]).collect()), false)
            }
        };
        Self { cols, a, hess, targets_are_values }
    }

    #[inline]
    fn x(&self, pos: u32, feature: usize) -> f64 {
        self.cols[feature][pos as usize]
    }

    #[inline]
    fn signal(&self, pos: u32) -> Signal {
        let p = pos as usize;
        match &self.hess {
            None => Signal::Value(self.a[p]),
            Some(h) => Signal::GradHess(self.a[p], h[p]),
        }
    }

    /// Sum over positions in the order given.
    fn leaf_value(&self, positions: &[u32], criterion: SplitCriterion) -> f64 {
        match criterion {
            SplitCriterion::Variance => {
                let mut sum = 0.0;
                for &p in positions {
                    if let Signal::Value(v) = self.signal(p) {
                        sum += v;
                    }
                }
                sum / positions.len() as f64
            }
            SplitCriterion::Newton { lambda, .. } => {
                let (mut g, mut h) = (0.0, 0.0);
                for &p in positions {
                    if let Signal::GradHess(gi, hi) = self.signal(p) {
                        g += gi;
                        h += hi;
                    }
                }
                SplitCriterion::newton_leaf_weight(g, h, lambda)
            }
        }
    }

    fn is_constant(&self, positions: &[u32]) -> bool {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in positions {
            if let Signal::Value(v) = self.signal(p) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        lo == hi
    }
}

/// Midpoint threshold; falls back to the lower value when the midpoint
/// rounds up onto the upper one.
#[inline]
pub fn midpoint_threshold(lower: f64, upper: f64) -> f64 {
    let mid = lower + (upper - lower) / 2.0;
    if mid >= upper {
        lower
    } else {
        mid
    }
}

#[inline]
fn improves(candidate: f64, best: Option<f64>) -> bool {
    match best {
        None => candidate > 0.0,
        Some(b) => candidate > b + GAIN_TIE_TOLERANCE * b.abs(),
    }
}

/// Scan one feature whose node positions are sorted by value.
fn scan_feature(
    view: &SampleView,
    feature: usize,
    order: &[u32],
    criterion: SplitCriterion,
    min_samples_leaf: usize,
    node_mean: f64,
    best: &mut Option<Split>,
) {
    let n = order.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return;
    }
    // Totals over the node.
    let (mut total_a, mut total_b) = (0.0, 0.0);
    for &p in order {
        match view.signal(p) {
            Signal::Value(v) => total_a += v - node_mean,
            Signal::GradHess(g, h) => {
                total_a += g;
                total_b += h;
            }
        }
    }
    let (mut left_a, mut left_b) = (0.0, 0.0);
    for i in 0..n - 1 {
        match view.signal(order[i]) {
            Signal::Value(v) => left_a += v - node_mean,
            Signal::GradHess(g, h) => {
                left_a += g;
                left_b += h;
            }
        }
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < min_leaf {
            continue;
        }
        if n_right < min_leaf {
            break;
        }
        let lower = view.x(order[i], feature);
        let upper = view.x(order[i + 1], feature);
        if upper <= lower {
            continue;
        }
        let gain = match criterion {
            SplitCriterion::Variance => {
                let right_a = total_a - left_a;
                (left_a * left_a / n_left as f64 + right_a * right_a / n_right as f64
                    - total_a * total_a / n as f64)
                    / n as f64
            }
            SplitCriterion::Newton { lambda, gamma } => SplitCriterion::newton_gain(
                left_a,
                left_b,
                total_a - left_a,
                total_b - left_b,
                lambda,
                gamma,
            ),
        };
        if improves(gain, best.map(|s| s.gain)) {
            *best = Some(Split { feature, threshold: midpoint_threshold(lower, upper), gain });
        }
    }
}

fn node_mean(view: &SampleView, positions: &[u32]) -> f64 {
    match view.targets_are_values {
        true => {
            let mut s = 0.0;
            for &p in positions {
                if let Signal::Value(v) = view.signal(p) {
                    s += v;
                }
            }
            s / positions.len() as f64
        }
        false => 0.0,
    }
}

fn sort_positions(view: &SampleView, positions: &[u32], feature: usize) -> Vec<u32> {
    let mut order = positions.to_vec();
    order.sort_by(|&a, &b| view.x(a, feature).total_cmp(&view.x(b, feature)).then(a.cmp(&b)));
    order
}

/// Best split of `rows` over `features`, or `None` when no candidate has
/// positive gain with both children holding at least `min_samples_leaf`
/// rows.
pub fn best_split(
    x: &Matrix,
    rows: &[usize],
    targets: Targets<'_>,
    features: &[usize],
    criterion: SplitCriterion,
    min_samples_leaf: usize,
) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let mut features = features.to_vec();
    features.sort_unstable();
    features.dedup();
    let view = SampleView::new(x, rows, targets, &features);
    let positions: Vec<u32> = (0..rows.len() as u32).collect();
    if matches!(criterion, SplitCriterion::Variance) && view.is_constant(&positions) {
        return None;
    }
    let mean = node_mean(&view, &positions);
    let mut best = None;
    for &f in &features {
        let order = sort_positions(&view, &positions, f);
        scan_feature(&view, f, &order, criterion, min_samples_leaf, mean, &mut best);
    }
    best
}

struct Work {
    parent: Option<(usize, bool)>,
    depth: usize,
    positions: Vec<u32>,
    /// Parallel to the allowed feature list.
    sorted: Vec<Vec<u32>>,
}

/// Grow a tree on `rows` (indices into `x`, repeats allowed for bootstrap
/// samples) using only the features in `allowed`.
///
/// `rng` drives per-node feature subsampling and is consulted only when
/// `params.max_features` selects fewer than `allowed.len()` features.
pub fn fit_tree(
    x: &Matrix,
    rows: &[usize],
    targets: Targets<'_>,
    allowed: &[usize],
    params: &TreeParams,
    criterion: SplitCriterion,
    rng: &mut StreamRng,
) -> RegressionTree {
    let n_features = x.n_cols();
    if rows.is_empty() {
        return RegressionTree::leaf(0.0, 0, n_features);
    }
    let mut allowed = allowed.to_vec();
    allowed.sort_unstable();
    allowed.dedup();
    let view = SampleView::new(x, rows, targets, &allowed);
    let root_positions: Vec<u32> = (0..rows.len() as u32).collect();
    let sorted = allowed.iter().map(|&f| sort_positions(&view, &root_positions, f)).collect();

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut goes_left = vec![false; rows.len()];
    let mut stack = vec![Work { parent: None, depth: 0, positions: root_positions, sorted }];
    let k = params.max_features.count(allowed.len());

    while let Some(work) = stack.pop() {
        let id = nodes.len();
        if let Some((parent, is_left)) = work.parent {
            if let TreeNode::Internal { left, right, .. } = &mut nodes[parent] {
                if is_left {
                    *left = id;
                } else {
                    *right = id;
                }
            }
        }
        let n = work.positions.len();
        let leaf = TreeNode::Leaf { value: view.leaf_value(&work.positions, criterion), n_samples: n };

        let stop = params.max_depth.is_some_and(|d| work.depth >= d)
            || n < params.min_samples_split.max(2)
            || n < 2 * params.min_samples_leaf.max(1)
            || allowed.is_empty()
            || (matches!(criterion, SplitCriterion::Variance) && view.is_constant(&work.positions));
        if stop {
            nodes.push(leaf);
            continue;
        }

        let candidates: Vec<usize> = if k < allowed.len() {
            let mut picked = index::sample(rng, allowed.len(), k).into_vec();
            picked.sort_unstable();
            picked
        } else {
            (0..allowed.len()).collect()
        };

        let mean = node_mean(&view, &work.positions);
        let mut best: Option<Split> = None;
        let mut best_slot = 0;
        for &slot in &candidates {
            let before = best;
            scan_feature(&view, allowed[slot], &work.sorted[slot], criterion, params.min_samples_leaf, mean, &mut best);
            if best != before {
                best_slot = slot;
            }
        }
        let Some(split) = best else {
            nodes.push(leaf);
            continue;
        };
        debug_assert_eq!(allowed[best_slot], split.feature);

        for &p in &work.positions {
            goes_left[p as usize] = view.x(p, split.feature) <= split.threshold;
        }
        let (left_pos, right_pos): (Vec<u32>, Vec<u32>) =
            work.positions.iter().partition(|&&p| goes_left[p as usize]);
        let mut left_sorted = Vec::with_capacity(work.sorted.len());
        let mut right_sorted = Vec::with_capacity(work.sorted.len());
        for order in work.sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = order.into_iter().partition(|&p| goes_left[p as usize]);
            left_sorted.push(l);
            right_sorted.push(r);
        }

        nodes.push(TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            gain: split.gain,
            n_samples: n,
            left: usize::MAX,
            right: usize::MAX,
        });
        stack.push(Work { parent: Some((id, false)), depth: work.depth + 1, positions: right_pos, sorted: right_sorted });
        stack.push(Work { parent: Some((id, true)), depth: work.depth + 1, positions: left_pos, sorted: left_sorted });
    }

    RegressionTree { n_features, nodes }
}
