//! Multi-output CART regression trees.
//!
//! Splits minimise the mean (over the 10 outputs) of the per-output
//! population variance, weighted by child size. Labels are integer counts,
//! so split scores are compared exactly in integer arithmetic: for a split
//! with left sums `L_j` and right sums `R_j` the weighted child SSE equals
//! `const - (sum L_j^2 / n_L + sum R_j^2 / n_R)`, and the bracket is kept as
//! an exact fraction. Ties therefore resolve purely by the declared order
//! (lowest feature, then lowest threshold) instead of by rounding noise.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{CountVector, Encoding, FeatureMatrix};
use crate::error::{Error, Result};
use crate::metrics::PredictionMatrix;
use crate::OUTPUTS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub min_impurity_decrease: f64,
    /// Features drawn per split. `None` considers every feature.
    pub feature_subset_size: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            min_samples_leaf: 1,
            max_depth: None,
            min_impurity_decrease: 0.0,
            feature_subset_size: None,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be at least 1".into()));
        }
        if !(self.min_impurity_decrease >= 0.0 && self.min_impurity_decrease.is_finite()) {
            return Err(Error::Config(format!(
                "min_impurity_decrease must be finite and >= 0, got {}",
                self.min_impurity_decrease
            )));
        }
        if let Some(s) = self.feature_subset_size {
            if s == 0 || s > n_features {
                return Err(Error::Config(format!(
                    "feature_subset_size {s} outside 1..={n_features}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
        impurity: f64,
    },
    Leaf {
        mean: [f64; OUTPUTS],
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<TreeNode>,
    digits: usize,
    encoding: Encoding,
    n_features: usize,
    leaf_count: usize,
    max_depth_reached: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub leaf_count: usize,
    pub internal_count: usize,
    pub max_depth: usize,
}

/// A chosen split and the drop in node impurity it achieves.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// Mean over outputs of the population variance of each output.
pub fn impurity(targets: &[CountVector]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("impurity of an empty target set".into()));
    }
    let mut m = Moments::default();
    for t in targets {
        m.add(t);
    }
    Ok(m.impurity())
}

#[derive(Clone, Copy, Default)]
struct Moments {
    n: i64,
    sum: [i64; OUTPUTS],
    sumsq: [i64; OUTPUTS],
}

impl Moments {
    #[inline]
    fn add(&mut self, y: &CountVector) {
        self.n += 1;
        for j in 0..OUTPUTS {
            let v = y.0[j] as i64;
            self.sum[j] += v;
            self.sumsq[j] += v * v;
        }
    }

    fn is_pure(&self) -> bool {
        (0..OUTPUTS).all(|j| self.n * self.sumsq[j] == self.sum[j] * self.sum[j])
    }

    fn impurity(&self) -> f64 {
        let n = self.n as f64;
        let spread: i64 = (0..OUTPUTS)
            .map(|j| self.n * self.sumsq[j] - self.sum[j] * self.sum[j])
            .sum();
        spread as f64 / (n * n * OUTPUTS as f64)
    }

    fn sum_norm(&self) -> i128 {
        self.sum.iter().map(|&s| (s as i128) * (s as i128)).sum()
    }

    fn mean(&self) -> [f64; OUTPUTS] {
        self.sum.map(|s| s as f64 / self.n as f64)
    }
}

/// Split candidate; `num / den = sum L^2 / n_L + sum R^2 / n_R`, larger is better.
#[derive(Clone, Copy, Debug)]
struct Candidate {
    feature: usize,
    threshold: f64,
    n_left: usize,
    num: i128,
    den: i128,
}

impl Candidate {
    #[inline]
    fn beats(&self, other: &Candidate) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Grower<'a> {
    config: &'a TreeConfig,
    /// Feature values by position, one column per feature.
    columns: Vec<Vec<f64>>,
    labels: Vec<CountVector>,
    /// Per feature, positions ordered by (value, position). Every node owns
    /// the same `[start, end)` window in each of these.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
}

impl<'a> Grower<'a> {
    fn new(x: &FeatureMatrix, y: &[CountVector], rows: &[usize], config: &'a TreeConfig) -> Self {
        let k = x.cols();
        let columns: Vec<Vec<f64>> = (0..k)
            .map(|f| rows.iter().map(|&r| x.get(r, f)).collect())
            .collect();
        let labels = rows.iter().map(|&r| y[r]).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..rows.len() as u32).collect();
                idx.sort_unstable_by(|&a, &b| {
                    col[a as usize]
                        .total_cmp(&col[b as usize])
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self {
            config,
            columns,
            labels,
            order,
            goes_left: vec![false; rows.len()],
            scratch: Vec::with_capacity(rows.len()),
        }
    }

    fn moments(&self, start: usize, end: usize) -> Moments {
        let mut m = Moments::default();
        for &p in &self.order[0][start..end] {
            m.add(&self.labels[p as usize]);
        }
        m
    }

    fn scan_feature(&self, feature: usize, start: usize, end: usize, total: &Moments) -> Option<Candidate> {
        let seg = &self.order[feature][start..end];
        let col = &self.columns[feature];
        let m = seg.len();
        let min_leaf = self.config.min_samples_leaf;
        let mut left = [0i64; OUTPUTS];
        let mut best: Option<Candidate> = None;

        for i in 0..m.saturating_sub(1) {
            let p = seg[i] as usize;
            for (acc, &v) in left.iter_mut().zip(&self.labels[p].0) {
                *acc += v as i64;
            }
            let n_left = i + 1;
            let n_right = m - n_left;
            if n_right < min_leaf {
                break;
            }
            if n_left < min_leaf {
                continue;
            }
            let v = col[p];
            let next = col[seg[i + 1] as usize];
            if v == next {
                continue;
            }
            let mut a: i128 = 0;
            let mut b: i128 = 0;
            for j in 0..OUTPUTS {
                let l = left[j] as i128;
                let r = (total.sum[j] - left[j]) as i128;
                a += l * l;
                b += r * r;
            }
            let cand = Candidate {
                feature,
                threshold: midpoint(v, next),
                n_left,
                num: a * n_right as i128 + b * n_left as i128,
                den: (n_left * n_right) as i128,
            };
            if best.as_ref().is_none_or(|b| cand.beats(b)) {
                best = Some(cand);
            }
        }
        best
    }

    /// Best admissible split over `features` (scanned in the given order,
    /// earlier wins ties).
    fn search(&self, features: &[usize], start: usize, end: usize, total: &Moments) -> Option<Candidate> {
        let mut best: Option<Candidate> = None;
        for &f in features {
            if let Some(c) = self.scan_feature(f, start, end, total) {
                if best.as_ref().is_none_or(|b| c.beats(b)) {
                    best = Some(c);
                }
            }
        }
        let best = best?;
        // Strictly positive decrease, decided exactly.
        let n = total.n as i128;
        let parent = total.sum_norm();
        let gain_num = best.num * n - parent * best.den;
        if gain_num <= 0 {
            return None;
        }
        if self.config.min_impurity_decrease > 0.0
            && decrease(gain_num, best.den, total.n) < self.config.min_impurity_decrease
        {
            return None;
        }
        Some(best)
    }

    fn choose<R: rand::Rng + ?Sized>(
        &self,
        start: usize,
        end: usize,
        total: &Moments,
        rng: &mut R,
    ) -> Option<Candidate> {
        let k = self.columns.len();
        match self.config.feature_subset_size {
            Some(s) if s < k => {
                let mut perm: Vec<usize> = (0..k).collect();
                perm.shuffle(rng);
                let mut first = perm[..s].to_vec();
                first.sort_unstable();
                // Keep drawing features while the subset offers no valid split.
                self.search(&first, start, end, total).or_else(|| {
                    perm[s..]
                        .iter()
                        .find_map(|&f| self.search(&[f], start, end, total))
                })
            }
            _ => {
                let all: Vec<usize> = (0..k).collect();
                self.search(&all, start, end, total)
            }
        }
    }

    /// Reorders every feature window so the left child's positions come first.
    fn partition(&mut self, cand: &Candidate, start: usize, end: usize) {
        for (i, &p) in self.order[cand.feature][start..end].iter().enumerate() {
            self.goes_left[p as usize] = i < cand.n_left;
        }
        for f in 0..self.order.len() {
            if f == cand.feature {
                continue;
            }
            let window = &mut self.order[f][start..end];
            self.scratch.clear();
            self.scratch
                .extend(window.iter().filter(|&&p| self.goes_left[p as usize]));
            self.scratch
                .extend(window.iter().filter(|&&p| !self.goes_left[p as usize]));
            window.copy_from_slice(&self.scratch);
        }
    }

    fn grow<R: rand::Rng + ?Sized>(mut self, rng: &mut R) -> (Vec<TreeNode>, usize, usize) {
        let placeholder = TreeNode::Leaf {
            mean: [0.0; OUTPUTS],
            samples: 0,
        };
        let m = self.labels.len();
        let mut nodes = vec![placeholder.clone()];
        let mut stack = vec![(0usize, 0usize, m, 0usize)];
        let mut leaves = 0;
        let mut max_depth = 0;

        while let Some((id, start, end, depth)) = stack.pop() {
            max_depth = max_depth.max(depth);
            let total = self.moments(start, end);
            let can_split = end - start >= 2 * self.config.min_samples_leaf
                && self.config.max_depth.is_none_or(|d| depth < d)
                && !total.is_pure();
            let split = if can_split {
                self.choose(start, end, &total, rng)
            } else {
                None
            };
            match split {
                None => {
                    leaves += 1;
                    nodes[id] = TreeNode::Leaf {
                        mean: total.mean(),
                        samples: end - start,
                    };
                }
                Some(cand) => {
                    self.partition(&cand, start, end);
                    let mid = start + cand.n_left;
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(placeholder.clone());
                    nodes.push(placeholder.clone());
                    nodes[id] = TreeNode::Internal {
                        feature: cand.feature,
                        threshold: cand.threshold,
                        left,
                        right,
                        samples: end - start,
                        impurity: total.impurity(),
                    };
                    stack.push((right, mid, end, depth + 1));
                    stack.push((left, start, mid, depth + 1));
                }
            }
        }
        (nodes, leaves, max_depth)
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid < hi {
        mid
    } else {
        lo
    }
}

fn decrease(gain_num: i128, den: i128, n: i64) -> f64 {
    let n = n as f64;
    gain_num as f64 / (den as f64 * n) / (OUTPUTS as f64 * n)
}

fn check_inputs(x: &FeatureMatrix, y: &[CountVector]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::shape("tree inputs (rows of X vs Y)", x.rows(), y.len()));
    }
    if y.is_empty() {
        return Err(Error::InvalidInput("cannot fit a tree on zero rows".into()));
    }
    Ok(())
}

/// Best split of `rows` over `features`, or `None` when no admissible split
/// lowers impurity.
pub fn best_split(
    x: &FeatureMatrix,
    y: &[CountVector],
    rows: &[usize],
    features: &[usize],
    config: &TreeConfig,
) -> Option<Split> {
    if rows.len() < 2 || x.rows() != y.len() {
        return None;
    }
    let mut features: Vec<usize> = features.iter().copied().filter(|&f| f < x.cols()).collect();
    features.sort_unstable();
    features.dedup();

    let grower = Grower::new(x, y, rows, config);
    let total = grower.moments(0, rows.len());
    if total.is_pure() {
        return None;
    }
    let cand = grower.search(&features, 0, rows.len(), &total)?;
    let gain_num = cand.num * total.n as i128 - total.sum_norm() * cand.den;
    Some(Split {
        feature: cand.feature,
        threshold: cand.threshold,
        impurity_decrease: decrease(gain_num, cand.den, total.n),
    })
}

/// Grows a tree greedily until no admissible split remains. The rng is only
/// drawn from when `feature_subset_size` is smaller than the feature count.
pub fn fit_tree<R: rand::Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[CountVector],
    config: &TreeConfig,
    rng: &mut R,
) -> Result<RegressionTree> {
    check_inputs(x, y)?;
    let rows: Vec<usize> = (0..x.rows()).collect();
    fit_tree_on_rows(x, y, &rows, config, rng)
}

/// Fits on a multiset of row indices (repeats allowed, as in a bootstrap).
pub fn fit_tree_on_rows<R: rand::Rng + ?Sized>(
    x: &FeatureMatrix,
    y: &[CountVector],
    rows: &[usize],
    config: &TreeConfig,
    rng: &mut R,
) -> Result<RegressionTree> {
    check_inputs(x, y)?;
    config.validate(x.cols())?;
    if rows.is_empty() {
        return Err(Error::InvalidInput("cannot fit a tree on zero rows".into()));
    }
    if let Some(&bad) = rows.iter().find(|&&r| r >= x.rows()) {
        return Err(Error::InvalidInput(format!("row index {bad} out of range")));
    }
    let (nodes, leaf_count, max_depth_reached) = Grower::new(x, y, rows, config).grow(rng);
    Ok(RegressionTree {
        nodes,
        digits: x.digits(),
        encoding: x.encoding(),
        n_features: x.cols(),
        leaf_count,
        max_depth_reached,
    })
}

impl RegressionTree {
    pub fn digits(&self) -> usize {
        self.digits
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn max_depth_reached(&self) -> usize {
        self.max_depth_reached
    }

    /// Mean vector of the leaf reached by `row`; left iff value <= threshold.
    pub fn predict(&self, row: &[f64]) -> Result<[f64; OUTPUTS]> {
        if row.len() != self.n_features {
            return Err(Error::shape("tree input row", self.n_features, row.len()));
        }
        Ok(*self.leaf_for(row))
    }

    #[inline]
    pub(crate) fn leaf_for(&self, row: &[f64]) -> &[f64; OUTPUTS] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if row[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { mean, .. } => return mean,
            }
        }
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<PredictionMatrix> {
        if x.cols() != self.n_features {
            return Err(Error::shape("tree input matrix columns", self.n_features, x.cols()));
        }
        let mut values = Vec::with_capacity(x.rows() * OUTPUTS);
        for i in 0..x.rows() {
            values.extend_from_slice(self.leaf_for(x.row(i)));
        }
        PredictionMatrix::new(x.rows(), values)
    }

    /// Structural counts from a full traversal.
    pub fn stats(&self) -> TreeStats {
        let mut stats = TreeStats {
            leaf_count: 0,
            internal_count: 0,
            max_depth: 0,
        };
        let mut stack = vec![(0usize, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            stats.max_depth = stats.max_depth.max(depth);
            match &self.nodes[id] {
                TreeNode::Internal { left, right, .. } => {
                    stats.internal_count += 1;
                    stack.push((*left, depth + 1));
                    stack.push((*right, depth + 1));
                }
                TreeNode::Leaf { .. } => stats.leaf_count += 1,
            }
        }
        stats
    }

    /// Breadth-first text rendering of the first `max_nodes` nodes.
    pub fn dump(&self, max_nodes: usize) -> String {
        let mut out = String::new();
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        let mut shown = 0;
        while let Some((id, depth)) = queue.pop_front() {
            if shown == max_nodes {
                break;
            }
            match &self.nodes[id] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    samples,
                    impurity,
                } => {
                    let _ = writeln!(
                        out,
                        "#{shown} [depth={depth}] {} <= {threshold} | samples={samples} impurity={impurity:.4}",
                        self.encoding.column_name(*feature)
                    );
                    queue.push_back((*left, depth + 1));
                    queue.push_back((*right, depth + 1));
                }
                TreeNode::Leaf { mean, samples } => {
                    let mean: Vec<String> = mean.iter().map(|m| format!("{m:.3}")).collect();
                    let _ = writeln!(
                        out,
                        "#{shown} [depth={depth}] leaf samples={samples} mean=[{}]",
                        mean.join(", ")
                    );
                }
            }
            shown += 1;
        }
        out
    }
}

pub fn predict_tree(tree: &RegressionTree, row: &[f64]) -> Result<[f64; OUTPUTS]> {
    tree.predict(row)
}

pub fn tree_stats(tree: &RegressionTree) -> TreeStats {
    tree.stats()
}

pub fn dump_tree(tree: &RegressionTree, max_nodes: usize) -> String {
    tree.dump(max_nodes.max(1))
}
