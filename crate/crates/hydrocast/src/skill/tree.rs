//! A single CART tree, the unit a forest bags.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        /// Rows with value <= threshold go left.
        threshold: f64,
        left: usize,
        right: usize,
        /// Impurity decrease already weighted by this node's share of
        /// the training sample; summing per feature gives the tree's
        /// importance contribution.
        decrease: f64,
    },
    Leaf {
        /// Class distribution summing to 1 for a classifier, a single
        /// mean for a regressor.
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

/// What a leaf summarizes and a split optimizes.
#[derive(Clone, Copy)]
pub(crate) enum SplitRule<'a> {
    /// Gini impurity over these many classes; labels live in `y`.
    Gini { n_classes: usize, y: &'a [usize] },
    /// Sum-of-squares reduction on continuous targets.
    Variance { y: &'a [f64] },
}

pub(crate) struct GrowSettings {
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub features_per_split: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

/// Gini impurity of the label multiset, times its size; working with
/// unnormalized "impurity mass" keeps the parent-minus-children
/// decrease additive.
fn gini_mass(indices: &[usize], y: &[usize], n_classes: usize) -> f64 {
    let mut counts = vec![0.0f64; n_classes];
    for &i in indices {
        counts[y[i]] += 1.0;
    }
    let n = indices.len() as f64;
    n - counts.iter().map(|c| c * c).sum::<f64>() / n
}

/// Sum of squared deviations from the mean, the regression analogue.
fn sse_mass(indices: &[usize], y: &[f64]) -> f64 {
    let n = indices.len() as f64;
    let sum: f64 = indices.iter().map(|&i| y[i]).sum();
    let sq: f64 = indices.iter().map(|&i| y[i] * y[i]).sum();
    sq - sum * sum / n
}

fn impurity_mass(indices: &[usize], rule: &SplitRule<'_>) -> f64 {
    match rule {
        SplitRule::Gini { n_classes, y } => gini_mass(indices, y, *n_classes),
        SplitRule::Variance { y } => sse_mass(indices, y),
    }
}

fn leaf_value(indices: &[usize], rule: &SplitRule<'_>) -> Vec<f64> {
    match rule {
        SplitRule::Gini { n_classes, y } => {
            let mut counts = vec![0.0f64; *n_classes];
            for &i in indices {
                counts[y[i]] += 1.0;
            }
            let n = indices.len() as f64;
            counts.iter_mut().for_each(|c| *c /= n);
            counts
        }
        SplitRule::Variance { y } => {
            vec![indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len() as f64]
        }
    }
}

fn is_pure(indices: &[usize], rule: &SplitRule<'_>) -> bool {
    match rule {
        SplitRule::Gini { y, .. } => indices.windows(2).all(|w| y[w[0]] == y[w[1]]),
        SplitRule::Variance { y } => indices.windows(2).all(|w| y[w[0]] == y[w[1]]),
    }
}

/// Scan one feature for its best threshold. Rows are walked in sorted
/// feature order; thresholds sit between distinct consecutive values.
fn best_split_on_feature(
    rows: impl Fn(usize) -> f64,
    indices: &[usize],
    rule: &SplitRule<'_>,
    parent_mass: f64,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = indices.to_vec();
    order.sort_by(|&a, &b| rows(a).partial_cmp(&rows(b)).unwrap());
    let n = order.len();
    let mut best: Option<(f64, f64)> = None;
    // Incremental prefix statistics for the left side.
    let mut left_counts: Vec<f64>;
    let (mut left_sum, mut left_sq) = (0.0f64, 0.0f64);
    let (total_sum, total_sq, total_counts): (f64, f64, Vec<f64>);
    match rule {
        SplitRule::Gini { n_classes, y } => {
            left_counts = vec![0.0; *n_classes];
            let mut counts = vec![0.0; *n_classes];
            for &i in indices {
                counts[y[i]] += 1.0;
            }
            total_counts = counts;
            total_sum = 0.0;
            total_sq = 0.0;
        }
        SplitRule::Variance { y } => {
            left_counts = Vec::new();
            total_counts = Vec::new();
            total_sum = indices.iter().map(|&i| y[i]).sum();
            total_sq = indices.iter().map(|&i| y[i] * y[i]).sum();
        }
    }
    for split_at in 1..n {
        let i = order[split_at - 1];
        match rule {
            SplitRule::Gini { y, .. } => left_counts[y[i]] += 1.0,
            SplitRule::Variance { y } => {
                left_sum += y[i];
                left_sq += y[i] * y[i];
            }
        }
        if split_at < min_leaf || n - split_at < min_leaf {
            continue;
        }
        let (lo, hi) = (rows(order[split_at - 1]), rows(order[split_at]));
        if lo == hi {
            continue;
        }
        let nl = split_at as f64;
        let nr = (n - split_at) as f64;
        let children_mass = match rule {
            SplitRule::Gini { .. } => {
                let left = nl - left_counts.iter().map(|c| c * c).sum::<f64>() / nl;
                let right_sq: f64 = total_counts
                    .iter()
                    .zip(&left_counts)
                    .map(|(t, l)| (t - l) * (t - l))
                    .sum();
                let right = nr - right_sq / nr;
                left + right
            }
            SplitRule::Variance { .. } => {
                let left = left_sq - left_sum * left_sum / nl;
                let rs = total_sum - left_sum;
                let right = (total_sq - left_sq) - rs * rs / nr;
                left + right
            }
        };
        let decrease = parent_mass - children_mass;
        if best.map_or(decrease > 1e-12, |(_, d)| decrease > d + 1e-12) {
            best = Some((0.5 * (lo + hi), decrease));
        }
    }
    best
}

fn find_split(
    x: impl Fn(usize, usize) -> f64 + Copy,
    n_features: usize,
    indices: &[usize],
    rule: &SplitRule<'_>,
    settings: &GrowSettings,
    rng: &mut impl Rng,
) -> Option<BestSplit> {
    let parent_mass = impurity_mass(indices, rule);
    if parent_mass <= 1e-12 {
        return None;
    }
    let mut candidates = sample(rng, n_features, settings.features_per_split).into_vec();
    candidates.sort_unstable();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in candidates {
        if let Some((threshold, decrease)) =
            best_split_on_feature(|r| x(r, f), indices, rule, parent_mass, settings.min_samples_leaf)
        {
            if best.map_or(true, |(_, _, d)| decrease > d + 1e-12) {
                best = Some((f, threshold, decrease));
            }
        }
    }
    let (feature, threshold, decrease) = best?;
    let (left, right): (Vec<usize>, Vec<usize>) =
        indices.iter().partition(|&&r| x(r, feature) <= threshold);
    Some(BestSplit { feature, threshold, decrease, left, right })
}

impl DecisionTree {
    /// Grow a tree on the given sample rows (duplicates allowed, as a
    /// bootstrap produces). Deterministic given the rng state.
    pub(crate) fn grow(
        x: impl Fn(usize, usize) -> f64 + Copy,
        n_features: usize,
        sample_rows: &[usize],
        rule: &SplitRule<'_>,
        settings: &GrowSettings,
        rng: &mut impl Rng,
        total_samples: usize,
    ) -> DecisionTree {
        let mut tree = DecisionTree { nodes: Vec::new(), n_features };
        tree.grow_node(x, sample_rows, rule, settings, rng, 0, total_samples);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_node(
        &mut self,
        x: impl Fn(usize, usize) -> f64 + Copy,
        indices: &[usize],
        rule: &SplitRule<'_>,
        settings: &GrowSettings,
        rng: &mut impl Rng,
        depth: usize,
        total_samples: usize,
    ) -> usize {
        let make_leaf = indices.len() < 2 * settings.min_samples_leaf
            || settings.max_depth.is_some_and(|d| depth >= d)
            || is_pure(indices, rule);
        let split = if make_leaf {
            None
        } else {
            find_split(x, self.n_features, indices, rule, settings, rng)
        };
        let id = self.nodes.len();
        match split {
            None => {
                self.nodes.push(Node::Leaf { value: leaf_value(indices, rule) });
            }
            Some(s) => {
                self.nodes.push(Node::Leaf { value: Vec::new() }); // placeholder
                let left = self.grow_node(x, &s.left, rule, settings, rng, depth + 1, total_samples);
                let right = self.grow_node(x, &s.right, rule, settings, rng, depth + 1, total_samples);
                self.nodes[id] = Node::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left,
                    right,
                    decrease: s.decrease / total_samples as f64,
                };
            }
        }
        id
    }

    /// Leaf value for one attribute row.
    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right, .. } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Per-feature impurity decrease contributed by this tree.
    pub fn importance_contribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for node in &self.nodes {
            if let Node::Split { feature, decrease, .. } = node {
                out[*feature] += decrease;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn settings(features: usize) -> GrowSettings {
        GrowSettings { min_samples_leaf: 1, max_depth: None, features_per_split: features }
    }

    #[test]
    fn stump_reproduces_the_threshold_rule() {
        // One feature, clean separation at 0: the stump must cut there.
        let xs = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = [0usize, 0, 0, 1, 1, 1];
        let rule = SplitRule::Gini { n_classes: 2, y: &y };
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let tree = DecisionTree::grow(
            |r, _| xs[r],
            1,
            &[0, 1, 2, 3, 4, 5],
            &rule,
            &GrowSettings { max_depth: Some(1), ..settings(1) },
            &mut rng,
            6,
        );
        assert_eq!(tree.nodes.len(), 3);
        match &tree.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.0),
            other => panic!("expected a split at the root, got {other:?}"),
        }
        assert_eq!(tree.predict_row(&[-0.5]), &[1.0, 0.0]);
        assert_eq!(tree.predict_row(&[0.5]), &[0.0, 1.0]);
    }

    #[test]
    fn pure_nodes_become_leaves() {
        let y = [1usize; 10];
        let rule = SplitRule::Gini { n_classes: 2, y: &y };
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let idx: Vec<usize> = (0..10).collect();
        let tree = DecisionTree::grow(|r, _| r as f64, 1, &idx, &rule, &settings(1), &mut rng, 10);
        assert_eq!(tree.nodes, vec![Node::Leaf { value: vec![0.0, 1.0] }]);
    }

    #[test]
    fn min_leaf_bounds_every_leaf() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let y: Vec<f64> = xs.iter().map(|v| v * 2.0 + (v * 7.0).sin()).collect();
        let rule = SplitRule::Variance { y: &y };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let idx: Vec<usize> = (0..30).collect();
        let tree = DecisionTree::grow(
            |r, _| xs[r],
            1,
            &idx,
            &rule,
            &GrowSettings { min_samples_leaf: 5, ..settings(1) },
            &mut rng,
            30,
        );
        // Count samples per leaf by rerouting the training rows.
        let mut leaf_counts = std::collections::BTreeMap::new();
        for r in 0..30 {
            let mut at = 0;
            loop {
                match &tree.nodes[at] {
                    Node::Leaf { .. } => break,
                    Node::Split { feature, threshold, left, right, .. } => {
                        at = if xs[r] <= *threshold {
                            let _ = feature;
                            *left
                        } else {
                            *right
                        };
                    }
                }
            }
            *leaf_counts.entry(at).or_insert(0usize) += 1;
        }
        assert!(leaf_counts.values().all(|&c| c >= 5), "{leaf_counts:?}");
    }

    #[test]
    fn regression_leaf_holds_the_sample_mean() {
        let y = [2.0, 4.0, 9.0];
        let rule = SplitRule::Variance { y: &y };
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        // Constant feature: no split possible, single leaf with mean 5.
        let tree = DecisionTree::grow(|_, _| 1.0, 1, &[0, 1, 2], &rule, &settings(1), &mut rng, 3);
        assert_eq!(tree.nodes, vec![Node::Leaf { value: vec![5.0] }]);
    }
}
