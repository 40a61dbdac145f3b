//! Bagged forests over attribute rows, with importances.

use super::tree::{DecisionTree, GrowSettings, SplitRule};
use super::SkillError;
use crate::data::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// `None` grows until purity.
    pub max_depth: Option<usize>,
    /// `None` uses sqrt(p) for classification and p/3 for regression,
    /// floored at one feature.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 500,
            min_samples_leaf: 1,
            max_depth: None,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<(), SkillError> {
        if self.n_trees == 0 {
            return Err(SkillError::BadConfig("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(SkillError::BadConfig("min_samples_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestTask {
    Classify,
    Regress,
}

/// A fitted forest plus everything needed to apply and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub task: ForestTask,
    pub feature_names: Vec<String>,
    /// Hash of the feature schema, recorded so downstream outputs can
    /// state exactly which attribute set produced them.
    pub schema_hash: String,
    /// Class names for a classifier, empty for a regressor.
    pub classes: Vec<String>,
    /// (bootstrap seed, tree), deterministic under the config seed.
    pub trees: Vec<(u64, DecisionTree)>,
    /// Observed target range in training; regression predictions are
    /// averages of training leaves, so they cannot leave it.
    pub target_range: (f64, f64),
    pub config: ForestConfig,
}

pub fn schema_hash(feature_names: &[String]) -> String {
    let mut hasher = Sha256::new();
    for name in feature_names {
        hasher.update(name.as_bytes());
        hasher.update([0u8]);
    }
    format!("{:x}", hasher.finalize())
}

fn check_matrix(
    x: &DenseMatrix,
    labels: usize,
    feature_names: &[String],
) -> Result<(), SkillError> {
    if x.rows == 0 {
        return Err(SkillError::EmptyTraining);
    }
    if x.rows != labels {
        return Err(SkillError::LengthMismatch { rows: x.rows, labels });
    }
    assert_eq!(x.cols, feature_names.len(), "feature names do not match matrix width");
    Ok(())
}

fn tree_seeds(config: &ForestConfig) -> Vec<u64> {
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    (0..config.n_trees).map(|_| rng.gen()).collect()
}

/// Fit a classifier on class-balanced bootstrap samples: each draw
/// picks a class uniformly, then a row of that class uniformly, so
/// every class contributes the same expected count to every tree.
pub fn fit_classifier(
    x: &DenseMatrix,
    y: &[usize],
    classes: &[String],
    feature_names: &[String],
    config: &ForestConfig,
) -> Result<Forest, SkillError> {
    config.validate()?;
    check_matrix(x, y.len(), feature_names)?;
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (row, &label) in y.iter().enumerate() {
        assert!(label < classes.len(), "label {label} outside the class list");
        by_class.entry(label).or_default().push(row);
    }
    if by_class.len() < 2 {
        return Err(SkillError::SingleClass { got: by_class.len() });
    }
    let class_rows: Vec<&Vec<usize>> = by_class.values().collect();
    let mtry = config
        .features_per_split
        .unwrap_or_else(|| (x.cols as f64).sqrt().floor() as usize)
        .clamp(1, x.cols);
    let settings = GrowSettings {
        min_samples_leaf: config.min_samples_leaf,
        max_depth: config.max_depth,
        features_per_split: mtry,
    };
    let rule = SplitRule::Gini { n_classes: classes.len(), y };
    let n = x.rows;
    let trees: Vec<(u64, DecisionTree)> = tree_seeds(config)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sample: Vec<usize> = (0..n)
                .map(|_| {
                    let class = rng.gen_range(0..class_rows.len());
                    class_rows[class][rng.gen_range(0..class_rows[class].len())]
                })
                .collect();
            let tree =
                DecisionTree::grow(|r, c| x.at(r, c), x.cols, &sample, &rule, &settings, &mut rng, n);
            (seed, tree)
        })
        .collect();
    Ok(Forest {
        task: ForestTask::Classify,
        feature_names: feature_names.to_vec(),
        schema_hash: schema_hash(feature_names),
        classes: classes.to_vec(),
        trees,
        target_range: (0.0, (classes.len() - 1) as f64),
        config: config.clone(),
    })
}

/// Fit a regressor on plain bootstrap samples with variance-reduction
/// splits.
pub fn fit_regressor(
    x: &DenseMatrix,
    y: &[f64],
    feature_names: &[String],
    config: &ForestConfig,
) -> Result<Forest, SkillError> {
    config.validate()?;
    check_matrix(x, y.len(), feature_names)?;
    let mtry = config
        .features_per_split
        .unwrap_or_else(|| (x.cols / 3).max(1))
        .clamp(1, x.cols);
    let settings = GrowSettings {
        min_samples_leaf: config.min_samples_leaf,
        max_depth: config.max_depth,
        features_per_split: mtry,
    };
    let rule = SplitRule::Variance { y };
    let n = x.rows;
    let trees: Vec<(u64, DecisionTree)> = tree_seeds(config)
        .into_par_iter()
        .map(|seed| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sample: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let tree =
                DecisionTree::grow(|r, c| x.at(r, c), x.cols, &sample, &rule, &settings, &mut rng, n);
            (seed, tree)
        })
        .collect();
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Forest {
        task: ForestTask::Regress,
        feature_names: feature_names.to_vec(),
        schema_hash: schema_hash(feature_names),
        classes: Vec::new(),
        trees,
        target_range: (lo, hi),
        config: config.clone(),
    })
}

impl Forest {
    fn check_row(&self, row: &[f64]) -> Result<(), SkillError> {
        if row.len() != self.feature_names.len() {
            return Err(SkillError::SchemaMismatch {
                expected: self.feature_names.len(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Majority vote and per-class vote fractions; the winner is the
    /// lowest-indexed class on an exact tie.
    pub fn predict_class(&self, row: &[f64]) -> Result<(usize, Vec<f64>), SkillError> {
        assert_eq!(self.task, ForestTask::Classify, "classification on a regressor");
        self.check_row(row)?;
        let mut votes = vec![0.0f64; self.classes.len()];
        for (_, tree) in &self.trees {
            let dist = tree.predict_row(row);
            let vote = dist
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .map(|(c, _)| c)
                .unwrap();
            votes[vote] += 1.0;
        }
        let n = self.trees.len() as f64;
        votes.iter_mut().for_each(|v| *v /= n);
        let winner = votes
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(c, _)| c)
            .unwrap();
        Ok((winner, votes))
    }

    /// Mean of the trees' leaf means.
    pub fn predict_value(&self, row: &[f64]) -> Result<f64, SkillError> {
        assert_eq!(self.task, ForestTask::Regress, "regression on a classifier");
        self.check_row(row)?;
        let sum: f64 = self.trees.iter().map(|(_, t)| t.predict_row(row)[0]).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Assemble a row in this forest's column order from named
    /// attributes, so callers are insulated from column order.
    pub fn row_from_map(&self, attributes: &BTreeMap<String, f64>) -> Result<Vec<f64>, SkillError> {
        self.feature_names
            .iter()
            .map(|name| {
                attributes
                    .get(name)
                    .copied()
                    .ok_or_else(|| SkillError::MissingFeature { name: name.clone() })
            })
            .collect()
    }

    /// Mean decrease in impurity per feature, normalized to sum 1.
    /// A forest that never split (constant target) reports all zeros.
    pub fn importances(&self) -> Vec<f64> {
        let mut total = vec![0.0f64; self.feature_names.len()];
        for (_, tree) in &self.trees {
            for (f, c) in tree.importance_contribution().into_iter().enumerate() {
                total[f] += c;
            }
        }
        let sum: f64 = total.iter().sum();
        if sum > 0.0 {
            total.iter_mut().for_each(|v| *v /= sum);
        }
        total
    }
}

/// Plain per-feature Pearson correlation with the target; `None` where
/// the feature or the target has no variance.
pub fn pearson_correlations(x: &DenseMatrix, y: &[f64]) -> Vec<Option<f64>> {
    assert_eq!(x.rows, y.len(), "target length does not match the matrix");
    let n = x.rows as f64;
    let my = y.iter().sum::<f64>() / n;
    let sy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    (0..x.cols)
        .map(|c| {
            let mx = (0..x.rows).map(|r| x.at(r, c)).sum::<f64>() / n;
            let sx: f64 = (0..x.rows).map(|r| (x.at(r, c) - mx) * (x.at(r, c) - mx)).sum();
            if sx == 0.0 || sy == 0.0 {
                return None;
            }
            let cross: f64 = (0..x.rows).map(|r| (x.at(r, c) - mx) * (y[r] - my)).sum();
            Some(cross / (sx.sqrt() * sy.sqrt()))
        })
        .collect()
}
