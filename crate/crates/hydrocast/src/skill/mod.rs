//! Predicting forecast skill from catchment attributes.
//!
//! A random forest over static attributes answers three questions about
//! an ungauged or unevaluated basin: will its event score land above or
//! below the fleet mean, which of two models will do better there (or
//! neither, within a declared similarity band), and what score to
//! expect numerically. Alongside the predictions the forest reports
//! normalized impurity-based feature importances, and a separate pass
//! reports plain per-feature correlations with the target score.
//!
//! Classifier quality is measured out of fold with stratified k-fold
//! splits and a pooled confusion matrix; for single-label prediction
//! the micro-averaged precision and recall both reduce to accuracy,
//! which the evaluator asserts rather than assumes.

mod evaluate;
mod forest;
mod tree;

pub use evaluate::{
    evaluate_classifier, stratified_folds, ClassifierEvaluation, ConfusionMatrix,
};
pub use forest::{
    fit_classifier, fit_regressor, pearson_correlations, schema_hash, Forest, ForestConfig,
    ForestTask,
};
pub use tree::{DecisionTree, Node};

use crate::data::DenseMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("classifier needs at least two classes, labels held {got}")]
    SingleClass { got: usize },
    #[error("attribute row has {got} features, the forest was trained on {expected}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("feature {name} missing from the attribute map")]
    MissingFeature { name: String },
    #[error("no training rows")]
    EmptyTraining,
    #[error("labels and rows disagree: {rows} rows, {labels} labels")]
    LengthMismatch { rows: usize, labels: usize },
    #[error("cannot make {k} stratified folds from {n} samples")]
    TooManyFolds { k: usize, n: usize },
    #[error("stratified fold {fold} holds a single class; not enough samples per class for {k} folds")]
    OneClassFold { fold: usize, k: usize },
    #[error("bad forest config: {0}")]
    BadConfig(String),
}

/// Band within which two scores count as the same; the 3-class task
/// labels such gauges "similar".
pub const SIMILAR_BAND: f64 = 0.05;

/// Class names for the above/below-mean task, indexed by label.
pub const ABOVE_BELOW_CLASSES: [&str; 2] = ["below_mean", "above_mean"];

/// Class names for the which-model task, indexed by label.
pub const WHICH_MODEL_CLASSES: [&str; 3] = ["a_better", "similar", "b_better"];

/// Binary labels against the fleet mean: 1 for scores above the mean,
/// 0 otherwise. Returns the mean used.
pub fn above_below_labels(scores: &[f64]) -> (Vec<usize>, f64) {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    (scores.iter().map(|&s| usize::from(s > mean)).collect(), mean)
}

/// Three-way labels from paired scores: 0 where A leads by more than
/// the band, 1 within the band, 2 where B leads. Exhaustive and
/// disjoint by construction.
pub fn which_model_labels(score_a: &[f64], score_b: &[f64], band: f64) -> Vec<usize> {
    assert_eq!(score_a.len(), score_b.len(), "paired scores of different lengths");
    score_a
        .iter()
        .zip(score_b)
        .map(|(a, b)| {
            let delta = a - b;
            if delta > band {
                0
            } else if delta >= -band {
                1
            } else {
                2
            }
        })
        .collect()
}

/// The which-model pipeline: derive 3-class labels, evaluate out of
/// fold, then fit the deployable forest on everything.
pub fn which_model_where(
    x: &DenseMatrix,
    feature_names: &[String],
    score_a: &[f64],
    score_b: &[f64],
    band: f64,
    config: &ForestConfig,
    k: usize,
    seed: u64,
) -> Result<(ClassifierEvaluation, Forest), SkillError> {
    let labels = which_model_labels(score_a, score_b, band);
    let classes: Vec<String> = WHICH_MODEL_CLASSES.iter().map(|s| (*s).to_owned()).collect();
    let evaluation = evaluate_classifier(x, &labels, &classes, feature_names, config, k, seed)?;
    let forest = fit_classifier(x, &labels, &classes, feature_names, config)?;
    Ok((evaluation, forest))
}

/// One row of the per-basin prediction table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedScore {
    pub gauge_id: String,
    pub predicted: f64,
}
