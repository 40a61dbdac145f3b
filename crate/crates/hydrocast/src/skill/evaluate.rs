//! Out-of-fold evaluation for the attribute classifiers.

use super::forest::{fit_classifier, ForestConfig};
use super::SkillError;
use crate::data::DenseMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Deal each class round-robin into k folds after a seeded shuffle, so
/// every fold mirrors the class mix as closely as the counts allow.
pub fn stratified_folds(
    y: &[usize],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, SkillError> {
    if k == 0 || k > y.len() {
        return Err(SkillError::TooManyFolds { k, n: y.len() });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let classes: BTreeSet<usize> = y.iter().copied().collect();
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in classes {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        rows.shuffle(&mut rng);
        for (i, row) in rows.into_iter().enumerate() {
            folds[i % k].push(row);
        }
    }
    for (fold_id, fold) in folds.iter_mut().enumerate() {
        fold.sort_unstable();
        let distinct: BTreeSet<usize> = fold.iter().map(|&i| y[i]).collect();
        if distinct.len() < 2 {
            return Err(SkillError::OneClassFold { fold: fold_id, k });
        }
    }
    Ok(folds)
}

/// Pooled confusion counts, rows true class, columns predicted class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: &[String]) -> Self {
        ConfusionMatrix {
            classes: classes.to_vec(),
            counts: vec![vec![0; classes.len()]; classes.len()],
        }
    }

    pub fn record(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    fn diagonal(&self) -> usize {
        (0..self.classes.len()).map(|c| self.counts[c][c]).sum()
    }

    /// Micro-averaged precision: pooled TP over pooled TP+FP, summed
    /// across classes from their own columns.
    pub fn micro_precision(&self) -> f64 {
        let tp: usize = self.diagonal();
        let predicted: usize =
            (0..self.classes.len()).map(|c| self.counts.iter().map(|row| row[c]).sum::<usize>()).sum();
        tp as f64 / predicted as f64
    }

    /// Micro-averaged recall: pooled TP over pooled TP+FN, summed
    /// across classes from their own rows.
    pub fn micro_recall(&self) -> f64 {
        let tp: usize = self.diagonal();
        let actual: usize = self.counts.iter().map(|row| row.iter().sum::<usize>()).sum();
        tp as f64 / actual as f64
    }

    pub fn accuracy(&self) -> f64 {
        self.diagonal() as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEvaluation {
    pub confusion: ConfusionMatrix,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub accuracy: f64,
    pub folds: usize,
}

/// Stratified k-fold evaluation: fit on k-1 folds, predict the held
/// fold, pool one confusion matrix. For single-label prediction the
/// micro scores and accuracy are the same number by construction; that
/// identity is asserted, not assumed.
pub fn evaluate_classifier(
    x: &DenseMatrix,
    y: &[usize],
    classes: &[String],
    feature_names: &[String],
    config: &ForestConfig,
    k: usize,
    seed: u64,
) -> Result<ClassifierEvaluation, SkillError> {
    let folds = stratified_folds(y, k, seed)?;
    let mut confusion = ConfusionMatrix::new(classes);
    for held in &folds {
        let held_set: BTreeSet<usize> = held.iter().copied().collect();
        let train_rows: Vec<usize> = (0..x.rows).filter(|r| !held_set.contains(r)).collect();
        let mut train_x = DenseMatrix::zeros(train_rows.len(), x.cols);
        let mut train_y = Vec::with_capacity(train_rows.len());
        for (new_r, &old_r) in train_rows.iter().enumerate() {
            for c in 0..x.cols {
                train_x.set(new_r, c, x.at(old_r, c));
            }
            train_y.push(y[old_r]);
        }
        let forest = fit_classifier(&train_x, &train_y, classes, feature_names, config)?;
        for &r in held {
            let (predicted, _) = forest.predict_class(x.row(r))?;
            confusion.record(y[r], predicted);
        }
    }
    let micro_precision = confusion.micro_precision();
    let micro_recall = confusion.micro_recall();
    let accuracy = confusion.accuracy();
    assert!(
        (micro_precision - micro_recall).abs() < 1e-12
            && (micro_precision - accuracy).abs() < 1e-12,
        "single-label micro averages must pool to accuracy"
    );
    Ok(ClassifierEvaluation {
        confusion,
        micro_precision,
        micro_recall,
        accuracy,
        folds: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn folds_balance_classes_and_partition_rows() {
        let y: Vec<usize> = (0..60).map(|i| i % 2).collect();
        let folds = stratified_folds(&y, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        let mut seen = BTreeSet::new();
        for fold in &folds {
            assert_eq!(fold.len(), 12);
            let ones = fold.iter().filter(|&&i| y[i] == 1).count();
            assert_eq!(ones, 6, "fold not balanced");
            for &i in fold {
                assert!(seen.insert(i));
            }
        }
        assert_eq!(seen.len(), 60);
    }

    #[test]
    fn scarce_class_triggers_the_stratification_error() {
        // One positive among twelve rows cannot reach all three folds.
        let mut y = vec![0usize; 12];
        y[4] = 1;
        assert!(matches!(
            stratified_folds(&y, 3, 0),
            Err(SkillError::OneClassFold { .. })
        ));
    }

    #[test]
    fn confusion_arithmetic_identities() {
        let classes = vec!["a".to_owned(), "b".to_owned()];
        // An always-"b" predictor on a 50/50 set.
        let mut m = ConfusionMatrix::new(&classes);
        for _ in 0..25 {
            m.record(0, 1);
            m.record(1, 1);
        }
        assert_eq!(m.micro_precision(), 0.5);
        assert_eq!(m.micro_recall(), 0.5);
        assert_eq!(m.accuracy(), 0.5);

        // Perfect predictions give the identity matrix.
        let mut id = ConfusionMatrix::new(&classes);
        for c in 0..2 {
            for _ in 0..10 {
                id.record(c, c);
            }
        }
        assert_eq!(id.counts, vec![vec![10, 0], vec![0, 10]]);
        assert_eq!(id.micro_precision(), 1.0);
        assert_eq!(id.micro_recall(), 1.0);
    }

    #[test]
    fn pooled_micro_scores_equal_accuracy_on_random_matrices() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let classes: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        for _ in 0..50 {
            let mut m = ConfusionMatrix::new(&classes);
            for t in 0..3 {
                for p in 0..3 {
                    m.counts[t][p] = rng.gen_range(0..20);
                }
            }
            if m.total() == 0 {
                continue;
            }
            assert!((m.micro_precision() - m.accuracy()).abs() < 1e-15);
            assert!((m.micro_recall() - m.accuracy()).abs() < 1e-15);
        }
    }

    fn clouds(n: usize, spread: f64, seed: u64) -> (DenseMatrix, Vec<usize>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 2);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { -1.0 } else { 1.0 };
            data.push(center + rng.gen_range(-spread..spread));
            data.push(center + rng.gen_range(-spread..spread));
            y.push(class);
        }
        (DenseMatrix { rows: n, cols: 2, data }, y)
    }

    #[test]
    fn separable_data_evaluates_near_perfectly() {
        let (x, y) = clouds(120, 0.5, 2);
        let classes = vec!["below".to_owned(), "above".to_owned()];
        let names: Vec<String> = vec!["f0".into(), "f1".into()];
        let config = ForestConfig { n_trees: 30, seed: 1, ..ForestConfig::default() };
        let eval = evaluate_classifier(&x, &y, &classes, &names, &config, 4, 5).unwrap();
        assert!(eval.accuracy >= 0.95, "accuracy {}", eval.accuracy);
        assert_eq!(eval.micro_precision, eval.accuracy);
        assert_eq!(eval.micro_recall, eval.accuracy);
        assert_eq!(eval.confusion.total(), 120);
        assert_eq!(eval.folds, 4);
    }

    #[test]
    fn no_signal_three_class_accuracy_sits_at_the_prior() {
        // Attributes independent of uniform 3-class labels: out-of-fold
        // accuracy has nothing to learn and hovers near one third.
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let n = 240;
        let data: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x = DenseMatrix { rows: n, cols: 3, data };
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let classes: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        let names: Vec<String> = (0..3).map(|i| format!("f{i}")).collect();
        let config = ForestConfig { n_trees: 25, seed: 3, ..ForestConfig::default() };
        let eval = evaluate_classifier(&x, &y, &classes, &names, &config, 4, 8).unwrap();
        assert!(
            (0.15..=0.5).contains(&eval.accuracy),
            "no-signal accuracy {} strayed from the prior",
            eval.accuracy
        );
    }
}
