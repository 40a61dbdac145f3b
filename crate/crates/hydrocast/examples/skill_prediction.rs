//! Predict where a forecaster is skillful from catchment attributes.
//!
//! A random forest classifies basins into above- versus below-average
//! F1 using static attributes only, evaluated with stratified k-fold
//! cross-validation. Mean-decrease-in-impurity importances and plain
//! Pearson correlations say which attributes carry the signal.
//!
//! Run with: cargo run --example skill_prediction

use hydrocast::data::DenseMatrix;
use hydrocast::skill::{
    above_below_labels, evaluate_classifier, fit_classifier, pearson_correlations, ForestConfig,
    ABOVE_BELOW_CLASSES,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn main() {
    // Synthetic fleet: skill actually depends on aridity and area, while
    // two more attributes are pure noise.
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let n = 120;
    let features =
        vec!["aridity".to_owned(), "log_area".to_owned(), "soil_depth".to_owned(), "slope".to_owned()];
    let mut x = DenseMatrix::zeros(n, features.len());
    let mut f1 = Vec::with_capacity(n);
    for i in 0..n {
        let aridity = rng.gen_range(0.0..2.0);
        let log_area = rng.gen_range(1.0..4.0);
        x.set(i, 0, aridity);
        x.set(i, 1, log_area);
        x.set(i, 2, rng.gen_range(0.1..3.0));
        x.set(i, 3, rng.gen_range(0.0..30.0));
        let signal = 0.8 - 0.25 * aridity + 0.05 * log_area;
        f1.push((signal + rng.gen_range(-0.08..0.08)).clamp(0.0, 1.0));
    }

    let (labels, mean) = above_below_labels(&f1);
    println!(
        "{} basins, mean F1 {:.3}; {} above, {} below\n",
        n,
        mean,
        labels.iter().filter(|&&l| l == 1).count(),
        labels.iter().filter(|&&l| l == 0).count()
    );

    let config = ForestConfig { n_trees: 300, ..ForestConfig::default() };
    let classes: Vec<String> = ABOVE_BELOW_CLASSES.iter().map(|s| (*s).to_owned()).collect();
    let eval =
        evaluate_classifier(&x, &labels, &classes, &features, &config, 5, 17).expect("evaluates");
    println!(
        "stratified 5-fold: accuracy {:.3}, micro precision {:.3}, micro recall {:.3}",
        eval.accuracy, eval.micro_precision, eval.micro_recall
    );
    println!("confusion (rows = truth):");
    for (i, class) in eval.confusion.classes.iter().enumerate() {
        println!("  {:<12} {:?}", class, eval.confusion.counts[i]);
    }

    let forest = fit_classifier(&x, &labels, &classes, &features, &config).expect("fits");
    let importances = forest.importances();
    let correlations = pearson_correlations(&x, &f1);
    println!("\n{:<12} {:>12} {:>12}", "attribute", "importance", "pearson r");
    for (i, name) in features.iter().enumerate() {
        println!(
            "{name:<12} {:>12.3} {:>12.3}",
            importances[i],
            correlations[i].unwrap_or(f64::NAN)
        );
    }
    println!("\n(importances sum to {:.6})", importances.iter().sum::<f64>());
}
