//! Verify analytic gradients against central finite differences.
//!
//! The training loop trusts the tape-based reverse-mode engine for every
//! parameter update, so this check is the foundation everything else
//! stands on. It builds the full encoder/decoder forecaster at a small
//! width, backpropagates the likelihood loss, then re-evaluates the loss
//! with each checked parameter nudged by +/- h and compares.
//!
//! Run with: cargo run --example gradient_check

use chrono::NaiveDate;
use hydrocast::autodiff::Graph;
use hydrocast::data::{BasinInputs, CalendarAxis, DenseMatrix, ImputationRecord};
use hydrocast::model::{
    assemble_batch, build_forward, build_nll_loss, stage_state, ForecastModelState, ModelConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_basin(seed: u64, days: usize, enc_feat: usize, dec_feat: usize) -> BasinInputs {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut fill = |n: usize| (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect::<Vec<f64>>();
    BasinInputs {
        gauge_id: format!("g{seed}"),
        axis: CalendarAxis::new(NaiveDate::from_ymd_opt(1990, 1, 1).unwrap(), days),
        hindcast: DenseMatrix { rows: days, cols: enc_feat, data: fill(days * enc_feat) },
        forecast: DenseMatrix { rows: days, cols: dec_feat, data: fill(days * dec_feat) },
        statics: fill(2),
        target_std: (0..days).map(|t| Some((t as f64 * 0.41).sin())).collect(),
        imputation: ImputationRecord { feature_keys: vec![], tags: vec![] },
    }
}

fn main() {
    let config = ModelConfig {
        hindcast_length: 10,
        hidden_size: 4,
        ..ModelConfig::desk_scale()
    };
    let basin = random_basin(3, 40, 3, 2);
    let enc_width = basin.hindcast.cols + basin.statics.len();
    let dec_width = basin.forecast.cols + basin.statics.len();

    let loss_of = |s: &ForecastModelState| -> f64 {
        let batch = assemble_batch(&[(&basin, 12), (&basin, 25)], &config).unwrap();
        let mut g = Graph::new();
        let nodes = stage_state(&mut g, s);
        let out = build_forward(&mut g, &nodes, &batch, &config).unwrap();
        let loss = build_nll_loss(&mut g, &out, &batch).unwrap();
        g.value(loss).item()
    };

    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let state = ForecastModelState::init(&config, enc_width, dec_width, &mut rng);

    let batch = assemble_batch(&[(&basin, 12), (&basin, 25)], &config).unwrap();
    let mut g = Graph::new();
    let nodes = stage_state(&mut g, &state);
    let out = build_forward(&mut g, &nodes, &batch, &config).unwrap();
    let loss = build_nll_loss(&mut g, &out, &batch).unwrap();
    g.backward(loss).unwrap();
    let ids = nodes.ordered();

    println!("loss at the checked point: {:.6}\n", g.value(loss).item());
    println!("{:<24} {:>8} {:>14} {:>14} {:>12}", "parameter", "entry", "analytic", "numeric", "rel err");

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (param_idx, (name, tensor)) in state.named_params().into_iter().enumerate() {
        let analytic = g.grad(ids[param_idx]).expect("every parameter is a leaf");
        for k in 0..tensor.numel().min(2) {
            let mut plus = state.clone();
            plus.named_params_mut()[param_idx].1.data_mut()[k] += h;
            let mut minus = state.clone();
            minus.named_params_mut()[param_idx].1.data_mut()[k] -= h;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            println!("{name:<24} {k:>8} {a:>14.8} {fd:>14.8} {rel:>12.2e}");
        }
    }

    println!("\nworst relative error: {worst:.2e} (tolerance 1e-4)");
    assert!(worst < 1e-4, "gradients disagree with finite differences");
    println!("analytic gradients match finite differences");
}
