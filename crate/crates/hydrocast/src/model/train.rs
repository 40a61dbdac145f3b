//! Minibatch training with Adam, cosine learning-rate decay, and global
//! gradient-norm clipping.
//!
//! A training pair is one (basin, issue date). The pair is usable when its
//! whole input window, hindcast plus horizon, fits inside a single
//! training date range, so no window ever straddles a held-out period,
//! and at least one lead has an observed target. Sampling is uniform over
//! usable pairs with replacement.

use super::forward::{assemble_batch, build_forward, build_nll_loss, stage_state};
use super::{ForecastModelState, ModelConfig, ModelError};
use crate::autodiff::{Graph, Tensor};
use crate::data::{BasinInputs, DateRange};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Everything one training run reads: the prepared basins and the date
/// ranges the model is allowed to learn from.
#[derive(Debug, Clone, Copy)]
pub struct TrainSlice<'a> {
    pub basins: &'a [BasinInputs],
    pub train_ranges: &'a [DateRange],
}

/// One validation probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: usize,
    pub learning_rate: f64,
    pub batch_loss: f64,
    pub validation_nll: f64,
}

/// A fitted member plus its training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub state: ForecastModelState,
    pub config: ModelConfig,
    pub seed: u64,
    /// Batch loss at every step.
    pub loss_trace: Vec<f64>,
    /// Validation probes, one per `validation_interval`.
    pub records: Vec<TrainRecord>,
    pub initial_validation_nll: f64,
    pub final_validation_nll: f64,
}

/// Enumerate usable (basin index, issue index) pairs.
pub fn valid_training_pairs(
    slice: &TrainSlice<'_>,
    config: &ModelConfig,
) -> Vec<(usize, usize)> {
    let hc = config.hindcast_length;
    let horizon = config.horizon_steps;
    let mut pairs = Vec::new();
    for (b, basin) in slice.basins.iter().enumerate() {
        for range in slice.train_ranges {
            let Some((lo, hi)) = basin.axis.clip(range) else { continue };
            // The full window [t-hc+1, t+horizon-1] must sit inside [lo, hi].
            let t_min = lo + hc - 1;
            let t_max = match (hi + 1).checked_sub(horizon) {
                Some(v) => v,
                None => continue,
            };
            for t in t_min..=t_max.min(basin.axis.len().saturating_sub(horizon)) {
                let any_target = (t..t + horizon).any(|d| basin.target_std[d].is_some());
                if any_target {
                    pairs.push((b, t));
                }
            }
        }
    }
    pairs
}

fn cosine_lr(config: &ModelConfig, step: usize) -> f64 {
    if !config.cosine_decay {
        return config.learning_rate;
    }
    let frac = step as f64 / config.training_steps as f64;
    config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Scale gradients in place so their joint L2 norm is at most `clip`.
/// Returns the pre-clip norm. Non-positive `clip` disables clipping.
pub fn clip_global_norm(grads: &mut [Tensor], clip: f64) -> f64 {
    let norm_sq: f64 = grads.iter().flat_map(|g| g.data()).map(|v| v * v).sum();
    let norm = norm_sq.sqrt();
    if clip > 0.0 && norm > clip {
        let factor = clip / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= factor;
            }
        }
    }
    norm
}

/// First and second moment accumulators, one pair per parameter tensor.
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[(String, &Tensor)]) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.shape().to_vec());
        AdamState {
            m: params.iter().map(|(_, t)| zeros(t)).collect(),
            v: params.iter().map(|(_, t)| zeros(t)).collect(),
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One Adam update with bias correction; `t` counts from 1.
pub fn adam_step(
    state: &mut ForecastModelState,
    adam: &mut AdamState,
    grads: &[Tensor],
    t: usize,
    lr: f64,
) {
    let bc1 = 1.0 - BETA1.powi(t as i32);
    let bc2 = 1.0 - BETA2.powi(t as i32);
    for (i, (_, param)) in state.named_params_mut().into_iter().enumerate() {
        let g = grads[i].data();
        let m = adam.m[i].data_mut();
        let v = adam.v[i].data_mut();
        let p = param.data_mut();
        for k in 0..p.len() {
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * g[k];
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// Mean NLL of `state` over the given pairs, evaluated in chunks so the
/// tape stays small. Chunks are weighted by their target counts.
pub fn eval_nll(
    state: &ForecastModelState,
    basins: &[BasinInputs],
    pairs: &[(usize, usize)],
    config: &ModelConfig,
) -> Result<f64, ModelError> {
    if pairs.is_empty() {
        return Err(ModelError::NoTargets);
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for chunk in pairs.chunks(config.batch_size.max(1)) {
        let refs: Vec<(&BasinInputs, usize)> =
            chunk.iter().map(|&(b, t)| (&basins[b], t)).collect();
        let batch = assemble_batch(&refs, config)?;
        if batch.n_targets == 0 {
            continue;
        }
        let mut g = Graph::new();
        let nodes = stage_state(&mut g, state);
        let out = build_forward(&mut g, &nodes, &batch, config)?;
        let loss = build_nll_loss(&mut g, &out, &batch)?;
        total += g.value(loss).item() * batch.n_targets as f64;
        n += batch.n_targets;
    }
    if n == 0 {
        return Err(ModelError::NoTargets);
    }
    Ok(total / n as f64)
}

/// Train one ensemble member from scratch.
pub fn train(
    slice: &TrainSlice<'_>,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    let pairs = valid_training_pairs(slice, config);
    if pairs.is_empty() {
        return Err(ModelError::NoTrainingPairs);
    }
    let first = &slice.basins[0];
    let n_statics = first.statics.len();
    let enc_width = first.hindcast.cols + n_statics;
    let dec_width =
        first.forecast.cols + if config.statics_to_decoder { n_statics } else { 0 };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut state = ForecastModelState::init(config, enc_width, dec_width, &mut rng);
    let mut adam = AdamState::new(&state.named_params());

    // Fixed probe set, drawn once so every validation sees the same pairs.
    let mut probe_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let probe: Vec<(usize, usize)> = (0..config.validation_pairs.min(pairs.len()).max(1))
        .map(|_| pairs[probe_rng.gen_range(0..pairs.len())])
        .collect();

    let initial_validation_nll = eval_nll(&state, slice.basins, &probe, config)?;
    let mut records = Vec::new();
    let mut loss_trace = Vec::with_capacity(config.training_steps);
    let mut last_finite = initial_validation_nll;

    for step in 0..config.training_steps {
        let lr = cosine_lr(config, step);
        let chosen: Vec<(&BasinInputs, usize)> = (0..config.batch_size)
            .map(|_| {
                let (b, t) = pairs[rng.gen_range(0..pairs.len())];
                (&slice.basins[b], t)
            })
            .collect();
        let batch = assemble_batch(&chosen, config)?;
        let mut g = Graph::new();
        let nodes = stage_state(&mut g, &state);
        let out = build_forward(&mut g, &nodes, &batch, config)?;
        let loss_node = build_nll_loss(&mut g, &out, &batch)?;
        let loss = g.value(loss_node).item();
        if !loss.is_finite() {
            return Err(ModelError::Divergence { step, last_loss: last_finite });
        }
        last_finite = loss;
        loss_trace.push(loss);

        g.backward(loss_node)?;
        let ids = nodes.ordered();
        let mut grads: Vec<Tensor> = ids
            .iter()
            .zip(state.named_params())
            .map(|(&id, (_, p))| {
                g.grad(id).cloned().unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
            })
            .collect();
        clip_global_norm(&mut grads, config.grad_clip_norm);
        adam_step(&mut state, &mut adam, &grads, step + 1, lr);

        if (step + 1) % config.validation_interval == 0 {
            let validation_nll = eval_nll(&state, slice.basins, &probe, config)?;
            records.push(TrainRecord { step: step + 1, learning_rate: lr, batch_loss: loss, validation_nll });
        }
    }

    let final_validation_nll = eval_nll(&state, slice.basins, &probe, config)?;
    Ok(TrainedModel {
        state,
        config: config.clone(),
        seed,
        loss_trace,
        records,
        initial_validation_nll,
        final_validation_nll,
    })
}

/// Train `config.ensemble_size` members in parallel, seeded
/// `base_seed`, `base_seed + 1`, and so on. Member order is stable
/// regardless of scheduling.
pub fn train_ensemble(
    slice: &TrainSlice<'_>,
    config: &ModelConfig,
    base_seed: u64,
) -> Result<Vec<TrainedModel>, ModelError> {
    (0..config.ensemble_size as u64)
        .into_par_iter()
        .map(|i| train(slice, config, base_seed + i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CalendarAxis, DenseMatrix, ImputationRecord};
    use chrono::NaiveDate;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    /// Target is a clean linear function of the forecast input, so a few
    /// dozen steps of training must cut the NLL.
    fn learnable_basin(days: usize) -> BasinInputs {
        let fc: Vec<f64> = (0..days).map(|t| (t as f64 * 0.31).sin()).collect();
        let hc: Vec<f64> = (0..days)
            .flat_map(|t| [(t as f64 * 0.11).cos(), (t as f64 * 0.07).sin()])
            .collect();
        let target_std: Vec<Option<f64>> = (0..days)
            .map(|t| if t % 11 == 5 { None } else { Some(0.8 * fc[t]) })
            .collect();
        BasinInputs {
            gauge_id: "learnable".to_owned(),
            axis: CalendarAxis::new(date(1990, 1, 1), days),
            hindcast: DenseMatrix { rows: days, cols: 2, data: hc },
            forecast: DenseMatrix { rows: days, cols: 1, data: fc },
            statics: vec![0.5],
            target_std,
            imputation: ImputationRecord { feature_keys: vec![], tags: vec![] },
        }
    }

    fn tiny_train_config() -> ModelConfig {
        ModelConfig {
            hindcast_length: 4,
            hidden_size: 4,
            batch_size: 8,
            training_steps: 150,
            learning_rate: 0.05,
            validation_interval: 50,
            validation_pairs: 16,
            ensemble_size: 2,
            ..ModelConfig::desk_scale()
        }
    }

    #[test]
    fn pair_universe_respects_ranges_and_windows() {
        let basin = learnable_basin(30);
        let config = ModelConfig {
            hindcast_length: 5,
            ..ModelConfig::desk_scale()
        };
        // Indices 2..=19 and 17..=29 on the axis.
        let ranges =
            [DateRange { start: date(1990, 1, 3), end: date(1990, 1, 20) },
             DateRange { start: date(1990, 1, 18), end: date(1990, 1, 30) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let pairs = valid_training_pairs(&slice, &config);
        // First range: t in [2+4, 19-7] = [6, 12]. Second: t in [21, 22].
        let expected: Vec<(usize, usize)> =
            (6..=12).chain(21..=22).map(|t| (0, t)).collect();
        assert_eq!(pairs, expected);
        // No window may straddle the gap between ranges even though their
        // union covers it.
        assert!(!pairs.contains(&(0, 13)));
        assert!(!pairs.contains(&(0, 16)));
    }

    #[test]
    fn pair_universe_drops_windows_with_no_targets() {
        let mut basin = learnable_basin(30);
        for t in 13..30 {
            basin.target_std[t] = None;
        }
        let config = ModelConfig { hindcast_length: 5, ..ModelConfig::desk_scale() };
        let ranges = [DateRange { start: date(1990, 1, 1), end: date(1990, 1, 30) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let pairs = valid_training_pairs(&slice, &config);
        // Issues 13..=22 cover only gap days; 12 still reaches day 12.
        assert!(pairs.contains(&(0, 12)));
        assert!(!pairs.iter().any(|&(_, t)| t >= 13));
    }

    #[test]
    fn adam_first_step_moves_by_signed_learning_rate() {
        // After one bias-corrected step, each coordinate moves by almost
        // exactly lr * sign(gradient), whatever the gradient magnitude.
        let config = ModelConfig { hidden_size: 2, ..ModelConfig::desk_scale() };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut state = ForecastModelState::init(&config, 3, 2, &mut rng);
        let before = state.clone();
        let mut adam = AdamState::new(&state.named_params());
        let grads: Vec<Tensor> = state
            .named_params()
            .iter()
            .enumerate()
            .map(|(i, (_, p))| {
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                Tensor::from_vec(p.shape().to_vec(), vec![sign * 0.37; p.numel()]).unwrap()
            })
            .collect();
        adam_step(&mut state, &mut adam, &grads, 1, 0.01);
        for (i, ((_, after), (_, prev))) in
            state.named_params().iter().zip(before.named_params().iter()).enumerate()
        {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            for (a, p) in after.data().iter().zip(prev.data()) {
                let moved = a - p;
                assert!(
                    (moved + sign * 0.01).abs() < 1e-6,
                    "param {i} moved {moved}, expected {}",
                    -sign * 0.01
                );
            }
        }
    }

    #[test]
    fn global_norm_clip_rescales_only_above_threshold() {
        let mut grads = vec![Tensor::vector(vec![3.0]), Tensor::vector(vec![4.0])];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert!((grads[0].data()[0] - 0.6).abs() < 1e-12);
        assert!((grads[1].data()[0] - 0.8).abs() < 1e-12);
        let mut small = vec![Tensor::vector(vec![0.3, 0.4])];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data(), &[0.3, 0.4]);
        // Disabled clipping leaves even large gradients alone.
        let mut big = vec![Tensor::vector(vec![30.0])];
        clip_global_norm(&mut big, 0.0);
        assert_eq!(big[0].data(), &[30.0]);
    }

    #[test]
    fn training_reduces_validation_nll_on_learnable_signal() {
        let basin = learnable_basin(160);
        let ranges = [DateRange { start: date(1990, 1, 1), end: date(1990, 6, 9) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let config = tiny_train_config();
        let model = train(&slice, &config, 7).unwrap();
        assert!(
            model.final_validation_nll < model.initial_validation_nll - 0.05,
            "no learning: {} -> {}",
            model.initial_validation_nll,
            model.final_validation_nll
        );
        assert_eq!(model.loss_trace.len(), config.training_steps);
        assert_eq!(model.records.len(), 3);
        assert!(model.records[0].learning_rate <= config.learning_rate);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let basin = learnable_basin(100);
        let ranges = [DateRange { start: date(1990, 1, 1), end: date(1990, 4, 10) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let config = ModelConfig { training_steps: 20, ..tiny_train_config() };
        let a = train(&slice, &config, 11).unwrap();
        let b = train(&slice, &config, 11).unwrap();
        for ((_, ta), (_, tb)) in a.state.named_params().iter().zip(b.state.named_params().iter())
        {
            let bits_a: Vec<u64> = ta.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = tb.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        let c = train(&slice, &config, 12).unwrap();
        assert_ne!(a.state.heads[0].w.data(), c.state.heads[0].w.data());
    }

    #[test]
    fn non_finite_loss_reports_divergence() {
        // A representable but enormous target overflows the scaled
        // residual, which the step check must catch and name.
        let mut basin = learnable_basin(60);
        for slot in basin.target_std.iter_mut() {
            *slot = Some(1.7e308);
        }
        let ranges = [DateRange { start: date(1990, 1, 1), end: date(1990, 3, 1) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let config = tiny_train_config();
        match train(&slice, &config, 3) {
            Err(ModelError::Divergence { step: 0, .. }) => {}
            other => panic!("expected divergence at step 0, got {other:?}"),
        }
    }

    #[test]
    fn empty_universe_is_an_error() {
        let basin = learnable_basin(30);
        // The range is shorter than one full window.
        let ranges = [DateRange { start: date(1990, 1, 2), end: date(1990, 1, 9) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let config = tiny_train_config();
        assert!(matches!(train(&slice, &config, 0), Err(ModelError::NoTrainingPairs)));
    }

    #[test]
    fn ensemble_members_differ_and_keep_seed_order() {
        let basin = learnable_basin(100);
        let ranges = [DateRange { start: date(1990, 1, 1), end: date(1990, 4, 10) }];
        let slice = TrainSlice { basins: std::slice::from_ref(&basin), train_ranges: &ranges };
        let config = ModelConfig { training_steps: 15, ..tiny_train_config() };
        let members = train_ensemble(&slice, &config, 100).unwrap();
        assert_eq!(members.len(), 2);
        assert_eq!(members[0].seed, 100);
        assert_eq!(members[1].seed, 101);
        assert_ne!(
            members[0].state.heads[0].w.data(),
            members[1].state.heads[0].w.data()
        );
        let again = train_ensemble(&slice, &config, 100).unwrap();
        assert_eq!(members[0].state.heads[0].w.data(), again[0].state.heads[0].w.data());
    }
}
