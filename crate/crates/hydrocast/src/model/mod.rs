//! The streamflow forecaster.
//!
//! Architecture, in forward order:
//!
//! 1. A hindcast LSTM (the encoder) consumes one standardized forcing
//!    vector per day over the hindcast window, with static attributes
//!    concatenated to every timestep.
//! 2. Its final cell state passes through a linear layer, and its final
//!    hidden state through a tanh layer, to initialize the decoder. The
//!    transfer layers start as identity maps so training begins from
//!    plain state hand-off.
//! 3. A forecast LSTM (the decoder) steps once per lead day over the
//!    forecast-source inputs, never seeing its own discharge predictions.
//! 4. A linear head maps each decoder state to the three parameters of an
//!    asymmetric Laplace density over standardized discharge: location,
//!    scale (softplus plus a small floor), and asymmetry (sigmoid scaled
//!    into an open interval).
//!
//! Training minimizes the mean negative log-likelihood over unmasked
//! (issue date, lead) pairs with Adam, cosine learning-rate decay, and
//! global-norm gradient clipping. Prediction takes the closed-form median
//! of each member's density and averages the resulting hydrographs across
//! an ensemble of independently seeded members.

mod checkpoint;
mod config;
pub mod density;
mod forward;
mod predict;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use config::ModelConfig;
pub use density::DensityParams;
pub use forward::{
    assemble_batch, build_forward, build_nll_loss, extract_densities, run_decoder, run_encoder,
    stage_state, transfer_state, ForecastBatch, ForwardOutput, LstmNodes, StateNodes,
};
pub use predict::{predict_ensemble, valid_issue_indices, EnsembleForecast};
pub use train::{
    eval_nll, train, train_ensemble, valid_training_pairs, TrainRecord, TrainSlice, TrainedModel,
};

use crate::autodiff::{AutodiffError, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("non-finite value in model inputs")]
    NonFiniteInput,
    #[error("density parameters out of range: scale={scale}, asymmetry={asymmetry}")]
    BadDensity { scale: f64, asymmetry: f64 },
    #[error("no unmasked targets: nothing to score")]
    NoTargets,
    #[error("no (gauge, issue date) pairs with a full hindcast window in the training slice")]
    NoTrainingPairs,
    #[error("training diverged at step {step}: loss became non-finite (last finite loss {last_loss})")]
    Divergence { step: usize, last_loss: f64 },
    #[error("ensemble size mismatch: config says {expected}, got {got} members")]
    EnsembleMismatch { expected: usize, got: usize },
    #[error("issue index {index} lacks a full hindcast/horizon window (axis length {axis_len})")]
    BadIssueIndex { index: usize, axis_len: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint parameter {name}: expected shape {expected:?}, got {got:?}")]
    BadParamShape {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

/// Weights of one LSTM. Gates are packed along columns in the order
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    /// `[input_width x 4*hidden]`
    pub w_input: Tensor,
    /// `[hidden x 4*hidden]`
    pub w_hidden: Tensor,
    /// `[4*hidden]`
    pub bias: Tensor,
}

/// One affine layer `y = x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineWeights {
    pub w: Tensor,
    pub b: Tensor,
}

/// All learnable parameters of the forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModelState {
    pub encoder: LstmWeights,
    pub decoder: LstmWeights,
    pub cell_transfer: AffineWeights,
    pub hidden_transfer: AffineWeights,
    /// One shared head, or one per lead when configured.
    pub heads: Vec<AffineWeights>,
}

fn uniform_tensor<R: Rng>(rng: &mut R, shape: Vec<usize>, bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("shape/data agree by construction")
}

fn identity_matrix(n: usize) -> Tensor {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        data[i * n + i] = 1.0;
    }
    Tensor::from_vec(vec![n, n], data).unwrap()
}

fn lstm_init<R: Rng>(rng: &mut R, input_width: usize, hidden: usize) -> LstmWeights {
    let k_in = 1.0 / (input_width as f64).sqrt();
    let k_h = 1.0 / (hidden as f64).sqrt();
    let mut bias = vec![0.0; 4 * hidden];
    // Forget-gate bias starts at 1 so early training remembers by default.
    for b in bias.iter_mut().take(2 * hidden).skip(hidden) {
        *b = 1.0;
    }
    LstmWeights {
        w_input: uniform_tensor(rng, vec![input_width, 4 * hidden], k_in),
        w_hidden: uniform_tensor(rng, vec![hidden, 4 * hidden], k_h),
        bias: Tensor::vector(bias),
    }
}

impl ForecastModelState {
    /// Fresh parameters for the given input widths. `encoder_width` and
    /// `decoder_width` are the full per-timestep widths including statics.
    pub fn init<R: Rng>(
        config: &ModelConfig,
        encoder_width: usize,
        decoder_width: usize,
        rng: &mut R,
    ) -> Self {
        let h = config.hidden_size;
        let n_heads = if config.per_lead_heads { config.horizon_steps } else { 1 };
        let k_head = 1.0 / (h as f64).sqrt();
        ForecastModelState {
            encoder: lstm_init(rng, encoder_width, h),
            decoder: lstm_init(rng, decoder_width, h),
            cell_transfer: AffineWeights { w: identity_matrix(h), b: Tensor::vector(vec![0.0; h]) },
            hidden_transfer: AffineWeights { w: identity_matrix(h), b: Tensor::vector(vec![0.0; h]) },
            heads: (0..n_heads)
                .map(|_| AffineWeights {
                    w: uniform_tensor(rng, vec![h, 3], k_head),
                    b: Tensor::vector(vec![0.0; 3]),
                })
                .collect(),
        }
    }

    /// Parameters in a stable, named order. The order defines the layout
    /// of optimizer state and of gradients collected after backward.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("encoder.w_input".to_owned(), &self.encoder.w_input),
            ("encoder.w_hidden".to_owned(), &self.encoder.w_hidden),
            ("encoder.bias".to_owned(), &self.encoder.bias),
            ("decoder.w_input".to_owned(), &self.decoder.w_input),
            ("decoder.w_hidden".to_owned(), &self.decoder.w_hidden),
            ("decoder.bias".to_owned(), &self.decoder.bias),
            ("cell_transfer.w".to_owned(), &self.cell_transfer.w),
            ("cell_transfer.b".to_owned(), &self.cell_transfer.b),
            ("hidden_transfer.w".to_owned(), &self.hidden_transfer.w),
            ("hidden_transfer.b".to_owned(), &self.hidden_transfer.b),
        ];
        for (i, head) in self.heads.iter().enumerate() {
            out.push((format!("head{i}.w"), &head.w));
            out.push((format!("head{i}.b"), &head.b));
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![
            ("encoder.w_input".to_owned(), &mut self.encoder.w_input),
            ("encoder.w_hidden".to_owned(), &mut self.encoder.w_hidden),
            ("encoder.bias".to_owned(), &mut self.encoder.bias),
            ("decoder.w_input".to_owned(), &mut self.decoder.w_input),
            ("decoder.w_hidden".to_owned(), &mut self.decoder.w_hidden),
            ("decoder.bias".to_owned(), &mut self.decoder.bias),
            ("cell_transfer.w".to_owned(), &mut self.cell_transfer.w),
            ("cell_transfer.b".to_owned(), &mut self.cell_transfer.b),
            ("hidden_transfer.w".to_owned(), &mut self.hidden_transfer.w),
            ("hidden_transfer.b".to_owned(), &mut self.hidden_transfer.b),
        ];
        for (i, head) in self.heads.iter_mut().enumerate() {
            out.push((format!("head{i}.w"), &mut head.w));
            out.push((format!("head{i}.b"), &mut head.b));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn encoder_width(&self) -> usize {
        self.encoder.w_input.shape()[0]
    }

    pub fn decoder_width(&self) -> usize {
        self.decoder.w_input.shape()[0]
    }

    pub fn hidden_size(&self) -> usize {
        self.encoder.w_hidden.shape()[0]
    }
}
