//! Model and training hyperparameters.

use super::ModelError;
use serde::{Deserialize, Serialize};

/// Everything the forecaster needs beyond the data itself. The default
/// is the full-scale configuration; [`ModelConfig::desk_scale`] shrinks
/// it to something a laptop trains in minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Days of history the encoder consumes before the issue date.
    pub hindcast_length: usize,
    /// Decoder steps. Lead 0 is the issue date itself.
    pub horizon_steps: usize,
    pub hidden_size: usize,
    pub batch_size: usize,
    pub training_steps: usize,
    pub learning_rate: f64,
    /// Cosine decay from `learning_rate` to zero over the full run.
    pub cosine_decay: bool,
    /// Global gradient norm ceiling. Zero or negative disables clipping.
    pub grad_clip_norm: f64,
    /// Probe the validation NLL every this many steps.
    pub validation_interval: usize,
    /// How many (gauge, issue) pairs the validation probe scores.
    pub validation_pairs: usize,
    pub ensemble_size: usize,
    /// Append static attributes to decoder inputs, not only encoder inputs.
    pub statics_to_decoder: bool,
    /// One output head per lead instead of a single shared head.
    pub per_lead_heads: bool,
    /// Additive floor on the density scale after softplus.
    pub scale_floor: f64,
    /// Keeps the asymmetry parameter inside (margin, 1 - margin).
    pub asymmetry_margin: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hindcast_length: 365,
            horizon_steps: 8,
            hidden_size: 256,
            batch_size: 256,
            training_steps: 50_000,
            learning_rate: 1e-3,
            cosine_decay: true,
            grad_clip_norm: 1.0,
            validation_interval: 1_000,
            validation_pairs: 256,
            ensemble_size: 3,
            statics_to_decoder: true,
            per_lead_heads: false,
            scale_floor: 1e-6,
            asymmetry_margin: 1e-4,
        }
    }
}

impl ModelConfig {
    /// A configuration sized for synthetic data on one desktop core:
    /// short hindcast, small hidden state, few steps. Everything else
    /// keeps the full-scale value.
    pub fn desk_scale() -> Self {
        ModelConfig {
            hindcast_length: 90,
            hidden_size: 32,
            batch_size: 16,
            training_steps: 2_000,
            validation_interval: 500,
            validation_pairs: 64,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        fn bad(msg: impl Into<String>) -> Result<(), ModelError> {
            Err(ModelError::InvalidConfig(msg.into()))
        }
        if self.hindcast_length == 0 {
            return bad("hindcast_length must be positive");
        }
        if self.horizon_steps == 0 {
            return bad("horizon_steps must be positive");
        }
        if self.hidden_size == 0 {
            return bad("hidden_size must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be finite and positive, got {}", self.learning_rate));
        }
        if self.validation_interval == 0 {
            return bad("validation_interval must be positive");
        }
        if !(self.scale_floor.is_finite() && self.scale_floor >= 0.0) {
            return bad(format!("scale_floor must be finite and nonnegative, got {}", self.scale_floor));
        }
        if !(self.asymmetry_margin > 0.0 && self.asymmetry_margin < 0.5) {
            return bad(format!(
                "asymmetry_margin must sit strictly between 0 and 0.5, got {}",
                self.asymmetry_margin
            ));
        }
        Ok(())
    }
}
