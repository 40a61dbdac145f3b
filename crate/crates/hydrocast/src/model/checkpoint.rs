//! Checkpoint files: one JSON document bundling everything a later
//! forecast run needs. Loading restores bit-identical parameters (JSON
//! floats round-trip through serde_json at full precision) and validates
//! every tensor shape against the stored config and schema, so a corrupt
//! or mismatched file fails loudly instead of mis-multiplying.

use super::{ModelConfig, ModelError, TrainedModel};
use crate::data::{FeatureSchema, FeatureTransform, ImputePolicy};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// A trained ensemble plus the preprocessing needed to reuse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub schema: FeatureSchema,
    pub transform: FeatureTransform,
    pub impute_policy: ImputePolicy,
    /// Sources whose features feed the decoder.
    pub forecast_sources: Vec<String>,
    pub members: Vec<TrainedModel>,
}

impl Checkpoint {
    pub fn new(
        config: ModelConfig,
        schema: FeatureSchema,
        transform: FeatureTransform,
        impute_policy: ImputePolicy,
        forecast_sources: Vec<String>,
        members: Vec<TrainedModel>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config,
            schema,
            transform,
            impute_policy,
            forecast_sources,
            members,
        }
    }

    pub fn encoder_width(&self) -> usize {
        self.schema.hindcast_width() + self.schema.statics.len()
    }

    pub fn decoder_width(&self) -> usize {
        self.schema.forecast_width()
            + if self.config.statics_to_decoder { self.schema.statics.len() } else { 0 }
    }

    /// Every tensor must match the dimensions implied by config + schema.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "format version {} unsupported (this build reads {})",
                self.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        self.config.validate()?;
        if self.members.len() != self.config.ensemble_size {
            return Err(ModelError::EnsembleMismatch {
                expected: self.config.ensemble_size,
                got: self.members.len(),
            });
        }
        let h = self.config.hidden_size;
        let expect = |name: String, got: &[usize], want: &[usize]| -> Result<(), ModelError> {
            if got != want {
                return Err(ModelError::BadParamShape {
                    name,
                    expected: want.to_vec(),
                    got: got.to_vec(),
                });
            }
            Ok(())
        };
        let n_heads = if self.config.per_lead_heads { self.config.horizon_steps } else { 1 };
        for (m, member) in self.members.iter().enumerate() {
            let s = &member.state;
            let tag = |n: &str| format!("member{m}.{n}");
            expect(tag("encoder.w_input"), s.encoder.w_input.shape(), &[self.encoder_width(), 4 * h])?;
            expect(tag("encoder.w_hidden"), s.encoder.w_hidden.shape(), &[h, 4 * h])?;
            expect(tag("encoder.bias"), s.encoder.bias.shape(), &[4 * h])?;
            expect(tag("decoder.w_input"), s.decoder.w_input.shape(), &[self.decoder_width(), 4 * h])?;
            expect(tag("decoder.w_hidden"), s.decoder.w_hidden.shape(), &[h, 4 * h])?;
            expect(tag("decoder.bias"), s.decoder.bias.shape(), &[4 * h])?;
            expect(tag("cell_transfer.w"), s.cell_transfer.w.shape(), &[h, h])?;
            expect(tag("cell_transfer.b"), s.cell_transfer.b.shape(), &[h])?;
            expect(tag("hidden_transfer.w"), s.hidden_transfer.w.shape(), &[h, h])?;
            expect(tag("hidden_transfer.b"), s.hidden_transfer.b.shape(), &[h])?;
            if s.heads.len() != n_heads {
                return Err(ModelError::Checkpoint(format!(
                    "member {m} has {} heads, config implies {n_heads}",
                    s.heads.len()
                )));
            }
            for (i, head) in s.heads.iter().enumerate() {
                expect(tag(&format!("head{i}.w")), head.w.shape(), &[h, 3])?;
                expect(tag(&format!("head{i}.b")), head.b.shape(), &[3])?;
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    checkpoint.validate()?;
    let text = serde_json::to_string(checkpoint)
        .map_err(|e| ModelError::Checkpoint(format!("serialize: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| ModelError::Checkpoint(format!("write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ModelError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| ModelError::Checkpoint(format!("parse {}: {e}", path.display())))?;
    checkpoint.validate()?;
    Ok(checkpoint)
}
