//! Ensemble prediction.
//!
//! Each member produces a full predictive density per (issue date, lead).
//! The member's point hydrograph is the closed-form median of that
//! density, destandardized back to physical units. The ensemble forecast
//! is the elementwise mean of the member hydrographs. Densities are kept
//! alongside the points so callers can also read quantiles per member.

use super::forward::{assemble_batch, build_forward, extract_densities, stage_state};
use super::{DensityParams, ModelConfig, ModelError, TrainedModel};
use crate::autodiff::Graph;
use crate::data::{BasinInputs, DateRange, FeatureStats};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Forecasts for one gauge over a set of issue dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleForecast {
    pub gauge_id: String,
    pub issue_dates: Vec<NaiveDate>,
    /// `median_mmday[i][lead]`: ensemble-mean of member median
    /// hydrographs, physical units.
    pub median_mmday: Vec<Vec<f64>>,
    /// `member_densities[m][i][lead]` over standardized discharge.
    pub member_densities: Vec<Vec<Vec<DensityParams>>>,
    /// Observed discharge aligned with the forecasts, when present:
    /// `observed_mmday[i][lead]`.
    pub observed_mmday: Vec<Vec<Option<f64>>>,
}

impl EnsembleForecast {
    pub fn horizon(&self) -> usize {
        self.median_mmday.first().map_or(0, Vec::len)
    }
}

/// Issue indices inside `range` whose full window fits the basin's axis.
/// Every day of the range becomes an issue date when possible, so scoring
/// covers the whole evaluation period.
pub fn valid_issue_indices(
    inputs: &BasinInputs,
    config: &ModelConfig,
    range: &DateRange,
) -> Vec<usize> {
    let Some((lo, hi)) = inputs.axis.clip(range) else {
        return Vec::new();
    };
    let t_min = lo.max(config.hindcast_length.saturating_sub(1));
    let t_max = hi.min(inputs.axis.len().saturating_sub(config.horizon_steps));
    if t_min > t_max {
        return Vec::new();
    }
    (t_min..=t_max).collect()
}

/// How many issues one prediction graph holds. Bounds tape memory while
/// keeping the matmuls wide enough to amortize.
const PREDICT_CHUNK: usize = 32;

/// Forecast one gauge at the given issue indices with a whole ensemble.
pub fn predict_ensemble(
    members: &[TrainedModel],
    inputs: &BasinInputs,
    issues: &[usize],
    target_stats: &FeatureStats,
    config: &ModelConfig,
) -> Result<EnsembleForecast, ModelError> {
    if members.len() != config.ensemble_size {
        return Err(ModelError::EnsembleMismatch {
            expected: config.ensemble_size,
            got: members.len(),
        });
    }
    assert!(!issues.is_empty(), "no issue dates to forecast");
    let horizon = config.horizon_steps;

    let mut member_densities: Vec<Vec<Vec<DensityParams>>> = Vec::with_capacity(members.len());
    for member in members {
        let mut rows: Vec<Vec<DensityParams>> = Vec::with_capacity(issues.len());
        for chunk in issues.chunks(PREDICT_CHUNK) {
            let pairs: Vec<(&BasinInputs, usize)> = chunk.iter().map(|&t| (inputs, t)).collect();
            let batch = assemble_batch(&pairs, config)?;
            let mut g = Graph::new();
            let nodes = stage_state(&mut g, &member.state);
            let out = build_forward(&mut g, &nodes, &batch, config)?;
            rows.extend(extract_densities(&g, &out));
        }
        member_densities.push(rows);
    }

    let n_members = members.len() as f64;
    let median_mmday: Vec<Vec<f64>> = (0..issues.len())
        .map(|i| {
            (0..horizon)
                .map(|lead| {
                    member_densities
                        .iter()
                        .map(|m| target_stats.invert(m[i][lead].median()))
                        .sum::<f64>()
                        / n_members
                })
                .collect()
        })
        .collect();

    let observed_mmday: Vec<Vec<Option<f64>>> = issues
        .iter()
        .map(|&t| {
            (0..horizon)
                .map(|lead| inputs.target_std[t + lead].map(|z| target_stats.invert(z)))
                .collect()
        })
        .collect();

    Ok(EnsembleForecast {
        gauge_id: inputs.gauge_id.clone(),
        issue_dates: issues.iter().map(|&t| inputs.axis.date_at(t)).collect(),
        median_mmday,
        member_densities,
        observed_mmday,
    })
}
