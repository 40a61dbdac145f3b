//! Train-only standardization and flag-carrying imputation.
//!
//! Feature statistics come exclusively from the training slice (training
//! gauges over training date ranges); applying them elsewhere is what
//! keeps test data out of the model's input distribution. Forcing
//! features are keyed `"<source>.<variable>"`; attributes by name.

use super::{BasinRecord, DataError, DateRange, DenseMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: f64,
    pub std: f64,
}

impl FeatureStats {
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }
}

/// A feature excluded from the model inputs, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub name: String,
    pub reason: String,
}

/// Per-feature standardization parameters fitted on the training slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTransform {
    /// Forcing features, keyed `"<source>.<variable>"`.
    pub forcings: BTreeMap<String, FeatureStats>,
    /// Static catchment attributes, keyed by name.
    pub attributes: BTreeMap<String, FeatureStats>,
    /// Discharge statistics, used to standardize targets and to map
    /// model outputs back to mm/day.
    pub target: FeatureStats,
    /// Features excluded because they carry no usable signal.
    pub dropped: Vec<DroppedFeature>,
}

/// Numerically stable running mean/variance.
#[derive(Default, Clone)]
struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn sample_std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).sqrt()
        }
    }
}

fn forcing_key(source: &str, variable: &str) -> String {
    format!("{source}.{variable}")
}

/// Fit standardization statistics on `records` restricted to
/// `train_ranges`. Features with no data or zero variance in the training
/// slice are dropped (and reported in [`FeatureTransform::dropped`]);
/// a constant or absent discharge record is an error because the target
/// cannot be standardized at all.
pub fn fit_transform(
    records: &[BasinRecord],
    train_ranges: &[DateRange],
) -> Result<FeatureTransform, DataError> {
    let mut forcing_acc: BTreeMap<String, Welford> = BTreeMap::new();
    let mut attr_acc: BTreeMap<String, Welford> = BTreeMap::new();
    let mut target_acc = Welford::default();

    for record in records {
        let spans: Vec<(usize, usize)> =
            train_ranges.iter().filter_map(|r| record.axis.clip(r)).collect();
        for source in &record.forcings {
            for (vi, variable) in source.variables.iter().enumerate() {
                let acc = forcing_acc.entry(forcing_key(&source.name, variable)).or_default();
                for &(lo, hi) in &spans {
                    for t in lo..=hi {
                        if let Some(v) = source.columns[vi][t] {
                            acc.push(v);
                        }
                    }
                }
            }
        }
        for &(lo, hi) in &spans {
            for t in lo..=hi {
                if let Some(q) = record.discharge_mmday[t] {
                    target_acc.push(q);
                }
            }
        }
        for (name, value) in &record.attributes {
            let acc = attr_acc.entry(name.clone()).or_default();
            if let Some(v) = value {
                acc.push(*v);
            }
        }
    }

    let mut dropped = Vec::new();
    let mut keep = |name: String, acc: &Welford| -> Option<FeatureStats> {
        if acc.n == 0 {
            dropped.push(DroppedFeature { name, reason: "no data in training slice".into() });
            return None;
        }
        let std = acc.sample_std();
        if std == 0.0 {
            dropped.push(DroppedFeature { name, reason: "zero variance in training slice".into() });
            return None;
        }
        Some(FeatureStats { mean: acc.mean, std })
    };

    let mut forcings = BTreeMap::new();
    for (name, acc) in &forcing_acc {
        if let Some(stats) = keep(name.clone(), acc) {
            forcings.insert(name.clone(), stats);
        }
    }
    let mut attributes = BTreeMap::new();
    for (name, acc) in &attr_acc {
        if let Some(stats) = keep(name.clone(), acc) {
            attributes.insert(name.clone(), stats);
        }
    }

    if target_acc.n < 2 {
        return Err(DataError::TargetTooShort(target_acc.n as usize));
    }
    let target_std = target_acc.sample_std();
    if target_std == 0.0 {
        return Err(DataError::ConstantTarget);
    }

    Ok(FeatureTransform {
        forcings,
        attributes,
        target: FeatureStats { mean: target_acc.mean, std: target_std },
        dropped,
    })
}

/// Where an imputed cell's value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImputeTag {
    Observed,
    /// Same variable taken from a fallback source.
    Substituted,
    /// Training mean (standardized zero).
    MeanFilled,
}

/// Per-feature, per-day record of what `impute` did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationRecord {
    pub feature_keys: Vec<String>,
    /// `tags[f][t]` for feature `f` on day `t`.
    pub tags: Vec<Vec<ImputeTag>>,
}

impl ImputationRecord {
    pub fn flag(&self, feature: usize, t: usize) -> f64 {
        if self.tags[feature][t] == ImputeTag::Observed {
            0.0
        } else {
            1.0
        }
    }

    pub fn filled_cells(&self) -> usize {
        self.tags
            .iter()
            .map(|col| col.iter().filter(|&&t| t != ImputeTag::Observed).count())
            .sum()
    }
}

/// Fallback source order for cross-source substitution, keyed by the
/// source whose gaps are being filled. Sources absent from the map fall
/// straight through to mean filling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputePolicy {
    pub fallback_sources: BTreeMap<String, Vec<String>>,
}

impl ImputePolicy {
    pub fn with_fallback(mut self, source: &str, fallbacks: &[&str]) -> Self {
        self.fallback_sources
            .insert(source.to_owned(), fallbacks.iter().map(|s| (*s).to_owned()).collect());
        self
    }
}

/// Standardize every retained forcing feature of `record` and fill its
/// gaps: first from fallback sources carrying the same variable, then
/// with the training mean. Returns the dense input block (standardized
/// values for each feature, then one 0/1 flag column per feature, in the
/// same order) plus the per-cell provenance.
///
/// A variable with no data in any source over the whole record makes the
/// record unusable and is reported as [`DataError::VariableAbsent`].
pub fn impute(
    record: &BasinRecord,
    transform: &FeatureTransform,
    policy: &ImputePolicy,
) -> Result<(DenseMatrix, ImputationRecord), DataError> {
    let t_len = record.axis.len();
    let keys: Vec<String> = transform.forcings.keys().cloned().collect();
    let n_feat = keys.len();
    let mut matrix = DenseMatrix::zeros(t_len, 2 * n_feat);
    let mut tags: Vec<Vec<ImputeTag>> = vec![vec![ImputeTag::Observed; t_len]; n_feat];

    for (f, key) in keys.iter().enumerate() {
        let (source_name, variable) = key
            .split_once('.')
            .expect("forcing keys are always source.variable");
        let stats = &transform.forcings[key];
        let own = record.source(source_name).and_then(|s| s.column(variable));
        let fallbacks: Vec<&[Option<f64>]> = policy
            .fallback_sources
            .get(source_name)
            .map(|names| {
                names
                    .iter()
                    .filter_map(|n| record.source(n).and_then(|s| s.column(variable)))
                    .collect()
            })
            .unwrap_or_default();

        let any_data = own.map_or(false, |col| col.iter().any(Option::is_some))
            || fallbacks.iter().any(|col| col.iter().any(Option::is_some));
        if !any_data {
            return Err(DataError::VariableAbsent {
                gauge: record.gauge_id.clone(),
                variable: key.clone(),
            });
        }

        for t in 0..t_len {
            let (value, tag) = if let Some(v) = own.and_then(|col| col[t]) {
                (v, ImputeTag::Observed)
            } else if let Some(v) = fallbacks.iter().find_map(|col| col[t]) {
                (v, ImputeTag::Substituted)
            } else {
                (stats.mean, ImputeTag::MeanFilled)
            };
            matrix.set(t, f, stats.standardize(value));
            matrix.set(t, n_feat + f, if tag == ImputeTag::Observed { 0.0 } else { 1.0 });
            tags[f][t] = tag;
        }
    }

    Ok((matrix, ImputationRecord { feature_keys: keys, tags }))
}
