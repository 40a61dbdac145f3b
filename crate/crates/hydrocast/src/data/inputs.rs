//! Assembly of per-basin model input blocks.
//!
//! The forecaster sees two views of the same daily axis: the hindcast
//! block (every source's standardized forcings plus imputation flags) and
//! the forecast block (the same layout restricted to the designated
//! forecast sources, which stand in for the meteorological forecast the
//! decoder consumes). Standardized static attributes are appended to both
//! at model time, once per timestep.

use super::{
    impute, BasinRecord, CalendarAxis, DataError, DenseMatrix, FeatureTransform, ImputePolicy,
    ImputationRecord,
};
use serde::{Deserialize, Serialize};

/// Ordered input feature names; flag columns carry a `#flag` suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub hindcast: Vec<String>,
    pub forecast: Vec<String>,
    pub statics: Vec<String>,
}

impl FeatureSchema {
    pub fn hindcast_width(&self) -> usize {
        self.hindcast.len()
    }

    pub fn forecast_width(&self) -> usize {
        self.forecast.len()
    }
}

/// Column layout produced by [`build_inputs`] for a given transform.
pub fn build_schema(transform: &FeatureTransform, forecast_sources: &[String]) -> FeatureSchema {
    let keys: Vec<String> = transform.forcings.keys().cloned().collect();
    let mut hindcast: Vec<String> = keys.clone();
    hindcast.extend(keys.iter().map(|k| format!("{k}#flag")));
    let fc_keys: Vec<&String> = keys
        .iter()
        .filter(|k| {
            forecast_sources
                .iter()
                .any(|s| k.starts_with(&format!("{s}.")))
        })
        .collect();
    let mut forecast: Vec<String> = fc_keys.iter().map(|k| (*k).clone()).collect();
    forecast.extend(fc_keys.iter().map(|k| format!("{k}#flag")));
    FeatureSchema {
        hindcast,
        forecast,
        statics: transform.attributes.keys().cloned().collect(),
    }
}

/// Model-ready view of one basin.
#[derive(Debug, Clone)]
pub struct BasinInputs {
    pub gauge_id: String,
    pub axis: CalendarAxis,
    /// `[t][hindcast features]`: standardized values then flags.
    pub hindcast: DenseMatrix,
    /// `[t][forecast features]`: the forecast-source subset.
    pub forecast: DenseMatrix,
    /// Standardized attributes in schema order (missing -> training mean).
    pub statics: Vec<f64>,
    /// Standardized discharge, `None` where unobserved.
    pub target_std: Vec<Option<f64>>,
    pub imputation: ImputationRecord,
}

/// Build the input blocks for one basin. The forecast block reuses the
/// imputed hindcast columns, so both views agree cell-for-cell on shared
/// features.
pub fn build_inputs(
    record: &BasinRecord,
    transform: &FeatureTransform,
    policy: &ImputePolicy,
    forecast_sources: &[String],
) -> Result<BasinInputs, DataError> {
    let (hindcast, imputation) = impute(record, transform, policy)?;
    let keys = &imputation.feature_keys;
    let n_feat = keys.len();
    let t_len = record.axis.len();

    let fc_indices: Vec<usize> = keys
        .iter()
        .enumerate()
        .filter(|(_, k)| {
            forecast_sources
                .iter()
                .any(|s| k.starts_with(&format!("{s}.")))
        })
        .map(|(i, _)| i)
        .collect();
    let mut forecast = DenseMatrix::zeros(t_len, 2 * fc_indices.len());
    for t in 0..t_len {
        for (j, &f) in fc_indices.iter().enumerate() {
            forecast.set(t, j, hindcast.at(t, f));
            forecast.set(t, fc_indices.len() + j, hindcast.at(t, n_feat + f));
        }
    }

    let statics: Vec<f64> = transform
        .attributes
        .iter()
        .map(|(name, stats)| {
            record
                .attributes
                .get(name)
                .copied()
                .flatten()
                .map_or(0.0, |v| stats.standardize(v))
        })
        .collect();

    let target_std: Vec<Option<f64>> = record
        .discharge_mmday
        .iter()
        .map(|q| q.map(|v| transform.target.standardize(v)))
        .collect();

    Ok(BasinInputs {
        gauge_id: record.gauge_id.clone(),
        axis: record.axis,
        hindcast,
        forecast,
        statics,
        target_std,
        imputation,
    })
}

/// A record excluded from model input assembly, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedRecord {
    pub gauge_id: String,
    pub reason: String,
}

/// Build inputs for every record, collecting per-record exclusions
/// (currently: variables absent from all sources) instead of aborting.
pub fn build_inputs_all(
    records: &[BasinRecord],
    transform: &FeatureTransform,
    policy: &ImputePolicy,
    forecast_sources: &[String],
) -> Result<(Vec<BasinInputs>, Vec<ExcludedRecord>), DataError> {
    let mut inputs = Vec::with_capacity(records.len());
    let mut excluded = Vec::new();
    for record in records {
        match build_inputs(record, transform, policy, forecast_sources) {
            Ok(b) => inputs.push(b),
            Err(e @ DataError::VariableAbsent { .. }) => excluded.push(ExcludedRecord {
                gauge_id: record.gauge_id.clone(),
                reason: e.to_string(),
            }),
            Err(other) => return Err(other),
        }
    }
    Ok((inputs, excluded))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_transform, DateRange, ForcingSource};
    use chrono::NaiveDate;
    use std::collections::BTreeMap;

    fn date(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn two_source_record() -> BasinRecord {
        BasinRecord {
            gauge_id: "g".into(),
            area_reported_km2: 10.0,
            area_polygon_km2: 10.0,
            continent: "AF".into(),
            climate_zone: "BWh".into(),
            terminal_basin_id: "t".into(),
            axis: CalendarAxis::new(date("2000-01-01"), 4),
            forcings: vec![
                ForcingSource {
                    name: "fc".into(),
                    variables: vec!["precip".into(), "tmean".into()],
                    columns: vec![
                        vec![Some(0.0), Some(2.0), None, Some(5.0)],
                        vec![Some(10.0), Some(11.0), Some(14.0), Some(12.0)],
                    ],
                },
                ForcingSource {
                    name: "re".into(),
                    variables: vec!["precip".into(), "tmean".into()],
                    columns: vec![
                        vec![Some(0.1), Some(1.9), Some(3.0), Some(4.8)],
                        vec![Some(9.0), Some(12.0), Some(13.0), Some(11.0)],
                    ],
                },
            ],
            discharge_mmday: vec![Some(0.5), Some(1.0), Some(2.0), None],
            attributes: BTreeMap::from([
                ("area".to_owned(), Some(10.0)),
                ("slope".to_owned(), None),
            ]),
        }
    }

    #[test]
    fn schema_and_blocks_are_consistent() {
        let records = vec![two_source_record(), {
            let mut r = two_source_record();
            r.gauge_id = "h".into();
            r.attributes.insert("area".into(), Some(30.0));
            r.attributes.insert("slope".into(), Some(2.0));
            r.discharge_mmday = vec![Some(1.5), Some(0.25), Some(0.75), Some(3.0)];
            r
        }];
        let ranges = vec![DateRange::new(date("2000-01-01"), date("2000-01-04"))];
        let transform = fit_transform(&records, &ranges).unwrap();
        let policy = ImputePolicy::default().with_fallback("fc", &["re"]);
        let sources = vec!["fc".to_owned()];
        let schema = build_schema(&transform, &sources);
        let built = build_inputs(&records[0], &transform, &policy, &sources).unwrap();

        assert_eq!(built.hindcast.cols, schema.hindcast_width());
        assert_eq!(built.forecast.cols, schema.forecast_width());
        assert_eq!(built.statics.len(), schema.statics.len());
        // Forecast block carries only fc.* columns (values + flags).
        assert_eq!(schema.forecast, vec![
            "fc.precip".to_owned(),
            "fc.tmean".to_owned(),
            "fc.precip#flag".to_owned(),
            "fc.tmean#flag".to_owned(),
        ]);
        // The gap in fc.precip on day 2 is flagged in both blocks.
        let f = schema.hindcast.iter().position(|k| k == "fc.precip").unwrap();
        let nf = transform.forcings.len();
        assert_eq!(built.hindcast.at(2, nf + f), 1.0);
        let jf = 0; // fc.precip is the first forecast column
        assert_eq!(built.forecast.at(2, 2 + jf), 1.0);
        assert_eq!(built.forecast.at(2, jf), built.hindcast.at(2, f));
    }

    #[test]
    fn missing_static_standardizes_to_zero() {
        let mut other = two_source_record();
        other.gauge_id = "h".into();
        other.attributes.insert("area".into(), Some(30.0));
        other.attributes.insert("slope".into(), Some(2.0));
        let mut third = two_source_record();
        third.gauge_id = "i".into();
        third.attributes.insert("area".into(), Some(20.0));
        third.attributes.insert("slope".into(), Some(4.0));
        let records = vec![two_source_record(), other, third];
        let ranges = vec![DateRange::new(date("2000-01-01"), date("2000-01-04"))];
        let transform = fit_transform(&records, &ranges).unwrap();
        let policy = ImputePolicy::default();
        let built = build_inputs(&records[0], &transform, &policy, &["fc".to_owned()]).unwrap();
        let slope_idx = transform.attributes.keys().position(|k| k == "slope").unwrap();
        assert_eq!(built.statics[slope_idx], 0.0);
    }

    #[test]
    fn target_is_standardized_and_keeps_gaps() {
        let records = vec![two_source_record(), {
            let mut r = two_source_record();
            r.gauge_id = "h".into();
            r.discharge_mmday = vec![Some(1.5), Some(0.25), Some(0.75), Some(3.0)];
            r
        }];
        let ranges = vec![DateRange::new(date("2000-01-01"), date("2000-01-04"))];
        let transform = fit_transform(&records, &ranges).unwrap();
        let built = build_inputs(
            &records[0],
            &transform,
            &ImputePolicy::default(),
            &["fc".to_owned()],
        )
        .unwrap();
        assert_eq!(built.target_std[3], None);
        let z = built.target_std[0].unwrap();
        assert!((transform.target.invert(z) - 0.5).abs() < 1e-12);
    }
}
