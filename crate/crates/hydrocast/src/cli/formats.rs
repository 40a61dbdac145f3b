//! On-disk file formats shared across commands.
//!
//! Every tabular artifact has one row struct here so producers and
//! consumers agree on columns by construction. Undefined metric values
//! serialize as empty CSV fields and come back as `None`; they never
//! turn into zeros on the way through a file. External model archives
//! enter through the same prediction schema the native forecaster
//! writes, which is what keeps `compare` model-agnostic.

use super::CliError;
use crate::data::CalendarAxis;
use crate::evaluation::{EventScore, HydroMetrics, MatchCounts};
use crate::frequency::ReturnPeriodTable;
use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// One forecast value: the ensemble hydrograph for `issue_date` at
/// `lead_days` days ahead (lead 0 is the issue date itself).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub gauge_id: String,
    pub model: String,
    pub issue_date: NaiveDate,
    pub lead_days: usize,
    pub value: f64,
}

/// One fitted threshold of a return-period table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPeriodRow {
    pub gauge_id: String,
    pub source: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub threshold: f64,
    pub n_years: usize,
    pub mean_log: f64,
    pub std_log: f64,
    pub skew_log: f64,
}

impl ReturnPeriodRow {
    pub fn from_table(table: &ReturnPeriodTable) -> Vec<ReturnPeriodRow> {
        table
            .thresholds
            .iter()
            .map(|&(t, threshold)| ReturnPeriodRow {
                gauge_id: table.gauge_id.clone(),
                source: table.source.clone(),
                t,
                threshold,
                n_years: table.moments.n_years,
                mean_log: table.moments.mean_log,
                std_log: table.moments.std_log,
                skew_log: table.moments.skew_log,
            })
            .collect()
    }
}

/// One event-score row; undefined precision/recall/F1 stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScoreRow {
    pub gauge_id: String,
    pub model: String,
    #[serde(rename = "T")]
    pub t: f64,
    pub lead: usize,
    #[serde(rename = "TP")]
    pub tp: usize,
    #[serde(rename = "FP")]
    pub fp: usize,
    #[serde(rename = "FN")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl From<&EventScore> for EventScoreRow {
    fn from(score: &EventScore) -> Self {
        EventScoreRow {
            gauge_id: score.gauge_id.clone(),
            model: score.model.clone(),
            t: score.return_period,
            lead: score.lead_days,
            tp: score.counts.true_pos,
            fp: score.counts.false_pos,
            fn_: score.counts.false_neg,
            precision: score.precision,
            recall: score.recall,
            f1: score.f1,
        }
    }
}

impl EventScoreRow {
    pub fn into_score(self) -> EventScore {
        EventScore {
            gauge_id: self.gauge_id,
            model: self.model,
            return_period: self.t,
            lead_days: self.lead,
            counts: MatchCounts { true_pos: self.tp, false_pos: self.fp, false_neg: self.fn_ },
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
        }
    }
}

/// One gauge's hydrograph metrics at one lead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HydroMetricsRow {
    pub gauge_id: String,
    pub model: String,
    pub lead: usize,
    pub n_days: usize,
    pub nse: Option<f64>,
    pub log_nse: Option<f64>,
    pub alpha_nse: Option<f64>,
    pub beta_nse: Option<f64>,
    pub kge: Option<f64>,
    pub log_kge: Option<f64>,
    pub beta_kge: Option<f64>,
}

impl HydroMetricsRow {
    pub fn new(gauge_id: &str, model: &str, lead: usize, m: &HydroMetrics) -> Self {
        HydroMetricsRow {
            gauge_id: gauge_id.to_owned(),
            model: model.to_owned(),
            lead,
            n_days: m.n_days,
            nse: m.nse,
            log_nse: m.log_nse,
            alpha_nse: m.alpha_nse,
            beta_nse: m.beta_nse,
            kge: m.kge,
            log_kge: m.log_kge,
            beta_kge: m.beta_kge,
        }
    }
}

/// A unit of work a command skipped, with where and why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub gauge_id: String,
    pub stage: String,
    pub reason: String,
}

impl SkipEntry {
    pub fn new(gauge_id: &str, stage: &str, reason: impl Into<String>) -> Self {
        SkipEntry { gauge_id: gauge_id.to_owned(), stage: stage.to_owned(), reason: reason.into() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| parse_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| parse_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable output");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

/// Predictions regrouped for evaluation: per (gauge, lead), the dated
/// series of forecast values, each dated by issue date plus lead.
pub struct PredictionSet {
    pub model: String,
    pub series: BTreeMap<(String, usize), Vec<(NaiveDate, f64)>>,
}

pub fn group_predictions(rows: Vec<PredictionRow>) -> Result<PredictionSet, CliError> {
    let Some(first) = rows.first() else {
        return Err(CliError::Input("prediction file has no rows".to_owned()));
    };
    let model = first.model.clone();
    if let Some(other) = rows.iter().find(|r| r.model != model) {
        return Err(CliError::Input(format!(
            "prediction file mixes models {model} and {}; compare takes one archive per side",
            other.model
        )));
    }
    let mut series: BTreeMap<(String, usize), Vec<(NaiveDate, f64)>> = BTreeMap::new();
    for row in rows {
        let date = row.issue_date + chrono::Duration::days(row.lead_days as i64);
        series.entry((row.gauge_id, row.lead_days)).or_default().push((date, row.value));
    }
    for entries in series.values_mut() {
        entries.sort_by_key(|&(d, _)| d);
    }
    Ok(PredictionSet { model, series })
}

/// Spread dated values onto a calendar axis; days without a prediction
/// stay `None`. Latest write wins on duplicate dates.
pub fn series_on_axis(entries: &[(NaiveDate, f64)], axis: &CalendarAxis) -> Vec<Option<f64>> {
    let mut out = vec![None; axis.len()];
    for &(date, value) in entries {
        if let Some(i) = axis.index_of(date) {
            out[i] = Some(value);
        }
    }
    out
}
