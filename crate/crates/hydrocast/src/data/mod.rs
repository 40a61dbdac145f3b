//! Basin data model and preprocessing.
//!
//! A basin lives on disk as one directory per gauge:
//!
//! ```text
//! <gauge_id>/
//!   forcings_<source>.csv   # date,var1,var2,...  one file per source
//!   discharge.csv           # date,q_mmday        area-normalized flow
//!   attributes.json         # {"name": value|null, ...}
//!   meta.json               # areas, continent, climate zone, terminal basin
//! ```
//!
//! Dates are ISO-8601 UTC days; a missing value is an empty CSV field.
//! Loading reindexes every series onto one contiguous daily calendar axis,
//! so downstream code never sees gaps in time, only explicitly missing
//! values. Duplicate or backwards dates are load errors, not repairs.
//!
//! Preprocessing is strictly train-aware: [`fit_transform`] learns
//! per-feature means and standard deviations from training gauges over
//! training date ranges only, and [`impute`] fills missing forcings first
//! from a configured fallback source for the same variable, then with the
//! training mean, flagging every filled cell so the model can see which
//! inputs are real.

mod inputs;
mod io;
mod transform;

pub use inputs::{build_inputs, build_inputs_all, build_schema, BasinInputs, ExcludedRecord, FeatureSchema};
pub use io::{load_basin, load_basin_dirs, write_basin};
pub use transform::{
    fit_transform, impute, DroppedFeature, FeatureStats, FeatureTransform, ImputationRecord,
    ImputePolicy, ImputeTag,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Meta { file: String, message: String },
    #[error("no forcings_<source>.csv files found in {dir}")]
    NoForcings { dir: String },
    #[error("feature {feature}: no data anywhere in the training slice")]
    NoTrainingData { feature: String },
    #[error("discharge has {0} training values; need at least 2 to standardize")]
    TargetTooShort(usize),
    #[error("discharge is constant over the training slice; cannot standardize")]
    ConstantTarget,
    #[error("gauge {gauge}: variable {variable} missing in all sources for the entire record")]
    VariableAbsent { gauge: String, variable: String },
    #[error("feature {feature} is not part of this transform")]
    UnknownFeature { feature: String },
}

/// Contiguous daily calendar axis shared by all series of a basin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarAxis {
    start: NaiveDate,
    len: usize,
}

impl CalendarAxis {
    pub fn new(start: NaiveDate, len: usize) -> Self {
        assert!(len > 0, "calendar axis must span at least one day");
        Self { start, len }
    }

    pub fn from_span(start: NaiveDate, end: NaiveDate) -> Self {
        assert!(end >= start, "axis end {end} precedes start {start}");
        Self { start, len: (end - start).num_days() as usize + 1 }
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn end(&self) -> NaiveDate {
        self.start + chrono::Duration::days(self.len as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        debug_assert!(index < self.len);
        self.start + chrono::Duration::days(index as i64)
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        if offset >= 0 && (offset as usize) < self.len {
            Some(offset as usize)
        } else {
            None
        }
    }

    /// Index span (inclusive) covered by `range`, clipped to the axis.
    pub fn clip(&self, range: &DateRange) -> Option<(usize, usize)> {
        let lo = range.start.max(self.start);
        let hi = range.end.min(self.end());
        if lo > hi {
            return None;
        }
        Some((self.index_of(lo).unwrap(), self.index_of(hi).unwrap()))
    }

    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.len).map(|i| self.date_at(i))
    }
}

/// Inclusive span of days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        assert!(start <= end, "date range {start}..{end} is backwards");
        Self { start, end }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }

    pub fn days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }

    pub fn intersect(&self, other: &DateRange) -> Option<DateRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(DateRange { start, end })
    }
}

/// All series of one meteorological source, aligned to the basin axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingSource {
    pub name: String,
    pub variables: Vec<String>,
    /// `columns[v][t]` is variable `v` on day `t`; `None` marks missing.
    pub columns: Vec<Vec<Option<f64>>>,
}

impl ForcingSource {
    pub fn column(&self, variable: &str) -> Option<&[Option<f64>]> {
        self.variables
            .iter()
            .position(|v| v == variable)
            .map(|i| self.columns[i].as_slice())
    }
}

/// Catchment attributes; `None` marks a missing value.
pub type AttributeVector = BTreeMap<String, Option<f64>>;

/// One gauge: metadata, forcings from every source, and observed discharge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinRecord {
    pub gauge_id: String,
    pub area_reported_km2: f64,
    pub area_polygon_km2: f64,
    pub continent: String,
    pub climate_zone: String,
    pub terminal_basin_id: String,
    pub axis: CalendarAxis,
    /// Sorted by source name; see [`ForcingSource`].
    pub forcings: Vec<ForcingSource>,
    /// Area-normalized discharge in mm/day, `None` where unobserved.
    pub discharge_mmday: Vec<Option<f64>>,
    pub attributes: AttributeVector,
}

impl BasinRecord {
    pub fn source(&self, name: &str) -> Option<&ForcingSource> {
        self.forcings.iter().find(|s| s.name == name)
    }

    /// Relative disagreement between reported and polygon drainage areas.
    pub fn area_mismatch_fraction(&self) -> f64 {
        (self.area_reported_km2 - self.area_polygon_km2).abs() / self.area_reported_km2
    }
}

/// Keep gauges whose reported and polygon drainage areas agree to within
/// `tolerance` (a fraction of the reported area). The boundary is
/// inclusive: a mismatch of exactly `tolerance` is kept.
pub fn filter_gauges(records: Vec<BasinRecord>, tolerance: f64) -> Vec<BasinRecord> {
    assert!(
        tolerance > 0.0 && tolerance < 1.0,
        "area tolerance must lie inside (0, 1), got {tolerance}"
    );
    records
        .into_iter()
        .filter(|r| r.area_mismatch_fraction() <= tolerance)
        .collect()
}

/// Row-major dense matrix of model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}
