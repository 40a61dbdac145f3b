//! Leakage-safe train/test split plans over gauges and time.
//!
//! Spatial generalization is probed by holding out whole gauges, either
//! k random folds or one fold per label (continent, climate zone,
//! terminal basin, so hydrologically connected gauges never straddle
//! the split). Temporal generalization holds out contiguous windows and
//! additionally discards training days within a buffer of any test day,
//! because an encoder that reads a year of history can leak across a
//! bare boundary. A split plan is the cross product of the two: every
//! spatial fold is paired with every temporal fold, so each (gauge,
//! day) cell is tested exactly once per temporal slice.

use crate::data::{BasinRecord, DateRange};
use chrono::Duration;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Days excluded around every test window; matches the longest history
/// the forecaster reads.
pub const TEMPORAL_BUFFER_DAYS: i64 = 365;

#[derive(Debug, Error)]
pub enum CvError {
    #[error("cannot split {n} gauges into {k} folds")]
    TooManyFolds { k: usize, n: usize },
    #[error("fold count must be at least 1")]
    ZeroFolds,
    #[error("gauges missing a {key} label: {gauges:?}")]
    UnlabeledGauges { key: String, gauges: Vec<String> },
    #[error(
        "temporal split infeasible: span of {span_days} days leaves a fold with no training days; \
         need at least {required_days} days for {n_folds} folds with a {buffer_days}-day buffer"
    )]
    InfeasibleTemporal { span_days: i64, required_days: i64, n_folds: usize, buffer_days: i64 },
    #[error("test window {test:?} not contained in data range {range:?}")]
    WindowOutsideRange { test: DateRange, range: DateRange },
}

/// Shuffle gauges under the seed, then chunk into k near-equal folds;
/// the first `n mod k` folds take one extra gauge.
pub fn random_spatial_folds(
    gauge_ids: &[String],
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<String>>, CvError> {
    if k == 0 {
        return Err(CvError::ZeroFolds);
    }
    if k > gauge_ids.len() {
        return Err(CvError::TooManyFolds { k, n: gauge_ids.len() });
    }
    let mut shuffled: Vec<String> = gauge_ids.to_vec();
    shuffled.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut offset = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut fold: Vec<String> = shuffled[offset..offset + size].to_vec();
        fold.sort();
        folds.push(fold);
        offset += size;
    }
    Ok(folds)
}

/// One fold per distinct label value, so labeled groups never straddle
/// train and test. Gauges with an empty label are rejected by name.
pub fn grouped_folds(
    gauges: &[(String, String)],
    key_name: &str,
) -> Result<Vec<(String, Vec<String>)>, CvError> {
    let unlabeled: Vec<String> = gauges
        .iter()
        .filter(|(_, label)| label.is_empty())
        .map(|(id, _)| id.clone())
        .collect();
    if !unlabeled.is_empty() {
        return Err(CvError::UnlabeledGauges { key: key_name.to_owned(), gauges: unlabeled });
    }
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, label) in gauges {
        groups.entry(label.clone()).or_default().push(id.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(label, mut ids)| {
            ids.sort();
            (label, ids)
        })
        .collect())
}

/// Test window plus the training ranges that survive the buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalFold {
    pub test: DateRange,
    pub train: Vec<DateRange>,
}

/// Training ranges for one explicit test window: the rest of the data
/// range, pulled back from the window by the buffer on both sides. A
/// zero buffer leaves training abutting the window without overlap.
pub fn temporal_fold_for_window(
    range: &DateRange,
    test: &DateRange,
    buffer_days: i64,
) -> Result<TemporalFold, CvError> {
    if test.start < range.start || test.end > range.end {
        return Err(CvError::WindowOutsideRange { test: *test, range: *range });
    }
    let margin = Duration::days(buffer_days.max(1));
    let mut train = Vec::new();
    let left_end = test.start - margin;
    if left_end >= range.start {
        train.push(DateRange::new(range.start, left_end));
    }
    let right_start = test.end + margin;
    if right_start <= range.end {
        train.push(DateRange::new(right_start, range.end));
    }
    if train.is_empty() {
        let span_days = range.days();
        let window_days = test.days();
        return Err(CvError::InfeasibleTemporal {
            span_days,
            required_days: window_days + buffer_days.max(1),
            n_folds: 1,
            buffer_days,
        });
    }
    Ok(TemporalFold { test: *test, train })
}

/// Partition the range into contiguous near-equal test windows, the
/// first `days mod n` windows one day longer, and derive each window's
/// training ranges. Every day of the range is tested exactly once.
pub fn temporal_folds(
    range: &DateRange,
    n_folds: usize,
    buffer_days: i64,
) -> Result<Vec<TemporalFold>, CvError> {
    if n_folds == 0 {
        return Err(CvError::ZeroFolds);
    }
    let span_days = range.days();
    let window = span_days / n_folds as i64;
    let extra = span_days % n_folds as i64;
    if window == 0 {
        return Err(CvError::TooManyFolds { k: n_folds, n: span_days as usize });
    }
    let mut folds = Vec::with_capacity(n_folds);
    let mut start = range.start;
    for i in 0..n_folds as i64 {
        let len = window + i64::from(i < extra);
        let end = start + Duration::days(len - 1);
        let test = DateRange::new(start, end);
        folds.push(temporal_fold_for_window(range, &test, buffer_days).map_err(|e| match e {
            // Report the geometry of the whole request, not one window.
            CvError::InfeasibleTemporal { .. } => CvError::InfeasibleTemporal {
                span_days,
                required_days: window + extra.min(1) + buffer_days.max(1),
                n_folds,
                buffer_days,
            },
            other => other,
        })?);
        start = end + Duration::days(1);
    }
    Ok(folds)
}

/// Window the continuous-metric protocol scores on.
pub fn default_hydro_eval_range() -> DateRange {
    DateRange::new("2014-01-01".parse().unwrap(), "2021-12-31".parse().unwrap())
}

/// Window the event-metric protocol scores on.
pub fn default_event_eval_range() -> DateRange {
    DateRange::new("1984-01-01".parse().unwrap(), "2021-12-31".parse().unwrap())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitScheme {
    Random,
    Continent,
    Climate,
    TerminalBasin,
}

impl SplitScheme {
    pub fn name(self) -> &'static str {
        match self {
            SplitScheme::Random => "random",
            SplitScheme::Continent => "continent",
            SplitScheme::Climate => "climate",
            SplitScheme::TerminalBasin => "terminal-basin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub fold_id: String,
    pub test_gauges: Vec<String>,
    pub train_gauges: Vec<String>,
    pub test_ranges: Vec<DateRange>,
    pub train_ranges: Vec<DateRange>,
}

/// The full protocol: spatial folds crossed with temporal folds. Each
/// listed fold trains on the other gauges over the buffered training
/// ranges and tests its own gauges over its test window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: String,
    pub seed: Option<u64>,
    pub spatial_folds: usize,
    pub temporal_folds: usize,
    pub folds: Vec<FoldPlan>,
}

/// Minimal per-gauge facts a split plan needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GaugeMeta {
    pub gauge_id: String,
    pub continent: String,
    pub climate_zone: String,
    pub terminal_basin_id: String,
}

impl From<&BasinRecord> for GaugeMeta {
    fn from(record: &BasinRecord) -> Self {
        GaugeMeta {
            gauge_id: record.gauge_id.clone(),
            continent: record.continent.clone(),
            climate_zone: record.climate_zone.clone(),
            terminal_basin_id: record.terminal_basin_id.clone(),
        }
    }
}

fn spatial_partition(
    scheme: SplitScheme,
    gauges: &[GaugeMeta],
    k: usize,
    seed: u64,
) -> Result<Vec<(String, Vec<String>)>, CvError> {
    match scheme {
        SplitScheme::Random => {
            let ids: Vec<String> = gauges.iter().map(|g| g.gauge_id.clone()).collect();
            Ok(random_spatial_folds(&ids, k, seed)?
                .into_iter()
                .enumerate()
                .map(|(i, fold)| (format!("spatial{i:02}"), fold))
                .collect())
        }
        SplitScheme::Continent => grouped_folds(
            &gauges.iter().map(|g| (g.gauge_id.clone(), g.continent.clone())).collect::<Vec<_>>(),
            "continent",
        ),
        SplitScheme::Climate => grouped_folds(
            &gauges.iter().map(|g| (g.gauge_id.clone(), g.climate_zone.clone())).collect::<Vec<_>>(),
            "climate zone",
        ),
        SplitScheme::TerminalBasin => grouped_folds(
            &gauges
                .iter()
                .map(|g| (g.gauge_id.clone(), g.terminal_basin_id.clone()))
                .collect::<Vec<_>>(),
            "terminal basin",
        ),
    }
}

/// Cross every spatial fold with every temporal fold. `k` and `seed`
/// only matter for the random scheme; grouped schemes derive their fold
/// count from the labels.
pub fn build_split_plan(
    scheme: SplitScheme,
    gauges: &[GaugeMeta],
    temporal: &[TemporalFold],
    k: usize,
    seed: u64,
) -> Result<SplitPlan, CvError> {
    if temporal.is_empty() {
        return Err(CvError::ZeroFolds);
    }
    let spatial = spatial_partition(scheme, gauges, k, seed)?;
    let all_ids: Vec<String> = gauges.iter().map(|g| g.gauge_id.clone()).collect();
    let mut folds = Vec::with_capacity(spatial.len() * temporal.len());
    for (spatial_id, test_gauges) in &spatial {
        let mut train_gauges: Vec<String> =
            all_ids.iter().filter(|id| !test_gauges.contains(id)).cloned().collect();
        train_gauges.sort();
        for (j, tf) in temporal.iter().enumerate() {
            folds.push(FoldPlan {
                fold_id: format!("{spatial_id}/temporal{j:02}"),
                test_gauges: test_gauges.clone(),
                train_gauges: train_gauges.clone(),
                test_ranges: vec![tf.test],
                train_ranges: tf.train.clone(),
            });
        }
    }
    Ok(SplitPlan {
        scheme: scheme.name().to_owned(),
        seed: (scheme == SplitScheme::Random).then_some(seed),
        spatial_folds: spatial.len(),
        temporal_folds: temporal.len(),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i:03}")).collect()
    }

    fn range(start: &str, end: &str) -> DateRange {
        DateRange::new(start.parse().unwrap(), end.parse().unwrap())
    }

    #[test]
    fn hundred_gauges_make_ten_even_folds() {
        let folds = random_spatial_folds(&ids(100), 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        assert!(folds.iter().all(|f| f.len() == 10));
    }

    #[test]
    fn folds_partition_the_gauge_set() {
        let gauges = ids(23);
        let folds = random_spatial_folds(&gauges, 4, 99).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![6, 6, 6, 5]);
        let mut seen = BTreeSet::new();
        for fold in &folds {
            for id in fold {
                assert!(seen.insert(id.clone()), "{id} appears twice");
            }
        }
        assert_eq!(seen.len(), 23);
    }

    #[test]
    fn same_seed_reproduces_the_partition() {
        let gauges = ids(50);
        let a = random_spatial_folds(&gauges, 10, 1234).unwrap();
        let b = random_spatial_folds(&gauges, 10, 1234).unwrap();
        assert_eq!(a, b);
        let c = random_spatial_folds(&gauges, 10, 1235).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn more_folds_than_gauges_is_an_error() {
        assert!(matches!(
            random_spatial_folds(&ids(5), 6, 0),
            Err(CvError::TooManyFolds { k: 6, n: 5 })
        ));
    }

    #[test]
    fn grouped_folds_follow_the_labels() {
        let gauges = vec![
            ("g1".to_owned(), "EU".to_owned()),
            ("g2".to_owned(), "SA".to_owned()),
            ("g3".to_owned(), "EU".to_owned()),
            ("g4".to_owned(), "AF".to_owned()),
        ];
        let folds = grouped_folds(&gauges, "continent").unwrap();
        assert_eq!(
            folds,
            vec![
                ("AF".to_owned(), vec!["g4".to_owned()]),
                ("EU".to_owned(), vec!["g1".to_owned(), "g3".to_owned()]),
                ("SA".to_owned(), vec!["g2".to_owned()]),
            ]
        );
    }

    #[test]
    fn thirteen_labels_make_thirteen_folds() {
        let gauges: Vec<(String, String)> =
            (0..39).map(|i| (format!("g{i}"), format!("zone{:02}", i % 13))).collect();
        let folds = grouped_folds(&gauges, "climate zone").unwrap();
        assert_eq!(folds.len(), 13);
        assert!(folds.iter().all(|(_, f)| f.len() == 3));
    }

    #[test]
    fn unlabeled_gauges_are_listed_in_the_error() {
        let gauges = vec![
            ("g1".to_owned(), "EU".to_owned()),
            ("g2".to_owned(), String::new()),
            ("g3".to_owned(), String::new()),
        ];
        match grouped_folds(&gauges, "terminal basin") {
            Err(CvError::UnlabeledGauges { key, gauges }) => {
                assert_eq!(key, "terminal basin");
                assert_eq!(gauges, vec!["g2".to_owned(), "g3".to_owned()]);
            }
            other => panic!("expected unlabeled error, got {other:?}"),
        }
    }

    #[test]
    fn shared_terminal_basin_keeps_gauges_together() {
        let gauges = vec![
            ("up".to_owned(), "basinA".to_owned()),
            ("down".to_owned(), "basinA".to_owned()),
            ("lone".to_owned(), "basinB".to_owned()),
        ];
        let folds = grouped_folds(&gauges, "terminal basin").unwrap();
        let a = folds.iter().find(|(l, _)| l == "basinA").unwrap();
        assert_eq!(a.1, vec!["down".to_owned(), "up".to_owned()]);
    }

    #[test]
    fn buffered_window_pulls_training_back_a_year() {
        let data = range("1984-01-01", "2021-12-31");
        let window = range("2014-01-01", "2021-12-31");
        let fold = temporal_fold_for_window(&data, &window, 365).unwrap();
        assert_eq!(fold.train.len(), 1);
        assert_eq!(fold.train[0].start, "1984-01-01".parse::<NaiveDate>().unwrap());
        assert_eq!(fold.train[0].end, "2013-01-01".parse::<NaiveDate>().unwrap());
    }

    #[test]
    fn zero_buffer_abuts_without_overlap() {
        let data = range("2000-01-01", "2009-12-31");
        let window = range("2004-01-01", "2005-12-31");
        let fold = temporal_fold_for_window(&data, &window, 0).unwrap();
        assert_eq!(fold.train.len(), 2);
        assert_eq!(fold.train[0].end, "2003-12-31".parse::<NaiveDate>().unwrap());
        assert_eq!(fold.train[1].start, "2006-01-01".parse::<NaiveDate>().unwrap());
    }

    #[test]
    fn infeasible_geometry_reports_the_required_span() {
        let data = range("2000-01-01", "2001-01-31");
        match temporal_folds(&data, 1, 365) {
            Err(CvError::InfeasibleTemporal { span_days, required_days, n_folds: 1, buffer_days: 365 }) => {
                assert_eq!(span_days, 397);
                assert!(required_days > span_days);
            }
            other => panic!("expected infeasible error, got {other:?}"),
        }
    }

    #[test]
    fn every_day_is_tested_exactly_once_across_folds() {
        let data = range("2000-01-01", "2005-06-15");
        let folds = temporal_folds(&data, 4, 365).unwrap();
        assert_eq!(folds.len(), 4);
        let mut day = data.start;
        for fold in &folds {
            assert_eq!(fold.test.start, day, "windows not contiguous");
            day = fold.test.end + Duration::days(1);
        }
        assert_eq!(day, data.end + Duration::days(1));
        let lengths: BTreeSet<i64> = folds.iter().map(|f| f.test.days()).collect();
        assert!(lengths.len() <= 2, "{lengths:?}");
    }

    #[test]
    fn min_train_test_gap_holds_for_every_day_pair() {
        let data = range("2000-01-01", "2006-12-31");
        let folds = temporal_folds(&data, 3, 365).unwrap();
        for fold in &folds {
            let mut min_gap = i64::MAX;
            for train_range in &fold.train {
                let mut d = train_range.start;
                while d <= train_range.end {
                    let mut t = fold.test.start;
                    while t <= fold.test.end {
                        min_gap = min_gap.min((t - d).num_days().abs());
                        t += Duration::days(1);
                    }
                    d += Duration::days(1);
                }
            }
            assert!(min_gap >= 365, "fold {:?}: min gap {min_gap}", fold.test);
            assert!(min_gap == 365, "buffer should be tight, got {min_gap}");
        }
    }

    fn metas(n: usize) -> Vec<GaugeMeta> {
        (0..n)
            .map(|i| GaugeMeta {
                gauge_id: format!("g{i:03}"),
                continent: format!("C{}", i % 3),
                climate_zone: format!("Z{}", i % 5),
                terminal_basin_id: format!("B{}", i / 2),
            })
            .collect()
    }

    #[test]
    fn split_plan_is_the_cross_product() {
        let gauges = metas(12);
        let data = range("2000-01-01", "2009-12-31");
        let temporal = temporal_folds(&data, 2, 365).unwrap();
        let plan = build_split_plan(SplitScheme::Random, &gauges, &temporal, 4, 11).unwrap();
        assert_eq!(plan.scheme, "random");
        assert_eq!(plan.seed, Some(11));
        assert_eq!(plan.spatial_folds, 4);
        assert_eq!(plan.temporal_folds, 2);
        assert_eq!(plan.folds.len(), 8);
        for fold in &plan.folds {
            // No gauge on both sides.
            for g in &fold.test_gauges {
                assert!(!fold.train_gauges.contains(g));
            }
            assert_eq!(fold.test_gauges.len() + fold.train_gauges.len(), 12);
        }
    }

    #[test]
    fn every_gauge_day_cell_is_tested_exactly_once() {
        let gauges = metas(9);
        let data = range("2000-01-01", "2003-12-31");
        let temporal = temporal_folds(&data, 2, 365).unwrap();
        let plan = build_split_plan(SplitScheme::Continent, &gauges, &temporal, 0, 0).unwrap();
        let total_days = data.days() as usize;
        let mut tested = vec![vec![0u32; total_days]; 9];
        for fold in &plan.folds {
            for g in &fold.test_gauges {
                let gi: usize = g[1..].parse().unwrap();
                for r in &fold.test_ranges {
                    let mut d = r.start;
                    while d <= r.end {
                        tested[gi][(d - data.start).num_days() as usize] += 1;
                        d += Duration::days(1);
                    }
                }
            }
        }
        assert!(tested.iter().all(|row| row.iter().all(|&c| c == 1)));
    }

    #[test]
    fn plans_round_trip_through_json() {
        let gauges = metas(10);
        let data = range("2000-01-01", "2009-12-31");
        let temporal = temporal_folds(&data, 3, 365).unwrap();
        let plan = build_split_plan(SplitScheme::TerminalBasin, &gauges, &temporal, 0, 5).unwrap();
        let text = serde_json::to_string_pretty(&plan).unwrap();
        let back: SplitPlan = serde_json::from_str(&text).unwrap();
        assert_eq!(plan, back);
    }
}
