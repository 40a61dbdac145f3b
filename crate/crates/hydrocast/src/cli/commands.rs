//! Implementations of the subcommands.
//!
//! Each function owns one output directory: it computes, writes its
//! artifacts plus a skip report where partial failures are possible,
//! and stamps the directory with the config echo and manifest. Inputs
//! (the data root, checkpoints, score files) are only ever read.

use super::formats::{
    group_predictions, read_csv, read_json, series_on_axis, write_csv, write_json, EventScoreRow,
    HydroMetricsRow, PredictionRow, ReturnPeriodRow, SkipEntry,
};
use super::{CliError, RunContext};
use crate::cv::{build_split_plan, temporal_folds, FoldPlan, GaugeMeta, SplitPlan, SplitScheme};
use crate::data::{
    build_inputs_all, build_schema, filter_gauges, fit_transform, load_basin_dirs, BasinRecord,
    CalendarAxis, DenseMatrix, ImputePolicy,
};
use crate::evaluation::{
    compare_models, extract_events, hydrograph_metrics, score_events, EventScore, Grouping,
    ScoredGauge,
};
use crate::frequency::{build_tables, FlowSeriesRef};
use crate::model::{
    load_checkpoint, predict_ensemble, save_checkpoint, train_ensemble, valid_issue_indices,
    Checkpoint, TrainRecord, TrainSlice,
};
use crate::report::{render_box_plot, summarize, summary_csv, ReportDimension, SummaryRow};
use crate::skill::{
    above_below_labels, evaluate_classifier, fit_classifier, pearson_correlations, fit_regressor,
    which_model_where, ConfusionMatrix, Forest, ForestConfig, ForestTask, ABOVE_BELOW_CLASSES,
};
use crate::synthetic::{write_dataset, SynthConfig};
use crate::data::DateRange;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

const EVENT_METRICS: [&str; 3] = ["precision", "recall", "f1"];

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

/// Load every basin under the data root and apply the area-agreement
/// filter; dropped gauges land in the skip list.
fn load_filtered_basins(ctx: &RunContext) -> Result<(Vec<BasinRecord>, Vec<SkipEntry>), CliError> {
    let records = load_basin_dirs(&ctx.data_root)?;
    if records.is_empty() {
        return Err(input_err(format!(
            "no basin directories under {} (set data_root or {})",
            ctx.data_root.display(),
            super::DATA_ROOT_ENV
        )));
    }
    let tolerance = ctx.config.area_tolerance;
    let skips: Vec<SkipEntry> = records
        .iter()
        .filter(|r| r.area_mismatch_fraction() > tolerance)
        .map(|r| {
            SkipEntry::new(
                &r.gauge_id,
                "area-filter",
                format!(
                    "reported and polygon areas disagree by {:.1}%, tolerance {:.1}%",
                    r.area_mismatch_fraction() * 100.0,
                    tolerance * 100.0
                ),
            )
        })
        .collect();
    let kept = filter_gauges(records, tolerance);
    if kept.is_empty() {
        return Err(input_err("the area filter removed every basin"));
    }
    Ok((kept, skips))
}

/// Smallest range covering every basin's axis.
fn full_span(records: &[BasinRecord]) -> DateRange {
    DateRange {
        start: records.iter().map(|r| r.axis.start()).min().unwrap(),
        end: records.iter().map(|r| r.axis.end()).max().unwrap(),
    }
}

fn load_fold(plan: Option<&Path>, fold: Option<&str>) -> Result<Option<FoldPlan>, CliError> {
    let Some(path) = plan else { return Ok(None) };
    let fold_id = fold.expect("clap ties --fold to --plan");
    let plan: SplitPlan = read_json(path)?;
    let n = plan.folds.len();
    plan.folds
        .into_iter()
        .find(|f| f.fold_id == fold_id)
        .map(Some)
        .ok_or_else(|| input_err(format!("fold {fold_id} is not one of the plan's {n} folds")))
}

fn parse_scheme(text: &str) -> Result<SplitScheme, CliError> {
    match text {
        "random" => Ok(SplitScheme::Random),
        "continent" => Ok(SplitScheme::Continent),
        "climate" => Ok(SplitScheme::Climate),
        "terminal-basin" | "terminal_basin" => Ok(SplitScheme::TerminalBasin),
        other => Err(input_err(format!(
            "unknown scheme {other}; expected random, continent, climate, or terminal-basin"
        ))),
    }
}

fn parse_grouping(text: &str) -> Result<Grouping, CliError> {
    match text {
        "all" => Ok(Grouping::All),
        "continent" => Ok(Grouping::Continent),
        "T" | "t" | "return-period" | "return_period" => Ok(Grouping::ReturnPeriod),
        "lead" => Ok(Grouping::Lead),
        other => {
            Err(input_err(format!("unknown grouping {other}; expected all, continent, T, or lead")))
        }
    }
}

pub fn synth(ctx: &RunContext, out: &Path, basins: usize, years: usize) -> Result<(), CliError> {
    if basins == 0 || years == 0 {
        return Err(input_err("synth needs at least one basin and one year"));
    }
    ctx.ensure_out(out)?;
    let config = SynthConfig {
        n_basins: basins,
        n_years: years,
        seed: ctx.seed,
        ..SynthConfig::default()
    };
    let ids = write_dataset(&config, out)?;
    println!("wrote {} basins under {}", ids.len(), out.display());
    ctx.finish(out, "synth")
}

#[derive(Debug, Serialize)]
struct MemberLog {
    seed: u64,
    initial_validation_nll: f64,
    final_validation_nll: f64,
    probes: Vec<TrainRecord>,
}

pub fn train(
    ctx: &RunContext,
    out: &Path,
    plan: Option<&Path>,
    fold: Option<&str>,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let (records, mut skips) = load_filtered_basins(ctx)?;
    let restriction = load_fold(plan, fold)?;
    let (train_records, train_ranges) = match &restriction {
        Some(f) => {
            let wanted: BTreeSet<&str> = f.train_gauges.iter().map(String::as_str).collect();
            let subset: Vec<BasinRecord> = records
                .iter()
                .filter(|r| wanted.contains(r.gauge_id.as_str()))
                .cloned()
                .collect();
            (subset, f.train_ranges.clone())
        }
        None => {
            let span = ctx.config.train_range.unwrap_or_else(|| full_span(&records));
            (records, vec![span])
        }
    };
    if train_records.is_empty() {
        return Err(input_err("no training gauges left after filtering"));
    }

    let transform = fit_transform(&train_records, &train_ranges)?;
    let policy = ImputePolicy::default();
    let (inputs, excluded) =
        build_inputs_all(&train_records, &transform, &policy, &ctx.config.forecast_sources)?;
    skips.extend(excluded.iter().map(|e| SkipEntry::new(&e.gauge_id, "inputs", &*e.reason)));
    if inputs.is_empty() {
        return Err(input_err("every basin was excluded from input assembly"));
    }

    let slice = TrainSlice { basins: &inputs, train_ranges: &train_ranges };
    let members = train_ensemble(&slice, &ctx.config.model, ctx.seed)?;
    let log: Vec<MemberLog> = members
        .iter()
        .map(|m| MemberLog {
            seed: m.seed,
            initial_validation_nll: m.initial_validation_nll,
            final_validation_nll: m.final_validation_nll,
            probes: m.records.clone(),
        })
        .collect();
    let schema = build_schema(&transform, &ctx.config.forecast_sources);
    let checkpoint = Checkpoint::new(
        ctx.config.model.clone(),
        schema,
        transform,
        policy,
        ctx.config.forecast_sources.clone(),
        members,
    );
    save_checkpoint(&out.join("checkpoint.json"), &checkpoint)?;
    write_json(&out.join("train_log.json"), &log)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "train")
}

pub fn forecast(
    ctx: &RunContext,
    out: &Path,
    checkpoint_path: &Path,
    plan: Option<&Path>,
    fold: Option<&str>,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let checkpoint = load_checkpoint(checkpoint_path)?;
    let (records, mut skips) = load_filtered_basins(ctx)?;
    let restriction = load_fold(plan, fold)?;
    let (selected, ranges): (Vec<BasinRecord>, Option<Vec<DateRange>>) = match &restriction {
        Some(f) => {
            let wanted: BTreeSet<&str> = f.test_gauges.iter().map(String::as_str).collect();
            let subset =
                records.iter().filter(|r| wanted.contains(r.gauge_id.as_str())).cloned().collect();
            (subset, Some(f.test_ranges.clone()))
        }
        None => (records, ctx.config.forecast_range.map(|r| vec![r])),
    };
    if selected.is_empty() {
        return Err(input_err("no gauges selected to forecast"));
    }

    let (inputs, excluded) = build_inputs_all(
        &selected,
        &checkpoint.transform,
        &checkpoint.impute_policy,
        &checkpoint.forecast_sources,
    )?;
    skips.extend(excluded.iter().map(|e| SkipEntry::new(&e.gauge_id, "inputs", &*e.reason)));

    let model_name = &ctx.config.model_name;
    let per_basin: Vec<Result<(Vec<PredictionRow>, Option<SkipEntry>), CliError>> = inputs
        .par_iter()
        .map(|basin| {
            let basin_ranges = ranges.clone().unwrap_or_else(|| {
                vec![DateRange { start: basin.axis.start(), end: basin.axis.end() }]
            });
            let mut issues: Vec<usize> = basin_ranges
                .iter()
                .flat_map(|r| valid_issue_indices(basin, &checkpoint.config, r))
                .collect();
            issues.sort_unstable();
            issues.dedup();
            if issues.is_empty() {
                let skip = SkipEntry::new(
                    &basin.gauge_id,
                    "forecast",
                    "no issue date fits a full hindcast and horizon window",
                );
                return Ok((Vec::new(), Some(skip)));
            }
            let forecast = predict_ensemble(
                &checkpoint.members,
                basin,
                &issues,
                &checkpoint.transform.target,
                &checkpoint.config,
            )?;
            let mut rows =
                Vec::with_capacity(forecast.issue_dates.len() * checkpoint.config.horizon_steps);
            for (i, &issue_date) in forecast.issue_dates.iter().enumerate() {
                for (lead, &value) in forecast.median_mmday[i].iter().enumerate() {
                    rows.push(PredictionRow {
                        gauge_id: basin.gauge_id.clone(),
                        model: model_name.clone(),
                        issue_date,
                        lead_days: lead,
                        value,
                    });
                }
            }
            Ok((rows, None))
        })
        .collect();

    let mut rows = Vec::new();
    for result in per_basin {
        let (basin_rows, skip) = result?;
        rows.extend(basin_rows);
        skips.extend(skip);
    }
    if rows.is_empty() {
        return Err(input_err("no forecasts were produced; see skip_report.json"));
    }
    write_csv(&out.join("predictions.csv"), &rows)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "forecast")
}

pub fn return_periods(
    ctx: &RunContext,
    out: &Path,
    predictions: Option<&Path>,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let (records, mut skips) = load_filtered_basins(ctx)?;
    let freq = ctx.config.frequency_config();

    let (tables, skipped) = match predictions {
        None => {
            let refs: Vec<FlowSeriesRef> = records
                .iter()
                .map(|r| FlowSeriesRef {
                    gauge_id: &r.gauge_id,
                    source: "obs",
                    axis: &r.axis,
                    flow: &r.discharge_mmday,
                })
                .collect();
            build_tables(&refs, &freq)
        }
        Some(path) => {
            let set = group_predictions(read_csv(path)?)?;
            let by_id: BTreeMap<&str, &BasinRecord> =
                records.iter().map(|r| (r.gauge_id.as_str(), r)).collect();
            let mut owned: Vec<(String, String, CalendarAxis, Vec<Option<f64>>)> = Vec::new();
            for ((gauge, lead), entries) in &set.series {
                let Some(record) = by_id.get(gauge.as_str()) else {
                    skips.push(SkipEntry::new(gauge, "frequency", "gauge not under the data root"));
                    continue;
                };
                owned.push((
                    gauge.clone(),
                    format!("{}:lead{lead}", set.model),
                    record.axis,
                    series_on_axis(entries, &record.axis),
                ));
            }
            let refs: Vec<FlowSeriesRef> = owned
                .iter()
                .map(|(gauge, source, axis, flow)| FlowSeriesRef {
                    gauge_id: gauge,
                    source,
                    axis,
                    flow,
                })
                .collect();
            build_tables(&refs, &freq)
        }
    };
    skips.extend(skipped.iter().map(|s| {
        SkipEntry::new(&s.gauge_id, "frequency", format!("{}: {}", s.source, s.reason))
    }));

    let rows: Vec<ReturnPeriodRow> =
        tables.iter().flat_map(ReturnPeriodRow::from_table).collect();
    write_csv(&out.join("return_periods.csv"), &rows)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "return-periods")
}

/// Threshold lookups keyed by gauge (and source for model-side tables);
/// return periods key by bit pattern so 2.0 matches exactly.
fn observed_threshold_index(
    rows: &[ReturnPeriodRow],
) -> Result<BTreeMap<(String, u64), f64>, CliError> {
    let mut index = BTreeMap::new();
    for row in rows {
        if let Some(prev) = index.insert((row.gauge_id.clone(), row.t.to_bits()), row.threshold) {
            if prev != row.threshold {
                return Err(input_err(format!(
                    "conflicting thresholds for gauge {} at T={}; is this file single-source?",
                    row.gauge_id, row.t
                )));
            }
        }
    }
    Ok(index)
}

pub fn eval_events(
    ctx: &RunContext,
    out: &Path,
    predictions: &Path,
    observed_thresholds: &Path,
    model_thresholds: &Path,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let (records, mut skips) = load_filtered_basins(ctx)?;
    let by_id: BTreeMap<&str, &BasinRecord> =
        records.iter().map(|r| (r.gauge_id.as_str(), r)).collect();
    let set = group_predictions(read_csv(predictions)?)?;
    let obs_index = observed_threshold_index(&read_csv(observed_thresholds)?)?;
    let model_rows: Vec<ReturnPeriodRow> = read_csv(model_thresholds)?;
    let model_index: BTreeMap<(String, String, u64), f64> = model_rows
        .iter()
        .map(|r| ((r.gauge_id.clone(), r.source.clone(), r.t.to_bits()), r.threshold))
        .collect();

    let range = ctx.config.event_eval_range;
    let mut rows: Vec<EventScoreRow> = Vec::new();
    for ((gauge, lead), entries) in &set.series {
        let Some(record) = by_id.get(gauge.as_str()) else {
            skips.push(SkipEntry::new(gauge, "eval-events", "gauge not under the data root"));
            continue;
        };
        let Some((lo, hi)) = record.axis.clip(&range) else {
            skips.push(SkipEntry::new(
                gauge,
                "eval-events",
                "event evaluation range does not touch the record",
            ));
            continue;
        };
        let sub_axis = CalendarAxis::new(record.axis.date_at(lo), hi - lo + 1);
        let obs_flow = &record.discharge_mmday[lo..=hi];
        let sim_flow = series_on_axis(entries, &sub_axis);
        let source = format!("{}:lead{lead}", set.model);
        for &t in &ctx.config.return_periods {
            let Some(&obs_threshold) = obs_index.get(&(gauge.clone(), t.to_bits())) else {
                skips.push(SkipEntry::new(
                    gauge,
                    "eval-events",
                    format!("no observed threshold for T={t}"),
                ));
                continue;
            };
            let Some(&model_threshold) =
                model_index.get(&(gauge.clone(), source.clone(), t.to_bits()))
            else {
                skips.push(SkipEntry::new(
                    gauge,
                    "eval-events",
                    format!("no model threshold for source {source} at T={t}"),
                ));
                continue;
            };
            let observed = extract_events(gauge, "obs", t, &sub_axis, obs_flow, obs_threshold);
            let predicted =
                extract_events(gauge, &set.model, t, &sub_axis, &sim_flow, model_threshold);
            let score =
                score_events(&predicted, &observed, *lead, ctx.config.match_window_days);
            rows.push(EventScoreRow::from(&score));
        }
    }
    write_csv(&out.join("event_scores.csv"), &rows)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "eval-events")
}

pub fn eval_hydro(ctx: &RunContext, out: &Path, predictions: &Path) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let (records, mut skips) = load_filtered_basins(ctx)?;
    let by_id: BTreeMap<&str, &BasinRecord> =
        records.iter().map(|r| (r.gauge_id.as_str(), r)).collect();
    let set = group_predictions(read_csv(predictions)?)?;
    let range = ctx.config.hydro_eval_range;

    let mut rows: Vec<HydroMetricsRow> = Vec::new();
    for ((gauge, lead), entries) in &set.series {
        let Some(record) = by_id.get(gauge.as_str()) else {
            skips.push(SkipEntry::new(gauge, "eval-hydro", "gauge not under the data root"));
            continue;
        };
        let Some((lo, hi)) = record.axis.clip(&range) else {
            skips.push(SkipEntry::new(
                gauge,
                "eval-hydro",
                "hydrograph evaluation range does not touch the record",
            ));
            continue;
        };
        let sub_axis = CalendarAxis::new(record.axis.date_at(lo), hi - lo + 1);
        let sim = series_on_axis(entries, &sub_axis);
        let metrics = hydrograph_metrics(&sim, &record.discharge_mmday[lo..=hi]);
        rows.push(HydroMetricsRow::new(gauge, &set.model, *lead, &metrics));
    }
    write_csv(&out.join("hydro_metrics.csv"), &rows)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "eval-hydro")
}

fn event_metric(row: &EventScoreRow, metric: &str) -> Result<Option<f64>, CliError> {
    match metric {
        "precision" => Ok(row.precision),
        "recall" => Ok(row.recall),
        "f1" => Ok(row.f1),
        other => Err(input_err(format!(
            "metric {other} is not an event metric (precision, recall, f1)"
        ))),
    }
}

fn hydro_metric(row: &HydroMetricsRow, metric: &str) -> Result<Option<f64>, CliError> {
    match metric {
        "nse" => Ok(row.nse),
        "log_nse" => Ok(row.log_nse),
        "alpha_nse" => Ok(row.alpha_nse),
        "beta_nse" => Ok(row.beta_nse),
        "kge" => Ok(row.kge),
        "log_kge" => Ok(row.log_kge),
        "beta_kge" => Ok(row.beta_kge),
        other => Err(input_err(format!("metric {other} is not a hydrograph metric"))),
    }
}

/// Read either score schema into comparable per-gauge values; the file
/// kind is detected from its header.
fn read_scored(
    path: &Path,
    metric: &str,
    continents: &BTreeMap<String, String>,
) -> Result<(String, Vec<ScoredGauge>), CliError> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?
        .clone();
    let has = |name: &str| headers.iter().any(|h| h == name);
    let continent_of = |gauge: &str| {
        continents.get(gauge).cloned().unwrap_or_else(|| "unknown".to_owned())
    };
    if has("TP") {
        let rows: Vec<EventScoreRow> = read_csv(path)?;
        let model = rows
            .first()
            .map(|r| r.model.clone())
            .ok_or_else(|| input_err(format!("{}: no rows", path.display())))?;
        let scored = rows
            .iter()
            .map(|r| {
                Ok(ScoredGauge {
                    gauge_id: r.gauge_id.clone(),
                    continent: continent_of(&r.gauge_id),
                    return_period: Some(r.t),
                    lead_days: r.lead,
                    value: event_metric(r, metric)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok((model, scored))
    } else if has("nse") {
        let rows: Vec<HydroMetricsRow> = read_csv(path)?;
        let model = rows
            .first()
            .map(|r| r.model.clone())
            .ok_or_else(|| input_err(format!("{}: no rows", path.display())))?;
        let scored = rows
            .iter()
            .map(|r| {
                Ok(ScoredGauge {
                    gauge_id: r.gauge_id.clone(),
                    continent: continent_of(&r.gauge_id),
                    return_period: None,
                    lead_days: r.lead,
                    value: hydro_metric(r, metric)?,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok((model, scored))
    } else {
        Err(input_err(format!(
            "{}: neither an event-score nor a hydrograph-metric file",
            path.display()
        )))
    }
}

/// Gauge-to-continent lookup, tolerating a missing data root except
/// when the grouping actually needs continents.
fn continent_lookup(
    ctx: &RunContext,
    required: bool,
) -> Result<BTreeMap<String, String>, CliError> {
    match load_basin_dirs(&ctx.data_root) {
        Ok(records) => Ok(records
            .into_iter()
            .map(|r| (r.gauge_id, r.continent))
            .collect()),
        Err(e) if required => Err(e.into()),
        Err(_) => Ok(BTreeMap::new()),
    }
}

pub fn compare(
    ctx: &RunContext,
    out: &Path,
    a: &Path,
    b: &Path,
    metric: &str,
    grouping: Option<&str>,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let grouping = match grouping {
        Some(text) => parse_grouping(text)?,
        None => ctx.config.grouping,
    };
    let continents = continent_lookup(ctx, grouping == Grouping::Continent)?;
    let (model_a, rows_a) = read_scored(a, metric, &continents)?;
    let (model_b, rows_b) = read_scored(b, metric, &continents)?;
    let report = compare_models(metric, &model_a, &model_b, &rows_a, &rows_b, grouping);
    write_json(&out.join("comparison.json"), &report)?;
    ctx.finish(out, "compare")
}

pub fn cv_split(
    ctx: &RunContext,
    out: &Path,
    scheme: Option<&str>,
    k: Option<usize>,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let (records, skips) = load_filtered_basins(ctx)?;
    let metas: Vec<GaugeMeta> = records.iter().map(GaugeMeta::from).collect();
    let scheme = match scheme {
        Some(text) => parse_scheme(text)?,
        None => ctx.config.split_scheme,
    };
    let k = k.unwrap_or(ctx.config.k_folds);
    let span = full_span(&records);
    let temporal =
        temporal_folds(&span, ctx.config.temporal_folds, ctx.config.temporal_buffer_days)?;
    let plan = build_split_plan(scheme, &metas, &temporal, k, ctx.seed)?;
    write_json(&out.join("split_plan.json"), &plan)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "cv-split")
}

/// Attribute matrix over `records` in feature-name order; missing values
/// take the feature's mean over these records (0 when never observed).
fn attribute_matrix(records: &[&BasinRecord]) -> (DenseMatrix, Vec<String>) {
    let features: Vec<String> = records
        .iter()
        .flat_map(|r| r.attributes.keys().cloned())
        .collect::<BTreeSet<String>>()
        .into_iter()
        .collect();
    let mut x = DenseMatrix::zeros(records.len(), features.len());
    for (j, feature) in features.iter().enumerate() {
        let present: Vec<f64> = records
            .iter()
            .filter_map(|r| r.attributes.get(feature).copied().flatten())
            .collect();
        let fill = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        for (i, record) in records.iter().enumerate() {
            let value = record.attributes.get(feature).copied().flatten().unwrap_or(fill);
            x.set(i, j, value);
        }
    }
    (x, features)
}

fn confusion_csv(matrix: &ConfusionMatrix) -> String {
    let mut out = String::from("true_class");
    for class in &matrix.classes {
        out.push(',');
        out.push_str(class);
    }
    out.push('\n');
    for (i, class) in matrix.classes.iter().enumerate() {
        out.push_str(class);
        for j in 0..matrix.classes.len() {
            out.push_str(&format!(",{}", matrix.counts[i][j]));
        }
        out.push('\n');
    }
    out
}

fn importances_csv(
    features: &[String],
    importances: &[f64],
    correlations: &[Option<f64>],
) -> String {
    let mut out = String::from("feature,importance,pearson_r\n");
    for (i, feature) in features.iter().enumerate() {
        let r = correlations[i].map_or(String::new(), |v| v.to_string());
        out.push_str(&format!("{feature},{},{r}\n", importances[i]));
    }
    out
}

/// Per-gauge defined values of `metric` at one (T, lead) cell.
fn select_scores(
    rows: &[EventScoreRow],
    metric: &str,
    t: f64,
    lead: usize,
) -> Result<BTreeMap<String, f64>, CliError> {
    let mut out = BTreeMap::new();
    for row in rows.iter().filter(|r| r.t == t && r.lead == lead) {
        if let Some(value) = event_metric(row, metric)? {
            out.insert(row.gauge_id.clone(), value);
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn skill_fit(
    ctx: &RunContext,
    out: &Path,
    scores: &Path,
    scores_b: Option<&Path>,
    target: &str,
    t: Option<f64>,
    lead: usize,
    regress: bool,
) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let (records, mut skips) = load_filtered_basins(ctx)?;
    let rows: Vec<EventScoreRow> = read_csv(scores)?;
    if rows.is_empty() {
        return Err(input_err(format!("{}: no rows", scores.display())));
    }
    let t = t.unwrap_or_else(|| rows.iter().map(|r| r.t).fold(f64::INFINITY, f64::min));
    let a_scores = select_scores(&rows, target, t, lead)?;

    let forest_config = ForestConfig { seed: ctx.seed, ..ctx.config.forest.clone() };
    let by_id: BTreeMap<&str, &BasinRecord> =
        records.iter().map(|r| (r.gauge_id.as_str(), r)).collect();
    for gauge in a_scores.keys().filter(|g| !by_id.contains_key(g.as_str())) {
        skips.push(SkipEntry::new(gauge, "skill", "gauge not under the data root"));
    }

    let (forest, correlations, features, evaluation): (
        Forest,
        Vec<Option<f64>>,
        Vec<String>,
        Option<crate::skill::ClassifierEvaluation>,
    );
    match scores_b {
        Some(path_b) => {
            let rows_b: Vec<EventScoreRow> = read_csv(path_b)?;
            let b_scores = select_scores(&rows_b, target, t, lead)?;
            let gauges: Vec<&BasinRecord> = records
                .iter()
                .filter(|r| {
                    a_scores.contains_key(&r.gauge_id) && b_scores.contains_key(&r.gauge_id)
                })
                .collect();
            if gauges.is_empty() {
                return Err(input_err(format!(
                    "no gauge has defined {target} at T={t}, lead {lead} in both score files"
                )));
            }
            let a: Vec<f64> = gauges.iter().map(|r| a_scores[&r.gauge_id]).collect();
            let b: Vec<f64> = gauges.iter().map(|r| b_scores[&r.gauge_id]).collect();
            let (x, feats) = attribute_matrix(&gauges);
            let (eval, fitted) = which_model_where(
                &x,
                &feats,
                &a,
                &b,
                ctx.config.skill_band,
                &forest_config,
                ctx.config.skill_folds,
                ctx.seed,
            )?;
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            correlations = pearson_correlations(&x, &diffs);
            features = feats;
            evaluation = Some(eval);
            forest = fitted;
        }
        None => {
            let gauges: Vec<&BasinRecord> =
                records.iter().filter(|r| a_scores.contains_key(&r.gauge_id)).collect();
            if gauges.is_empty() {
                return Err(input_err(format!(
                    "no gauge has a defined {target} at T={t}, lead {lead}"
                )));
            }
            let y: Vec<f64> = gauges.iter().map(|r| a_scores[&r.gauge_id]).collect();
            let (x, feats) = attribute_matrix(&gauges);
            correlations = pearson_correlations(&x, &y);
            if regress {
                forest = fit_regressor(&x, &y, &feats, &forest_config)?;
                evaluation = None;
            } else {
                let (labels, _mean) = above_below_labels(&y);
                let classes: Vec<String> =
                    ABOVE_BELOW_CLASSES.iter().map(|s| (*s).to_owned()).collect();
                let eval = evaluate_classifier(
                    &x,
                    &labels,
                    &classes,
                    &feats,
                    &forest_config,
                    ctx.config.skill_folds,
                    ctx.seed,
                )?;
                forest = fit_classifier(&x, &labels, &classes, &feats, &forest_config)?;
                evaluation = Some(eval);
            }
            features = feats;
        }
    }

    write_json(&out.join("skill_model.json"), &forest)?;
    write_text(
        &out.join("importances.csv"),
        &importances_csv(&features, &forest.importances(), &correlations),
    )?;
    if let Some(eval) = &evaluation {
        write_text(&out.join("confusion.csv"), &confusion_csv(&eval.confusion))?;
        write_json(&out.join("skill_eval.json"), eval)?;
    }
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "skill-fit")
}

pub fn skill_predict(ctx: &RunContext, out: &Path, model: &Path) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let forest: Forest = read_json(model)?;
    let (records, skips) = load_filtered_basins(ctx)?;

    // Fill values for attributes a basin is missing: the mean over the
    // basins at hand, zero when nobody reports the attribute.
    let mut fills: BTreeMap<&str, f64> = BTreeMap::new();
    for feature in &forest.feature_names {
        let present: Vec<f64> = records
            .iter()
            .filter_map(|r| r.attributes.get(feature).copied().flatten())
            .collect();
        let fill =
            if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        fills.insert(feature, fill);
    }

    let mut lines = String::from("basin_id,predicted\n");
    for record in &records {
        let named: BTreeMap<String, f64> = forest
            .feature_names
            .iter()
            .map(|feature| {
                let value = record
                    .attributes
                    .get(feature)
                    .copied()
                    .flatten()
                    .unwrap_or(fills[feature.as_str()]);
                (feature.clone(), value)
            })
            .collect();
        let row = forest.row_from_map(&named)?;
        let predicted = match forest.task {
            ForestTask::Classify => forest.classes[forest.predict_class(&row)?.0].clone(),
            ForestTask::Regress => forest.predict_value(&row)?.to_string(),
        };
        lines.push_str(&format!("{},{predicted}\n", record.gauge_id));
    }
    write_text(&out.join("predicted_f1.csv"), &lines)?;
    write_json(&out.join("skip_report.json"), &skips)?;
    ctx.finish(out, "skill-predict")
}

pub fn report(ctx: &RunContext, out: &Path, scores: &Path) -> Result<(), CliError> {
    ctx.ensure_out(out)?;
    let rows: Vec<EventScoreRow> = read_csv(scores)?;
    if rows.is_empty() {
        return Err(input_err(format!("{}: no rows", scores.display())));
    }
    let scores: Vec<EventScore> = rows.into_iter().map(EventScoreRow::into_score).collect();
    let continents = continent_lookup(ctx, false)?;

    for dimension in
        [ReportDimension::ReturnPeriod, ReportDimension::Lead, ReportDimension::Continent]
    {
        let summary = summarize(&scores, dimension, &continents);
        let name = dimension.name();
        write_text(&out.join(format!("summary_by_{name}.csv")), &summary_csv(&summary))?;
        for metric in EVENT_METRICS {
            let rows: Vec<SummaryRow> =
                summary.iter().filter(|r| r.metric == metric).cloned().collect();
            let svg = render_box_plot(&format!("{metric} by {name}"), metric, &rows);
            write_text(&out.join(format!("{metric}_by_{name}.svg")), &svg)?;
        }
    }
    ctx.finish(out, "report")
}
