//! Drives the installed binary through the whole workflow on a
//! generated fixture: data synthesis, split planning, training,
//! forecasting, threshold fitting, event and hydrograph scoring, a
//! lagged-observation baseline, paired comparison, skill prediction,
//! and report rendering. Every output file is parsed back and checked
//! against its schema, and the forecast step is run twice to prove
//! byte-identical reruns.

use chrono::NaiveDate;
use hydrocast::cli::formats::{EventScoreRow, HydroMetricsRow, PredictionRow, ReturnPeriodRow};
use hydrocast::cv::SplitPlan;
use hydrocast::data::load_basin_dirs;
use hydrocast::model::load_checkpoint;
use hydrocast::skill::{Forest, ForestTask, ABOVE_BELOW_CLASSES};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Output;
use std::time::Instant;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hydrocast")
}

fn run_ok(config: &Path, args: &[&str]) -> Output {
    let output = std::process::Command::new(bin())
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .expect("binary launches");
    assert!(
        output.status.success(),
        "hydrocast {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    let mut reader = csv::Reader::from_path(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    reader
        .deserialize()
        .map(|r| r.unwrap_or_else(|e| panic!("{}: {e}", path.display())))
        .collect()
}

fn read_json_value(path: &Path) -> serde_json::Value {
    let text =
        std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Every command directory must carry the provenance pair: the verbatim
/// config echo and a manifest whose hash matches it.
fn check_provenance(dir: &Path, config: &Path, command: &str) {
    let echo = std::fs::read(dir.join("run_config.json")).expect("config echo exists");
    let original = std::fs::read(config).unwrap();
    assert_eq!(echo, original, "{command}: config echo differs from the config file");
    let manifest = read_json_value(&dir.join("manifest.json"));
    assert_eq!(manifest["command"], command);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

#[test]
fn full_cli_pipeline_round_trips_every_artifact() {
    let started = Instant::now();
    let ws = tempfile::tempdir().unwrap();
    let data = ws.path().join("data");
    let out = |name: &str| ws.path().join("out").join(name);

    let config = ws.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "data_root": data,
            "output_root": ws.path().join("out"),
            "model_name": "reservoir_lstm",
            "k_folds": 3,
            "return_periods": [1.0, 2.0, 5.0],
            "frequency_min_years": 2,
            "train_range": {"start": "2000-01-01", "end": "2008-12-31"},
            "forecast_range": {"start": "2009-01-01", "end": "2011-12-31"},
            "hydro_eval_range": {"start": "2009-01-01", "end": "2011-12-31"},
            "event_eval_range": {"start": "2009-01-01", "end": "2011-12-31"},
            "seed": 7
        })
        .to_string(),
    )
    .unwrap();

    // Synthesis: 20 basin directories, each with the full file set.
    run_ok(&config, &["synth", "--out", data.to_str().unwrap(), "--basins", "20", "--years", "12"]);
    let mut basin_dirs: Vec<PathBuf> = std::fs::read_dir(&data)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    basin_dirs.sort();
    assert_eq!(basin_dirs.len(), 20);
    for dir in &basin_dirs {
        for file in ["meta.json", "discharge.csv", "forcings_forecast.csv", "attributes.json"] {
            assert!(dir.join(file).is_file(), "{} lacks {file}", dir.display());
        }
    }

    // Split plan: 3 random spatial folds crossed with 2 temporal folds.
    run_ok(&config, &["cv-split"]);
    let plan: SplitPlan = serde_json::from_str(
        &std::fs::read_to_string(out("cv-split").join("split_plan.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(plan.scheme, "random");
    assert_eq!((plan.spatial_folds, plan.temporal_folds), (3, 2));
    assert_eq!(plan.folds.len(), 6);
    check_provenance(&out("cv-split"), &config, "cv-split");

    // Training: three members on the 2000-2008 window.
    run_ok(&config, &["train"]);
    let checkpoint_path = out("train").join("checkpoint.json");
    let checkpoint = load_checkpoint(&checkpoint_path).expect("checkpoint loads and validates");
    assert_eq!(checkpoint.members.len(), 3);
    let log = read_json_value(&out("train").join("train_log.json"));
    let members = log["members"].as_array().expect("member logs");
    assert_eq!(members.len(), 3);
    for m in members {
        let first = m["initial_validation_nll"].as_f64().unwrap();
        let last = m["final_validation_nll"].as_f64().unwrap();
        assert!(last < first, "member {} did not improve: {first} -> {last}", m["seed"]);
    }
    check_provenance(&out("train"), &config, "train");

    // Forecasting, twice: reruns must be byte-identical.
    let ckpt = checkpoint_path.to_str().unwrap();
    run_ok(&config, &["forecast", "--checkpoint", ckpt]);
    let repeat = ws.path().join("out").join("forecast-repeat");
    run_ok(&config, &["forecast", "--checkpoint", ckpt, "--out", repeat.to_str().unwrap()]);
    let first = std::fs::read(out("forecast").join("predictions.csv")).unwrap();
    let second = std::fs::read(repeat.join("predictions.csv")).unwrap();
    assert_eq!(first, second, "forecast reruns are not byte-identical");

    let predictions: Vec<PredictionRow> = read_rows(&out("forecast").join("predictions.csv"));
    let gauges: BTreeSet<&str> = predictions.iter().map(|r| r.gauge_id.as_str()).collect();
    assert!(
        (15..=20).contains(&gauges.len()),
        "expected most of the fleet to pass the area filter, got {}",
        gauges.len()
    );
    let span = date("2009-01-01")..=date("2011-12-31");
    for row in &predictions {
        assert_eq!(row.model, "reservoir_lstm");
        assert!(span.contains(&row.issue_date), "issue {} outside the window", row.issue_date);
        assert!(row.lead_days < 8);
        assert!(row.value.is_finite() && row.value >= 0.0);
    }
    // Every gauge gets the full lead fan at every issue date.
    assert_eq!(predictions.len() % 8, 0);

    // Thresholds on observations and on the prediction archive.
    run_ok(&config, &["return-periods", "--out", out("rp-obs").to_str().unwrap()]);
    let obs_rows: Vec<ReturnPeriodRow> = read_rows(&out("rp-obs").join("return_periods.csv"));
    let mut by_source: BTreeMap<(&str, &str), Vec<&ReturnPeriodRow>> = BTreeMap::new();
    for row in &obs_rows {
        assert_eq!(row.source, "obs");
        assert!(row.threshold > 0.0 && row.n_years >= 3);
        by_source.entry((row.gauge_id.as_str(), row.source.as_str())).or_default().push(row);
    }
    assert_eq!(by_source.len(), gauges.len(), "one observed table per forecasted gauge");
    for rows in by_source.values() {
        let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![1.0, 2.0, 5.0]);
        assert!(
            rows.windows(2).all(|w| w[1].threshold > w[0].threshold),
            "thresholds must grow with the return period"
        );
    }

    let pred_csv = out("forecast").join("predictions.csv");
    run_ok(
        &config,
        &[
            "return-periods",
            "--predictions",
            pred_csv.to_str().unwrap(),
            "--out",
            out("rp-model").to_str().unwrap(),
        ],
    );
    let model_rows: Vec<ReturnPeriodRow> = read_rows(&out("rp-model").join("return_periods.csv"));
    let model_sources: BTreeSet<&str> = model_rows.iter().map(|r| r.source.as_str()).collect();
    for lead in 0..8 {
        assert!(
            model_sources.contains(format!("reservoir_lstm:lead{lead}").as_str()),
            "missing per-lead threshold source for lead {lead}"
        );
    }

    // Event scores: one row per (gauge, T, lead) that has both tables.
    run_ok(
        &config,
        &[
            "eval-events",
            "--predictions",
            pred_csv.to_str().unwrap(),
            "--observed-thresholds",
            out("rp-obs").join("return_periods.csv").to_str().unwrap(),
            "--model-thresholds",
            out("rp-model").join("return_periods.csv").to_str().unwrap(),
        ],
    );
    let event_rows: Vec<EventScoreRow> = read_rows(&out("eval-events").join("event_scores.csv"));
    assert_eq!(event_rows.len(), gauges.len() * 3 * 8);
    for row in &event_rows {
        assert_eq!(row.model, "reservoir_lstm");
        for p in [row.precision, row.recall, row.f1].into_iter().flatten() {
            assert!((0.0..=1.0).contains(&p));
        }
        if let (Some(p), Some(r)) = (row.precision, row.recall) {
            if p + r > 0.0 {
                let f1 = row.f1.expect("defined precision and recall give a defined F1");
                assert!((f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
        }
    }
    let defined_f1 = event_rows.iter().filter(|r| r.f1.is_some()).count();
    assert!(defined_f1 > event_rows.len() / 4, "only {defined_f1} defined F1 cells");

    // Hydrograph metrics per gauge and lead.
    run_ok(&config, &["eval-hydro", "--predictions", pred_csv.to_str().unwrap()]);
    let hydro_rows: Vec<HydroMetricsRow> =
        read_rows(&out("eval-hydro").join("hydro_metrics.csv"));
    assert_eq!(hydro_rows.len(), gauges.len() * 8);
    for row in &hydro_rows {
        assert!(row.n_days > 1000, "three years of evaluation days, got {}", row.n_days);
        let nse = row.nse.expect("contiguous synthetic records score everywhere");
        assert!(nse <= 1.0);
    }

    // Lagged-observation baseline: yesterday's flow as every lead's
    // forecast, written as an external prediction archive.
    let records = load_basin_dirs(&data).unwrap();
    let by_id: BTreeMap<&str, &_> =
        records.iter().map(|r| (r.gauge_id.as_str(), r)).collect();
    let mut baseline_rows: Vec<PredictionRow> = Vec::new();
    for row in &predictions {
        if row.lead_days != 0 {
            continue;
        }
        let record = by_id[row.gauge_id.as_str()];
        let Some(prev) = record.axis.index_of(row.issue_date - chrono::Duration::days(1)) else {
            continue;
        };
        let Some(value) = record.discharge_mmday[prev] else { continue };
        for lead in 0..8 {
            baseline_rows.push(PredictionRow {
                gauge_id: row.gauge_id.clone(),
                model: "persistence".to_owned(),
                issue_date: row.issue_date,
                lead_days: lead,
                value,
            });
        }
    }
    let baseline_dir = ws.path().join("out").join("baseline");
    std::fs::create_dir_all(&baseline_dir).unwrap();
    let baseline_csv = baseline_dir.join("predictions.csv");
    hydrocast::cli::formats::write_csv(&baseline_csv, &baseline_rows).unwrap();

    run_ok(
        &config,
        &[
            "return-periods",
            "--predictions",
            baseline_csv.to_str().unwrap(),
            "--out",
            out("rp-baseline").to_str().unwrap(),
        ],
    );
    run_ok(
        &config,
        &[
            "eval-events",
            "--predictions",
            baseline_csv.to_str().unwrap(),
            "--observed-thresholds",
            out("rp-obs").join("return_periods.csv").to_str().unwrap(),
            "--model-thresholds",
            out("rp-baseline").join("return_periods.csv").to_str().unwrap(),
            "--out",
            out("eval-events-baseline").to_str().unwrap(),
        ],
    );
    run_ok(
        &config,
        &[
            "eval-hydro",
            "--predictions",
            baseline_csv.to_str().unwrap(),
            "--out",
            out("eval-hydro-baseline").to_str().unwrap(),
        ],
    );

    // Paired comparisons: NSE per lead and F1 pooled.
    run_ok(
        &config,
        &[
            "compare",
            "--a",
            out("eval-hydro").join("hydro_metrics.csv").to_str().unwrap(),
            "--b",
            out("eval-hydro-baseline").join("hydro_metrics.csv").to_str().unwrap(),
            "--metric",
            "nse",
            "--grouping",
            "lead",
            "--out",
            out("compare-nse").to_str().unwrap(),
        ],
    );
    let nse_report = read_json_value(&out("compare-nse").join("comparison.json"));
    assert_eq!(nse_report["metric"], "nse");
    let groups = nse_report["groups"].as_array().unwrap();
    assert_eq!(groups.len(), 8, "one comparison group per lead");
    for group in groups {
        let n = group["n"].as_u64().unwrap();
        assert_eq!(n as usize, gauges.len());
        let p = group["p_value"].as_f64().unwrap();
        assert!(p > 0.0 && p <= 1.0);
    }

    run_ok(
        &config,
        &[
            "compare",
            "--a",
            out("eval-events").join("event_scores.csv").to_str().unwrap(),
            "--b",
            out("eval-events-baseline").join("event_scores.csv").to_str().unwrap(),
            "--out",
            out("compare-f1").to_str().unwrap(),
        ],
    );
    let f1_report = read_json_value(&out("compare-f1").join("comparison.json"));
    assert_eq!(f1_report["groups"].as_array().unwrap().len(), 1, "pooled grouping");

    // Skill prediction: classify above/below-mean F1 from attributes,
    // then apply the saved model to the whole fleet.
    let scores_csv = out("eval-events").join("event_scores.csv");
    run_ok(
        &config,
        &[
            "skill-fit",
            "--scores",
            scores_csv.to_str().unwrap(),
            "--t",
            "1",
            "--out",
            out("skill-fit").to_str().unwrap(),
        ],
    );
    let forest: Forest = serde_json::from_str(
        &std::fs::read_to_string(out("skill-fit").join("skill_model.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(forest.task, ForestTask::Classify);
    assert_eq!(forest.classes, ABOVE_BELOW_CLASSES);
    let importances = std::fs::read_to_string(out("skill-fit").join("importances.csv")).unwrap();
    assert_eq!(importances.lines().count(), forest.feature_names.len() + 1);
    let eval = read_json_value(&out("skill-fit").join("skill_eval.json"));
    let accuracy = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
    assert!(out("skill-fit").join("confusion.csv").is_file());

    run_ok(
        &config,
        &[
            "skill-predict",
            "--model",
            out("skill-fit").join("skill_model.json").to_str().unwrap(),
        ],
    );
    let predicted =
        std::fs::read_to_string(out("skill-predict").join("predicted_f1.csv")).unwrap();
    let mut lines = predicted.lines();
    assert_eq!(lines.next(), Some("basin_id,predicted"));
    let mut n_predicted = 0;
    for line in lines {
        let (_, label) = line.split_once(',').expect("two columns");
        assert!(ABOVE_BELOW_CLASSES.contains(&label), "unknown class {label}");
        n_predicted += 1;
    }
    assert_eq!(n_predicted, gauges.len());

    // Regression flavor of the same fit.
    run_ok(
        &config,
        &[
            "skill-fit",
            "--scores",
            scores_csv.to_str().unwrap(),
            "--t",
            "1",
            "--regress",
            "--out",
            out("skill-fit-regress").to_str().unwrap(),
        ],
    );
    let regressor: Forest = serde_json::from_str(
        &std::fs::read_to_string(out("skill-fit-regress").join("skill_model.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(regressor.task, ForestTask::Regress);

    // Report: box-plot tables and charts along all three dimensions.
    run_ok(&config, &["report", "--scores", scores_csv.to_str().unwrap()]);
    for dimension in ["return_period", "lead", "continent"] {
        let table = out("report").join(format!("summary_by_{dimension}.csv"));
        assert!(table.is_file(), "missing {}", table.display());
        for metric in ["precision", "recall", "f1"] {
            let svg_path = out("report").join(format!("{metric}_by_{dimension}.svg"));
            let svg = std::fs::read_to_string(&svg_path)
                .unwrap_or_else(|e| panic!("{}: {e}", svg_path.display()));
            assert!(svg.starts_with("<svg"), "{} is not an SVG", svg_path.display());
        }
    }
    check_provenance(&out("report"), &config, "report");

    // Fold-restricted leg: a small model trained on one fold's training
    // side must only ever forecast that fold's test gauges and window.
    let small_config = ws.path().join("config_small.json");
    std::fs::write(
        &small_config,
        serde_json::json!({
            "data_root": data,
            "output_root": ws.path().join("out"),
            "model_name": "fold_probe",
            "model": {
                "hindcast_length": 30,
                "hidden_size": 8,
                "batch_size": 8,
                "training_steps": 120,
                "validation_interval": 60,
                "validation_pairs": 16,
                "ensemble_size": 2
            },
            "seed": 11
        })
        .to_string(),
    )
    .unwrap();
    let plan_path = out("cv-split").join("split_plan.json");
    let fold = &plan.folds[0];
    run_ok(
        &small_config,
        &[
            "train",
            "--plan",
            plan_path.to_str().unwrap(),
            "--fold",
            &fold.fold_id,
            "--out",
            out("train-fold").to_str().unwrap(),
        ],
    );
    run_ok(
        &small_config,
        &[
            "forecast",
            "--checkpoint",
            out("train-fold").join("checkpoint.json").to_str().unwrap(),
            "--plan",
            plan_path.to_str().unwrap(),
            "--fold",
            &fold.fold_id,
            "--out",
            out("forecast-fold").to_str().unwrap(),
        ],
    );
    let fold_rows: Vec<PredictionRow> =
        read_rows(&out("forecast-fold").join("predictions.csv"));
    assert!(!fold_rows.is_empty());
    let test_ids: BTreeSet<&str> = fold.test_gauges.iter().map(String::as_str).collect();
    for row in &fold_rows {
        assert!(
            test_ids.contains(row.gauge_id.as_str()),
            "{} is not in the fold's test side",
            row.gauge_id
        );
        assert!(
            fold.test_ranges.iter().any(|r| r.start <= row.issue_date && row.issue_date <= r.end),
            "issue {} outside the fold's test windows",
            row.issue_date
        );
    }

    let secs = started.elapsed().as_secs_f64();
    assert!(secs < 600.0, "pipeline took {secs:.0}s, budget is 600s");
    println!("PASS pipeline: {} predictions, {} event rows, fold leg {} rows in {secs:.0}s",
        predictions.len(), event_rows.len(), fold_rows.len());
}

#[test]
fn rejects_unknown_config_keys_with_machine_readable_errors() {
    let ws = tempfile::tempdir().unwrap();
    let config = ws.path().join("config.json");
    std::fs::write(&config, r#"{"seed": 1, "lernrate": 0.1}"#).unwrap();
    let out_dir = ws.path().join("out");

    let output = std::process::Command::new(bin())
        .arg("--config")
        .arg(&config)
        .args(["cv-split", "--out", out_dir.to_str().unwrap()])
        .output()
        .expect("binary launches");
    assert!(!output.status.success(), "an unknown config key must fail the run");
    let stderr = String::from_utf8_lossy(&output.stderr);
    let error: serde_json::Value =
        serde_json::from_str(stderr.trim()).expect("stderr carries one JSON object");
    assert_eq!(error["error"]["kind"], "config");
    assert!(
        error["error"]["message"].as_str().unwrap().contains("lernrate"),
        "the message should name the offending key"
    );
    assert!(!out_dir.exists(), "no output directory on a failed run");
}
