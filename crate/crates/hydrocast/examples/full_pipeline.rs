//! End-to-end run of the whole library on a synthetic fleet: data
//! generation, leakage-safe splitting, training, forecasting, flood
//! frequency analysis, event scoring, hydrograph metrics, a paired
//! comparison against a persistence baseline, and box-plot reporting.
//!
//! The same flow is available from the command line (see the README);
//! this example drives it through the library API instead so every
//! intermediate value is visible.
//!
//! Run with: cargo run --example full_pipeline

use hydrocast::data::{build_inputs_all, fit_transform, filter_gauges, DateRange, ImputePolicy};
use hydrocast::evaluation::{
    compare_models, extract_events, hydrograph_metrics, score_events, Grouping, ScoredGauge,
};
use hydrocast::frequency::{build_tables, FlowSeriesRef, FrequencyConfig};
use hydrocast::model::{predict_ensemble, train_ensemble, valid_issue_indices, ModelConfig, TrainSlice};
use hydrocast::report::{render_box_plot, summarize, ReportDimension};
use hydrocast::synthetic::{generate_basins, SynthConfig};
use std::collections::BTreeMap;
use std::fs;

fn main() {
    // 1. Data: synthetic fleet, drainage-area consistency filter.
    let raw = generate_basins(&SynthConfig {
        n_basins: 8,
        n_years: 7,
        seed: 33,
        ..SynthConfig::default()
    });
    let basins = filter_gauges(raw, 0.2);
    println!("fleet: {} basins after the area filter", basins.len());

    // 2. Time split: first four years train, last three evaluate.
    let axis = basins[0].axis;
    let train_ranges =
        vec![DateRange { start: axis.start(), end: axis.date_at(4 * 365) }];
    let eval_range = DateRange { start: axis.date_at(4 * 365 + 1), end: axis.end() };

    // 3. Features: train-window statistics only, forecast-source inputs
    //    imputed from reanalysis where missing.
    let transform = fit_transform(&basins, &train_ranges).expect("transform fits");
    let sources = vec!["forecast".to_owned()];
    let (inputs, excluded) =
        build_inputs_all(&basins, &transform, &ImputePolicy::default(), &sources).unwrap();
    println!("inputs: {} basins ready, {} excluded", inputs.len(), excluded.len());

    // 4. Train a small ensemble.
    let config = ModelConfig {
        hindcast_length: 60,
        hidden_size: 16,
        batch_size: 8,
        training_steps: 2_000,
        validation_interval: 500,
        validation_pairs: 32,
        ..ModelConfig::desk_scale()
    };
    let slice = TrainSlice { basins: &inputs, train_ranges: &train_ranges };
    println!("training {} members x {} steps...", config.ensemble_size, config.training_steps);
    let members = train_ensemble(&slice, &config, 7).expect("training converges");
    for m in &members {
        println!("  seed {}: NLL {:.3} -> {:.3}", m.seed, m.initial_validation_nll, m.final_validation_nll);
    }

    // 5. Forecast the evaluation window for every basin.
    let mut sim_flows: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for basin in &inputs {
        let issues = valid_issue_indices(basin, &config, &eval_range);
        let fc = predict_ensemble(&members, basin, &issues, &transform.target, &config).unwrap();
        // Reassemble the lead-0 path as a daily series on the basin axis.
        let mut series = vec![None; basin.axis.len()];
        for (i, date) in fc.issue_dates.iter().enumerate() {
            if let Some(t) = basin.axis.index_of(*date) {
                series[t] = Some(fc.median_mmday[i][0]);
            }
        }
        sim_flows.insert(basin.gauge_id.clone(), series);
    }

    // 6. Flood frequency: observed thresholds from the full record,
    //    model thresholds from its own simulated climatology, so a
    //    biased model is compared against its own flow regime.
    let freq = FrequencyConfig { min_years: 2, ..FrequencyConfig::default() };
    let obs_series: Vec<FlowSeriesRef> = basins
        .iter()
        .map(|b| FlowSeriesRef { gauge_id: &b.gauge_id, source: "obs", axis: &b.axis, flow: &b.discharge_mmday })
        .collect();
    let (obs_tables, _) = build_tables(&obs_series, &freq);
    let sim_series: Vec<FlowSeriesRef> = basins
        .iter()
        .filter_map(|b| {
            sim_flows.get(&b.gauge_id).map(|flow| FlowSeriesRef {
                gauge_id: &b.gauge_id,
                source: "model",
                axis: &b.axis,
                flow,
            })
        })
        .collect();
    let (sim_tables, sim_skipped) = build_tables(&sim_series, &freq);
    println!(
        "\nreturn-period tables: {} observed, {} model ({} skipped)",
        obs_tables.len(),
        sim_tables.len(),
        sim_skipped.len()
    );

    // 7. Event scores and hydrograph metrics per basin.
    let threshold_of = |tables: &[hydrocast::frequency::ReturnPeriodTable], gauge: &str, t: f64| {
        tables.iter().find(|tab| tab.gauge_id == gauge).and_then(|tab| {
            tab.thresholds.iter().find(|(tt, _)| *tt == t).map(|(_, thr)| *thr)
        })
    };
    let mut event_scores = Vec::new();
    let mut model_scored = Vec::new();
    let mut persist_scored = Vec::new();
    for basin in &basins {
        let Some(sim) = sim_flows.get(&basin.gauge_id) else { continue };
        let (lo, hi) = basin.axis.clip(&eval_range).unwrap();
        let sub_axis = hydrocast::data::CalendarAxis::new(basin.axis.date_at(lo), hi - lo + 1);
        let obs = &basin.discharge_mmday[lo..=hi];
        let sim = &sim[lo..=hi];

        for t in [1.0, 2.0] {
            let (Some(obs_thr), Some(sim_thr)) = (
                threshold_of(&obs_tables, &basin.gauge_id, t),
                threshold_of(&sim_tables, &basin.gauge_id, t),
            ) else {
                continue;
            };
            let observed = extract_events(&basin.gauge_id, "obs", t, &sub_axis, obs, obs_thr);
            let predicted = extract_events(&basin.gauge_id, "model", t, &sub_axis, sim, sim_thr);
            event_scores.push(score_events(&predicted, &observed, 0, 2));
        }

        // Persistence baseline: tomorrow equals today.
        let mut persist = vec![None; obs.len()];
        for i in 1..obs.len() {
            persist[i] = obs[i - 1];
        }
        let m = hydrograph_metrics(sim, obs);
        let p = hydrograph_metrics(&persist, obs);
        model_scored.push(ScoredGauge {
            gauge_id: basin.gauge_id.clone(),
            continent: basin.continent.clone(),
            return_period: None,
            lead_days: 0,
            value: m.nse,
        });
        persist_scored.push(ScoredGauge {
            gauge_id: basin.gauge_id.clone(),
            continent: basin.continent.clone(),
            return_period: None,
            lead_days: 0,
            value: p.nse,
        });
    }
    let defined = event_scores.iter().filter(|s| s.f1.is_some()).count();
    println!("event scores: {} cells, {} with defined F1", event_scores.len(), defined);

    // 8. Paired comparison: model vs persistence on NSE.
    let report = compare_models("nse", "model", "persistence", &model_scored, &persist_scored, Grouping::All);
    let g = &report.groups[0];
    println!(
        "\nmodel vs persistence on NSE: n={}, model better on {:.0}%, p={:.4}, d={}",
        g.n,
        100.0 * g.frac_a_better,
        g.p_value,
        g.cohens_d.map_or("undefined".to_owned(), |d| format!("{d:+.2}"))
    );

    // 9. Report: quartile summary and an SVG box plot.
    let continents: BTreeMap<String, String> =
        basins.iter().map(|b| (b.gauge_id.clone(), b.continent.clone())).collect();
    let summary = summarize(&event_scores, ReportDimension::ReturnPeriod, &continents);
    let rows: Vec<_> = summary.iter().filter(|r| r.metric == "f1").cloned().collect();
    let svg = render_box_plot("event F1 by return period", "F1", &rows);
    let out = std::path::Path::new("target/example-out");
    fs::create_dir_all(out).unwrap();
    fs::write(out.join("pipeline_f1.svg"), &svg).unwrap();
    println!("\nwrote {}", out.join("pipeline_f1.svg").display());
    for row in &rows {
        if let Some(s) = &row.stats {
            println!(
                "  {}: n={} median F1 {:.2} (IQR {:.2}..{:.2})",
                row.group, row.n_defined, s.median, s.q1, s.q3
            );
        }
    }
}
