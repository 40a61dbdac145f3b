//! Build leakage-safe cross-validation split plans.
//!
//! Gauges are held out in space (random groups, or whole continents,
//! climate zones, or terminal drainage basins) at the same time as
//! windows are held out in time. The temporal folds keep a buffer
//! between any training day and any test day, so a hindcast window
//! anchored in training can never overlap the test window.
//!
//! Run with: cargo run --example cross_validation

use hydrocast::cv::{
    build_split_plan, temporal_folds, GaugeMeta, SplitScheme, TEMPORAL_BUFFER_DAYS,
};
use hydrocast::data::DateRange;
use hydrocast::synthetic::{generate_basins, SynthConfig};
use chrono::NaiveDate;

fn main() {
    let basins = generate_basins(&SynthConfig {
        n_basins: 40,
        n_years: 2,
        seed: 11,
        ..SynthConfig::default()
    });
    let metas: Vec<GaugeMeta> = basins.iter().map(GaugeMeta::from).collect();

    let span = DateRange {
        start: NaiveDate::from_ymd_opt(1990, 1, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(2013, 12, 31).unwrap(),
    };
    let temporal = temporal_folds(&span, 3, TEMPORAL_BUFFER_DAYS).expect("span is long enough");
    println!("temporal folds over {} to {} (buffer {} days):", span.start, span.end, TEMPORAL_BUFFER_DAYS);
    for (i, fold) in temporal.iter().enumerate() {
        let trains: Vec<String> =
            fold.train.iter().map(|r| format!("{}..{}", r.start, r.end)).collect();
        println!(
            "  t{i}: test {}..{} | train {}",
            fold.test.start,
            fold.test.end,
            trains.join(", ")
        );
    }

    for scheme in [
        SplitScheme::Random,
        SplitScheme::Continent,
        SplitScheme::Climate,
        SplitScheme::TerminalBasin,
    ] {
        let plan = build_split_plan(scheme, &metas, &temporal, 5, 42).expect("plan builds");
        println!(
            "\nscheme {:?}: {} spatial folds x {} temporal = {} cells",
            scheme, plan.spatial_folds, plan.temporal_folds, plan.folds.len()
        );
        let fold = &plan.folds[0];
        println!(
            "  {}: {} test gauges, {} train gauges, no overlap: {}",
            fold.fold_id,
            fold.test_gauges.len(),
            fold.train_gauges.len(),
            fold.test_gauges.iter().all(|g| !fold.train_gauges.contains(g))
        );
    }

    // Grouped schemes never split a group: every gauge of a held-out
    // climate zone is out of training together, which is what makes the
    // ungauged-basin claim honest.
    let plan = build_split_plan(SplitScheme::Climate, &metas, &temporal, 5, 42).unwrap();
    let zones_in_test: std::collections::BTreeSet<&str> = plan.folds[0]
        .test_gauges
        .iter()
        .map(|g| {
            metas
                .iter()
                .find(|m| &m.gauge_id == g)
                .map(|m| m.climate_zone.as_str())
                .unwrap()
        })
        .collect();
    let leaked = metas.iter().any(|m| {
        zones_in_test.contains(m.climate_zone.as_str())
            && plan.folds[0].train_gauges.contains(&m.gauge_id)
    });
    println!(
        "\nclimate fold 0 holds out zones {:?}; any gauge of those zones in training: {}",
        zones_in_test, leaked
    );
}
