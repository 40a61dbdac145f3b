//! Seeded synthetic basins from a linear reservoir.
//!
//! Each basin turns seasonal, spiky precipitation into discharge
//! through a one-bucket store: the day's precipitation fills the store
//! and a fixed fraction drains as that day's flow. The drain fraction
//! varies per basin and is exposed as a static attribute, so models and
//! skill predictors have real signal to find. A paired "forecast"
//! source carries the same meteorology with noise, standing in for a
//! weather forecast; gaps are injected into observations and forcings;
//! one basin gets a deliberately inconsistent drainage area so the
//! area-agreement filter has something to catch.

use crate::data::{
    write_basin, AttributeVector, BasinRecord, CalendarAxis, DataError, ForcingSource,
};
use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Source name for the noise-free meteorology driving the hindcast.
pub const REANALYSIS_SOURCE: &str = "reanalysis";
/// Source name for the noisy meteorology standing in for a forecast.
pub const FORECAST_SOURCE: &str = "forecast";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_basins: usize,
    pub n_years: usize,
    pub start: NaiveDate,
    pub seed: u64,
    /// Chance of each observed discharge day being dropped.
    pub missing_fraction: f64,
    /// Relative noise bound on the forecast-source precipitation.
    pub forecast_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_basins: 20,
            n_years: 5,
            start: "2000-01-01".parse().unwrap(),
            seed: 0,
            missing_fraction: 0.02,
            forecast_noise: 0.08,
        }
    }
}

const DAYS_PER_YEAR: f64 = 365.25;

fn generate_basin(index: usize, config: &SynthConfig, seed: u64) -> BasinRecord {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let end = NaiveDate::from_ymd_opt(
        config.start.year() + config.n_years as i32,
        config.start.month(),
        config.start.day(),
    )
    .unwrap()
    .pred_opt()
    .unwrap();
    let axis = CalendarAxis::from_span(config.start, end);
    let days = axis.len();

    let drain = rng.gen_range(0.05..0.3);
    let precip_scale = rng.gen_range(1.0..4.0);
    let phase = rng.gen_range(0.0..DAYS_PER_YEAR);
    let temp_mean = rng.gen_range(2.0..15.0);

    let mut precip = Vec::with_capacity(days);
    let mut temp = Vec::with_capacity(days);
    for t in 0..days {
        let angle = 2.0 * std::f64::consts::PI * (t as f64 + phase) / DAYS_PER_YEAR;
        let season = 0.6 + 0.4 * angle.sin();
        let spike = -rng.gen_range(1e-12..1.0f64).ln();
        precip.push(precip_scale * season * spike);
        temp.push(temp_mean + 10.0 * (angle + 0.5).sin() + rng.gen_range(-2.0..2.0));
    }

    // One-bucket water balance, started at its seasonal equilibrium so
    // early days are not a filling transient.
    let mean_p = precip.iter().sum::<f64>() / days as f64;
    let mut store = mean_p / drain;
    let mut discharge = Vec::with_capacity(days);
    for &p in &precip {
        store += p;
        let q = drain * store;
        store -= q;
        discharge.push(q);
    }

    let gap = |rng: &mut ChaCha20Rng, chance: f64, v: f64| {
        if rng.gen_bool(chance) { None } else { Some(v) }
    };
    let reanalysis = ForcingSource {
        name: REANALYSIS_SOURCE.to_owned(),
        variables: vec!["precip".to_owned(), "temp".to_owned()],
        columns: vec![
            precip.iter().map(|&v| gap(&mut rng, 0.005, v)).collect(),
            temp.iter().map(|&v| gap(&mut rng, 0.005, v)).collect(),
        ],
    };
    let forecast = ForcingSource {
        name: FORECAST_SOURCE.to_owned(),
        variables: vec!["precip".to_owned(), "temp".to_owned()],
        columns: vec![
            precip
                .iter()
                .map(|&v| {
                    let noisy = v * (1.0 + rng.gen_range(-config.forecast_noise..config.forecast_noise));
                    gap(&mut rng, 0.01, noisy)
                })
                .collect(),
            temp.iter()
                .map(|&v| {
                    let noisy = v + rng.gen_range(-1.0..1.0);
                    gap(&mut rng, 0.01, noisy)
                })
                .collect(),
        ],
    };

    let mut discharge_mmday: Vec<Option<f64>> = discharge
        .iter()
        .map(|&q| gap(&mut rng, config.missing_fraction, q))
        .collect();
    // Every fifth basin also gets one contiguous outage.
    if index % 5 == 0 && days > 60 {
        let at = rng.gen_range(30..days - 30);
        for slot in discharge_mmday.iter_mut().skip(at).take(20) {
            *slot = None;
        }
    }

    let area_reported = 10f64.powf(rng.gen_range(1.5..3.5));
    // The last basin misstates its area well past the 20% filter.
    let area_polygon = if index + 1 == config.n_basins {
        area_reported * 1.3
    } else {
        area_reported * (1.0 + rng.gen_range(-0.05..0.05))
    };

    let mut attributes = AttributeVector::new();
    attributes.insert("reservoir_k".to_owned(), Some(drain));
    attributes.insert("precip_scale".to_owned(), Some(precip_scale));
    attributes.insert("log_area".to_owned(), Some(area_reported.log10()));
    attributes.insert("elevation_m".to_owned(), Some(rng.gen_range(50.0..3000.0)));
    // A sometimes-missing attribute keeps the imputation path honest.
    let soil = (index % 7 != 3).then(|| rng.gen_range(0.2..2.5));
    attributes.insert("soil_depth_m".to_owned(), soil);

    BasinRecord {
        gauge_id: format!("synth{index:03}"),
        area_reported_km2: area_reported,
        area_polygon_km2: area_polygon,
        continent: format!("continent{}", index % 6),
        climate_zone: format!("zone{:02}", index % 13),
        terminal_basin_id: format!("terminal{}", index % 8),
        axis,
        forcings: vec![forecast, reanalysis],
        discharge_mmday,
        attributes,
    }
}

/// Deterministic fleet of synthetic basins.
pub fn generate_basins(config: &SynthConfig) -> Vec<BasinRecord> {
    let mut master = ChaCha20Rng::seed_from_u64(config.seed);
    let seeds: Vec<u64> = (0..config.n_basins).map(|_| master.gen()).collect();
    seeds
        .into_iter()
        .enumerate()
        .map(|(i, seed)| generate_basin(i, config, seed))
        .collect()
}

/// Generate and write one directory per basin under `root`; returns the
/// gauge ids in directory order.
pub fn write_dataset(config: &SynthConfig, root: &std::path::Path) -> Result<Vec<String>, DataError> {
    let mut ids = Vec::with_capacity(config.n_basins);
    for record in generate_basins(config) {
        write_basin(&record, &root.join(&record.gauge_id))?;
        ids.push(record.gauge_id);
    }
    Ok(ids)
}
