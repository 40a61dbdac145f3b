//! Fit return-period thresholds from a discharge record.
//!
//! Annual maxima are extracted per hydrological year (skipping years with
//! insufficient coverage), log-Pearson III moments are fitted to their
//! logs, and thresholds come from the Pearson III frequency factor at
//! each return period. A one-year "return period" is remapped to a
//! slightly longer effective period so its non-exceedance quantile is
//! well defined.
//!
//! Run with: cargo run --example flood_frequency

use hydrocast::frequency::{build_tables, frequency_factor, FlowSeriesRef, FrequencyConfig};
use hydrocast::synthetic::{generate_basins, SynthConfig};

fn main() {
    let basins = generate_basins(&SynthConfig {
        n_basins: 3,
        n_years: 25,
        seed: 5,
        ..SynthConfig::default()
    });

    let config = FrequencyConfig { min_years: 10, ..FrequencyConfig::default() };
    let series: Vec<FlowSeriesRef> = basins
        .iter()
        .map(|b| FlowSeriesRef {
            gauge_id: &b.gauge_id,
            source: "obs",
            axis: &b.axis,
            flow: &b.discharge_mmday,
        })
        .collect();
    let (tables, skipped) = build_tables(&series, &config);

    for table in &tables {
        println!(
            "{} ({}): {} usable years, log moments mean={:.4} std={:.4} skew={:.4}",
            table.gauge_id,
            table.source,
            table.moments.n_years,
            table.moments.mean_log,
            table.moments.std_log,
            table.moments.skew_log
        );
        for (t, threshold) in &table.thresholds {
            println!("  T={t:>5} years -> {threshold:.3} mm/day");
        }
    }
    for s in &skipped {
        println!("skipped {} ({}): {}", s.gauge_id, s.source, s.reason);
    }

    // A record too short for stable moments is refused, not guessed at.
    let short = &basins[0];
    let axis_short = hydrocast::data::CalendarAxis::new(short.axis.start(), 4 * 365);
    let truncated = FlowSeriesRef {
        gauge_id: "short-record",
        source: "obs",
        axis: &axis_short,
        flow: &short.discharge_mmday[..4 * 365],
    };
    let (_, refused) = build_tables(&[truncated], &config);
    println!("\n{}: {}", refused[0].gauge_id, refused[0].reason);

    // The frequency factor is the quantile of a standardized Pearson III;
    // at zero skew it collapses to the standard normal quantile.
    println!("\nfrequency factor K(skew, T):");
    println!("{:>6} {:>10} {:>10} {:>10}", "skew", "T=2", "T=10", "T=100");
    for skew in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let k = |t: f64| frequency_factor(skew, t).unwrap();
        println!("{skew:>6.1} {:>10.4} {:>10.4} {:>10.4}", k(2.0), k(10.0), k(100.0));
    }
}
