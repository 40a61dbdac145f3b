//! Extract threshold-crossing flood events and score them with a
//! tolerant matcher.
//!
//! An event is the day flow first reaches the threshold after sitting
//! below it. A predicted event counts as a hit when an observed event
//! lies within +/- 2 days of it, and each observed event can satisfy at
//! most one prediction, so the scorer solves a maximum bipartite
//! matching rather than greedily double-counting.
//!
//! Run with: cargo run --example event_scoring

use chrono::NaiveDate;
use hydrocast::data::CalendarAxis;
use hydrocast::evaluation::{extract_events, prf1, score_events, MatchCounts};

fn main() {
    let axis = CalendarAxis::new(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), 40);

    // Observed flow: two clean events, one missing-data stretch.
    let mut observed = vec![Some(1.0); 40];
    for (day, peak) in [(5, 9.0), (6, 12.0), (7, 8.0), (20, 11.0), (21, 10.0)] {
        observed[day] = Some(peak);
    }
    for slot in observed.iter_mut().take(33).skip(30) {
        *slot = None;
    }

    // Simulated flow: catches the first event a day late, invents one.
    let mut simulated = vec![Some(1.2); 40];
    for (day, peak) in [(6, 9.5), (7, 13.0), (8, 9.0), (27, 12.0)] {
        simulated[day] = Some(peak);
    }

    let threshold = 8.0;
    let obs_events = extract_events("demo", "obs", 2.0, &axis, &observed, threshold);
    let sim_events = extract_events("demo", "model", 2.0, &axis, &simulated, threshold);

    println!("observed crossings of {threshold} mm/day: {:?}", obs_events.dates);
    println!("  ({} days of missing data treated as below threshold)", obs_events.missing_days);
    println!("predicted crossings: {:?}", sim_events.dates);

    let score = score_events(&sim_events, &obs_events, 0, 2);
    println!(
        "\nwith a +/- 2 day window: TP={} FP={} FN={}",
        score.counts.true_pos, score.counts.false_pos, score.counts.false_neg
    );
    println!(
        "precision={:?} recall={:?} f1={:?}",
        score.precision, score.recall, score.f1
    );

    // Undefined means undefined: a gauge with no events on either side
    // produces no numbers at all, never a silent zero.
    let quiet = vec![Some(1.0); 40];
    let none_obs = extract_events("quiet", "obs", 2.0, &axis, &quiet, threshold);
    let none_sim = extract_events("quiet", "model", 2.0, &axis, &quiet, threshold);
    let empty = score_events(&none_sim, &none_obs, 0, 2);
    println!(
        "\nquiet gauge: precision={:?} recall={:?} f1={:?} (stays undefined)",
        empty.precision, empty.recall, empty.f1
    );

    // One observed event cannot satisfy two nearby predictions.
    let two_pred = MatchCounts { true_pos: 1, false_pos: 1, false_neg: 0 };
    let p = prf1(&two_pred);
    println!(
        "\ntwo predictions, one observed event -> precision={:?} recall={:?} f1={:?}",
        p.precision, p.recall, p.f1
    );
}
