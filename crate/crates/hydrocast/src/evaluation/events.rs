//! Threshold-crossing events and their matching-based scores.

use crate::data::CalendarAxis;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

/// Days of slack allowed between a predicted and an observed event for
/// the pair to count as a hit.
pub const MATCH_WINDOW_DAYS: i64 = 2;

/// Upward crossings of one return-period threshold in one flow series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventList {
    pub gauge_id: String,
    /// `"observed"` or a model name.
    pub source: String,
    pub return_period: f64,
    /// First day of each exceedance run, strictly increasing.
    pub dates: Vec<NaiveDate>,
    /// The series opened at or above the threshold, so the first event
    /// marks the start of the record rather than an observed crossing.
    pub starts_above: bool,
    /// Days without data inside the series, treated as below threshold.
    pub missing_days: usize,
}

/// A day is an event when flow reaches the threshold and the previous
/// day sat below it. Missing days count as below threshold and are
/// tallied separately; a series that opens at or above the threshold
/// yields an event on its first day, flagged as such.
pub fn extract_events(
    gauge_id: &str,
    source: &str,
    return_period: f64,
    axis: &CalendarAxis,
    flow: &[Option<f64>],
    threshold: f64,
) -> EventList {
    assert_eq!(flow.len(), axis.len(), "flow series does not match its axis");
    let mut dates = Vec::new();
    let mut missing_days = 0;
    let mut prev_above = false;
    let mut starts_above = false;
    for (t, value) in flow.iter().enumerate() {
        let above = match value {
            Some(v) => *v >= threshold,
            None => {
                missing_days += 1;
                false
            }
        };
        if above && !prev_above {
            if t == 0 {
                starts_above = true;
            }
            dates.push(axis.date_at(t));
        }
        prev_above = above;
    }
    EventList {
        gauge_id: gauge_id.to_owned(),
        source: source.to_owned(),
        return_period,
        dates,
        starts_above,
        missing_days,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

/// One-to-one matching between sorted event lists, pairing events at
/// most `window_days` apart and maximizing the number of pairs.
///
/// In-order greedy matching is maximal here: with both lists sorted and
/// a symmetric distance window, skipping the earlier of two candidate
/// partners can never enable more pairs later.
pub fn match_events(predicted: &[NaiveDate], observed: &[NaiveDate], window_days: i64) -> MatchCounts {
    debug_assert!(predicted.windows(2).all(|w| w[0] < w[1]), "predicted events not sorted");
    debug_assert!(observed.windows(2).all(|w| w[0] < w[1]), "observed events not sorted");
    let mut i = 0;
    let mut j = 0;
    let mut true_pos = 0;
    while i < predicted.len() && j < observed.len() {
        let delta = (predicted[i] - observed[j]).num_days();
        if delta.abs() <= window_days {
            true_pos += 1;
            i += 1;
            j += 1;
        } else if delta < 0 {
            i += 1;
        } else {
            j += 1;
        }
    }
    MatchCounts {
        true_pos,
        false_pos: predicted.len() - true_pos,
        false_neg: observed.len() - true_pos,
    }
}

/// Precision, recall, F1; `None` marks an undefined score, which is
/// distinct from zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Precision is undefined with no predicted events, recall with no
/// observed events, and F1 when either side is undefined; F1 is zero
/// (defined) when both sides are zero.
pub fn prf1(counts: &MatchCounts) -> Prf1 {
    let tp = counts.true_pos as f64;
    let precision = if counts.true_pos + counts.false_pos == 0 {
        None
    } else {
        Some(tp / (counts.true_pos + counts.false_pos) as f64)
    };
    let recall = if counts.true_pos + counts.false_neg == 0 {
        None
    } else {
        Some(tp / (counts.true_pos + counts.false_neg) as f64)
    };
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Prf1 { precision, recall, f1 }
}

/// One row of the event-score table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub gauge_id: String,
    pub model: String,
    pub return_period: f64,
    pub lead_days: usize,
    pub counts: MatchCounts,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn score_events(
    predicted: &EventList,
    observed: &EventList,
    lead_days: usize,
    window_days: i64,
) -> EventScore {
    assert_eq!(predicted.gauge_id, observed.gauge_id, "event lists from different gauges");
    let counts = match_events(&predicted.dates, &observed.dates, window_days);
    let scores = prf1(&counts);
    EventScore {
        gauge_id: predicted.gauge_id.clone(),
        model: predicted.source.clone(),
        return_period: predicted.return_period,
        lead_days,
        counts,
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn axis(days: usize) -> CalendarAxis {
        CalendarAxis::new("2000-01-01".parse().unwrap(), days)
    }

    fn day(ordinal: i64) -> NaiveDate {
        "2000-01-01".parse::<NaiveDate>().unwrap() + chrono::Duration::days(ordinal)
    }

    #[test]
    fn multi_day_exceedance_is_one_event_at_its_first_day() {
        let flow = [1.0, 5.0, 5.0, 1.0].map(Some);
        let events = extract_events("g", "observed", 2.0, &axis(4), &flow, 3.0);
        assert_eq!(events.dates, vec![day(1)]);
        assert!(!events.starts_above);
        assert_eq!(events.missing_days, 0);
    }

    #[test]
    fn series_opening_above_threshold_is_flagged() {
        let flow = [9.0, 9.0, 9.0].map(Some);
        let events = extract_events("g", "observed", 2.0, &axis(3), &flow, 3.0);
        assert_eq!(events.dates, vec![day(0)]);
        assert!(events.starts_above);
    }

    #[test]
    fn missing_days_break_runs_and_are_counted() {
        let flow = [Some(5.0), None, Some(5.0), None, None, Some(1.0)];
        let events = extract_events("g", "observed", 2.0, &axis(6), &flow, 3.0);
        // The gap resets the run, so day 2 is a fresh crossing.
        assert_eq!(events.dates, vec![day(0), day(2)]);
        assert!(events.starts_above);
        assert_eq!(events.missing_days, 3);
    }

    #[test]
    fn random_series_match_an_independent_scan() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..60);
            let flow: Vec<Option<f64>> = (0..n)
                .map(|_| if rng.gen_bool(0.1) { None } else { Some(rng.gen_range(0.0..10.0)) })
                .collect();
            let threshold = rng.gen_range(2.0..8.0);
            let events = extract_events("g", "observed", 2.0, &axis(n), &flow, threshold);
            // Reference scan: explicit day-by-day state machine.
            let mut expected = Vec::new();
            for t in 0..n {
                let above = |i: usize| flow[i].map_or(false, |v| v >= threshold);
                if above(t) && (t == 0 || !above(t - 1)) {
                    expected.push(day(t as i64));
                }
            }
            assert_eq!(events.dates, expected);
        }
    }

    #[test]
    fn one_day_apart_matches_three_days_does_not() {
        let m = match_events(&[day(10)], &[day(11)], MATCH_WINDOW_DAYS);
        assert_eq!(m, MatchCounts { true_pos: 1, false_pos: 0, false_neg: 0 });
        let m = match_events(&[day(10)], &[day(13)], MATCH_WINDOW_DAYS);
        assert_eq!(m, MatchCounts { true_pos: 0, false_pos: 1, false_neg: 1 });
    }

    /// Exhaustive maximum matching by bitmask recursion, the oracle for
    /// the two-pointer rule.
    fn max_matching_brute(pred: &[NaiveDate], obs: &[NaiveDate], window: i64) -> usize {
        fn go(i: usize, mask: u32, pred: &[NaiveDate], obs: &[NaiveDate], window: i64) -> usize {
            if i == pred.len() {
                return 0;
            }
            let mut best = go(i + 1, mask, pred, obs, window);
            for (j, o) in obs.iter().enumerate() {
                if mask & (1 << j) == 0 && (pred[i] - *o).num_days().abs() <= window {
                    best = best.max(1 + go(i + 1, mask | (1 << j), pred, obs, window));
                }
            }
            best
        }
        go(0, 0, pred, obs, window)
    }

    fn random_events(rng: &mut ChaCha20Rng, max_len: usize) -> Vec<NaiveDate> {
        let n = rng.gen_range(0..=max_len);
        let mut days: Vec<i64> = Vec::with_capacity(n);
        let mut t = 0i64;
        for _ in 0..n {
            t += rng.gen_range(1..8);
            days.push(t);
        }
        days.into_iter().map(day).collect()
    }

    #[test]
    fn greedy_matching_equals_exhaustive_maximum() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let pred = random_events(&mut rng, 12);
            let obs = random_events(&mut rng, 12);
            let fast = match_events(&pred, &obs, MATCH_WINDOW_DAYS);
            let best = max_matching_brute(&pred, &obs, MATCH_WINDOW_DAYS);
            assert_eq!(fast.true_pos, best, "pred {pred:?} obs {obs:?}");
            assert_eq!(fast.false_pos, pred.len() - best);
            assert_eq!(fast.false_neg, obs.len() - best);
            // Swapping roles swaps FP and FN but never the hit count.
            let swapped = match_events(&obs, &pred, MATCH_WINDOW_DAYS);
            assert_eq!(swapped.true_pos, fast.true_pos);
            assert_eq!(swapped.false_pos, fast.false_neg);
        }
    }

    #[test]
    fn prf1_examples_and_undefined_states() {
        let p = prf1(&MatchCounts { true_pos: 1, false_pos: 1, false_neg: 1 });
        assert_eq!(p, Prf1 { precision: Some(0.5), recall: Some(0.5), f1: Some(0.5) });

        // No predictions at all: precision has no denominator, recall does.
        let p = prf1(&MatchCounts { true_pos: 0, false_pos: 0, false_neg: 2 });
        assert_eq!(p, Prf1 { precision: None, recall: Some(0.0), f1: None });

        let p = prf1(&MatchCounts { true_pos: 3, false_pos: 1, false_neg: 0 });
        assert_eq!(p.precision, Some(0.75));
        assert_eq!(p.recall, Some(1.0));
        assert!((p.f1.unwrap() - 6.0 / 7.0).abs() < 1e-15);

        // Both sides present but nothing matched: zero, not undefined.
        let p = prf1(&MatchCounts { true_pos: 0, false_pos: 3, false_neg: 2 });
        assert_eq!(p, Prf1 { precision: Some(0.0), recall: Some(0.0), f1: Some(0.0) });

        // Nothing on either side: all three undefined.
        let p = prf1(&MatchCounts { true_pos: 0, false_pos: 0, false_neg: 0 });
        assert_eq!(p, Prf1 { precision: None, recall: None, f1: None });
    }

    #[test]
    fn defined_scores_stay_in_the_unit_interval() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..500 {
            let c = MatchCounts {
                true_pos: rng.gen_range(0..5),
                false_pos: rng.gen_range(0..5),
                false_neg: rng.gen_range(0..5),
            };
            let p = prf1(&c);
            for v in [p.precision, p.recall, p.f1].into_iter().flatten() {
                assert!((0.0..=1.0).contains(&v));
            }
            if let (Some(pr), Some(rc), Some(f)) = (p.precision, p.recall, p.f1) {
                assert!(f <= 2.0 * pr.min(rc) + 1e-15);
            }
        }
    }

    #[test]
    fn score_events_assembles_the_row() {
        let predicted = EventList {
            gauge_id: "g1".into(),
            source: "lstm".into(),
            return_period: 5.0,
            dates: vec![day(3), day(20)],
            starts_above: false,
            missing_days: 0,
        };
        let observed = EventList {
            gauge_id: "g1".into(),
            source: "observed".into(),
            return_period: 5.0,
            dates: vec![day(4)],
            starts_above: false,
            missing_days: 2,
        };
        let score = score_events(&predicted, &observed, 3, MATCH_WINDOW_DAYS);
        assert_eq!(score.model, "lstm");
        assert_eq!(score.lead_days, 3);
        assert_eq!(score.counts, MatchCounts { true_pos: 1, false_pos: 1, false_neg: 0 });
        assert_eq!(score.precision, Some(0.5));
        assert_eq!(score.recall, Some(1.0));
        assert!((score.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }
}
