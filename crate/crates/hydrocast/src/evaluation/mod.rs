//! Forecast skill scoring and model comparison.
//!
//! Three layers: event extraction and one-to-one matching of threshold
//! crossings against observed crossings (precision, recall, F1 with an
//! undefined state when a side has no events), continuous hydrograph
//! metrics per gauge and lead time, and paired statistics between two
//! models over a shared gauge universe (signed-rank test, effect size,
//! win fractions).
//!
//! Undefined scores stay undefined through every aggregation; group
//! results carry the count of defined pairs they were computed from.

mod events;
mod metrics;
mod stats;

pub use events::{
    extract_events, match_events, prf1, score_events, EventList, EventScore, MatchCounts, Prf1,
    MATCH_WINDOW_DAYS,
};
pub use metrics::{hydrograph_metrics, HydroMetrics};
pub use stats::{
    cohens_d, compare_models, wilcoxon_signed_rank, CohensD, ComparisonReport, GroupComparison,
    Grouping, ScoredGauge, WilcoxonResult, TIE_TOLERANCE,
};
