//! Streamflow forecasting and flood-event evaluation.
//!
//! This crate trains an encoder/decoder LSTM that issues daily streamflow
//! forecasts at lead times of 0 through 7 days, and evaluates those
//! forecasts the way operational flood services are judged: by whether
//! they catch return-period flood events, not just by fit statistics.
//!
//! The pieces, bottom to top:
//!
//! * [`autodiff`]: a small tape-based reverse-mode differentiation engine
//!   over dense `f64` tensors. Everything the model trains with is built
//!   from these ops, so gradients are checkable against finite differences.
//! * [`data`]: the on-disk basin layout (per-gauge forcing/discharge CSVs
//!   plus attribute and metadata JSON), drainage-area consistency
//!   filtering, train-only standardization, and cross-source imputation
//!   with binary flags.
//! * [`model`]: the forecaster itself. A hindcast LSTM encodes a year of
//!   meteorological history, linear/tanh transfer layers hand its state to
//!   a decoder LSTM that steps through the forecast horizon, and a head
//!   emits an asymmetric-Laplace density per lead time. Training minimizes
//!   the negative log-likelihood; prediction takes the closed-form median
//!   and averages an ensemble of independently seeded members.
//! * [`frequency`]: log-Pearson III flood frequency analysis on annual
//!   maxima, used to turn a discharge record into return-period thresholds.
//! * [`evaluation`]: threshold-crossing event extraction, tolerant event
//!   matching, precision/recall/F1 with honest undefined cases, hydrograph
//!   metrics (NSE/KGE families), and paired model comparison via the
//!   Wilcoxon signed-rank test and Cohen's d.
//! * [`cv`]: cross-validation split plans that hold out gauges in space
//!   and windows in time simultaneously, with a buffer that keeps any
//!   training day at least a full encoder length away from any test day.
//! * [`skill`]: a from-scratch random forest that predicts where the
//!   forecaster will be skillful from catchment attributes alone.
//! * [`report`]: box-plot summaries (quartiles, 1.5*IQR whiskers) rendered
//!   to CSV and static SVG.
//! * [`cli`]: the `hydrocast` command-line front end tying the above into
//!   a reproducible pipeline with manifest and config-echo outputs.
//!
//! Every capability has a runnable demo under `examples/`; start with
//! `cargo run --example full_pipeline`.

pub mod autodiff;
pub mod cli;
pub mod cv;
pub mod data;
pub mod evaluation;
pub mod frequency;
pub mod model;
pub mod report;
pub mod skill;
pub mod special;
pub mod synthetic;
