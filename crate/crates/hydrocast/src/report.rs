//! Aggregate event scores into box-plot summaries and static SVG charts.
//!
//! Scores are grouped along one dimension (return period, lead time, or
//! continent) and each group is reduced to distribution quartiles with
//! whiskers that exclude outliers beyond 1.5 interquartile ranges.
//! Undefined scores never enter a distribution; every summary row
//! carries both the number of rows seen and the number of defined
//! values, so thinning by undefinedness stays visible downstream.

use crate::evaluation::EventScore;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Five-number summary with outlier-excluding whiskers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Smallest value at or above `q1 - 1.5 * iqr`.
    pub whisker_low: f64,
    /// Largest value at or below `q3 + 1.5 * iqr`.
    pub whisker_high: f64,
    pub n_outliers: usize,
}

/// Linear-interpolation quantile over an ascending slice (the default
/// convention of most statistics packages): with h = (n-1)p, the result
/// interpolates between the floor(h)-th and next order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    /// Summary of `values`; `None` when the slice is empty.
    pub fn from_values(values: &[f64]) -> Option<BoxStats> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let q1 = quantile(&sorted, 0.25);
        let median = quantile(&sorted, 0.5);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let lo_fence = q1 - 1.5 * iqr;
        let hi_fence = q3 + 1.5 * iqr;
        let inside: Vec<f64> = sorted
            .iter()
            .copied()
            .filter(|&v| v >= lo_fence && v <= hi_fence)
            .collect();
        Some(BoxStats {
            n: sorted.len(),
            q1,
            median,
            q3,
            whisker_low: inside[0],
            whisker_high: *inside.last().unwrap(),
            n_outliers: sorted.len() - inside.len(),
        })
    }
}

/// Axis along which event scores are pooled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportDimension {
    ReturnPeriod,
    Lead,
    Continent,
}

impl ReportDimension {
    pub fn name(&self) -> &'static str {
        match self {
            ReportDimension::ReturnPeriod => "return_period",
            ReportDimension::Lead => "lead",
            ReportDimension::Continent => "continent",
        }
    }
}

/// One (model, group, metric) cell of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub group: String,
    pub metric: String,
    /// Score rows that fell in this cell.
    pub n_total: usize,
    /// Rows whose metric was defined; only these enter `stats`.
    pub n_defined: usize,
    pub stats: Option<BoxStats>,
}

const METRICS: [&str; 3] = ["precision", "recall", "f1"];

fn metric_value(score: &EventScore, metric: &str) -> Option<f64> {
    match metric {
        "precision" => score.precision,
        "recall" => score.recall,
        "f1" => score.f1,
        other => unreachable!("unknown metric {other}"),
    }
}

fn group_of(
    score: &EventScore,
    dimension: ReportDimension,
    continents: &BTreeMap<String, String>,
) -> (f64, String) {
    match dimension {
        ReportDimension::ReturnPeriod => {
            let t = score.return_period;
            let label = if t.fract() == 0.0 {
                format!("T={}", t as i64)
            } else {
                format!("T={t}")
            };
            (t, label)
        }
        ReportDimension::Lead => (score.lead_days as f64, format!("lead={}", score.lead_days)),
        ReportDimension::Continent => {
            let c = continents
                .get(&score.gauge_id)
                .cloned()
                .unwrap_or_else(|| "unknown".to_owned());
            (0.0, c)
        }
    }
}

/// Pool scores along `dimension` and reduce each (model, group, metric)
/// cell to a box summary. `continents` maps gauge id to continent and is
/// consulted only for the continent dimension; unmapped gauges pool
/// under "unknown". Rows come back ordered by metric, group, model.
pub fn summarize(
    scores: &[EventScore],
    dimension: ReportDimension,
    continents: &BTreeMap<String, String>,
) -> Vec<SummaryRow> {
    // Key keeps a numeric group rank so "T=10" sorts after "T=5".
    type Key = (usize, u64, String, String);
    let mut cells: BTreeMap<Key, (usize, Vec<f64>)> = BTreeMap::new();
    for score in scores {
        let (rank, label) = group_of(score, dimension, continents);
        for (mi, metric) in METRICS.iter().enumerate() {
            let key = (mi, rank.to_bits(), label.clone(), score.model.clone());
            let cell = cells.entry(key).or_default();
            cell.0 += 1;
            if let Some(v) = metric_value(score, metric) {
                cell.1.push(v);
            }
        }
    }
    cells
        .into_iter()
        .map(|((mi, _, group, model), (n_total, values))| SummaryRow {
            model,
            group,
            metric: METRICS[mi].to_owned(),
            n_total,
            n_defined: values.len(),
            stats: BoxStats::from_values(&values),
        })
        .collect()
}

/// Serialize summary rows as CSV; undefined cells stay empty.
pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(
        "model,group,metric,n_total,n_defined,q1,median,q3,whisker_low,whisker_high,n_outliers\n",
    );
    for row in rows {
        write!(out, "{},{},{},{},{}", row.model, row.group, row.metric, row.n_total, row.n_defined)
            .unwrap();
        match &row.stats {
            Some(s) => writeln!(
                out,
                ",{},{},{},{},{},{}",
                s.q1, s.median, s.q3, s.whisker_low, s.whisker_high, s.n_outliers
            )
            .unwrap(),
            None => out.push_str(",,,,,,\n"),
        }
    }
    out
}

const SVG_WIDTH: f64 = 720.0;
const SVG_HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 70.0;
const PALETTE: [&str; 6] = ["#4878a8", "#d1495b", "#66a182", "#d6a839", "#8661a8", "#5f6a72"];

fn fmt2(v: f64) -> String {
    format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_owned()
}

/// Render one metric's summary rows as a static box plot. Boxes are
/// ordered as given, colored per model, with whisker caps and a legend.
/// Returns a self-contained SVG document.
pub fn render_box_plot(title: &str, y_label: &str, rows: &[SummaryRow]) -> String {
    let boxes: Vec<&SummaryRow> = rows.iter().filter(|r| r.stats.is_some()).collect();
    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" \
         viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    )
    .unwrap();
    write!(
        svg,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        SVG_WIDTH / 2.0,
        title
    )
    .unwrap();
    if boxes.is_empty() {
        svg.push_str("<text x=\"360\" y=\"210\" text-anchor=\"middle\">no defined scores</text>\n</svg>\n");
        return svg;
    }

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for b in &boxes {
        let s = b.stats.unwrap();
        lo = lo.min(s.whisker_low);
        hi = hi.max(s.whisker_high);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let y_of = |v: f64| MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

    // Axis frame and five evenly spaced value ticks.
    write!(
        svg,
        "<rect x=\"{MARGIN_LEFT}\" y=\"{MARGIN_TOP}\" width=\"{plot_w}\" height=\"{plot_h}\" \
         fill=\"none\" stroke=\"#333\"/>\n"
    )
    .unwrap();
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = y_of(v);
        write!(
            svg,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{MARGIN_LEFT}\" y2=\"{y}\" stroke=\"#333\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            MARGIN_LEFT - 5.0,
            MARGIN_LEFT - 8.0,
            y + 4.0,
            fmt2(v)
        )
        .unwrap();
    }
    write!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        y_label
    )
    .unwrap();

    let mut models: Vec<&str> = Vec::new();
    for b in &boxes {
        if !models.contains(&b.model.as_str()) {
            models.push(&b.model);
        }
    }
    let slot = plot_w / boxes.len() as f64;
    let box_w = (slot * 0.55).min(48.0);
    for (i, b) in boxes.iter().enumerate() {
        let s = b.stats.unwrap();
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let color = PALETTE[models.iter().position(|m| *m == b.model).unwrap() % PALETTE.len()];
        let (yq1, ymed, yq3) = (y_of(s.q1), y_of(s.median), y_of(s.q3));
        let (ywl, ywh) = (y_of(s.whisker_low), y_of(s.whisker_high));
        let (xl, xr) = (cx - box_w / 2.0, cx + box_w / 2.0);
        write!(
            svg,
            "<line x1=\"{cx}\" y1=\"{ywh}\" x2=\"{cx}\" y2=\"{yq3}\" stroke=\"{color}\"/>\n\
             <line x1=\"{cx}\" y1=\"{yq1}\" x2=\"{cx}\" y2=\"{ywl}\" stroke=\"{color}\"/>\n\
             <line x1=\"{}\" y1=\"{ywh}\" x2=\"{}\" y2=\"{ywh}\" stroke=\"{color}\"/>\n\
             <line x1=\"{}\" y1=\"{ywl}\" x2=\"{}\" y2=\"{ywl}\" stroke=\"{color}\"/>\n\
             <rect x=\"{xl}\" y=\"{yq3}\" width=\"{box_w}\" height=\"{}\" fill=\"{color}\" \
             fill-opacity=\"0.35\" stroke=\"{color}\"/>\n\
             <line x1=\"{xl}\" y1=\"{ymed}\" x2=\"{xr}\" y2=\"{ymed}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
            cx - box_w / 4.0,
            cx + box_w / 4.0,
            cx - box_w / 4.0,
            cx + box_w / 4.0,
            (yq1 - yq3).max(0.5),
        )
        .unwrap();
        write!(
            svg,
            "<text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
             <text x=\"{cx}\" y=\"{}\" text-anchor=\"middle\" fill=\"#666\">n={}</text>\n",
            MARGIN_TOP + plot_h + 18.0,
            b.group,
            MARGIN_TOP + plot_h + 34.0,
            b.n_defined,
        )
        .unwrap();
    }
    for (mi, model) in models.iter().enumerate() {
        let x = MARGIN_LEFT + 10.0 + 130.0 * mi as f64;
        let color = PALETTE[mi % PALETTE.len()];
        write!(
            svg,
            "<rect x=\"{x}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            SVG_HEIGHT - 22.0,
            x + 16.0,
            SVG_HEIGHT - 12.0,
            model
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
