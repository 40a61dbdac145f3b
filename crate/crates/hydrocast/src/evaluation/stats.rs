//! Paired statistics between two models over a shared gauge universe.

use crate::special::normal_cdf;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Paired score differences smaller than this count as ties in the win
/// fractions; exact float equality would be meaningless there.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Largest sample for which the signed-rank null distribution is
/// enumerated exactly; the tie- and continuity-corrected normal
/// approximation takes over above it.
const EXACT_CUTOFF: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Two-sided p, in (0, 1].
    pub p_value: f64,
    /// Pairs that survived the zero-difference drop.
    pub n_used: usize,
    /// Sum of mid-ranks over positive differences.
    pub statistic: f64,
    /// Every difference was zero; the test carries no information and
    /// p is reported as 1.
    pub degenerate: bool,
}

/// Mid-ranks of |diffs|, ties sharing the average of their positions.
fn signed_midranks(diffs: &[f64]) -> Vec<(f64, f64)> {
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    order.sort_by(|&a, &b| diffs[a].abs().partial_cmp(&diffs[b].abs()).unwrap());
    let mut ranked = vec![(0.0, 0.0); diffs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && diffs[order[j]].abs() == diffs[order[i]].abs() {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranked[idx] = (diffs[idx], midrank);
        }
        i = j;
    }
    ranked
}

/// Exact two-sided p by dynamic programming over the null distribution
/// of the rank sum. Doubled mid-ranks are integers, so the subset-sum
/// table is exact; counts stay below 2^n and lose nothing in f64.
fn exact_p(ranked: &[(f64, f64)]) -> f64 {
    let doubled: Vec<usize> = ranked.iter().map(|&(_, r)| (2.0 * r).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    let mut ways = vec![0.0f64; total + 1];
    ways[0] = 1.0;
    let mut reach = 0;
    for &d in &doubled {
        reach += d;
        for s in (d..=reach).rev() {
            ways[s] += ways[s - d];
        }
    }
    let w2: usize = ranked
        .iter()
        .map(|&(d, r)| if d > 0.0 { (2.0 * r).round() as usize } else { 0 })
        .sum();
    let patterns = 2f64.powi(ranked.len() as i32);
    let lo: f64 = ways[..=w2].iter().sum::<f64>() / patterns;
    let hi: f64 = ways[w2..].iter().sum::<f64>() / patterns;
    (2.0 * lo.min(hi)).min(1.0)
}

/// Normal approximation with tie correction on the variance and a
/// continuity correction of half a rank toward the mean.
fn approx_p(ranked: &[(f64, f64)]) -> f64 {
    let n = ranked.len() as f64;
    let w_plus: f64 = ranked.iter().filter(|&&(d, _)| d > 0.0).map(|&(_, r)| r).sum();
    let mean = n * (n + 1.0) / 4.0;
    let mut tie_groups: BTreeMap<u64, f64> = BTreeMap::new();
    for &(d, _) in ranked {
        *tie_groups.entry(d.abs().to_bits()).or_insert(0.0) += 1.0;
    }
    let tie_term: f64 = tie_groups.values().map(|&t| t * t * t - t).sum();
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    let dev = w_plus - mean;
    if var <= 0.0 || dev == 0.0 {
        return 1.0;
    }
    let z = (dev - 0.5 * dev.signum()) / var.sqrt();
    (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0)
}

fn signed_rank_p(nonzero: &[f64], force_approx: bool) -> (f64, f64) {
    let ranked = signed_midranks(nonzero);
    let w_plus: f64 = ranked.iter().filter(|&&(d, _)| d > 0.0).map(|&(_, r)| r).sum();
    let p = if ranked.len() <= EXACT_CUTOFF && !force_approx {
        exact_p(&ranked)
    } else {
        approx_p(&ranked)
    };
    (p, w_plus)
}

/// Two-sided signed-rank test on paired differences. Zero differences
/// are dropped before ranking; if nothing remains the result is flagged
/// degenerate with p = 1.
pub fn wilcoxon_signed_rank(diffs: &[f64]) -> WilcoxonResult {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    if nonzero.is_empty() {
        return WilcoxonResult { p_value: 1.0, n_used: 0, statistic: 0.0, degenerate: true };
    }
    let (p_value, statistic) = signed_rank_p(&nonzero, false);
    WilcoxonResult { p_value, n_used: nonzero.len(), statistic, degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CohensD {
    /// `None` when the differences have zero spread (or fewer than two
    /// pairs), where the ratio is undefined.
    pub d: Option<f64>,
    pub n: usize,
}

/// Paired effect size: mean difference over its sample standard
/// deviation. Differences are A minus B, so A scoring higher on a
/// larger-is-better metric gives a positive d.
pub fn cohens_d(diffs: &[f64]) -> CohensD {
    let n = diffs.len();
    if n < 2 {
        return CohensD { d: None, n };
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return CohensD { d: None, n };
    }
    CohensD { d: Some(mean / var.sqrt()), n }
}

/// One score cell for one model: a metric value (or undefined) at a
/// (gauge, return period, lead) coordinate. Continuous metrics leave
/// the return period unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGauge {
    pub gauge_id: String,
    pub continent: String,
    pub return_period: Option<f64>,
    pub lead_days: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    All,
    Continent,
    ReturnPeriod,
    Lead,
}

impl Grouping {
    pub fn name(self) -> &'static str {
        match self {
            Grouping::All => "all",
            Grouping::Continent => "continent",
            Grouping::ReturnPeriod => "T",
            Grouping::Lead => "lead",
        }
    }

    fn key(self, record: &ScoredGauge) -> String {
        match self {
            Grouping::All => "all".to_owned(),
            Grouping::Continent => format!("continent={}", record.continent),
            Grouping::ReturnPeriod => match record.return_period {
                Some(t) if t.fract() == 0.0 => format!("T={}", t as i64),
                Some(t) => format!("T={t}"),
                None => "T=unset".to_owned(),
            },
            Grouping::Lead => format!("lead={}", record.lead_days),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub group: String,
    /// Pairs where both models had a defined value.
    pub n: usize,
    /// Fraction with A above B by more than the tie tolerance.
    pub frac_a_better: f64,
    /// Fraction with A at least B, ties included.
    pub frac_a_at_least: f64,
    pub p_value: f64,
    pub degenerate: bool,
    pub cohens_d: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metric: String,
    pub model_a: String,
    pub model_b: String,
    pub grouping: String,
    pub groups: Vec<GroupComparison>,
    /// Groups present in the inputs but without any defined pair.
    pub notes: Vec<String>,
}

/// Pair two score sets cell by cell and test each group. Cells pair on
/// (gauge, return period, lead); a pair enters only when both values
/// are defined, and per-group counts report exactly those pairs. Groups
/// that end up empty are omitted and noted.
pub fn compare_models(
    metric: &str,
    model_a: &str,
    model_b: &str,
    a: &[ScoredGauge],
    b: &[ScoredGauge],
    grouping: Grouping,
) -> ComparisonReport {
    let mut b_index: BTreeMap<(&str, Option<u64>, usize), &ScoredGauge> = BTreeMap::new();
    for record in b {
        let key = (record.gauge_id.as_str(), record.return_period.map(f64::to_bits), record.lead_days);
        b_index.insert(key, record);
    }
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for record in a {
        let group = grouping.key(record);
        *seen.entry(group.clone()).or_insert(0) += 1;
        let key = (record.gauge_id.as_str(), record.return_period.map(f64::to_bits), record.lead_days);
        let Some(partner) = b_index.get(&key) else { continue };
        let (Some(va), Some(vb)) = (record.value, partner.value) else { continue };
        groups.entry(group).or_default().push(va - vb);
    }
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for (group, _) in &seen {
        let Some(diffs) = groups.get(group) else {
            notes.push(format!("{group}: omitted, no pairs with both scores defined"));
            continue;
        };
        let n = diffs.len();
        let better = diffs.iter().filter(|d| **d > TIE_TOLERANCE).count();
        let at_least = diffs.iter().filter(|d| **d >= -TIE_TOLERANCE).count();
        let test = wilcoxon_signed_rank(diffs);
        let effect = cohens_d(diffs);
        out.push(GroupComparison {
            group: group.clone(),
            n,
            frac_a_better: better as f64 / n as f64,
            frac_a_at_least: at_least as f64 / n as f64,
            p_value: test.p_value,
            degenerate: test.degenerate,
            cohens_d: effect.d,
        });
    }
    ComparisonReport {
        metric: metric.to_owned(),
        model_a: model_a.to_owned(),
        model_b: model_b.to_owned(),
        grouping: grouping.name().to_owned(),
        groups: out,
        notes,
    }
}
