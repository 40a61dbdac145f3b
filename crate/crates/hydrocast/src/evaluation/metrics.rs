//! Continuous hydrograph metrics for one (gauge, lead) pair.

use serde::{Deserialize, Serialize};

/// Goodness-of-fit scores between a simulated and an observed daily
/// series. `None` marks a metric left undefined by degenerate inputs
/// (zero observed variance or zero observed mean); undefined is never
/// reported as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroMetrics {
    /// 1 - sum((s-o)^2) / sum((o-mean(o))^2).
    pub nse: Option<f64>,
    /// NSE over ln(x + eps), eps = 1% of mean observed flow.
    pub log_nse: Option<f64>,
    /// Ratio of simulated to observed standard deviation.
    pub alpha_nse: Option<f64>,
    /// Mean bias scaled by the observed standard deviation.
    pub beta_nse: Option<f64>,
    /// 1 - sqrt((r-1)^2 + (alpha-1)^2 + (beta-1)^2), beta a mean ratio.
    pub kge: Option<f64>,
    /// KGE over ln(x + eps).
    pub log_kge: Option<f64>,
    /// Ratio of simulated to observed mean.
    pub beta_kge: Option<f64>,
    /// Days where both series had values; everything above used only these.
    pub n_days: usize,
}

struct Moments {
    mean_sim: f64,
    mean_obs: f64,
    // Population standard deviations; every use is either a ratio,
    // where the denominator convention cancels, or a scale for the bias.
    std_sim: f64,
    std_obs: f64,
    sq_err: f64,
    obs_var_sum: f64,
    corr: Option<f64>,
}

fn moments(pairs: &[(f64, f64)]) -> Moments {
    let n = pairs.len() as f64;
    let mean_sim = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_obs = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let mut ss_sim = 0.0;
    let mut ss_obs = 0.0;
    let mut cross = 0.0;
    let mut sq_err = 0.0;
    for &(s, o) in pairs {
        let ds = s - mean_sim;
        let dobs = o - mean_obs;
        ss_sim += ds * ds;
        ss_obs += dobs * dobs;
        cross += ds * dobs;
        sq_err += (s - o) * (s - o);
    }
    let corr = if ss_sim > 0.0 && ss_obs > 0.0 {
        Some(cross / (ss_sim.sqrt() * ss_obs.sqrt()))
    } else {
        None
    };
    Moments {
        mean_sim,
        mean_obs,
        std_sim: (ss_sim / n).sqrt(),
        std_obs: (ss_obs / n).sqrt(),
        sq_err,
        obs_var_sum: ss_obs,
        corr,
    }
}

struct LinearScores {
    nse: Option<f64>,
    alpha: Option<f64>,
    beta_nse: Option<f64>,
    kge: Option<f64>,
    beta_kge: Option<f64>,
}

fn linear_scores(pairs: &[(f64, f64)]) -> LinearScores {
    let m = moments(pairs);
    let (nse, alpha, beta_nse) = if m.std_obs > 0.0 {
        (
            Some(1.0 - m.sq_err / m.obs_var_sum),
            Some(m.std_sim / m.std_obs),
            Some((m.mean_sim - m.mean_obs) / m.std_obs),
        )
    } else {
        (None, None, None)
    };
    let beta_kge = if m.mean_obs != 0.0 { Some(m.mean_sim / m.mean_obs) } else { None };
    let kge = match (m.corr, alpha, beta_kge) {
        (Some(r), Some(a), Some(b)) => {
            Some(1.0 - ((r - 1.0).powi(2) + (a - 1.0).powi(2) + (b - 1.0).powi(2)).sqrt())
        }
        _ => None,
    };
    LinearScores { nse, alpha, beta_nse, kge, beta_kge }
}

/// Scores over the days where both series are present. Log variants
/// shift by 1% of the mean observed flow before taking logs, so zero
/// flows stay finite; gauges with no positive observed mean get no log
/// scores.
pub fn hydrograph_metrics(sim: &[Option<f64>], obs: &[Option<f64>]) -> HydroMetrics {
    assert_eq!(sim.len(), obs.len(), "paired series of different lengths");
    let pairs: Vec<(f64, f64)> = sim
        .iter()
        .zip(obs)
        .filter_map(|(s, o)| match (s, o) {
            (Some(s), Some(o)) => Some((*s, *o)),
            _ => None,
        })
        .collect();
    if pairs.is_empty() {
        return HydroMetrics {
            nse: None,
            log_nse: None,
            alpha_nse: None,
            beta_nse: None,
            kge: None,
            log_kge: None,
            beta_kge: None,
            n_days: 0,
        };
    }
    let linear = linear_scores(&pairs);
    let mean_obs = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    let epsilon = 0.01 * mean_obs;
    // Model output can dip below zero even though flow cannot; clamping
    // before the shift keeps the log scores finite on such days.
    let log = (epsilon > 0.0).then(|| {
        let log_pairs: Vec<(f64, f64)> = pairs
            .iter()
            .map(|&(s, o)| ((s.max(0.0) + epsilon).ln(), (o.max(0.0) + epsilon).ln()))
            .collect();
        linear_scores(&log_pairs)
    });
    HydroMetrics {
        nse: linear.nse,
        log_nse: log.as_ref().and_then(|l| l.nse),
        alpha_nse: linear.alpha,
        beta_nse: linear.beta_nse,
        kge: linear.kge,
        log_kge: log.as_ref().and_then(|l| l.kge),
        beta_kge: linear.beta_kge,
        n_days: pairs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn some(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().copied().map(Some).collect()
    }

    #[test]
    fn perfect_simulation_scores_one() {
        let obs = some(&[1.0, 4.0, 2.0, 8.0, 3.0]);
        let m = hydrograph_metrics(&obs, &obs);
        assert!((m.nse.unwrap() - 1.0).abs() < 1e-12);
        assert!((m.kge.unwrap() - 1.0).abs() < 1e-12);
        assert!((m.log_nse.unwrap() - 1.0).abs() < 1e-12);
        assert!((m.log_kge.unwrap() - 1.0).abs() < 1e-12);
        assert!((m.alpha_nse.unwrap() - 1.0).abs() < 1e-12);
        assert!(m.beta_nse.unwrap().abs() < 1e-12);
        assert!((m.beta_kge.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(m.n_days, 5);
    }

    #[test]
    fn predicting_the_mean_scores_zero_nse() {
        let obs = some(&[1.0, 4.0, 2.0, 8.0, 5.0]);
        let sim = some(&[4.0; 5]);
        let m = hydrograph_metrics(&sim, &obs);
        assert!(m.nse.unwrap().abs() < 1e-12);
        // Constant simulation has no variance, so correlation and KGE
        // drop out while the mean ratio survives.
        assert_eq!(m.alpha_nse, Some(0.0));
        assert_eq!(m.kge, None);
        assert_eq!(m.beta_kge, Some(1.0));
    }

    #[test]
    fn constant_observations_leave_metrics_undefined() {
        let obs = some(&[2.0; 6]);
        let sim = some(&[1.0, 2.0, 3.0, 2.0, 1.0, 3.0]);
        let m = hydrograph_metrics(&sim, &obs);
        assert_eq!(m.nse, None);
        assert_eq!(m.alpha_nse, None);
        assert_eq!(m.beta_nse, None);
        assert_eq!(m.kge, None);
        // The observed mean is fine, so the mean ratio stays defined.
        assert!(m.beta_kge.is_some());
        assert_eq!(m.n_days, 6);
    }

    #[test]
    fn zero_mean_observations_leave_mean_ratio_undefined() {
        let obs = some(&[-1.0, 1.0, -2.0, 2.0]);
        let sim = some(&[0.5, 0.5, 1.0, -1.0]);
        let m = hydrograph_metrics(&sim, &obs);
        assert_eq!(m.beta_kge, None);
        assert_eq!(m.kge, None);
        assert!(m.nse.is_some());
    }

    #[test]
    fn only_jointly_present_days_enter() {
        let obs = vec![Some(1.0), None, Some(3.0), Some(4.0), Some(2.0)];
        let sim = vec![Some(1.1), Some(9.9), None, Some(3.9), Some(2.2)];
        let m = hydrograph_metrics(&sim, &obs);
        assert_eq!(m.n_days, 3);
        let m2 = hydrograph_metrics(&some(&[1.1, 3.9, 2.2]), &some(&[1.0, 4.0, 2.0]));
        assert_eq!(m.nse, m2.nse);
        assert_eq!(m.kge, m2.kge);
    }

    #[test]
    fn identical_permutations_leave_scores_unchanged() {
        let obs = [3.0, 1.0, 7.0, 2.0, 5.0, 4.0];
        let sim = [2.5, 1.5, 6.0, 2.5, 5.5, 3.0];
        let base = hydrograph_metrics(&some(&sim), &some(&obs));
        let perm = [4usize, 0, 5, 2, 1, 3];
        let obs_p: Vec<f64> = perm.iter().map(|&i| obs[i]).collect();
        let sim_p: Vec<f64> = perm.iter().map(|&i| sim[i]).collect();
        let shuffled = hydrograph_metrics(&some(&sim_p), &some(&obs_p));
        assert!((base.nse.unwrap() - shuffled.nse.unwrap()).abs() < 1e-12);
        assert!((base.kge.unwrap() - shuffled.kge.unwrap()).abs() < 1e-12);
        assert!((base.log_kge.unwrap() - shuffled.log_kge.unwrap()).abs() < 1e-12);
    }

    /// Second implementation straight from the definitions, organized
    /// differently from the production single-pass version.
    fn reference(sim: &[f64], obs: &[f64]) -> (f64, f64, f64, f64, f64) {
        let n = obs.len() as f64;
        let mo = obs.iter().sum::<f64>() / n;
        let ms = sim.iter().sum::<f64>() / n;
        let nse = 1.0
            - sim.iter().zip(obs).map(|(s, o)| (s - o) * (s - o)).sum::<f64>()
                / obs.iter().map(|o| (o - mo) * (o - mo)).sum::<f64>();
        let so = (obs.iter().map(|o| (o - mo) * (o - mo)).sum::<f64>() / n).sqrt();
        let ss = (sim.iter().map(|s| (s - ms) * (s - ms)).sum::<f64>() / n).sqrt();
        let alpha = ss / so;
        let beta_nse = (ms - mo) / so;
        let r = sim.iter().zip(obs).map(|(s, o)| (s - ms) * (o - mo)).sum::<f64>() / (n * ss * so);
        let beta = ms / mo;
        let kge = 1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt();
        (nse, alpha, beta_nse, kge, beta)
    }

    #[test]
    fn random_fixtures_match_the_reference_implementation() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        for _ in 0..100 {
            let n = rng.gen_range(5..200);
            let obs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
            let sim: Vec<f64> = obs.iter().map(|o| o * rng.gen_range(0.5..1.5) + rng.gen_range(-0.3..0.3)).collect();
            let m = hydrograph_metrics(&some(&sim), &some(&obs));
            let (nse, alpha, beta_nse, kge, beta) = reference(&sim, &obs);
            assert!((m.nse.unwrap() - nse).abs() < 1e-10);
            assert!((m.alpha_nse.unwrap() - alpha).abs() < 1e-10);
            assert!((m.beta_nse.unwrap() - beta_nse).abs() < 1e-10);
            assert!((m.kge.unwrap() - kge).abs() < 1e-10);
            assert!((m.beta_kge.unwrap() - beta).abs() < 1e-10);
            assert!(m.nse.unwrap() <= 1.0 && m.kge.unwrap() <= 1.0);

            // Log variants equal the linear scores of the clamped,
            // shifted logs.
            let eps = 0.01 * obs.iter().sum::<f64>() / n as f64;
            let lo: Vec<f64> = obs.iter().map(|o| (o.max(0.0) + eps).ln()).collect();
            let ls: Vec<f64> = sim.iter().map(|s| (s.max(0.0) + eps).ln()).collect();
            let (lnse, _, _, lkge, _) = reference(&ls, &lo);
            assert!((m.log_nse.unwrap() - lnse).abs() < 1e-10);
            assert!((m.log_kge.unwrap() - lkge).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_overlap_yields_no_scores() {
        let m = hydrograph_metrics(&[Some(1.0), None], &[None, Some(2.0)]);
        assert_eq!(m.n_days, 0);
        assert_eq!(m.nse, None);
        assert_eq!(m.beta_kge, None);
    }
}
