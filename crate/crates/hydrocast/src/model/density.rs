//! Asymmetric Laplace density over standardized discharge.
//!
//! With location m, scale b > 0, and asymmetry t in (0, 1), the density is
//!
//! ```text
//! f(y) = t (1 - t) / b * exp(-rho_t((y - m) / b))
//! rho_t(u) = max(t u, (t - 1) u)
//! ```
//!
//! rho_t is the check (pinball) loss, so maximizing this likelihood drives
//! the location toward the t-quantile of the target. At t = 1/2 it reduces
//! to the symmetric Laplace and the location is the conditional median.

use super::ModelError;
use serde::{Deserialize, Serialize};

/// Parameters of one predictive density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub location: f64,
    pub scale: f64,
    pub asymmetry: f64,
}

impl DensityParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.scale.is_finite() && self.scale > 0.0)
            || !(self.asymmetry > 0.0 && self.asymmetry < 1.0)
            || !self.location.is_finite()
        {
            return Err(ModelError::BadDensity { scale: self.scale, asymmetry: self.asymmetry });
        }
        Ok(())
    }

    /// Check loss at u, the workhorse of both the NLL and the gradient.
    fn rho(&self, u: f64) -> f64 {
        let t = self.asymmetry;
        (t * u).max((t - 1.0) * u)
    }

    /// Negative log-likelihood of one observation.
    pub fn nll(&self, y: f64) -> f64 {
        let t = self.asymmetry;
        let u = (y - self.location) / self.scale;
        self.scale.ln() - (t * (1.0 - t)).ln() + self.rho(u)
    }

    pub fn pdf(&self, y: f64) -> f64 {
        (-self.nll(y)).exp()
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let t = self.asymmetry;
        let z = (y - self.location) / self.scale;
        if z < 0.0 {
            t * ((1.0 - t) * z).exp()
        } else {
            1.0 - (1.0 - t) * (-t * z).exp()
        }
    }

    /// Inverse of [`DensityParams::cdf`], closed form on both branches.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
        let t = self.asymmetry;
        let b = self.scale;
        if p <= t {
            self.location + b * (p / t).ln() / (1.0 - t)
        } else {
            self.location - b / t * ((1.0 - p) / (1.0 - t)).ln()
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

/// Mean NLL over a slice of (params, observation) pairs. Mirrors the
/// in-graph training loss; tests hold the two implementations together.
pub fn nll_mean(cases: &[(DensityParams, f64)]) -> Result<f64, ModelError> {
    if cases.is_empty() {
        return Err(ModelError::NoTargets);
    }
    let mut acc = 0.0;
    for (params, y) in cases {
        params.validate()?;
        acc += params.nll(*y);
    }
    Ok(acc / cases.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn sample_params(rng: &mut ChaCha20Rng) -> DensityParams {
        DensityParams {
            location: rng.gen_range(-5.0..5.0),
            scale: rng.gen_range(0.05..4.0),
            asymmetry: rng.gen_range(0.02..0.98),
        }
    }

    #[test]
    fn nll_at_center_of_symmetric_unit_density() {
        // f(m) = 1/4 when b = 1, t = 1/2, so the NLL there is ln 4.
        let d = DensityParams { location: 2.0, scale: 1.0, asymmetry: 0.5 };
        assert!((d.nll(2.0) - 4.0f64.ln()).abs() < 1e-15);
        assert!((d.pdf(2.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn nll_matches_direct_density_evaluation() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        for _ in 0..200 {
            let d = sample_params(&mut rng);
            let y: f64 = rng.gen_range(-8.0..8.0);
            let t = d.asymmetry;
            let z = (y - d.location) / d.scale;
            let direct = t * (1.0 - t) / d.scale
                * (-(if z >= 0.0 { t * z } else { (t - 1.0) * z })).exp();
            assert!((d.pdf(y) - direct).abs() <= 1e-14 * direct.max(1.0));
            assert!(((-d.nll(y)).exp() - direct).abs() <= 1e-14 * direct.max(1.0));
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        // Composite Simpson over a wide bracket; the tails it misses are
        // below 1e-12 for these parameter ranges.
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..20 {
            let d = sample_params(&mut rng);
            let span = 40.0 * d.scale / d.asymmetry.min(1.0 - d.asymmetry);
            let (lo, hi) = (d.location - span, d.location + span);
            let n = 40_000;
            let h = (hi - lo) / n as f64;
            let mut s = d.pdf(lo) + d.pdf(hi);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * d.pdf(lo + i as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-8, "integral {integral}");
        }
    }

    #[test]
    fn cdf_is_monotone_and_hits_asymmetry_at_location() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..50 {
            let d = sample_params(&mut rng);
            // F(m) = t on both branch definitions.
            assert!((d.cdf(d.location) - d.asymmetry).abs() < 1e-14);
            let mut prev = 0.0;
            for i in 0..=200 {
                let y = d.location + d.scale * (-20.0 + 0.2 * i as f64);
                let c = d.cdf(y);
                assert!((0.0..=1.0).contains(&c));
                assert!(c >= prev);
                prev = c;
            }
        }
    }

    #[test]
    fn cdf_matches_pdf_integral() {
        let d = DensityParams { location: 0.7, scale: 1.3, asymmetry: 0.23 };
        for y in [-3.0, -0.5, 0.7, 1.1, 4.0] {
            let lo = d.location - 60.0 * d.scale;
            let n = 200_000;
            let h = (y - lo) / n as f64;
            let mut s = d.pdf(lo) + d.pdf(y);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * d.pdf(lo + i as f64 * h);
            }
            let integral = s * h / 3.0;
            assert!((integral - d.cdf(y)).abs() < 1e-9, "y={y}: {integral} vs {}", d.cdf(y));
        }
    }

    #[test]
    fn quantile_inverts_cdf_against_bisection() {
        // Bisection on the CDF is the independent check on the closed form.
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..100 {
            let d = sample_params(&mut rng);
            let p: f64 = rng.gen_range(0.001..0.999);
            let q = d.quantile(p);
            assert!((d.cdf(q) - p).abs() < 1e-12);
            let (mut lo, mut hi) = (d.location - 1e4 * d.scale, d.location + 1e4 * d.scale);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if d.cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let bisected = 0.5 * (lo + hi);
            assert!(
                (q - bisected).abs() < 1e-8 * (1.0 + q.abs()),
                "closed form {q} vs bisection {bisected}"
            );
        }
    }

    #[test]
    fn median_of_symmetric_density_is_location() {
        let d = DensityParams { location: -1.5, scale: 0.8, asymmetry: 0.5 };
        assert!((d.median() - -1.5).abs() < 1e-14);
        // Asymmetry above 1/2 piles mass below the location, so the median
        // moves left of it, and vice versa.
        let left = DensityParams { asymmetry: 0.7, ..d };
        assert!(left.median() < left.location);
        let right = DensityParams { asymmetry: 0.3, ..d };
        assert!(right.median() > right.location);
    }

    #[test]
    fn quantile_branch_seam_is_continuous() {
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        for _ in 0..50 {
            let d = sample_params(&mut rng);
            let t = d.asymmetry;
            let below = d.quantile(t - 1e-12);
            let at = d.quantile(t);
            let above = d.quantile(t + 1e-12);
            assert!((at - d.location).abs() < 1e-9 * (1.0 + d.location.abs()));
            assert!((below - at).abs() < 1e-6);
            assert!((above - at).abs() < 1e-6);
        }
    }

    #[test]
    fn nll_mean_averages_and_rejects_bad_input() {
        let a = DensityParams { location: 0.0, scale: 1.0, asymmetry: 0.5 };
        let b = DensityParams { location: 1.0, scale: 2.0, asymmetry: 0.3 };
        let mean = nll_mean(&[(a, 0.5), (b, -0.2)]).unwrap();
        assert!((mean - 0.5 * (a.nll(0.5) + b.nll(-0.2))).abs() < 1e-15);
        assert!(matches!(nll_mean(&[]), Err(ModelError::NoTargets)));
        let bad = DensityParams { location: 0.0, scale: -1.0, asymmetry: 0.5 };
        assert!(nll_mean(&[(bad, 0.0)]).is_err());
    }
}
