//! Scalar special functions shared by the frequency-analysis and
//! statistics code: log-gamma, the regularized incomplete gamma pair, and
//! the standard normal CDF/quantile.
//!
//! Accuracy targets are driven by the callers: the normal quantile feeds
//! frequency factors that must reduce exactly to lognormal quantiles at
//! zero skew, and the normal CDF feeds two-sided p-values whose relative
//! error must stay small far into the tails. Both are good to roughly
//! machine precision; the incomplete gamma pair is good to ~1e-14 for the
//! shape range used here (up to a few times 1e4).

/// Natural log of the gamma function, Lanczos approximation (g = 7).
///
/// Relative error is below 1e-13 for all positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln()
            - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = 0.999_999_999_999_809_93;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (x + (i + 1) as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_MAX_ITER: usize = 200_000;

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_p domain: a > 0, x >= 0 (a={a}, x={x})");
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_contfrac(a, x)
    }
}

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0, "gamma_q domain: a > 0, x >= 0 (a={a}, x={x})");
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_p_series(a, x)
    } else {
        gamma_q_contfrac(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..GAMMA_MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            return sum * (-x + a * x.ln() - ln_gamma(a)).exp();
        }
    }
    unreachable!("incomplete gamma series failed to converge (a={a}, x={x})")
}

fn gamma_q_contfrac(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction for Q(a, x).
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < GAMMA_EPS {
            return h * (-x + a * x.ln() - ln_gamma(a)).exp();
        }
    }
    unreachable!("incomplete gamma continued fraction failed to converge (a={a}, x={x})")
}

/// Inverse of `gamma_p` in x: returns x with P(a, x) = p.
///
/// Wilson-Hilferty start refined by safeguarded Newton steps; converges to
/// ~1e-14 relative for the shape range exercised by the frequency code.
pub fn inv_gamma_p(a: f64, p: f64) -> f64 {
    assert!(a > 0.0, "inv_gamma_p requires a > 0, got {a}");
    assert!((0.0..1.0).contains(&p), "inv_gamma_p requires p in [0, 1), got {p}");
    if p == 0.0 {
        return 0.0;
    }
    let z = normal_quantile(p);
    let wh = a * (1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt())).powi(3);
    let mut x = if wh > 1e-300 { wh } else { (p * a * ln_gamma(a).exp()).powf(1.0 / a) };
    if !x.is_finite() || x <= 0.0 {
        x = a;
    }
    let ln_g = ln_gamma(a);
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    for _ in 0..100 {
        let err = gamma_p(a, x) - p;
        if err > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        // pdf of Gamma(a, 1) at x; Newton step on P(a, x) - p.
        let pdf = ((a - 1.0) * x.ln() - x - ln_g).exp();
        let mut next = if pdf > 0.0 { x - err / pdf } else { x };
        if !(next > lo && (next < hi || hi.is_infinite())) {
            next = if hi.is_infinite() { (lo + x * 2.0).max(x) } else { 0.5 * (lo + hi) };
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Standard normal cumulative distribution function.
///
/// Evaluated through the incomplete gamma pair, which keeps the *relative*
/// error small deep into the tails (needed for small p-values).
pub fn normal_cdf(x: f64) -> f64 {
    let half_sq = 0.5 * x * x;
    if x >= 0.0 {
        1.0 - 0.5 * gamma_q(0.5, half_sq)
    } else {
        0.5 * gamma_q(0.5, half_sq)
    }
}

/// Standard normal quantile (inverse CDF).
///
/// Acklam's rational approximation polished with one Halley step against
/// `normal_cdf`, which brings the result to machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "normal_quantile requires p strictly inside (0, 1), got {p}"
    );
    let x = acklam(p);
    // One Halley refinement step.
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Gamma, Normal};

    #[test]
    fn ln_gamma_matches_known_values() {
        // Gamma(1) = Gamma(2) = 1, Gamma(5) = 24, Gamma(1/2) = sqrt(pi).
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!(ln_gamma(2.0).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24.0_f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-13);
    }

    #[test]
    fn incomplete_gamma_pair_sums_to_one() {
        for &a in &[0.5, 1.0, 3.7, 40.0, 4.0e4] {
            for &x in &[0.01, 0.5, 1.0, a, 2.0 * a, 5.0 * a] {
                let s = gamma_p(a, x) + gamma_q(a, x);
                assert!((s - 1.0).abs() < 1e-12, "P+Q={s} at a={a}, x={x}");
            }
        }
    }

    #[test]
    fn gamma_p_matches_reference_distribution() {
        for &a in &[0.5, 2.0, 4.0, 100.0, 10_000.0] {
            let reference = Gamma::new(a, 1.0).unwrap();
            for &frac in &[0.2, 0.8, 1.0, 1.3, 3.0] {
                let x = a * frac;
                let mine = gamma_p(a, x);
                let theirs = reference.cdf(x);
                assert!(
                    (mine - theirs).abs() < 1e-11,
                    "P({a}, {x}): {mine} vs {theirs}"
                );
            }
        }
    }

    #[test]
    fn inv_gamma_p_round_trips() {
        for &a in &[0.5, 1.0, 4.0, 73.0, 4.0e4] {
            for &p in &[1e-6, 0.01, 0.5, 0.9, 0.99, 0.999_999] {
                let x = inv_gamma_p(a, p);
                let back = gamma_p(a, x);
                assert!((back - p).abs() < 1e-10, "a={a} p={p}: back={back}");
            }
        }
    }

    #[test]
    fn normal_cdf_matches_reference() {
        let reference = Normal::new(0.0, 1.0).unwrap();
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            let mine = normal_cdf(x);
            let theirs = reference.cdf(x);
            // The reference erf polynomial carries absolute error up to a
            // few 1e-11, so its own error floor sets the tolerance; the
            // known-value test below pins this implementation far tighter.
            assert!((mine - theirs).abs() < 1e-10, "cdf({x}): {mine} vs {theirs}");
        }
    }

    #[test]
    fn normal_cdf_known_values() {
        // Reference digits from high-precision tables.
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-2.0) - 0.022_750_131_948_179_195).abs() < 1e-16);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-0.8) - 0.211_855_398_583_396_7).abs() < 1e-15);
    }

    #[test]
    fn normal_cdf_tail_is_relatively_accurate() {
        // Phi(-6) = 9.8658764503...e-10; an absolute-error implementation
        // would return garbage here.
        let p = normal_cdf(-6.0);
        assert!((p / 9.865_876_450_376_946e-10 - 1.0).abs() < 1e-10, "got {p}");
    }

    #[test]
    fn normal_quantile_round_trips() {
        for &p in &[1e-12, 1e-6, 0.025, 0.5, 0.8413, 0.99, 1.0 - 1e-9] {
            let x = normal_quantile(p);
            let back = normal_cdf(x);
            assert!((back - p).abs() <= 1e-15 + 1e-12 * p, "p={p}: back={back}");
        }
        assert!(normal_quantile(0.5).abs() < 1e-15);
    }

    #[test]
    fn quantile_is_antisymmetric() {
        for &p in &[0.001, 0.1, 0.3, 0.45] {
            let lo = normal_quantile(p);
            let hi = normal_quantile(1.0 - p);
            assert!((lo + hi).abs() < 1e-12, "p={p}: {lo} vs {hi}");
        }
    }
}
