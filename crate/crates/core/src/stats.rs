//! Small shared statistics helpers: normal calibration, sample moments,
//! the one-sample Kolmogorov–Smirnov check, and exact binomial intervals.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile, Newton-refined to full precision.
pub fn phi_inv(p: f64) -> f64 {
    assert!(0.0 < p && p < 1.0, "quantile level must be in (0, 1)");
    let mut q = std_normal().inverse_cdf(p);
    for _ in 0..3 {
        let density = (-q * q / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density < 1e-300 {
            break;
        }
        q -= (phi(q) - p) / density;
    }
    q
}

/// Two-sided p-value for an asymptotically standard normal statistic.
pub fn two_sided_p(statistic: f64) -> f64 {
    (2.0 * (1.0 - phi(statistic.abs()))).clamp(0.0, 1.0)
}

/// One-sided (upper tail) p-value.
pub fn upper_p(statistic: f64) -> f64 {
    (1.0 - phi(statistic)).clamp(0.0, 1.0)
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator), two-pass.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Population-style variance (n denominator), two-pass.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// One-sample Kolmogorov–Smirnov test against N(0, 1).
///
/// Returns `(d, p)` where `d` is the sup-distance between the empirical
/// CDF and the normal CDF, and `p` the asymptotic p-value via the
/// Kolmogorov distribution with the Stephens finite-sample correction.
pub fn ks_test_standard_normal(sample: &[f64]) -> (f64, f64) {
    assert!(sample.len() >= 2, "KS needs at least two observations");
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = phi(*x);
        let lo = i as f64 / n;
        let hi = (i as f64 + 1.0) / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// Tail function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{j≥1} (-1)^{j-1} exp(-2 j² λ²)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-8 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Exact (Clopper–Pearson) two-sided confidence interval for a binomial
/// proportion with `successes` out of `trials` at confidence `level`.
pub fn clopper_pearson(successes: usize, trials: usize, level: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    assert!(0.0 < level && level < 1.0);
    let alpha = 1.0 - level;
    let k = successes as f64;
    let n = trials as f64;
    let lo = if successes == 0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("beta parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("beta parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}
