//! Linear-time and quadratic-time importance-weighted MMD statistics.

use crate::data::{PairedData, Population, TestOutcome};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::split_paired;
use crate::stats::{mean, sample_variance, upper_p};

use super::{balance, fit_marginal_ratio, fold_indices, DrtConfig, RatioEval, RatioFn};

/// Kernel evaluator over joint `(x, y)` points. Generic so tests can
/// substitute scaled variants of a base kernel.
pub type JointKernel<'a> = &'a (dyn Fn(&[f64], &[f64]) -> f64 + Sync);

/// The paired kernel terms of the linear-time estimator on an evaluation
/// block of per-population size `2m`:
///
/// ```text
/// s_i = k(v1_i, v1_{i+m}) + r(x2_i) r(x2_{i+m}) k(v2_i, v2_{i+m})
///     - r(x2_i) k(v2_i, v1_{i+m}) - r(x2_{i+m}) k(v1_i, v2_{i+m})
/// ```
///
/// for `i = 0..m` with `m = floor(n_eval / 2)`. Pairing uses the given
/// row order, which the split operations have already shuffled.
pub fn mmd_linear_terms(
    eval: &PairedData,
    ratio: &dyn RatioFn,
    kernel: JointKernel,
) -> Result<Vec<f64>> {
    let n_eval = eval.n1().min(eval.n2());
    let m = n_eval / 2;
    if m < 2 {
        return Err(Error::InvalidData(format!(
            "linear-time MMD needs at least 4 evaluation rows per population, got {n_eval}"
        )));
    }
    let mut terms = Vec::with_capacity(m);
    for i in 0..m {
        let v1a = eval.joint_row(Population::First, i);
        let v1b = eval.joint_row(Population::First, i + m);
        let v2a = eval.joint_row(Population::Second, i);
        let v2b = eval.joint_row(Population::Second, i + m);
        let (x2a, _) = eval.row(Population::Second, i);
        let (x2b, _) = eval.row(Population::Second, i + m);
        let ra = ratio.ratio_at(&x2a)?;
        let rb = ratio.ratio_at(&x2b)?;
        terms.push(
            kernel(&v1a, &v1b) + ra * rb * kernel(&v2a, &v2b)
                - ra * kernel(&v2a, &v1b)
                - rb * kernel(&v1a, &v2b),
        );
    }
    Ok(terms)
}

/// `sqrt(m) * mean(s) / sd(s)`; `None` when the variance degenerates.
pub fn studentized_mean(terms: &[f64]) -> Option<f64> {
    let m = terms.len() as f64;
    let s2 = sample_variance(terms);
    if s2.is_finite() && s2 > 0.0 {
        Some(m.sqrt() * mean(terms) / s2.sqrt())
    } else {
        None
    }
}

/// Standardized fold average `sum_j t_j / sqrt(K)`.
pub fn combine_fold_stats(stats: &[f64]) -> f64 {
    stats.iter().sum::<f64>() / (stats.len() as f64).sqrt()
}

struct RatioAdapter<'a>(&'a RatioEval);

impl RatioFn for RatioAdapter<'_> {
    fn ratio_at(&self, x: &[f64]) -> Result<f64> {
        self.0.at(x)
    }
}

/// Single-split studentized linear-time MMD test: fit the marginal ratio
/// on the training side, form the paired terms on the evaluation side,
/// reject one-sided at `phi_inv(1 - alpha)`.
pub fn mmd_linear_test(
    data: &PairedData,
    cfg: &DrtConfig,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    let kernel = cfg.kernel;
    mmd_linear_test_with_kernel(data, cfg, &|a, b| kernel.eval_unchecked(a, b), rng)
}

/// [`mmd_linear_test`] with an explicit kernel evaluator.
pub fn mmd_linear_test_with_kernel(
    data: &PairedData,
    cfg: &DrtConfig,
    kernel: JointKernel,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    cfg.validate()?;
    let method = "mmd-l";
    let (balanced, subsampled) = balance(data, rng)?;
    let (d_a, d_b) = split_paired(&balanced, cfg.split_ratio_train_eval, rng)?;
    let ratio = fit_marginal_ratio(&cfg.ratio_source, &d_b)?;
    let terms = mmd_linear_terms(&d_a, &RatioAdapter(&ratio), kernel)?;
    let outcome = match studentized_mean(&terms) {
        Some(stat) => TestOutcome::from_p_value(stat, upper_p(stat), cfg.alpha, method)
            .with_diagnostic("s_bar", mean(&terms)),
        None => TestOutcome::forced_accept(cfg.alpha, method, "degenerate_variance"),
    };
    Ok(outcome
        .with_diagnostic("m", (terms.len()) as f64)
        .with_diagnostic("subsampled", f64::from(u8::from(subsampled))))
}

/// K-fold cross-validated linear-time MMD test. Each fold evaluates on
/// its own block with the ratio fit on the complement; the standardized
/// fold statistics are combined with the `1/sqrt(K)` weight.
pub fn mmd_linear_test_cv(
    data: &PairedData,
    cfg: &DrtConfig,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    let kernel = cfg.kernel;
    mmd_linear_test_cv_with_kernel(data, cfg, &|a, b| kernel.eval_unchecked(a, b), rng)
}

/// [`mmd_linear_test_cv`] with an explicit kernel evaluator.
pub fn mmd_linear_test_cv_with_kernel(
    data: &PairedData,
    cfg: &DrtConfig,
    kernel: JointKernel,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    cfg.validate_cv()?;
    let method = "mmd-l-cv";
    let (balanced, subsampled) = balance(data, rng)?;
    let folds1 = fold_indices(balanced.n1(), cfg.folds, rng);
    let folds2 = fold_indices(balanced.n2(), cfg.folds, rng);
    let mut stats = Vec::with_capacity(cfg.folds);
    let mut degenerate = 0usize;
    for j in 0..cfg.folds {
        let eval = balanced.take_rows(&folds1[j], &folds2[j]);
        let complement1: Vec<usize> = (0..balanced.n1())
            .filter(|i| !folds1[j].contains(i))
            .collect();
        let complement2: Vec<usize> = (0..balanced.n2())
            .filter(|i| !folds2[j].contains(i))
            .collect();
        let fit_block = balanced.take_rows(&complement1, &complement2);
        let ratio = fit_marginal_ratio(&cfg.ratio_source, &fit_block)?;
        let terms = mmd_linear_terms(&eval, &RatioAdapter(&ratio), kernel)?;
        match studentized_mean(&terms) {
            Some(t) => stats.push(t),
            None => {
                degenerate += 1;
                stats.push(0.0);
            }
        }
    }
    let outcome = if degenerate == cfg.folds {
        TestOutcome::forced_accept(cfg.alpha, method, "degenerate_variance")
    } else {
        let stat = combine_fold_stats(&stats);
        TestOutcome::from_p_value(stat, upper_p(stat), cfg.alpha, method)
    };
    Ok(outcome
        .with_diagnostic("folds", cfg.folds as f64)
        .with_diagnostic("degenerate_folds", degenerate as f64)
        .with_diagnostic("subsampled", f64::from(u8::from(subsampled))))
}

/// The importance-weighted quadratic-time MMD U-statistic:
///
/// ```text
///   (1/(n1(n1-1))) sum_{i != j} k(v1_i, v1_j)
/// + (1/(n2(n2-1))) sum_{i != j} r_i r_j k(v2_i, v2_j)
/// - (2/(n1 n2))    sum_{i, j}   r_j k(v1_i, v2_j)
/// ```
///
/// Unbiased for the squared population MMD; returned as a raw diagnostic
/// value, because the usual permutation calibration is not valid in the
/// conditional setting.
pub fn mmd_quadratic_estimate(
    data: &PairedData,
    ratio: &dyn RatioFn,
    kernel: JointKernel,
) -> Result<f64> {
    let (n1, n2) = (data.n1(), data.n2());
    let v1: Vec<Vec<f64>> = (0..n1)
        .map(|i| data.joint_row(Population::First, i))
        .collect();
    let v2: Vec<Vec<f64>> = (0..n2)
        .map(|i| data.joint_row(Population::Second, i))
        .collect();
    let r: Result<Vec<f64>> = (0..n2)
        .map(|i| {
            let (x, _) = data.row(Population::Second, i);
            ratio.ratio_at(&x)
        })
        .collect();
    let r = r?;

    let mut first = 0.0;
    for i in 0..n1 {
        for j in 0..n1 {
            if i != j {
                first += kernel(&v1[i], &v1[j]);
            }
        }
    }
    first /= (n1 * (n1 - 1)) as f64;

    let mut second = 0.0;
    for i in 0..n2 {
        for j in 0..n2 {
            if i != j {
                second += r[i] * r[j] * kernel(&v2[i], &v2[j]);
            }
        }
    }
    second /= (n2 * (n2 - 1)) as f64;

    let mut cross = 0.0;
    for vi in &v1 {
        for j in 0..n2 {
            cross += r[j] * kernel(vi, &v2[j]);
        }
    }
    cross *= 2.0 / (n1 as f64 * n2 as f64);

    Ok(first + second - cross)
}
