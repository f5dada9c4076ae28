//! Importance-weighted moment statistics: mean comparison and the
//! weighted rank sum.

use crate::data::{PairedData, Population, TestOutcome};
use crate::error::Result;
use crate::stats::{mean, sample_variance, two_sided_p};

use super::RatioFn;

/// Feature map applied to a joint observation `(x, y)`.
pub type FeatureMap = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// Importance-weighted mean comparison:
///
/// ```text
/// [ mean_i psi(v1_i) - mean_i r(x2_i) psi(v2_i) ] / se
/// ```
///
/// with the independent-sums standard error
/// `se^2 = var(psi(v1)) / n1 + var(r psi(v2)) / n2`, calibrated two-sided
/// against N(0, 1). A vanishing standard error yields a forced
/// acceptance with the `degenerate_variance` flag.
pub fn mean_comparison(
    data: &PairedData,
    ratio: &dyn RatioFn,
    psi: &FeatureMap,
    alpha: f64,
) -> Result<TestOutcome> {
    let method = "mean-comparison";
    let first: Vec<f64> = (0..data.n1())
        .map(|i| {
            let (x, y) = data.row(Population::First, i);
            psi(&x, y)
        })
        .collect();
    let second: Result<Vec<f64>> = (0..data.n2())
        .map(|i| {
            let (x, y) = data.row(Population::Second, i);
            Ok(ratio.ratio_at(&x)? * psi(&x, y))
        })
        .collect();
    let second = second?;

    let numerator = mean(&first) - mean(&second);
    let se_sq =
        sample_variance(&first) / data.n1() as f64 + sample_variance(&second) / data.n2() as f64;
    if se_sq <= 0.0 || !se_sq.is_finite() {
        return Ok(
            TestOutcome::forced_accept(alpha, method, "degenerate_variance")
                .with_diagnostic("numerator", numerator),
        );
    }
    let statistic = numerator / se_sq.sqrt();
    Ok(
        TestOutcome::from_p_value(statistic, two_sided_p(statistic), alpha, method)
            .with_diagnostic("numerator", numerator)
            .with_diagnostic("se", se_sq.sqrt()),
    )
}

/// The weighted stochastic-order statistic
///
/// ```text
/// (1 / (n1 n2)) sum_i sum_j r(x2_j) 1{ psi(v2_j) < psi(v1_i) }
/// ```
///
/// Strict inequality: ties contribute nothing. Returns the raw value;
/// no calibrated p-value is provided.
pub fn weighted_rank_sum(data: &PairedData, ratio: &dyn RatioFn, psi: &FeatureMap) -> Result<f64> {
    let first: Vec<f64> = (0..data.n1())
        .map(|i| {
            let (x, y) = data.row(Population::First, i);
            psi(&x, y)
        })
        .collect();
    let mut total = 0.0;
    for j in 0..data.n2() {
        let (x, y) = data.row(Population::Second, j);
        let w = ratio.ratio_at(&x)?;
        let v = psi(&x, y);
        let below = first.iter().filter(|&&f| v < f).count();
        total += w * below as f64;
    }
    Ok(total / (data.n1() as f64 * data.n2() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drt::OracleRatio;
    use crate::rng::StreamRng;
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, Normal};
    use std::sync::Arc;

    fn unit_ratio() -> OracleRatio {
        OracleRatio(Arc::new(|_: &[f64]| 1.0))
    }

    fn psi_y() -> &'static FeatureMap {
        &|_x: &[f64], y: f64| y
    }

    fn gaussian_pair(n: usize, rng: &mut StreamRng) -> PairedData {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let x1 = DMatrix::from_fn(n, 2, |_, _| normal.sample(rng));
        let y1 = DVector::from_fn(n, |_, _| normal.sample(rng));
        let x2 = DMatrix::from_fn(n, 2, |_, _| normal.sample(rng));
        let y2 = DVector::from_fn(n, |_, _| normal.sample(rng));
        PairedData::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn constant_feature_map_reduces_to_weight_mean() {
        let mut rng = StreamRng::new(41, 0);
        let data = gaussian_pair(50, &mut rng);
        let c = 2.5;
        let psi: &FeatureMap = &move |_x: &[f64], _y: f64| c;
        let weights: Vec<f64> = (0..data.n2()).map(|_| 1.3).collect();
        let ratio = OracleRatio(Arc::new(|_: &[f64]| 1.3));
        let out = mean_comparison(&data, &ratio, psi, 0.05).unwrap();
        let expected = c * (1.0 - mean(&weights));
        assert!(
            (out.diagnostic("numerator").unwrap() - expected).abs() < 1e-12,
            "numerator {} vs {expected}",
            out.diagnostic("numerator").unwrap()
        );
    }

    #[test]
    fn null_statistic_is_roughly_standard_normal() {
        let mut rng = StreamRng::new(42, 0);
        let reps = 500;
        let stats: Vec<f64> = (0..reps)
            .map(|_| {
                let data = gaussian_pair(120, &mut rng);
                mean_comparison(&data, &unit_ratio(), psi_y(), 0.05)
                    .unwrap()
                    .statistic
            })
            .collect();
        let (_, p) = crate::stats::ks_test_standard_normal(&stats);
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn rank_sum_extremes() {
        // population 2 entirely above population 1: the indicator is empty
        let x1 = DMatrix::zeros(3, 1);
        let y1 = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let x2 = DMatrix::zeros(3, 1);
        let y2 = DVector::from_column_slice(&[10.0, 11.0, 12.0]);
        let data = PairedData::new(x1, y1, x2, y2).unwrap();
        let v = weighted_rank_sum(&data, &unit_ratio(), psi_y()).unwrap();
        assert_eq!(v, 0.0);

        // entirely below: every pair counts
        let x1 = DMatrix::zeros(3, 1);
        let y1 = DVector::from_column_slice(&[10.0, 11.0, 12.0]);
        let x2 = DMatrix::zeros(3, 1);
        let y2 = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let data = PairedData::new(x1, y1, x2, y2).unwrap();
        let v = weighted_rank_sum(&data, &unit_ratio(), psi_y()).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn rank_sum_matches_hand_double_sum() {
        // psi values: population 1 = (1, 3); population 2 = (0, 2) with
        // ratio weights r(x) = x + 1 = (1.5, 3.0)
        let x1 = DMatrix::zeros(2, 1);
        let y1 = DVector::from_column_slice(&[1.0, 3.0]);
        let x2 = DMatrix::from_column_slice(2, 1, &[0.5, 2.0]);
        let y2 = DVector::from_column_slice(&[0.0, 2.0]);
        let data = PairedData::new(x1, y1, x2, y2).unwrap();
        let ratio = OracleRatio(Arc::new(|x: &[f64]| x[0] + 1.0));
        // pairs with psi2 < psi1: (0 < 1) w 1.5, (0 < 3) w 1.5, (2 < 3) w 3.0
        let expected = (1.5 + 1.5 + 3.0) / 4.0;
        let v = weighted_rank_sum(&data, &ratio, psi_y()).unwrap();
        assert!((v - expected).abs() < 1e-15);
    }

    #[test]
    fn ties_do_not_count() {
        let x1 = DMatrix::zeros(2, 1);
        let y1 = DVector::from_column_slice(&[1.0, 1.0]);
        let x2 = DMatrix::zeros(2, 1);
        let y2 = DVector::from_column_slice(&[1.0, 1.0]);
        let data = PairedData::new(x1, y1, x2, y2).unwrap();
        let v = weighted_rank_sum(&data, &unit_ratio(), psi_y()).unwrap();
        assert_eq!(v, 0.0);
    }
}
