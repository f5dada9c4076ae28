//! Density-ratio-corrected marginal two-sample tests.
//!
//! The equality of the conditional laws `y | x` across two populations is
//! equivalent to the equality of population 1's joint density with the
//! comparison density `r_x(x) * f^(2)(y, x)`, where `r_x` is the marginal
//! covariate density ratio. Re-weighting population-2 terms by an
//! estimate of `r_x` therefore turns any marginal two-sample statistic
//! into a conditional one:
//!
//! * [`mean_comparison`] — importance-weighted difference of transformed
//!   means, two-sided normal calibration;
//! * [`weighted_rank_sum`] — the weighted stochastic-order statistic
//!   (raw value only; no calibrated p-value is provided);
//! * [`classifier_test`] / [`classifier_test_cv`] — accuracy of a
//!   plug-in density-ratio classifier, one-sided normal calibration;
//! * [`mmd_linear_test`] / [`mmd_linear_test_cv`] — studentized
//!   linear-time MMD, one-sided normal calibration;
//! * [`mmd_quadratic_estimate`] — the weighted quadratic-time MMD
//!   U-statistic, exposed as a diagnostic value only (its permutation
//!   calibration is not valid here).
//!
//! The split-based pipelines assume balanced populations; unequal ones
//! are subsampled to the smaller size first.

mod classifier;
mod mmd;
mod moments;

pub use classifier::{classifier_test, classifier_test_cv, classify_by_ratios};
pub use mmd::{
    combine_fold_stats, mmd_linear_terms, mmd_linear_test, mmd_linear_test_cv,
    mmd_linear_test_cv_with_kernel, mmd_linear_test_with_kernel, mmd_quadratic_estimate,
    studentized_mean, JointKernel,
};
pub use moments::{mean_comparison, weighted_rank_sum};

use nalgebra::DMatrix;

use crate::data::PairedData;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::ratio::{fit_klr, fit_ll, DensityRatioModel, FitOptions, DEFAULT_CLIP};
use crate::rng::StreamRng;
use crate::ScalarFn;

/// Marginal density-ratio evaluator used by the moment statistics.
pub trait RatioFn: Send + Sync {
    fn ratio_at(&self, x: &[f64]) -> Result<f64>;
}

impl RatioFn for DensityRatioModel {
    fn ratio_at(&self, x: &[f64]) -> Result<f64> {
        self.predict_ratio(x)
    }
}

/// A known ratio function wrapped for use wherever a fitted model fits.
#[derive(Clone)]
pub struct OracleRatio(pub ScalarFn);

impl RatioFn for OracleRatio {
    fn ratio_at(&self, x: &[f64]) -> Result<f64> {
        Ok((self.0)(x))
    }
}

/// Where the pipelines obtain their density ratios.
#[derive(Clone)]
pub enum RatioSource {
    /// Fit linear logistic regression on the designated block.
    FittedLl { ridge: f64, clip: (f64, f64) },
    /// Fit kernel logistic regression on the designated block.
    FittedKlr {
        kernel: KernelSpec,
        lambda: f64,
        clip: (f64, f64),
    },
    /// Known ratio functions; the joint one (over the concatenated
    /// `(x, y)` point) is required by the classifier tests only.
    Oracle {
        marginal: ScalarFn,
        joint: Option<ScalarFn>,
    },
}

impl RatioSource {
    pub fn fitted_ll() -> Self {
        RatioSource::FittedLl {
            ridge: 0.0,
            clip: DEFAULT_CLIP,
        }
    }

    pub fn oracle_marginal(f: ScalarFn) -> Self {
        RatioSource::Oracle {
            marginal: f,
            joint: None,
        }
    }
}

/// Configuration shared by the split-based pipelines.
#[derive(Clone)]
pub struct DrtConfig {
    pub ratio_source: RatioSource,
    /// Fraction of each population assigned to the statistic side of the
    /// train/evaluate split.
    pub split_ratio_train_eval: f64,
    /// Within the statistic side of the classifier test, the fraction
    /// used for re-fitting the weighting ratio (the remaining rows form
    /// the evaluation block).
    pub ratio_eval_split: f64,
    /// Number of cross-validation folds for the `_cv` variants.
    pub folds: usize,
    /// Kernel for the MMD statistics, evaluated on joint `(x, y)` points.
    pub kernel: KernelSpec,
    pub alpha: f64,
}

impl DrtConfig {
    pub fn new(ratio_source: RatioSource) -> Self {
        Self {
            ratio_source,
            split_ratio_train_eval: 0.5,
            ratio_eval_split: 0.8,
            folds: 2,
            kernel: KernelSpec::gaussian(1.0),
            alpha: 0.05,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        assert!(0.0 < alpha && alpha < 1.0);
        self.alpha = alpha;
        self
    }

    pub fn with_folds(mut self, folds: usize) -> Self {
        self.folds = folds;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0 < self.split_ratio_train_eval && self.split_ratio_train_eval < 1.0)
            || !(0.0 < self.ratio_eval_split && self.ratio_eval_split < 1.0)
        {
            return Err(Error::InvalidConfig(
                "split fractions must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }

    fn validate_cv(&self) -> Result<()> {
        self.validate()?;
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "cross-validation needs at least 2 folds, got {}",
                self.folds
            )));
        }
        Ok(())
    }
}

/// Either a fitted model or an oracle closure, evaluated uniformly.
pub(crate) enum RatioEval {
    Model(DensityRatioModel),
    Oracle(ScalarFn),
}

impl RatioEval {
    pub(crate) fn at(&self, x: &[f64]) -> Result<f64> {
        match self {
            RatioEval::Model(m) => m.predict_ratio(x),
            RatioEval::Oracle(f) => Ok(f(x)),
        }
    }
}

impl RatioFn for RatioEval {
    fn ratio_at(&self, x: &[f64]) -> Result<f64> {
        self.at(x)
    }
}

/// Fits (or wraps) the configured marginal ratio on `fit_data` and
/// returns it as a boxed evaluator, for callers that combine the moment
/// statistics with their own data splits.
pub fn marginal_ratio(source: &RatioSource, fit_data: &PairedData) -> Result<Box<dyn RatioFn>> {
    Ok(Box::new(fit_marginal_ratio(source, fit_data)?))
}

/// Stacks the covariates of `fit_data` (population 1 labeled 1,
/// population 2 labeled 0) and fits the configured marginal ratio model.
pub(crate) fn fit_marginal_ratio(source: &RatioSource, fit_data: &PairedData) -> Result<RatioEval> {
    match source {
        RatioSource::Oracle { marginal, .. } => Ok(RatioEval::Oracle(marginal.clone())),
        _ => {
            let (features, labels) = stacked_features(fit_data, false);
            fit_from_source(source, &features, &labels)
        }
    }
}

/// Same as [`fit_marginal_ratio`] but on concatenated `(x, y)` features.
pub(crate) fn fit_joint_ratio(source: &RatioSource, fit_data: &PairedData) -> Result<RatioEval> {
    match source {
        RatioSource::Oracle { joint, .. } => match joint {
            Some(j) => Ok(RatioEval::Oracle(j.clone())),
            None => Err(Error::InvalidConfig(
                "classifier pipeline with an oracle ratio source needs a joint oracle".into(),
            )),
        },
        _ => {
            let (features, labels) = stacked_features(fit_data, true);
            match fit_from_source(source, &features, &labels)? {
                RatioEval::Model(m) => Ok(RatioEval::Model(m.into_joint())),
                RatioEval::Oracle(_) => unreachable!("fitted branch"),
            }
        }
    }
}

fn fit_from_source(
    source: &RatioSource,
    features: &DMatrix<f64>,
    labels: &[u8],
) -> Result<RatioEval> {
    match source {
        RatioSource::FittedLl { ridge, clip } => {
            let opts = FitOptions {
                ridge: *ridge,
                ..FitOptions::default()
            };
            Ok(RatioEval::Model(
                fit_ll(features, labels, opts)?.with_clip(clip.0, clip.1),
            ))
        }
        RatioSource::FittedKlr {
            kernel,
            lambda,
            clip,
        } => Ok(RatioEval::Model(
            fit_klr(features, labels, *kernel, *lambda, FitOptions::kernel())?
                .with_clip(clip.0, clip.1),
        )),
        RatioSource::Oracle { .. } => unreachable!("oracle handled by callers"),
    }
}

fn stacked_features(data: &PairedData, joint: bool) -> (DMatrix<f64>, Vec<u8>) {
    let (n1, n2, p) = (data.n1(), data.n2(), data.dim());
    let cols = if joint { p + 1 } else { p };
    let mut features = DMatrix::zeros(n1 + n2, cols);
    let mut labels = Vec::with_capacity(n1 + n2);
    for i in 0..n1 {
        for c in 0..p {
            features[(i, c)] = data.x1()[(i, c)];
        }
        if joint {
            features[(i, p)] = data.y1()[i];
        }
        labels.push(1);
    }
    for i in 0..n2 {
        for c in 0..p {
            features[(n1 + i, c)] = data.x2()[(i, c)];
        }
        if joint {
            features[(n1 + i, p)] = data.y2()[i];
        }
        labels.push(0);
    }
    (features, labels)
}

/// Subsamples the larger population to the smaller one so the paired
/// split-and-pair constructions see balanced groups. Returns the data
/// unchanged when already balanced.
pub(crate) fn balance(data: &PairedData, rng: &mut StreamRng) -> Result<(PairedData, bool)> {
    if data.n1() == data.n2() {
        Ok((data.clone(), false))
    } else {
        let k = data.n1().min(data.n2());
        Ok((data.subsample(k, k, rng)?, true))
    }
}

/// Per-population fold assignment: shuffled index chunks of equal size
/// `floor(n / folds)`; leftover rows join every complement.
pub(crate) fn fold_indices(n: usize, folds: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let m = n / folds;
    (0..folds)
        .map(|j| idx[j * m..(j + 1) * m].to_vec())
        .collect()
}
