//! Classifier-accuracy tests built on the plug-in density-ratio
//! classifier.
//!
//! The plug-in classifier compares the joint and marginal ratio
//! estimates: a point `v = (x, y)` is assigned to population 1 exactly
//! when the estimated joint ratio exceeds the estimated marginal one,
//! which reproduces the balanced Bayes rule `f1(y,x) > r_x(x) f2(y,x)`.
//! Under the null any classifier's weighted accuracy is 1/2; the
//! studentized excess accuracy is asymptotically standard normal.

use crate::data::{PairedData, Population, TestOutcome};
use crate::error::Result;
use crate::rng::StreamRng;
use crate::split_paired;
use crate::stats::{sample_variance, upper_p};

use super::{balance, fit_joint_ratio, fit_marginal_ratio, fold_indices, DrtConfig, RatioEval};

/// The plug-in decision rule: population 1 exactly when the joint ratio
/// exceeds the marginal one (both evaluated at the same point).
pub fn classify_by_ratios(marginal: f64, joint: f64) -> u8 {
    if joint > marginal {
        1
    } else {
        2
    }
}

struct PlugInClassifier {
    marginal: RatioEval,
    joint: RatioEval,
}

impl PlugInClassifier {
    fn classify(&self, x: &[f64], y: f64) -> Result<u8> {
        let mut v = x.to_vec();
        v.push(y);
        Ok(classify_by_ratios(self.marginal.at(x)?, self.joint.at(&v)?))
    }
}

/// Accuracy terms on the evaluation block: `a1_i = 1{h(v1_i) = 1}` and
/// `a2_i = w(x2_i) 1{h(v2_i) = 2}`.
fn accuracy_terms(
    eval: &PairedData,
    classifier: &PlugInClassifier,
    weights: &RatioEval,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = eval.n1();
    let mut a1 = Vec::with_capacity(m);
    let mut a2 = Vec::with_capacity(m);
    for i in 0..m {
        let (x, y) = eval.row(Population::First, i);
        a1.push(if classifier.classify(&x, y)? == 1 {
            1.0
        } else {
            0.0
        });
    }
    for i in 0..eval.n2() {
        let (x, y) = eval.row(Population::Second, i);
        let hit = classifier.classify(&x, y)? == 2;
        a2.push(if hit { weights.at(&x)? } else { 0.0 });
    }
    Ok((a1, a2))
}

/// Studentized excess accuracy `sqrt(m) (mean a1 + mean a2 - 1) / sd`;
/// `None` when the variance estimate degenerates.
fn fold_statistic(a1: &[f64], a2: &[f64]) -> Option<f64> {
    let m = a1.len() as f64;
    let num = a1.iter().sum::<f64>() / m + a2.iter().sum::<f64>() / m - 1.0;
    let s2 = sample_variance(a1) + sample_variance(a2);
    if s2.is_finite() && s2 > 0.0 {
        Some(m.sqrt() * num / s2.sqrt())
    } else {
        None
    }
}

/// Single-split classifier test.
///
/// Pipeline: balance; split into the statistic side `d_a` and the
/// training side `d_b`; build the plug-in classifier from marginal and
/// joint ratios fit on `d_b`; split `d_a` into a ratio-fitting block and
/// an evaluation block (`ratio_eval_split`, default 8:2); fit the
/// weighting ratio on the former and studentize the excess accuracy on
/// the latter. Rejects one-sided at `phi_inv(1 - alpha)`.
pub fn classifier_test(
    data: &PairedData,
    cfg: &DrtConfig,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    cfg.validate()?;
    let method = "clf";
    let (balanced, subsampled) = balance(data, rng)?;
    let (d_a, d_b) = split_paired(&balanced, cfg.split_ratio_train_eval, rng)?;
    let classifier = PlugInClassifier {
        marginal: fit_marginal_ratio(&cfg.ratio_source, &d_b)?,
        joint: fit_joint_ratio(&cfg.ratio_source, &d_b)?,
    };
    let (d_fit, d_eval) = split_paired(&d_a, cfg.ratio_eval_split, rng)?;
    let weights = fit_marginal_ratio(&cfg.ratio_source, &d_fit)?;
    let (a1, a2) = accuracy_terms(&d_eval, &classifier, &weights)?;

    let outcome = match fold_statistic(&a1, &a2) {
        Some(stat) => TestOutcome::from_p_value(stat, upper_p(stat), cfg.alpha, method),
        None => TestOutcome::forced_accept(cfg.alpha, method, "degenerate_variance"),
    };
    Ok(outcome
        .with_diagnostic("m", a1.len() as f64)
        .with_diagnostic("subsampled", f64::from(u8::from(subsampled))))
}

/// K-fold cross-validated classifier test.
///
/// The dataset is partitioned into `folds` blocks per population. Fold
/// `j` plays the role of the statistic side: the classifier is trained
/// on the fold's complement, and the fold itself is split by
/// `ratio_eval_split` (8:2 by default) into a weighting-ratio block and
/// an evaluation block, mirroring the single-split pipeline. The
/// standardized fold statistics are combined with the `1/sqrt(K)`
/// weight. Degenerate folds contribute zero; if every fold degenerates
/// the test accepts outright.
pub fn classifier_test_cv(
    data: &PairedData,
    cfg: &DrtConfig,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    cfg.validate_cv()?;
    let method = "clf-cv";
    let (balanced, subsampled) = balance(data, rng)?;

    let folds1 = fold_indices(balanced.n1(), cfg.folds, rng);
    let folds2 = fold_indices(balanced.n2(), cfg.folds, rng);
    let mut stats = Vec::with_capacity(cfg.folds);
    let mut degenerate = 0usize;
    for j in 0..cfg.folds {
        let fold = balanced.take_rows(&folds1[j], &folds2[j]);
        let complement1: Vec<usize> = (0..balanced.n1())
            .filter(|i| !folds1[j].contains(i))
            .collect();
        let complement2: Vec<usize> = (0..balanced.n2())
            .filter(|i| !folds2[j].contains(i))
            .collect();
        let train = balanced.take_rows(&complement1, &complement2);
        let classifier = PlugInClassifier {
            marginal: fit_marginal_ratio(&cfg.ratio_source, &train)?,
            joint: fit_joint_ratio(&cfg.ratio_source, &train)?,
        };
        let (d_fit, d_eval) = split_paired(&fold, cfg.ratio_eval_split, rng)?;
        let weights = fit_marginal_ratio(&cfg.ratio_source, &d_fit)?;
        let (a1, a2) = accuracy_terms(&d_eval, &classifier, &weights)?;
        match fold_statistic(&a1, &a2) {
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
        let stat = super::mmd::combine_fold_stats(&stats);
        TestOutcome::from_p_value(stat, upper_p(stat), cfg.alpha, method)
    };
    Ok(outcome
        .with_diagnostic("folds", cfg.folds as f64)
        .with_diagnostic("degenerate_folds", degenerate as f64)
        .with_diagnostic("subsampled", f64::from(u8::from(subsampled))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drt::RatioSource;
    use crate::synth::{gen_scenario, Hypothesis, Scenario, ScenarioConfig, Support};
    use std::sync::Arc;

    fn oracle_pair(constant_marginal: f64, constant_joint: f64) -> RatioSource {
        RatioSource::Oracle {
            marginal: Arc::new(move |_: &[f64]| constant_marginal),
            joint: Some(Arc::new(move |_: &[f64]| constant_joint)),
        }
    }

    #[test]
    fn decision_rule_direction() {
        // larger joint ratio means the point looks like population 1
        assert_eq!(classify_by_ratios(1.0, 2.0), 1);
        assert_eq!(classify_by_ratios(2.0, 1.0), 2);
        assert_eq!(classify_by_ratios(1.0, 1.0), 2);
    }

    #[test]
    fn constant_classifier_forces_acceptance() {
        // joint always above marginal: h = 1 everywhere, so a1 is all ones
        // and a2 all zeros; both variances vanish
        let mut rng = StreamRng::new(51, 0);
        let cfg_data =
            ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 200).unwrap();
        let data = gen_scenario(&cfg_data, &mut rng).unwrap();
        let cfg = DrtConfig::new(oracle_pair(1.0, 2.0));
        let out = classifier_test(&data, &cfg, &mut rng).unwrap();
        assert!(out.is_forced_accept());
        assert_eq!(out.diagnostic("degenerate_variance"), Some(1.0));
    }

    #[test]
    fn cv_requires_two_folds() {
        let mut rng = StreamRng::new(52, 0);
        let cfg_data =
            ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 100).unwrap();
        let data = gen_scenario(&cfg_data, &mut rng).unwrap();
        let cfg = DrtConfig::new(oracle_pair(1.0, 2.0)).with_folds(1);
        assert!(classifier_test_cv(&data, &cfg, &mut rng).is_err());
    }

    #[test]
    fn missing_joint_oracle_is_rejected() {
        let mut rng = StreamRng::new(53, 0);
        let cfg_data =
            ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 100).unwrap();
        let data = gen_scenario(&cfg_data, &mut rng).unwrap();
        let cfg = DrtConfig::new(RatioSource::oracle_marginal(Arc::new(|_: &[f64]| 1.0)));
        assert!(classifier_test(&data, &cfg, &mut rng).is_err());
    }

    #[test]
    fn unbalanced_populations_are_subsampled() {
        let mut rng = StreamRng::new(54, 0);
        let cfg_data =
            ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 300).unwrap();
        let data = gen_scenario(&cfg_data, &mut rng).unwrap();
        let trimmed = data.subsample(300, 200, &mut rng).unwrap();
        let cfg = DrtConfig::new(RatioSource::fitted_ll());
        let out = classifier_test(&trimmed, &cfg, &mut rng).unwrap();
        assert_eq!(out.diagnostic("subsampled"), Some(1.0));
        // 200 per group -> d_a = 100 -> 20% evaluation block of 20
        assert_eq!(out.diagnostic("m"), Some(20.0));
    }
}
