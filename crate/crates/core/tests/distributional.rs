//! Monte Carlo checks of the null limits, power orderings, and
//! estimation-quality claims that are too heavy for unit tests.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use c2st::cit::{coupled_gcm_pair, gcm_statistic, Regressor};
use c2st::drt::{
    classifier_test, classifier_test_cv, mean_comparison, mmd_linear_terms, studentized_mean,
    DrtConfig, OracleRatio, RatioSource,
};
use c2st::harness::MethodSpec;
use c2st::kernel::KernelSpec;
use c2st::ratio::{fit_ll, FitOptions};
use c2st::rng::stream_id;
use c2st::stats::{ks_test_standard_normal, mean, phi_inv, sample_variance};
use c2st::synth::{
    gen_scenario, mean_shift, true_marginal_ratio, Hypothesis, Scenario, ScenarioConfig, Support,
};
use c2st::{pool, PairedData, ScalarFn, StreamRng};

fn oracle_source_null(cfg: ScenarioConfig) -> RatioSource {
    let marginal: ScalarFn = Arc::new(move |x: &[f64]| true_marginal_ratio(&cfg, x).unwrap());
    // under the null the joint (x, y) ratio coincides with the marginal
    let joint: ScalarFn =
        Arc::new(move |v: &[f64]| true_marginal_ratio(&cfg, &v[..v.len() - 1]).unwrap());
    RatioSource::Oracle {
        marginal,
        joint: Some(joint),
    }
}

fn collect_stats<F>(reps: usize, seed: u64, key: &str, f: F) -> Vec<f64>
where
    F: Fn(&mut StreamRng) -> Option<f64> + Sync,
{
    (0..reps)
        .into_par_iter()
        .filter_map(|rep| {
            let mut rng = StreamRng::new(seed, stream_id(&format!("{key}|{rep}")));
            f(&mut rng)
        })
        .collect()
}

#[test]
fn classifier_tests_with_oracle_ratios_are_standard_normal() {
    let cfg = ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 1000).unwrap();
    let source = oracle_source_null(cfg);
    for cv in [false, true] {
        let src = source.clone();
        let stats = collect_stats(500, 91, &format!("clf-oracle|{cv}"), move |rng| {
            let data = gen_scenario(&cfg, rng).unwrap();
            let dcfg = DrtConfig::new(src.clone());
            let out = if cv {
                classifier_test_cv(&data, &dcfg, rng).ok()?
            } else {
                classifier_test(&data, &dcfg, rng).ok()?
            };
            (!out.is_forced_accept()).then_some(out.statistic)
        });
        assert!(
            stats.len() >= 490,
            "cv={cv}: too many degenerate replicates"
        );
        let (_, p) = ks_test_standard_normal(&stats);
        assert!(p > 0.01, "cv={cv}: KS p = {p}");
    }
}

#[test]
fn cross_validated_mmd_with_oracle_ratio_is_standard_normal() {
    let cfg = ScenarioConfig::new(Scenario::S2, Support::Bounded, Hypothesis::Null, 1000).unwrap();
    let source = RatioSource::oracle_marginal(Arc::new(move |x: &[f64]| {
        true_marginal_ratio(&cfg, x).unwrap()
    }));
    let stats = collect_stats(500, 92, "mmd-oracle-cv", move |rng| {
        let data = gen_scenario(&cfg, rng).unwrap();
        let dcfg = DrtConfig::new(source.clone());
        let out = c2st::drt::mmd_linear_test_cv(&data, &dcfg, rng).ok()?;
        (!out.is_forced_accept()).then_some(out.statistic)
    });
    let (_, p) = ks_test_standard_normal(&stats);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn gcm_with_known_regressions_is_standard_normal() {
    // scenario 2 null: E[y | x] = x' 1 and the group regression follows
    // from the marginal density ratio with balanced sizes; both the
    // fixed-size statistic and its randomized-size coupling should be
    // standard normal
    let cfg = ScenarioConfig::new(Scenario::S2, Support::Unbounded, Hypothesis::Null, 500).unwrap();
    let f: ScalarFn = Arc::new(|x: &[f64]| x.iter().sum());
    let g: ScalarFn = Arc::new(move |x: &[f64]| {
        let r = true_marginal_ratio(&cfg, x).unwrap();
        1.0 + 1.0 / (1.0 + r)
    });
    let pairs: Vec<(f64, f64)> = (0..500)
        .into_par_iter()
        .map(|rep| {
            let mut rng = StreamRng::new(93, stream_id(&format!("gcm-ks|{rep}")));
            let data = gen_scenario(&cfg, &mut rng).unwrap();
            let t_direct = gcm_statistic(
                &pool(&data),
                &Regressor::Known(f.clone()),
                &Regressor::Known(g.clone()),
            )
            .unwrap();
            let (t, t_tilde) =
                coupled_gcm_pair(&data, &cfg, f.clone(), g.clone(), &mut rng).unwrap();
            assert_eq!(t.to_bits(), t_direct.to_bits());
            (t, t_tilde)
        })
        .collect();
    let ts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let tildes: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (_, p_t) = ks_test_standard_normal(&ts);
    let (_, p_tilde) = ks_test_standard_normal(&tildes);
    assert!(p_t > 0.01, "T KS p = {p_t}");
    assert!(p_tilde > 0.01, "T~ KS p = {p_tilde}");
}

#[test]
fn independence_of_cv_fold_statistics() {
    // two disjoint halves, each studentized with the ratio fit on the
    // other half: the fold statistics should be nearly uncorrelated
    let cfg = ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 800).unwrap();
    let spec = KernelSpec::gaussian(1.0);
    let pairs: Vec<(f64, f64)> = (0..500)
        .into_par_iter()
        .filter_map(|rep| {
            let mut rng = StreamRng::new(94, stream_id(&format!("folds|{rep}")));
            let data = gen_scenario(&cfg, &mut rng).unwrap();
            let (a, b) = c2st::split_paired(&data, 0.5, &mut rng).ok()?;
            let fit = |block: &PairedData| {
                let source = RatioSource::fitted_ll();
                c2st::drt::marginal_ratio(&source, block).ok()
            };
            let ratio_for_a = fit(&b)?;
            let ratio_for_b = fit(&a)?;
            let k = |x: &[f64], y: &[f64]| spec.eval(x, y).unwrap();
            let t_a = studentized_mean(&mmd_linear_terms(&a, ratio_for_a.as_ref(), &k).ok()?)?;
            let t_b = studentized_mean(&mmd_linear_terms(&b, ratio_for_b.as_ref(), &k).ok()?)?;
            Some((t_a, t_b))
        })
        .collect();
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mx = mean(&xs);
    let my = mean(&ys);
    let cov = xs
        .iter()
        .zip(ys.iter())
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() as f64 - 1.0);
    let corr = cov / (sample_variance(&xs) * sample_variance(&ys)).sqrt();
    assert!(corr.abs() <= 0.12, "fold correlation {corr}");
}

#[test]
fn mean_comparison_has_power_at_the_shift_alternative() {
    let cfg = ScenarioConfig::new(Scenario::S1, Support::Unbounded, Hypothesis::Alt, 2000).unwrap();
    let oracle = OracleRatio(Arc::new(move |x: &[f64]| {
        true_marginal_ratio(&cfg, x).unwrap()
    }));
    let rejects: Vec<f64> = collect_stats(500, 95, "mc-power", |rng| {
        let data = gen_scenario(&cfg, rng).unwrap();
        let out = mean_comparison(&data, &oracle, &|_x, y| y, 0.05).unwrap();
        Some(f64::from(u8::from(out.reject)))
    });
    let power = mean(&rejects);
    assert!(power >= 0.2, "power {power}");
    assert!(power > 0.05 + 4.0 * (0.05f64 * 0.95 / 500.0).sqrt());
}

#[test]
fn rejection_rate_is_monotone_in_the_mean_shift() {
    // shift the second population's responses on null draws so the only
    // difference across cells is the conditional mean offset
    let base = ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 600).unwrap();
    let reps = 500;
    let rates: Vec<f64> = [0.0, 0.25, 0.5]
        .iter()
        .map(|&delta| {
            let rejects: Vec<f64> = collect_stats(reps, 96, &format!("mono|{delta}"), |rng| {
                let data = gen_scenario(&base, rng).unwrap();
                let shifted = PairedData::new(
                    data.x1().clone(),
                    data.y1().clone(),
                    data.x2().clone(),
                    DVector::from_fn(data.n2(), |i, _| data.y2()[i] + delta),
                )
                .unwrap();
                let out = MethodSpec::ClfCv.execute(&shifted, 0.05, rng).unwrap();
                Some(f64::from(u8::from(out.reject)))
            });
            mean(&rejects)
        })
        .collect();
    let slack = 2.0 * (0.25f64 / reps as f64).sqrt();
    assert!(
        rates[2] >= rates[1] - slack && rates[1] >= rates[0] - slack,
        "rates {rates:?}"
    );
    // and the top shift should be clearly detectable
    assert!(rates[2] > 0.4, "rates {rates:?}");
}

#[test]
fn cross_validated_variants_dominate_single_split_power() {
    let alt = ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Alt, 1000).unwrap();
    let power_of = |method: MethodSpec| -> f64 {
        let rejects: Vec<f64> = collect_stats(500, 97, &format!("dom|{}", method.id()), |rng| {
            let data = gen_scenario(&alt, rng).unwrap();
            Some(f64::from(u8::from(
                method.execute(&data, 0.05, rng).unwrap().reject,
            )))
        });
        mean(&rejects)
    };
    let clf = power_of(MethodSpec::Clf);
    let clf_cv = power_of(MethodSpec::ClfCv);
    let mmd = power_of(MethodSpec::MmdLinear);
    let mmd_cv = power_of(MethodSpec::MmdLinearCv);
    assert!(clf_cv >= clf - 0.03, "clf {clf} vs cv {clf_cv}");
    assert!(mmd_cv >= mmd - 0.03, "mmd {mmd} vs cv {mmd_cv}");
}

#[test]
fn one_sided_decision_rule_matches_the_quantile() {
    let cfg = ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Alt, 400).unwrap();
    let threshold = phi_inv(0.95);
    for method in [
        MethodSpec::Clf,
        MethodSpec::ClfCv,
        MethodSpec::MmdLinear,
        MethodSpec::MmdLinearCv,
    ] {
        for rep in 0..25 {
            let mut rng = StreamRng::new(98, stream_id(&format!("rule|{}|{rep}", method.id())));
            let data = gen_scenario(&cfg, &mut rng).unwrap();
            let out = method.execute(&data, 0.05, &mut rng).unwrap();
            if !out.is_forced_accept() {
                assert_eq!(
                    out.reject,
                    out.statistic > threshold,
                    "{} statistic {} vs threshold {threshold}",
                    method.id(),
                    out.statistic
                );
            }
        }
    }
}

#[test]
fn ll_marginal_ratio_mse_decreases_with_sample_size() {
    // monitored estimation-quality metric: squared error against the
    // analytic ratio on a held-out population-2 sample
    let mut rng = StreamRng::new(99, 0);
    let mse_at = |n: usize, rng: &mut StreamRng| -> f64 {
        let cfg =
            ScenarioConfig::new(Scenario::S1, Support::Unbounded, Hypothesis::Null, n).unwrap();
        let data = gen_scenario(&cfg, rng).unwrap();
        let (features, labels) = {
            let mut rows = Vec::new();
            let mut labels = Vec::new();
            for i in 0..data.n1() {
                rows.extend(data.x1().row(i).iter().copied());
                labels.push(1u8);
            }
            for i in 0..data.n2() {
                rows.extend(data.x2().row(i).iter().copied());
                labels.push(0u8);
            }
            (
                nalgebra::DMatrix::from_row_slice(2 * n, cfg.p, &rows),
                labels,
            )
        };
        let model = fit_ll(&features, &labels, FitOptions::default())
            .unwrap()
            .with_clip(0.0, 1e6);
        let held = gen_scenario(&cfg, rng).unwrap();
        let errs: Vec<f64> = (0..1000.min(held.n2()))
            .map(|i| {
                let x: Vec<f64> = held.x2().row(i).iter().copied().collect();
                let e = model.predict_ratio(&x).unwrap() - true_marginal_ratio(&cfg, &x).unwrap();
                e * e
            })
            .collect();
        mean(&errs)
    };
    let coarse = mse_at(2000, &mut rng);
    let fine = mse_at(20_000, &mut rng);
    assert!(coarse.is_finite() && fine.is_finite());
    assert!(fine < coarse, "MSE {fine} at n=20000 vs {coarse} at n=2000");
}

#[test]
fn mean_shift_battery_stays_centered_for_oracle_weights() {
    // spot-check that the true ratio really recenters population 2 draws
    let cfg =
        ScenarioConfig::new(Scenario::S1, Support::Bounded, Hypothesis::Null, 50_000).unwrap();
    let mut rng = StreamRng::new(100, 0);
    let data = gen_scenario(&cfg, &mut rng).unwrap();
    let mu = mean_shift(cfg.p);
    let weighted: Vec<f64> = (0..data.n2())
        .map(|i| {
            let x: Vec<f64> = data.x2().row(i).iter().copied().collect();
            true_marginal_ratio(&cfg, &x).unwrap() * (x[0] - mu[0] / 2.0)
        })
        .collect();
    let direct: Vec<f64> = (0..data.n1())
        .map(|i| data.x1()[(i, 0)] - mu[0] / 2.0)
        .collect();
    let diff = mean(&weighted) - mean(&direct);
    let se = (sample_variance(&weighted) / weighted.len() as f64
        + sample_variance(&direct) / direct.len() as f64)
        .sqrt();
    assert!(diff.abs() <= 4.0 * se, "diff {diff}, se {se}");
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic), used as the
// test-side oracle for the null-exchangeability checks.
fn ks_two_sample_p(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|u, v| u.partial_cmp(v).unwrap());
    ys.sort_by(|u, v| u.partial_cmp(v).unwrap());
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let mut d: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < xs.len() && j < ys.len() {
        if xs[i] <= ys[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = (n * m / (n + m)).sqrt();
    let lambda = (ne + 0.12 + 0.11 / ne) * d;
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[test]
fn null_configurations_have_exchangeable_conditionals() {
    let mut rng = StreamRng::new(101, 0);
    let n = 30_000;
    for support in [Support::Unbounded, Support::Bounded] {
        // scenarios 1 and 2: the known link leaves a pivotal residual
        // that is independent of the covariates
        for scenario in [Scenario::S1, Scenario::S2] {
            let cfg = ScenarioConfig::new(scenario, support, Hypothesis::Null, n).unwrap();
            let data = gen_scenario(&cfg, &mut rng).unwrap();
            let resid = |x: &nalgebra::DMatrix<f64>, y: &DVector<f64>| -> Vec<f64> {
                (0..x.nrows())
                    .map(|i| {
                        let lin: f64 = match scenario {
                            Scenario::S1 => (0..cfg.p)
                                .map(|c| x[(i, c)] * c2st::synth::s1_slope(cfg.p)[c])
                                .sum(),
                            _ => (0..cfg.p).map(|c| x[(i, c)]).sum(),
                        };
                        y[i] - lin
                    })
                    .collect()
            };
            let r1 = resid(data.x1(), data.y1());
            let r2 = resid(data.x2(), data.y2());
            let p = ks_two_sample_p(&r1, &r2);
            assert!(p > 0.005, "{scenario:?} {support:?}: KS p = {p}");
        }

        // scenario 3: the conditional law depends on x only through
        // s = x' 1; compare responses inside a narrow s-window (the
        // unbounded design even has identical s-marginals)
        let cfg = ScenarioConfig::new(Scenario::S3, support, Hypothesis::Null, n).unwrap();
        let data = gen_scenario(&cfg, &mut rng).unwrap();
        let window = |x: &nalgebra::DMatrix<f64>, y: &DVector<f64>| -> Vec<f64> {
            (0..x.nrows())
                .filter(|&i| {
                    let s: f64 = (0..cfg.p).map(|c| x[(i, c)]).sum();
                    s.abs() < 0.2
                })
                .map(|i| y[i])
                .collect()
        };
        let y1 = window(data.x1(), data.y1());
        let y2 = window(data.x2(), data.y2());
        assert!(y1.len() > 500 && y2.len() > 500);
        let p = ks_two_sample_p(&y1, &y2);
        assert!(p > 0.005, "S3 {support:?}: KS p = {p}");
    }
}
