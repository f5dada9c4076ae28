//! Monte Carlo experiment engine: runs a grid of (scenario, method)
//! cells over independent replicates, aggregates rejection rates with
//! exact binomial intervals, and renders report tables.
//!
//! Every replicate draws its generator from
//! `(base_seed, hash(cell key, replicate index))`, so results are
//! independent of execution order and thread count.

mod csv_io;
mod plan;
mod report;

pub use csv_io::{load_csv, load_csv_pair, CsvSchema, Standardization};
pub use plan::{parse_plan, parse_scenario_id};
pub use report::{emit_report, ReportFormat};

use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::cit::{convert, gcm_test, CitAdapter, RegressorSpec};
use crate::data::{PairedData, TestOutcome};
use crate::drt::{
    classifier_test, classifier_test_cv, mean_comparison, mmd_linear_test, mmd_linear_test_cv,
    DrtConfig, RatioSource,
};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rng::{stream_id, StreamRng};
use crate::stats::clopper_pearson;
use crate::synth::{gen_scenario, Hypothesis, ScenarioConfig, Support};

/// A registered testing method, executable on any paired dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    /// Generalized Covariance Measure with linear regressors, run
    /// through the CIT converter.
    GcmLinear,
    /// GCM with kernel ridge regressors, through the converter.
    GcmKernelRidge,
    /// Single-split classifier-accuracy test with fitted LL ratios.
    Clf,
    /// 2-fold cross-validated classifier test.
    ClfCv,
    /// Single-split linear-time MMD with fitted LL ratios.
    MmdLinear,
    /// 2-fold cross-validated linear-time MMD.
    MmdLinearCv,
    /// Importance-weighted mean comparison of the responses, with the
    /// LL ratio fit on an independent half.
    MeanComparison,
    /// Diagnostic stub that always rejects.
    AlwaysReject,
    /// Diagnostic stub with a uniform p-value (exactly level alpha).
    UniformP,
}

impl MethodSpec {
    pub fn id(&self) -> &'static str {
        match self {
            MethodSpec::GcmLinear => "gcm-lm",
            MethodSpec::GcmKernelRidge => "gcm-krr",
            MethodSpec::Clf => "clf",
            MethodSpec::ClfCv => "clf-cv",
            MethodSpec::MmdLinear => "mmd-l",
            MethodSpec::MmdLinearCv => "mmd-l-cv",
            MethodSpec::MeanComparison => "mean",
            MethodSpec::AlwaysReject => "always-reject",
            MethodSpec::UniformP => "uniform-p",
        }
    }

    pub const ALL: [MethodSpec; 9] = [
        MethodSpec::GcmLinear,
        MethodSpec::GcmKernelRidge,
        MethodSpec::Clf,
        MethodSpec::ClfCv,
        MethodSpec::MmdLinear,
        MethodSpec::MmdLinearCv,
        MethodSpec::MeanComparison,
        MethodSpec::AlwaysReject,
        MethodSpec::UniformP,
    ];

    /// Runs the method on `data` at level `alpha`, drawing any splits and
    /// randomized sizes from `rng`.
    pub fn execute(
        &self,
        data: &PairedData,
        alpha: f64,
        rng: &mut StreamRng,
    ) -> Result<TestOutcome> {
        match self {
            MethodSpec::GcmLinear => {
                let adapter = CitAdapter::new(Arc::new(move |pooled| {
                    gcm_test(
                        pooled,
                        &RegressorSpec::Linear,
                        &RegressorSpec::Linear,
                        alpha,
                    )
                }))
                .with_alpha(alpha);
                convert(data, &adapter, rng)
            }
            MethodSpec::GcmKernelRidge => {
                // bandwidth on the scale of squared distances between
                // standardized covariates; a fixed mild penalty
                let spec = RegressorSpec::KernelRidge {
                    kernel: KernelSpec::gaussian(2.0 * data.dim() as f64),
                    lambda: 0.1,
                };
                let adapter = CitAdapter::new(Arc::new(move |pooled| {
                    gcm_test(pooled, &spec, &spec, alpha)
                }))
                .with_alpha(alpha);
                convert(data, &adapter, rng)
            }
            MethodSpec::Clf => {
                let cfg = DrtConfig::new(RatioSource::fitted_ll()).with_alpha(alpha);
                classifier_test(data, &cfg, rng)
            }
            MethodSpec::ClfCv => {
                let cfg = DrtConfig::new(RatioSource::fitted_ll())
                    .with_alpha(alpha)
                    .with_folds(2);
                classifier_test_cv(data, &cfg, rng)
            }
            MethodSpec::MmdLinear => {
                let cfg = DrtConfig::new(RatioSource::fitted_ll()).with_alpha(alpha);
                mmd_linear_test(data, &cfg, rng)
            }
            MethodSpec::MmdLinearCv => {
                let cfg = DrtConfig::new(RatioSource::fitted_ll())
                    .with_alpha(alpha)
                    .with_folds(2);
                mmd_linear_test_cv(data, &cfg, rng)
            }
            MethodSpec::MeanComparison => {
                let (eval, fit) = crate::split_paired(data, 0.5, rng)?;
                let ratio = crate::drt::marginal_ratio(&RatioSource::fitted_ll(), &fit)?;
                mean_comparison(&eval, ratio.as_ref(), &|_x, y| y, alpha)
            }
            MethodSpec::AlwaysReject => Ok(TestOutcome::from_p_value(
                f64::INFINITY,
                0.0,
                alpha,
                self.id(),
            )),
            MethodSpec::UniformP => {
                let u = rng.uniform();
                Ok(TestOutcome::from_p_value(0.0, u, alpha, self.id()))
            }
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodSpec::ALL
            .iter()
            .find(|m| m.id() == s.trim().to_lowercase())
            .copied()
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method '{s}'; known: {}",
                    MethodSpec::ALL.map(|m| m.id()).join(", ")
                ))
            })
    }
}

/// Grid of scenario and method cells with the replication settings.
#[derive(Clone)]
pub struct ExperimentPlan {
    pub scenarios: Vec<ScenarioConfig>,
    pub methods: Vec<MethodSpec>,
    pub repetitions: usize,
    pub alpha: f64,
    pub base_seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub parallelism: usize,
}

impl ExperimentPlan {
    pub fn new(scenarios: Vec<ScenarioConfig>, methods: Vec<MethodSpec>) -> Self {
        Self {
            scenarios,
            methods,
            repetitions: 500,
            alpha: 0.05,
            base_seed: 0,
            parallelism: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig(
                "repetitions must be at least 1".into(),
            ));
        }
        if self.scenarios.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidConfig(
                "plan needs at least one scenario and one method".into(),
            ));
        }
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "invalid alpha {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Per-cell Monte Carlo aggregate.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RejectionSummary {
    pub scenario: String,
    pub support: String,
    pub hypothesis: String,
    pub n: usize,
    pub method: String,
    pub rejection_rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub repetitions: usize,
    pub failures: usize,
    /// Wall-clock mean per replicate; excluded from reports and from
    /// reproducibility comparisons.
    #[serde(skip)]
    pub mean_runtime_ms: f64,
}

fn hypothesis_str(h: Hypothesis) -> &'static str {
    match h {
        Hypothesis::Null => "null",
        Hypothesis::Alt => "alt",
    }
}

fn support_str(s: Support) -> &'static str {
    match s {
        Support::Unbounded => "U",
        Support::Bounded => "B",
    }
}

fn cell_key(cfg: &ScenarioConfig, method: MethodSpec) -> String {
    format!(
        "{}|{}|{}|{}",
        cfg.id(),
        hypothesis_str(cfg.hypothesis),
        cfg.n,
        method.id()
    )
}

fn run_replicate(
    cfg: &ScenarioConfig,
    method: MethodSpec,
    alpha: f64,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    let data = gen_scenario(cfg, rng)?;
    method.execute(&data, alpha, rng)
}

/// Runs the full plan. A replicate that returns an error counts as a
/// forced acceptance and is surfaced in the cell's failure count.
pub fn run_monte_carlo(plan: &ExperimentPlan) -> Result<Vec<RejectionSummary>> {
    plan.validate()?;
    let run = || -> Vec<RejectionSummary> {
        let mut summaries = Vec::new();
        for cfg in &plan.scenarios {
            for &method in &plan.methods {
                let key = cell_key(cfg, method);
                let results: Vec<(bool, bool, f64)> = (0..plan.repetitions)
                    .into_par_iter()
                    .map(|rep| {
                        let stream = stream_id(&format!("{key}|{rep}"));
                        let mut rng = StreamRng::new(plan.base_seed, stream);
                        let started = Instant::now();
                        let outcome = run_replicate(cfg, method, plan.alpha, &mut rng);
                        let elapsed = started.elapsed().as_secs_f64() * 1e3;
                        match outcome {
                            Ok(out) => (out.reject, false, elapsed),
                            Err(_) => (false, true, elapsed),
                        }
                    })
                    .collect();
                let rejections = results.iter().filter(|r| r.0).count();
                let failures = results.iter().filter(|r| r.1).count();
                let runtime = results.iter().map(|r| r.2).sum::<f64>() / plan.repetitions as f64;
                let rate = rejections as f64 / plan.repetitions as f64;
                let (ci_lo, ci_hi) = clopper_pearson(rejections, plan.repetitions, 0.95);
                summaries.push(RejectionSummary {
                    scenario: cfg.id()[..2].to_string(),
                    support: support_str(cfg.support).to_string(),
                    hypothesis: hypothesis_str(cfg.hypothesis).to_string(),
                    n: cfg.n,
                    method: method.id().to_string(),
                    rejection_rate: rate,
                    ci_lo,
                    ci_hi,
                    repetitions: plan.repetitions,
                    failures,
                    mean_runtime_ms: runtime,
                });
            }
        }
        summaries
    };

    if plan.parallelism == 0 {
        Ok(run())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(plan.parallelism)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        Ok(pool.install(run))
    }
}
