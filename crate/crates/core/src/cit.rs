//! Conversion of conditional-independence tests into conditional
//! two-sample tests, with a built-in Generalized Covariance Measure.
//!
//! The converter draws `n_tilde_1 ~ Binomial(n_tilde, n1/n)` with
//! `n_tilde = round(k* n)` and merges that many rows of each population
//! into a pooled sample that is distributed as i.i.d. draws of
//! `(x, y, z)` with `P(z = 1) = n1/n`. The shrink factor
//!
//! ```text
//! k* = a - sqrt(a^2 - 1),   a = 1 - 3 log(eps) / (2 n1)
//! ```
//!
//! comes from the multiplicative Chernoff bound and guarantees that the
//! draw exceeds an available population size with probability at most
//! `2 eps`; when that bad event happens the converter accepts the null
//! outright.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Binomial, Distribution};

use crate::data::{pool, PairedData, PooledData, Population, TestOutcome};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rng::StreamRng;
use crate::stats::{mean, two_sided_p};
use crate::synth::{sample_population, ScenarioConfig};
use crate::{InnerTest, ScalarFn};

/// Shrink factor for the randomized pooled-sample size.
///
/// Solves `n1 * k (1/k - 1)^2 / 3 = -log(eps)` for the root in `(0, 1)`,
/// evaluated in the cancellation-free form `k* = 1 / (a + sqrt(a^2 - 1))`.
pub fn kstar(epsilon: f64, n1: usize) -> Result<f64> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    assert!(n1 >= 1);
    // d = a - 1 >= 0 exactly, since log(eps) < 0
    let d = -3.0 * epsilon.ln() / (2.0 * n1 as f64);
    let s = (d * (2.0 + d)).sqrt();
    Ok(1.0 / (1.0 + d + s))
}

/// Adapter wrapping an inner conditional-independence test.
///
/// The inner test is any total function of pooled data; the adapter owns
/// the adjustment parameter `epsilon` (default `1 / log(n1 + n2)`).
pub struct CitAdapter {
    inner: InnerTest,
    epsilon: Option<f64>,
    alpha: f64,
}

impl CitAdapter {
    pub fn new(inner: InnerTest) -> Self {
        Self {
            inner,
            epsilon: None,
            alpha: 0.05,
        }
    }

    /// Level reported on forced acceptances; should match the inner test.
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        assert!(0.0 < alpha && alpha < 1.0);
        self.alpha = alpha;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(0.0 < epsilon && epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    fn epsilon_for(&self, n: usize) -> f64 {
        self.epsilon
            .unwrap_or_else(|| (1.0 / (n as f64).ln()).clamp(f64::MIN_POSITIVE, 0.999))
    }
}

/// Runs the adapter on paired data: shrink, randomize the group sizes,
/// pool, and delegate to the inner test. Forced acceptance on the bad
/// event where a randomized size exceeds its population.
pub fn convert(
    data: &PairedData,
    adapter: &CitAdapter,
    rng: &mut StreamRng,
) -> Result<TestOutcome> {
    let (n1, n2) = (data.n1(), data.n2());
    let n = n1 + n2;
    let epsilon = adapter.epsilon_for(n);
    let k = kstar(epsilon, n1)?;
    let n_tilde = (k * n as f64).round() as u64;
    let bin = Binomial::new(n_tilde, n1 as f64 / n as f64)
        .map_err(|e| Error::InvalidConfig(format!("binomial draw: {e}")))?;
    let nt1 = bin.sample(rng) as usize;
    let nt2 = n_tilde as usize - nt1;

    if nt1 > n1 || nt2 > n2 || nt1 < 2 || nt2 < 2 {
        return Ok(
            TestOutcome::forced_accept(adapter.alpha, "cit-convert", "bad_event")
                .with_diagnostic("n_tilde_1", nt1 as f64)
                .with_diagnostic("n_tilde_2", nt2 as f64)
                .with_diagnostic("k_star", k)
                .with_diagnostic("epsilon", epsilon),
        );
    }

    let shrunk = data.subsample(nt1, nt2, rng)?;
    let pooled = pool(&shrunk);
    let mut outcome = (adapter.inner)(&pooled)?;
    outcome.diagnostics.insert("n_tilde_1".into(), nt1 as f64);
    outcome.diagnostics.insert("n_tilde_2".into(), nt2 as f64);
    outcome.diagnostics.insert("k_star".into(), k);
    outcome.diagnostics.insert("epsilon".into(), epsilon);
    Ok(outcome)
}

/// Regression backends for the GCM residuals.
#[derive(Clone)]
pub enum RegressorSpec {
    /// A known conditional-mean function, no fitting.
    Known(ScalarFn),
    /// Ordinary least squares with intercept.
    Linear,
    /// Kernel ridge regression `(K + lambda I)^{-1} t` over the training
    /// points.
    KernelRidge { kernel: KernelSpec, lambda: f64 },
}

/// A fitted (or known) regression function.
pub enum Regressor {
    Known(ScalarFn),
    Linear {
        coef: DVector<f64>,
    },
    KernelRidge {
        kernel: KernelSpec,
        centers: DMatrix<f64>,
        weights: DVector<f64>,
    },
}

impl Regressor {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Regressor::Known(f) => f(x),
            Regressor::Linear { coef } => {
                let mut v = coef[0];
                for (j, xi) in x.iter().enumerate() {
                    v += coef[j + 1] * xi;
                }
                v
            }
            Regressor::KernelRidge {
                kernel,
                centers,
                weights,
            } => {
                let mut v = 0.0;
                for j in 0..centers.nrows() {
                    let c: Vec<f64> = centers.row(j).iter().copied().collect();
                    v += weights[j] * kernel.eval_unchecked(&c, x);
                }
                v
            }
        }
    }

    pub fn fit(spec: &RegressorSpec, x: &DMatrix<f64>, t: &DVector<f64>) -> Regressor {
        match spec {
            RegressorSpec::Known(f) => Regressor::Known(f.clone()),
            RegressorSpec::Linear => fit_linear(x, t),
            RegressorSpec::KernelRidge { kernel, lambda } => {
                fit_kernel_ridge(x, t, *kernel, *lambda)
            }
        }
    }
}

fn solve_spd_with_jitter(mut a: DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if let Some(chol) = nalgebra::Cholesky::new(a.clone()) {
        return chol.solve(b);
    }
    let d = a.nrows();
    let base = (a.trace() / d as f64).abs().max(1e-300);
    let mut jitter = 1e-8 * base;
    loop {
        for j in 0..d {
            a[(j, j)] += jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(a.clone()) {
            return chol.solve(b);
        }
        jitter *= 10.0;
    }
}

/// Least squares with intercept via the normal equations; a ridge jitter
/// of `1e-8 * trace / dim` is added when the factorization fails, so the
/// solve always succeeds.
pub fn fit_linear(x: &DMatrix<f64>, t: &DVector<f64>) -> Regressor {
    let n = x.nrows();
    let p = x.ncols();
    let mut design = DMatrix::zeros(n, p + 1);
    design.column_mut(0).fill(1.0);
    design.columns_mut(1, p).copy_from(x);
    let gram = design.transpose() * &design;
    let rhs = design.transpose() * t;
    let coef = solve_spd_with_jitter(gram, &rhs);
    Regressor::Linear { coef }
}

/// Uncentered kernel ridge regression: `weights = (K + lambda I)^{-1} t`.
pub fn fit_kernel_ridge(
    x: &DMatrix<f64>,
    t: &DVector<f64>,
    kernel: KernelSpec,
    lambda: f64,
) -> Regressor {
    assert!(lambda > 0.0, "kernel ridge needs a positive penalty");
    let mut k = kernel.gram(x, x).expect("square gram");
    for j in 0..k.nrows() {
        k[(j, j)] += lambda;
    }
    let weights = solve_spd_with_jitter(k, t);
    Regressor::KernelRidge {
        kernel,
        centers: x.clone(),
        weights,
    }
}

const GCM_DEGENERACY_FLOOR: f64 = 1e-24;

/// The studentized residual-covariance statistic
/// `T = sqrt(n) * mean(R) / sd(R)` with
/// `R_i = (y_i - f(x_i)) * (z_i - g(x_i))`, `z` encoded as its numeric
/// label in `{1, 2}`.
pub fn gcm_statistic(pooled: &PooledData, f_hat: &Regressor, g_hat: &Regressor) -> Result<f64> {
    let n = pooled.len();
    if n < 2 {
        return Err(Error::InvalidData("GCM needs at least two rows".into()));
    }
    let mut ry = Vec::with_capacity(n);
    let mut rz = Vec::with_capacity(n);
    for i in 0..n {
        let x: Vec<f64> = pooled.x.row(i).iter().copied().collect();
        ry.push(pooled.y[i] - f_hat.predict(&x));
        rz.push(f64::from(pooled.z[i]) - g_hat.predict(&x));
    }
    // residuals that sit at the rounding noise of the data are as
    // degenerate as exact zeros
    let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    let y_rms = (0..n).map(|i| pooled.y[i] * pooled.y[i]).sum::<f64>() / n as f64;
    if rms(&ry) <= 1e-10 * (y_rms.sqrt() + f64::MIN_POSITIVE) || rms(&rz) <= 1e-10 * 2.0 {
        return Err(Error::DegenerateVariance(
            "regression residuals are numerically zero".into(),
        ));
    }
    let residuals: Vec<f64> = (0..n).map(|i| ry[i] * rz[i]).collect();
    let m = mean(&residuals);
    let var = residuals.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / n as f64;
    let scale = residuals.iter().map(|r| r * r).sum::<f64>() / n as f64;
    if !var.is_finite() || var <= GCM_DEGENERACY_FLOOR * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateVariance(
            "all GCM residuals are (numerically) equal".into(),
        ));
    }
    Ok((n as f64).sqrt() * m / var.sqrt())
}

/// Fits `f` (y on x) and `g` (z on x) with the configured regressors on
/// the full pooled sample and calibrates `T` two-sided against N(0, 1).
pub fn gcm_test(
    pooled: &PooledData,
    spec_f: &RegressorSpec,
    spec_g: &RegressorSpec,
    alpha: f64,
) -> Result<TestOutcome> {
    let z_numeric = DVector::from_fn(pooled.len(), |i, _| f64::from(pooled.z[i]));
    let f_hat = Regressor::fit(spec_f, &pooled.x, &pooled.y);
    let g_hat = Regressor::fit(spec_g, &pooled.x, &z_numeric);
    match gcm_statistic(pooled, &f_hat, &g_hat) {
        Ok(t) => Ok(TestOutcome::from_p_value(t, two_sided_p(t), alpha, "gcm")),
        Err(Error::DegenerateVariance(_)) => Ok(TestOutcome::forced_accept(
            alpha,
            "gcm",
            "degenerate_variance",
        )),
        Err(e) => Err(e),
    }
}

/// Couples the fixed-size GCM statistic `T` with its randomized-size
/// counterpart `T_tilde` on a synthetic scenario with known `f` and `g`.
///
/// Draws `n_bar_1 ~ Binomial(n, n1/n)`; whichever population falls short
/// of its randomized size is topped up with fresh scenario draws, and the
/// other one is truncated, so the two pooled datasets differ in
/// `|n_bar_1 - n1|` rows. Intended for null configurations, where the
/// conditional law is fixed across draws.
pub fn coupled_gcm_pair(
    data: &PairedData,
    cfg: &ScenarioConfig,
    f_known: ScalarFn,
    g_known: ScalarFn,
    rng: &mut StreamRng,
) -> Result<(f64, f64)> {
    let (n1, n2) = (data.n1(), data.n2());
    let n = n1 + n2;
    let f_hat = Regressor::Known(f_known);
    let g_hat = Regressor::Known(g_known);

    let t = gcm_statistic(&pool(data), &f_hat, &g_hat)?;

    let bin = Binomial::new(n as u64, n1 as f64 / n as f64)
        .map_err(|e| Error::InvalidConfig(format!("binomial draw: {e}")))?;
    let nb1 = bin.sample(rng) as usize;
    let nb2 = n - nb1;

    let (x1, y1, x2, y2) = if nb1 > n1 {
        let (fx, fy) = sample_population(cfg, Population::First, nb1 - n1, rng);
        let x1 = stack_rows(data.x1(), &fx);
        let y1 = stack_vec(data.y1(), &fy);
        let x2 = data.x2().rows(0, nb2).into_owned();
        let y2 = data.y2().rows(0, nb2).into_owned();
        (x1, y1, x2, y2)
    } else {
        let (fx, fy) = sample_population(cfg, Population::Second, nb2 - n2, rng);
        let x2 = stack_rows(data.x2(), &fx);
        let y2 = stack_vec(data.y2(), &fy);
        let x1 = data.x1().rows(0, nb1).into_owned();
        let y1 = data.y1().rows(0, nb1).into_owned();
        (x1, y1, x2, y2)
    };
    let coupled = PairedData::new(x1, y1, x2, y2)?;
    let t_tilde = gcm_statistic(&pool(&coupled), &f_hat, &g_hat)?;
    Ok((t, t_tilde))
}

fn stack_rows(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn stack_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}
