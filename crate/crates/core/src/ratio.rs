//! Density-ratio estimation by probabilistic classification: linear
//! logistic regression (LL) and kernel logistic regression (KLR), fit by
//! iteratively reweighted least squares.
//!
//! The classifier models `eta(x) = P(label = 1 | x)`. With
//! `prior_correction = n_0 / n_1` (class counts at fit time), the ratio
//! estimate
//!
//! ```text
//! r(x) = prior_correction * eta(x) / (1 - eta(x))
//! ```
//!
//! targets the density ratio `f_{label=1} / f_{label=0}`, clipped to a
//! configured interval. Callers that want the two-sample marginal ratio
//! `f_x^(1) / f_x^(2)` label population 1 with `1` and population 2 with
//! `0`, so `prior_correction = n_2 / n_1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

pub const DEFAULT_CLIP: (f64, f64) = (0.0, 100.0);
pub const DEFAULT_KLR_BANDWIDTH_SQ: f64 = 200.0;
pub const DEFAULT_KLR_LAMBDA: f64 = 5e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioKind {
    Ll,
    Klr,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// L2 penalty on the non-intercept coefficients of the linear model.
    /// Zero by default; small positive values keep separable toy problems
    /// well-posed. Ignored by KLR, which carries its own RKHS penalty.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            ridge: 0.0,
        }
    }
}

impl FitOptions {
    /// Options for kernel fits. Wide-bandwidth Gram matrices are nearly
    /// singular, which caps the attainable gradient norm in double
    /// precision, so the stationarity target is relaxed to `1e-6`.
    pub fn kernel() -> Self {
        Self {
            tol: 1e-6,
            ..Self::default()
        }
    }
}

/// A fitted LL or KLR ratio model.
#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    kind: RatioKind,
    /// Intercept followed by feature (LL) or center (KLR) coefficients.
    coef: DVector<f64>,
    kernel: Option<KernelSpec>,
    centers: Option<DMatrix<f64>>,
    prior_correction: f64,
    clip: (f64, f64),
    joint: bool,
    dim: usize,
    iterations: usize,
}

impl DensityRatioModel {
    pub fn kind(&self) -> RatioKind {
        self.kind
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coef
    }

    pub fn prior_correction(&self) -> f64 {
        self.prior_correction
    }

    pub fn clip(&self) -> (f64, f64) {
        self.clip
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_joint(&self) -> bool {
        self.joint
    }

    pub fn with_clip(mut self, lo: f64, hi: f64) -> Self {
        assert!(lo >= 0.0 && hi > lo, "invalid clip interval [{lo}, {hi}]");
        self.clip = (lo, hi);
        self
    }

    /// Marks the model as fitted on concatenated `(x, y)` features.
    pub fn into_joint(mut self) -> Self {
        self.joint = true;
        self
    }

    /// Linear predictor `theta(x)`; `eta = sigmoid(theta)`.
    pub fn linear_predictor(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "ratio model expects dimension {}, got {}",
                self.dim,
                point.len()
            )));
        }
        match self.kind {
            RatioKind::Ll => {
                let mut theta = self.coef[0];
                for (j, v) in point.iter().enumerate() {
                    theta += self.coef[j + 1] * v;
                }
                Ok(theta)
            }
            RatioKind::Klr => {
                let kernel = self.kernel.as_ref().expect("KLR kernel");
                let centers = self.centers.as_ref().expect("KLR centers");
                let mut theta = self.coef[0];
                for j in 0..centers.nrows() {
                    let c: Vec<f64> = centers.row(j).iter().copied().collect();
                    theta += self.coef[j + 1] * kernel.eval_unchecked(&c, point);
                }
                Ok(theta)
            }
        }
    }

    /// Posterior class-1 probability at `point`.
    pub fn eta(&self, point: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.linear_predictor(point)?))
    }

    /// Clipped density-ratio estimate at `point`.
    ///
    /// `eta / (1 - eta) = exp(theta)`, so the unclipped value is
    /// `prior_correction * exp(theta)`.
    pub fn predict_ratio(&self, point: &[f64]) -> Result<f64> {
        let theta = self.linear_predictor(point)?;
        let raw = self.prior_correction * theta.exp();
        Ok(raw.clamp(self.clip.0, self.clip.1))
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn validate_inputs(features: &DMatrix<f64>, labels: &[u8]) -> Result<(f64, f64)> {
    let n = features.nrows();
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("non-finite feature entry".into()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(
            "label length must match feature rows".into(),
        ));
    }
    if labels.iter().any(|l| *l > 1) {
        return Err(Error::InvalidData("labels must be 0 or 1".into()));
    }
    let n1 = labels.iter().filter(|l| **l == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::InvalidData(
            "both classes must be present to fit a ratio model".into(),
        ));
    }
    Ok((n0 as f64, n1 as f64))
}

/// Penalty acting on the coefficient vector: `0.5 * beta' P beta` with a
/// zero row/column for the intercept.
enum Penalty {
    /// ridge * I on the non-intercept block
    Diagonal(f64),
    /// lambda * K on the non-intercept block (RKHS norm of theta)
    Gram(f64, DMatrix<f64>),
}

impl Penalty {
    fn value(&self, beta: &DVector<f64>) -> f64 {
        let tail = beta.rows(1, beta.len() - 1);
        match self {
            Penalty::Diagonal(r) => 0.5 * r * tail.dot(&tail),
            Penalty::Gram(l, k) => 0.5 * l * (k * tail).dot(&tail),
        }
    }

    fn add_gradient(&self, beta: &DVector<f64>, grad: &mut DVector<f64>) {
        let tail = beta.rows(1, beta.len() - 1).into_owned();
        match self {
            Penalty::Diagonal(r) => {
                for j in 1..beta.len() {
                    grad[j] += r * beta[j];
                }
            }
            Penalty::Gram(l, k) => {
                let kb = k * tail;
                for j in 1..beta.len() {
                    grad[j] += l * kb[j - 1];
                }
            }
        }
    }

    fn add_hessian(&self, hess: &mut DMatrix<f64>) {
        match self {
            Penalty::Diagonal(r) => {
                for j in 1..hess.nrows() {
                    hess[(j, j)] += r;
                }
            }
            Penalty::Gram(l, k) => {
                for i in 0..k.nrows() {
                    for j in 0..k.ncols() {
                        hess[(i + 1, j + 1)] += l * k[(i, j)];
                    }
                }
            }
        }
    }
}

/// Newton/IRLS minimizer of the (penalized) logistic negative
/// log-likelihood over a design matrix with a leading intercept column.
/// The likelihood term is multiplied by `nll_scale` (1 for the summed
/// form, 1/n for the averaged form used by KLR).
///
/// The Hessian solve falls back to a ridge-jittered system when the
/// Cholesky factorization fails, and each Newton step is halved until the
/// objective does not increase. Returns the coefficients and the number
/// of iterations used.
fn irls(
    design: &DMatrix<f64>,
    labels: &[u8],
    penalty: &Penalty,
    nll_scale: f64,
    max_iter: usize,
    tol: f64,
) -> Result<(DVector<f64>, usize)> {
    let n = design.nrows();
    let d = design.ncols();
    let y: DVector<f64> = DVector::from_fn(n, |i, _| f64::from(labels[i]));
    let mut beta = DVector::zeros(d);

    let objective = |beta: &DVector<f64>| -> f64 {
        let theta = design * beta;
        let nll: f64 = (0..n).map(|i| softplus(theta[i]) - y[i] * theta[i]).sum();
        nll_scale * nll + penalty.value(beta)
    };
    let gradient = |beta: &DVector<f64>| -> DVector<f64> {
        let theta = design * beta;
        let mu = DVector::from_fn(n, |i, _| sigmoid(theta[i]));
        let mut g = design.transpose() * (mu - &y) * nll_scale;
        penalty.add_gradient(beta, &mut g);
        g
    };

    let mut obj = objective(&beta);
    for iter in 1..=max_iter {
        let grad = gradient(&beta);
        let grad_norm = grad.amax();
        if grad_norm <= tol {
            return Ok((beta, iter - 1));
        }
        let theta = design * &beta;
        let mut weighted = design.clone();
        for i in 0..n {
            let mu = sigmoid(theta[i]);
            let w = (mu * (1.0 - mu)).max(1e-12) * nll_scale;
            weighted.row_mut(i).scale_mut(w);
        }
        let mut hess = design.transpose() * weighted;
        penalty.add_hessian(&mut hess);

        let step = solve_with_jitter(hess, &grad)?;
        // Halve the Newton step until the objective stops increasing.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta - scale * &step;
            let cand_obj = objective(&candidate);
            if cand_obj <= obj + 1e-12 * obj.abs().max(1.0) {
                beta = candidate;
                obj = cand_obj;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(Error::Diverged {
                iterations: iter,
                grad_norm,
            });
        }
    }
    let grad_norm = gradient(&beta).amax();
    if grad_norm <= tol {
        Ok((beta, max_iter))
    } else {
        Err(Error::Diverged {
            iterations: max_iter,
            grad_norm,
        })
    }
}

fn solve_with_jitter(mut hess: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let d = hess.nrows();
    if let Some(chol) = nalgebra::Cholesky::new(hess.clone()) {
        return Ok(chol.solve(grad));
    }
    let base = (hess.trace() / d as f64).abs().max(1e-300);
    let mut jitter = 1e-8 * base;
    for _ in 0..12 {
        for j in 0..d {
            hess[(j, j)] += jitter;
        }
        if let Some(chol) = nalgebra::Cholesky::new(hess.clone()) {
            return Ok(chol.solve(grad));
        }
        jitter *= 10.0;
    }
    Err(Error::Diverged {
        iterations: 0,
        grad_norm: grad.amax(),
    })
}

fn with_intercept(features: &DMatrix<f64>) -> DMatrix<f64> {
    let mut design = DMatrix::zeros(features.nrows(), features.ncols() + 1);
    design.column_mut(0).fill(1.0);
    design.columns_mut(1, features.ncols()).copy_from(features);
    design
}

/// Fits linear logistic regression and wraps it as a ratio model. The
/// objective is the summed negative log-likelihood plus
/// `(ridge / 2) * ||beta||^2` on the non-intercept block.
pub fn fit_ll(
    features: &DMatrix<f64>,
    labels: &[u8],
    opts: FitOptions,
) -> Result<DensityRatioModel> {
    let (n0, n1) = validate_inputs(features, labels)?;
    let design = with_intercept(features);
    let penalty = Penalty::Diagonal(opts.ridge);
    let (coef, iterations) = irls(&design, labels, &penalty, 1.0, opts.max_iter, opts.tol)?;
    Ok(DensityRatioModel {
        kind: RatioKind::Ll,
        coef,
        kernel: None,
        centers: None,
        prior_correction: n0 / n1,
        clip: DEFAULT_CLIP,
        joint: false,
        dim: features.ncols(),
        iterations,
    })
}

/// Fits kernel logistic regression with `theta(x) = b0 + sum_j b_j
/// k(X_j, x)` over the training centers. The objective is the averaged
/// negative log-likelihood plus the RKHS penalty `(lambda / 2) * beta' K
/// beta` on the non-intercept block, `K` being the unscaled training
/// Gram matrix; the intercept is never penalized.
pub fn fit_klr(
    features: &DMatrix<f64>,
    labels: &[u8],
    kernel: KernelSpec,
    lambda: f64,
    opts: FitOptions,
) -> Result<DensityRatioModel> {
    if lambda <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "KLR regularization must be positive, got {lambda}"
        )));
    }
    let (n0, n1) = validate_inputs(features, labels)?;
    let gram = kernel.gram(features, features)?;
    let design = with_intercept(&gram);
    let penalty = Penalty::Gram(lambda, gram);
    let scale = 1.0 / features.nrows() as f64;
    let (coef, iterations) = irls(&design, labels, &penalty, scale, opts.max_iter, opts.tol)?;
    Ok(DensityRatioModel {
        kind: RatioKind::Klr,
        coef,
        kernel: Some(kernel),
        centers: Some(features.clone()),
        prior_correction: n0 / n1,
        clip: DEFAULT_CLIP,
        joint: false,
        dim: features.ncols(),
        iterations,
    })
}
