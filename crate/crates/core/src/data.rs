//! Core data containers: the two labeled samples, their pooled form,
//! and the outcome record shared by every test.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Two mutually independent samples `{(x1_i, y1_i)}` and `{(x2_i, y2_i)}`
/// with a common covariate dimension and scalar responses.
///
/// Immutable after construction; all entries are finite and each
/// population holds at least two rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData {
    x1: DMatrix<f64>,
    y1: DVector<f64>,
    x2: DMatrix<f64>,
    y2: DVector<f64>,
}

impl PairedData {
    pub fn new(
        x1: DMatrix<f64>,
        y1: DVector<f64>,
        x2: DMatrix<f64>,
        y2: DVector<f64>,
    ) -> Result<Self> {
        if x1.nrows() < 2 || x2.nrows() < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 rows per population, got {} and {}",
                x1.nrows(),
                x2.nrows()
            )));
        }
        if x1.ncols() != x2.ncols() || x1.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "covariate blocks must share a positive column count, got {} and {}",
                x1.ncols(),
                x2.ncols()
            )));
        }
        if x1.nrows() != y1.len() || x2.nrows() != y2.len() {
            return Err(Error::DimensionMismatch(
                "response length must match covariate row count".into(),
            ));
        }
        let finite = x1.iter().all(|v| v.is_finite())
            && x2.iter().all(|v| v.is_finite())
            && y1.iter().all(|v| v.is_finite())
            && y2.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidData("non-finite entry".into()));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn n1(&self) -> usize {
        self.x1.nrows()
    }

    pub fn n2(&self) -> usize {
        self.x2.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x1.ncols()
    }

    pub fn x1(&self) -> &DMatrix<f64> {
        &self.x1
    }

    pub fn y1(&self) -> &DVector<f64> {
        &self.y1
    }

    pub fn x2(&self) -> &DMatrix<f64> {
        &self.x2
    }

    pub fn y2(&self) -> &DVector<f64> {
        &self.y2
    }

    /// Row `i` of population `j` as `(x, y)`.
    pub fn row(&self, population: Population, i: usize) -> (Vec<f64>, f64) {
        match population {
            Population::First => (self.x1.row(i).iter().copied().collect(), self.y1[i]),
            Population::Second => (self.x2.row(i).iter().copied().collect(), self.y2[i]),
        }
    }

    /// The joint point `(x, y)` of row `i` as one vector of length `p + 1`.
    pub fn joint_row(&self, population: Population, i: usize) -> Vec<f64> {
        let (mut v, y) = self.row(population, i);
        v.push(y);
        v
    }

    pub(crate) fn take_rows(&self, idx1: &[usize], idx2: &[usize]) -> Self {
        let p = self.dim();
        let x1 = DMatrix::from_fn(idx1.len(), p, |r, c| self.x1[(idx1[r], c)]);
        let y1 = DVector::from_fn(idx1.len(), |r, _| self.y1[idx1[r]]);
        let x2 = DMatrix::from_fn(idx2.len(), p, |r, c| self.x2[(idx2[r], c)]);
        let y2 = DVector::from_fn(idx2.len(), |r, _| self.y2[idx2[r]]);
        Self { x1, y1, x2, y2 }
    }

    /// Subsample without replacement to `k1`/`k2` rows per population.
    /// Used to balance unequal populations before the split-based pipelines.
    pub fn subsample(&self, k1: usize, k2: usize, rng: &mut StreamRng) -> Result<Self> {
        if k1 > self.n1() || k2 > self.n2() || k1 < 2 || k2 < 2 {
            return Err(Error::InvalidData(format!(
                "cannot subsample to ({k1}, {k2}) from ({}, {})",
                self.n1(),
                self.n2()
            )));
        }
        let mut idx1: Vec<usize> = (0..self.n1()).collect();
        let mut idx2: Vec<usize> = (0..self.n2()).collect();
        idx1.shuffle(rng);
        idx2.shuffle(rng);
        Ok(self.take_rows(&idx1[..k1], &idx2[..k2]))
    }
}

/// Which of the two populations a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    First,
    Second,
}

/// The pooled `(x, y, z)` view with group labels `z in {1, 2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub z: Vec<u8>,
}

impl PooledData {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Rows belonging to group `label` as `(x, y)` blocks.
    pub fn population(&self, label: u8) -> (DMatrix<f64>, DVector<f64>) {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.z[i] == label).collect();
        let x = DMatrix::from_fn(idx.len(), self.x.ncols(), |r, c| self.x[(idx[r], c)]);
        let y = DVector::from_fn(idx.len(), |r, _| self.y[idx[r]]);
        (x, y)
    }
}

/// Labels the first population's rows `z = 1` and the second's `z = 2`,
/// preserving row content and order.
pub fn pool(data: &PairedData) -> PooledData {
    let (n1, n2, p) = (data.n1(), data.n2(), data.dim());
    let mut x = DMatrix::zeros(n1 + n2, p);
    let mut y = DVector::zeros(n1 + n2);
    let mut z = Vec::with_capacity(n1 + n2);
    for i in 0..n1 {
        x.row_mut(i).copy_from(&data.x1.row(i));
        y[i] = data.y1[i];
        z.push(1);
    }
    for i in 0..n2 {
        x.row_mut(n1 + i).copy_from(&data.x2.row(i));
        y[n1 + i] = data.y2[i];
        z.push(2);
    }
    PooledData { x, y, z }
}

/// Randomly splits each population into a `floor(ratio * n_j)` part and
/// its complement. Rows are shuffled first, so downstream pairing rules
/// see exchangeable order.
pub fn split_paired(
    data: &PairedData,
    ratio: f64,
    rng: &mut StreamRng,
) -> Result<(PairedData, PairedData)> {
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let k1 = (ratio * data.n1() as f64).floor() as usize;
    let k2 = (ratio * data.n2() as f64).floor() as usize;
    if k1 == 0 || k2 == 0 || k1 == data.n1() || k2 == data.n2() {
        return Err(Error::SplitTooSmall(format!(
            "ratio {ratio} on sizes ({}, {}) leaves an empty part",
            data.n1(),
            data.n2()
        )));
    }
    let mut idx1: Vec<usize> = (0..data.n1()).collect();
    let mut idx2: Vec<usize> = (0..data.n2()).collect();
    idx1.shuffle(rng);
    idx2.shuffle(rng);
    let head = data.take_rows(&idx1[..k1], &idx2[..k2]);
    let tail = data.take_rows(&idx1[k1..], &idx2[k2..]);
    Ok((head, tail))
}

/// Outcome of a single test invocation: the statistic, its p-value, the
/// decision at level `alpha`, and numeric diagnostics.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub method: String,
    pub diagnostics: BTreeMap<String, f64>,
}

impl TestOutcome {
    /// Standard outcome with `reject = (p_value <= alpha)`.
    pub fn from_p_value(statistic: f64, p_value: f64, alpha: f64, method: &str) -> Self {
        Self {
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            reject: p_value <= alpha,
            alpha,
            method: method.to_string(),
            diagnostics: BTreeMap::new(),
        }
    }

    /// Conservative acceptance used for bad events and degenerate
    /// variances: `p = 1`, `reject = false`, with a flag naming the cause.
    pub fn forced_accept(alpha: f64, method: &str, flag: &str) -> Self {
        let mut out = Self::from_p_value(0.0, 1.0, alpha, method);
        out.diagnostics.insert(flag.to_string(), 1.0);
        out
    }

    pub fn with_diagnostic(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    pub fn is_forced_accept(&self) -> bool {
        !self.reject
            && self.p_value == 1.0
            && (self.diagnostic("bad_event") == Some(1.0)
                || self.diagnostic("degenerate_variance") == Some(1.0)
                || self.diagnostic("replicate_error") == Some(1.0))
    }
}
