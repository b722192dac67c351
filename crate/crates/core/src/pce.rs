//! Affine polynomial chaos basis for an i.i.d. disturbance sequence.
//!
//! Each step k in `0..N` contributes `n_w` standardized germs
//! `ξ_k^i = (W_k^i - E[W^i]) / std(W^i)`; together with the constant this
//! gives `L = 1 + N n_w` orthonormal basis functions. An optional trailing
//! block of germs models an uncertain initial window.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::io::matrices_serde;
use crate::model::RealTrajectory;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    Uniform { lower: f64, upper: f64 },
    Gaussian { mean: f64, variance: f64 },
    /// Empirical law: `mean` plus a draw from the centered samples.
    Generic { mean: f64, centered_samples: Vec<f64> },
}

impl Distribution {
    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform { lower, upper } => 0.5 * (lower + upper),
            Self::Gaussian { mean, .. } | Self::Generic { mean, .. } => *mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Self::Uniform { lower, upper } => (upper - lower).powi(2) / 12.0,
            Self::Gaussian { variance, .. } => *variance,
            Self::Generic { centered_samples, .. } => {
                if centered_samples.is_empty() {
                    f64::NAN
                } else {
                    centered_samples.iter().map(|c| c * c).sum::<f64>() / centered_samples.len() as f64
                }
            }
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    fn validate(&self) -> Result<()> {
        let v = self.variance();
        if !self.mean().is_finite() || !v.is_finite() || v < 0.0 {
            return Err(Error::UnsupportedDistribution(format!("{self:?} has no finite variance")));
        }
        if let Self::Uniform { lower, upper } = self {
            if lower > upper {
                return Err(Error::UnsupportedDistribution("uniform with lower > upper".into()));
            }
        }
        Ok(())
    }

    fn germ(&self) -> Germ {
        match self {
            Self::Uniform { .. } => Germ::Uniform,
            Self::Gaussian { .. } => Germ::Gaussian,
            Self::Generic { centered_samples, .. } => {
                let s = self.std();
                let scale = if s > 0.0 { 1.0 / s } else { 0.0 };
                Germ::Empirical(centered_samples.iter().map(|c| c * scale).collect())
            }
        }
    }
}

/// Law of a standardized (zero mean, unit variance) germ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Germ {
    /// Uniform on (-√3, √3).
    Uniform,
    Gaussian,
    Empirical(Vec<f64>),
}

impl Germ {
    fn draw(&self, key: u64) -> f64 {
        match self {
            Germ::Uniform => 3f64.sqrt() * (2.0 * rng::unit_open(key) - 1.0),
            Germ::Gaussian => rng::standard_normal(key),
            Germ::Empirical(v) => {
                let i = ((rng::unit_open(key) * v.len() as f64) as usize).min(v.len() - 1);
                v[i]
            }
        }
    }
}

/// Component-wise independent disturbance law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub components: Vec<Distribution>,
}

impl DisturbanceSpec {
    pub fn new(components: Vec<Distribution>) -> Result<Self> {
        let s = Self { components };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(dim_err("disturbance spec needs at least one component"));
        }
        self.components.iter().try_for_each(|c| c.validate())
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.mean()))
    }

    pub fn std(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.std()))
    }

    pub fn variance(&self) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.components.iter().map(|c| c.variance()))
    }

    /// Realization from standardized germs: `E[W] + std ∘ ξ`.
    pub fn realize(&self, germs: &[f64]) -> DVector<f64> {
        self.mean() + self.std().component_mul(&DVector::from_row_slice(germs))
    }

    /// One draw using a ChaCha stream (for plant simulation).
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> DVector<f64> {
        let germs: Vec<f64> = self.components.iter().map(|c| c.germ().draw(rng.gen())).collect();
        self.realize(&germs)
    }

    /// Zero-variance copy (deterministic disturbance at the mean).
    pub fn deterministic(&self) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| Distribution::Gaussian { mean: c.mean(), variance: 0.0 })
                .collect(),
        }
    }
}

/// Role of a basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisTerm {
    Constant,
    /// Germ of disturbance component `component` (0-based) at step `step`.
    Disturbance { step: usize, component: usize },
    /// Initial-window uncertainty direction.
    Initial { direction: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointBasis {
    pub horizon: usize,
    /// L_w: functions per step including the constant.
    pub per_step: usize,
    germs: Vec<Germ>,
    init_germs: Vec<Germ>,
}

/// Affine joint basis for N steps of the given disturbance.
pub fn build_joint_basis(spec: &DisturbanceSpec, horizon: usize) -> Result<JointBasis> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be at least 1".into()));
    }
    Ok(JointBasis {
        horizon,
        per_step: 1 + spec.dim(),
        germs: spec.components.iter().map(|c| c.germ()).collect(),
        init_germs: Vec::new(),
    })
}

impl JointBasis {
    /// Append an initial-uncertainty block of `germs.len()` orthonormal directions.
    pub fn with_initial_block(mut self, germs: Vec<Germ>) -> Self {
        self.init_germs = germs;
        self
    }

    /// Total number of basis functions.
    pub fn len(&self) -> usize {
        self.disturbance_len() + self.init_germs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1 + N (L_w - 1).
    pub fn disturbance_len(&self) -> usize {
        1 + self.horizon * (self.per_step - 1)
    }

    pub fn n_w(&self) -> usize {
        self.per_step - 1
    }

    pub fn init_dim(&self) -> usize {
        self.init_germs.len()
    }

    /// Index of the first initial-uncertainty function.
    pub fn init_offset(&self) -> usize {
        self.disturbance_len()
    }

    /// ⟨φ^j, φ^j⟩; the basis is orthonormal.
    pub fn norm_sq(&self, j: usize) -> Result<f64> {
        self.check(j)?;
        Ok(1.0)
    }

    fn check(&self, j: usize) -> Result<()> {
        if j >= self.len() {
            return Err(Error::IndexOutOfRange { index: j, len: self.len() });
        }
        Ok(())
    }

    /// ik(k) = [1 + k(L_w-1), (k+1)(L_w-1)].
    pub fn ik(&self, k: usize) -> Result<RangeInclusive<usize>> {
        if k >= self.horizon {
            return Err(Error::IndexOutOfRange { index: k, len: self.horizon });
        }
        let m = self.per_step - 1;
        Ok(1 + k * m..=(k + 1) * m)
    }

    pub fn term(&self, j: usize) -> Result<BasisTerm> {
        self.check(j)?;
        let m = self.per_step - 1;
        Ok(if j == 0 {
            BasisTerm::Constant
        } else if j < self.disturbance_len() {
            BasisTerm::Disturbance { step: (j - 1) / m, component: (j - 1) % m }
        } else {
            BasisTerm::Initial { direction: j - self.disturbance_len() }
        })
    }

    /// Step whose germ φ^j depends on; 0 for the constant.
    pub fn k_prime(&self, j: usize) -> Result<usize> {
        match self.term(j)? {
            BasisTerm::Constant => Ok(0),
            BasisTerm::Disturbance { step, .. } => Ok(step),
            BasisTerm::Initial { .. } => Err(Error::IndexOutOfRange { index: j, len: self.disturbance_len() }),
        }
    }

    /// I(j) = j - k'(j)(L_w - 1), in 1..=L_w-1 for j ≥ 1.
    pub fn within_index(&self, j: usize) -> Result<usize> {
        Ok(j - self.k_prime(j)? * (self.per_step - 1))
    }

    /// Draw one standardized germ.
    pub fn germ(&self, seed: u64, sample: u64, step: usize, component: usize) -> f64 {
        self.germs[component].draw(rng::key(&[seed, sample, step as u64, component as u64]))
    }

    fn init_germ(&self, seed: u64, sample: u64, direction: usize) -> f64 {
        self.init_germs[direction].draw(rng::key(&[seed, sample, u64::MAX, direction as u64]))
    }

    /// Values of all basis functions for germ sample `sample`.
    pub fn evaluate(&self, seed: u64, sample: u64) -> DVector<f64> {
        let mut phi = DVector::zeros(self.len());
        phi[0] = 1.0;
        let m = self.per_step - 1;
        for k in 0..self.horizon {
            for i in 0..m {
                phi[1 + k * m + i] = self.germ(seed, sample, k, i);
            }
        }
        for d in 0..self.init_dim() {
            phi[self.init_offset() + d] = self.init_germ(seed, sample, d);
        }
        phi
    }

    /// Disturbance realization W_k implied by basis values `phi`.
    pub fn disturbance_realization(&self, spec: &DisturbanceSpec, phi: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
        let r = self.ik(k)?;
        let germs: Vec<f64> = r.map(|j| phi[j]).collect();
        Ok(spec.realize(&germs))
    }
}

/// Coefficients of W_k over the basis: column 0 is E[W], column j ∈ ik(k) is σ_i e_i.
pub fn disturbance_coeffs(basis: &JointBasis, spec: &DisturbanceSpec, k: usize) -> Result<DMatrix<f64>> {
    if spec.dim() != basis.n_w() {
        return Err(Error::BasisMismatch);
    }
    let r = basis.ik(k)?;
    let mut c = DMatrix::zeros(spec.dim(), basis.len());
    c.set_column(0, &spec.mean());
    let std = spec.std();
    for (i, j) in r.enumerate() {
        c[(i, j)] = std[i];
    }
    Ok(c)
}

/// Pattern coefficient 𝑤^n = σ_n e_n for within-step index n in 1..=n_w.
pub fn germ_pattern(spec: &DisturbanceSpec, n: usize) -> Result<DVector<f64>> {
    if n == 0 || n > spec.dim() {
        return Err(Error::IndexOutOfRange { index: n, len: spec.dim() + 1 });
    }
    let mut v = DVector::zeros(spec.dim());
    v[n - 1] = spec.components[n - 1].std();
    Ok(v)
}

/// Coefficient trajectory: `coeffs[t]` is `dim × basis_len` for time `start + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PceTrajectory {
    pub start: i64,
    pub dim: usize,
    pub basis_len: usize,
    #[serde(with = "matrices_serde")]
    pub coeffs: Vec<DMatrix<f64>>,
}

impl PceTrajectory {
    pub fn zeros(start: i64, len: usize, dim: usize, basis_len: usize) -> Self {
        Self { start, dim, basis_len, coeffs: vec![DMatrix::zeros(dim, basis_len); len] }
    }

    /// Deterministic trajectory (only j = 0).
    pub fn deterministic(start: i64, values: &[DVector<f64>], basis_len: usize) -> Self {
        let dim = values.first().map_or(0, |v| v.len());
        let mut t = Self::zeros(start, values.len(), dim, basis_len);
        for (c, v) in t.coeffs.iter_mut().zip(values) {
            c.set_column(0, v);
        }
        t
    }

    /// Disturbance trajectory W_0..W_{N-1}.
    pub fn disturbance(basis: &JointBasis, spec: &DisturbanceSpec) -> Result<Self> {
        let coeffs = (0..basis.horizon).map(|k| disturbance_coeffs(basis, spec, k)).collect::<Result<_>>()?;
        Ok(Self { start: 0, dim: spec.dim(), basis_len: basis.len(), coeffs })
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }
    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
    pub fn end(&self) -> i64 {
        self.start + self.len() as i64 - 1
    }

    fn idx(&self, k: i64) -> Result<usize> {
        let i = k - self.start;
        if i < 0 || i as usize >= self.len() {
            return Err(Error::IndexOutOfRange { index: i.max(0) as usize, len: self.len() });
        }
        Ok(i as usize)
    }

    pub fn at(&self, k: i64) -> Result<&DMatrix<f64>> {
        Ok(&self.coeffs[self.idx(k)?])
    }

    pub fn at_mut(&mut self, k: i64) -> Result<&mut DMatrix<f64>> {
        let i = self.idx(k)?;
        Ok(&mut self.coeffs[i])
    }

    /// Coefficient vector of φ^j at time k.
    pub fn coeff(&self, k: i64, j: usize) -> Result<DVector<f64>> {
        let c = self.at(k)?;
        if j >= self.basis_len {
            return Err(Error::IndexOutOfRange { index: j, len: self.basis_len });
        }
        Ok(c.column(j).into_owned())
    }

    /// Sequence of coefficient vectors of φ^j over all times.
    pub fn series(&self, j: usize) -> Vec<DVector<f64>> {
        self.coeffs.iter().map(|c| c.column(j).into_owned()).collect()
    }

    pub fn set_series(&mut self, j: usize, values: &[DVector<f64>]) -> Result<()> {
        if values.len() != self.len() || j >= self.basis_len {
            return Err(dim_err("series length or index"));
        }
        for (c, v) in self.coeffs.iter_mut().zip(values) {
            if v.len() != self.dim {
                return Err(dim_err("series vector dimension"));
            }
            c.set_column(j, v);
        }
        Ok(())
    }

    pub fn mean(&self, k: i64) -> Result<DVector<f64>> {
        self.coeff(k, 0)
    }

    /// Componentwise Σ_{j≥1} (coef^j)².
    pub fn variance(&self, k: i64) -> Result<DVector<f64>> {
        let c = self.at(k)?;
        Ok(DVector::from_iterator(
            self.dim,
            (0..self.dim).map(|r| c.row(r).iter().skip(1).map(|x| x * x).sum()),
        ))
    }

    pub fn std(&self, k: i64) -> Result<DVector<f64>> {
        Ok(self.variance(k)?.map(f64::sqrt))
    }

    /// Realization at time k for basis values `phi`.
    pub fn evaluate(&self, k: i64, phi: &DVector<f64>) -> Result<DVector<f64>> {
        if phi.len() != self.basis_len {
            return Err(Error::BasisMismatch);
        }
        Ok(self.at(k)? * phi)
    }

    /// Realizations at all times for basis values `phi`.
    pub fn realize(&self, phi: &DVector<f64>) -> Vec<DVector<f64>> {
        self.coeffs.iter().map(|c| c * phi).collect()
    }
}

/// E[YᵀQY + UᵀRU] at time k, using orthonormality.
pub fn second_moment_quadratic(
    y: &PceTrajectory,
    u: &PceTrajectory,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: i64,
) -> Result<f64> {
    if q.shape() != (y.dim, y.dim) || r.shape() != (u.dim, u.dim) {
        return Err(dim_err("weight dimensions"));
    }
    let (cy, cu) = (y.at(k)?, u.at(k)?);
    let a = (cy.transpose() * q * cy).trace();
    let b = (cu.transpose() * r * cu).trace();
    Ok(a + b)
}

/// Draw `n` germ samples and evaluate the (u, y) coefficient trajectories.
pub fn sample_realizations(
    u: &PceTrajectory,
    y: &PceTrajectory,
    basis: &JointBasis,
    n: usize,
    seed: u64,
) -> Result<Vec<RealTrajectory>> {
    if u.basis_len != basis.len() || y.basis_len != basis.len() {
        return Err(Error::BasisMismatch);
    }
    if u.start != y.start || u.len() != y.len() {
        return Err(dim_err("u and y coefficient trajectories are not aligned"));
    }
    (0..n)
        .into_par_iter()
        .map(|s| {
            let phi = basis.evaluate(seed, s as u64);
            RealTrajectory::with_dims(u.start, u.dim, y.dim, u.realize(&phi), y.realize(&phi), None)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub density: f64,
}

/// Normalized histogram; the range defaults to the sample extent.
pub fn histogram(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let (mut lo, mut hi) = range.unwrap_or_else(|| {
        values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v < lo || v > hi {
            continue;
        }
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = values.len() as f64 * width;
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistogramBin {
            left: lo + i as f64 * width,
            right: lo + (i + 1) as f64 * width,
            density: c as f64 / total,
        })
        .collect()
}
