//! The stochastic optimal control problem in chaos coefficients.
//!
//! Decision variables are the free input coefficients of every basis index;
//! outputs are eliminated through the affine maps supplied by a
//! [`CoefficientDynamics`] provider. The expected quadratic cost becomes a
//! block-diagonal QP and each chance constraint turns into two second-order
//! cone rows on the mean and the Euclidean norm of the germ coefficients.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::io::{matrix_serde, vector_serde};
use crate::pce::{histogram, sample_realizations, second_moment_quadratic, DisturbanceSpec, HistogramBin, JointBasis, PceTrajectory};
use crate::predictor::{CoefficientBlock, CoefficientDynamics, InitialCondition};
use crate::socp::{self, Cone, ConicProblem, Settings, SparseRow};

/// Back-off factor κ in mean ± κ·std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Backoff {
    Fixed(f64),
    /// Two-sided Chebyshev bound for the constraint's level: κ = 1/√(1-p).
    Chebyshev,
}

/// ℙ[lower ≤ Y^c_k ≤ upper] ≥ level for k = first_step..N. `component` is zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceConstraint {
    pub component: usize,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub backoff: Backoff,
    #[serde(default = "default_first_step")]
    pub first_step: usize,
}

fn default_first_step() -> usize {
    2
}

impl ChanceConstraint {
    pub fn kappa(&self) -> f64 {
        match self.backoff {
            Backoff::Fixed(k) => k,
            Backoff::Chebyshev => 1.0 / (1.0 - self.level).sqrt(),
        }
    }

    pub fn validate(&self, n_y: usize, horizon: usize) -> Result<()> {
        if self.lower >= self.upper {
            return Err(Error::InvalidBounds { lower: self.lower, upper: self.upper });
        }
        let mut bad = Vec::new();
        if self.component >= n_y {
            bad.push(format!("component {} out of range for {n_y} outputs", self.component));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            bad.push(format!("level {} must lie in (0, 1)", self.level));
        }
        if !(self.kappa() >= 0.0) || !self.kappa().is_finite() {
            bad.push("back-off factor must be finite and non-negative".into());
        }
        if self.first_step == 0 || self.first_step > horizon {
            bad.push(format!("first_step {} outside 1..={horizon}", self.first_step));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }

    /// Whether mean ± κ·std stays within the bounds.
    pub fn holds(&self, mean: f64, std: f64, tol: f64) -> bool {
        let k = self.kappa();
        mean - k * std >= self.lower - tol && mean + k * std <= self.upper + tol
    }
}

/// ‖V x + v0‖ ≤ tᵀx + t0.
#[derive(Debug, Clone, PartialEq)]
pub struct SocRow {
    pub t: DVector<f64>,
    pub t0: f64,
    pub v: DMatrix<f64>,
    pub v0: DVector<f64>,
}

impl SocRow {
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.t.dot(x) + self.t0 - (&self.v * x + &self.v0).norm()
    }
}

/// Conservative second-order cone form of one chance constraint at one step,
/// given the mean as `mean_t·x + mean_c` and germ coefficients as `spread_m x + spread_c`.
/// Returns the (upper, lower) rows.
pub fn reformulate_chance(
    c: &ChanceConstraint,
    mean_t: &DVector<f64>,
    mean_c: f64,
    spread_m: &DMatrix<f64>,
    spread_c: &DVector<f64>,
) -> Result<[SocRow; 2]> {
    if c.lower >= c.upper {
        return Err(Error::InvalidBounds { lower: c.lower, upper: c.upper });
    }
    if spread_m.ncols() != mean_t.len() || spread_m.nrows() != spread_c.len() {
        return Err(dim_err("spread map dimensions"));
    }
    let k = c.kappa();
    let v = spread_m * k;
    let v0 = spread_c * k;
    Ok([
        SocRow { t: -mean_t, t0: c.upper - mean_c, v: v.clone(), v0: v0.clone() },
        SocRow { t: mean_t.clone(), t0: mean_c - c.lower, v, v0 },
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcpWeights {
    #[serde(with = "matrix_serde")]
    pub q: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub r: DMatrix<f64>,
}

impl OcpWeights {
    pub fn validate(&self, n_u: usize, n_y: usize) -> Result<()> {
        if self.q.shape() != (n_y, n_y) || self.r.shape() != (n_u, n_u) {
            return Err(dim_err("weight dimensions"));
        }
        let sym = |m: &DMatrix<f64>| (m - m.transpose()).amax() <= 1e-12 * (1.0 + m.amax());
        if !sym(&self.q) || !sym(&self.r) {
            return Err(Error::Config(vec!["Q and R must be symmetric".into()]));
        }
        let qmin = self.q.clone().symmetric_eigenvalues().min();
        if qmin < -1e-12 * (1.0 + self.q.amax()) {
            return Err(Error::Config(vec!["Q must be positive semidefinite".into()]));
        }
        if self.r.clone().cholesky().is_none() {
            return Err(Error::Config(vec!["R must be positive definite".into()]));
        }
        Ok(())
    }
}

/// Assembled conic program plus the layout needed to read coefficients back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcpProblem {
    pub horizon: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub basis_len: usize,
    /// Offset of each basis index' decision block.
    pub offsets: Vec<usize>,
    pub conic: ConicProblem,
    /// Cost terms independent of the decision.
    pub constant: f64,
    pub weights: OcpWeights,
    pub constraints: Vec<ChanceConstraint>,
    #[serde(skip)]
    pub blocks: Vec<CoefficientBlock>,
}

impl OcpProblem {
    pub fn n_dec(&self) -> usize {
        self.conic.n()
    }

    fn block_x(&self, x: &DVector<f64>, j: usize) -> DVector<f64> {
        x.rows(self.offsets[j], self.blocks[j].n_dec).into_owned()
    }

    /// Coefficient trajectories (u, y) over 1..N for a decision vector.
    pub fn coefficients(&self, x: &DVector<f64>) -> Result<(PceTrajectory, PceTrajectory)> {
        if x.len() != self.n_dec() || self.blocks.len() != self.basis_len {
            return Err(dim_err("decision vector or missing block maps"));
        }
        let (n, nu, ny) = (self.horizon, self.n_u, self.n_y);
        let mut u = PceTrajectory::zeros(1, n, nu, self.basis_len);
        let mut y = PceTrajectory::zeros(1, n, ny, self.basis_len);
        for (j, b) in self.blocks.iter().enumerate() {
            let xj = self.block_x(x, j);
            let uj = &b.u_map * &xj;
            let yj = b.y_map.apply(&xj);
            for k in 0..n {
                u.coeffs[k].view_mut((0, j), (nu, 1)).copy_from(&uj.rows(k * nu, nu));
                y.coeffs[k].view_mut((0, j), (ny, 1)).copy_from(&yj.rows(k * ny, ny));
            }
        }
        Ok((u, y))
    }

    /// Expected cost of a decision vector.
    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.conic.p * x)) + self.conic.q.dot(x) + self.constant
    }

    /// Chance rows at every constrained step as (constraint, step, row).
    pub fn soc_rows(&self) -> Result<Vec<(usize, usize, [SocRow; 2])>> {
        let n = self.n_dec();
        let mut out = Vec::new();
        for (ci, c) in self.constraints.iter().enumerate() {
            for k in c.first_step..=self.horizon {
                let r = (k - 1) * self.n_y + c.component;
                let mut mean_t = DVector::zeros(n);
                let b0 = &self.blocks[0];
                mean_t.rows_mut(self.offsets[0], b0.n_dec).copy_from(&b0.y_map.m.row(r).transpose());
                let mean_c = b0.y_map.c[r];
                let mut sm = DMatrix::zeros(self.basis_len - 1, n);
                let mut sc = DVector::zeros(self.basis_len - 1);
                for (j, b) in self.blocks.iter().enumerate().skip(1) {
                    sm.view_mut((j - 1, self.offsets[j]), (1, b.n_dec)).copy_from(&b.y_map.m.row(r));
                    sc[j - 1] = b.y_map.c[r];
                }
                out.push((ci, k, reformulate_chance(c, &mean_t, mean_c, &sm, &sc)?));
            }
        }
        Ok(out)
    }
}

/// Builds the conic program for the given data-driven dynamics.
pub fn build_ocp(
    dynamics: &dyn CoefficientDynamics,
    basis: &JointBasis,
    spec: &DisturbanceSpec,
    init: &InitialCondition,
    weights: &OcpWeights,
    constraints: &[ChanceConstraint],
) -> Result<OcpProblem> {
    let (n, nu, ny) = (dynamics.horizon(), dynamics.n_u(), dynamics.n_y());
    weights.validate(nu, ny)?;
    for c in constraints {
        c.validate(ny, n)?;
    }
    let blocks = dynamics.blocks(basis, spec, init)?;
    let mut offsets = Vec::with_capacity(blocks.len());
    let mut total = 0;
    for b in &blocks {
        offsets.push(total);
        total += b.n_dec;
    }
    let mut p = DMatrix::zeros(total, total);
    let mut q = DVector::zeros(total);
    let mut constant = 0.0;
    let (qw, rw) = (&weights.q, &weights.r);
    for (b, &off) in blocks.iter().zip(&offsets) {
        let (m, c) = (&b.y_map.m, &b.y_map.c);
        // Q̄ m and Q̄ c, block by block
        let mut qm = DMatrix::zeros(m.nrows(), m.ncols());
        let mut qc = DVector::zeros(c.len());
        let mut ru = DMatrix::zeros(b.u_map.nrows(), b.u_map.ncols());
        for k in 0..n {
            qm.rows_mut(k * ny, ny).copy_from(&(qw * m.rows(k * ny, ny)));
            qc.rows_mut(k * ny, ny).copy_from(&(qw * c.rows(k * ny, ny)));
            ru.rows_mut(k * nu, nu).copy_from(&(rw * b.u_map.rows(k * nu, nu)));
        }
        let h = (m.transpose() * &qm + b.u_map.transpose() * &ru) * 2.0;
        p.view_mut((off, off), (b.n_dec, b.n_dec)).copy_from(&(0.5 * (&h + h.transpose())));
        q.rows_mut(off, b.n_dec).copy_from(&(m.transpose() * &qc * 2.0));
        constant += c.dot(&qc);
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    let mut cones = Vec::new();
    let fixed: usize = blocks.iter().map(|b| b.fixed_zero.len()).sum();
    for (b, &off) in blocks.iter().zip(&offsets) {
        for &i in &b.fixed_zero {
            rows.push(SparseRow::new(vec![off + i], vec![1.0]));
            rhs.push(0.0);
        }
    }
    if fixed > 0 {
        cones.push(Cone::Zero(fixed));
    }
    let mut prob = OcpProblem {
        horizon: n,
        n_u: nu,
        n_y: ny,
        basis_len: basis.len(),
        offsets,
        conic: ConicProblem { p, q, a: Vec::new(), b: DVector::zeros(0), cones: Vec::new() },
        constant,
        weights: weights.clone(),
        constraints: constraints.to_vec(),
        blocks,
    };
    // s = b - A x: first entry tᵀx + t0, then V x + v0
    for (_, _, pair) in prob.soc_rows()? {
        for row in pair {
            rows.push(SparseRow::from_dense((-&row.t).as_slice(), 0));
            rhs.push(row.t0);
            for i in 0..row.v.nrows() {
                let dense: Vec<f64> = row.v.row(i).iter().map(|v| -v).collect();
                rows.push(SparseRow::from_dense(&dense, 0));
                rhs.push(row.v0[i]);
            }
            cones.push(Cone::Soc(1 + row.v.nrows()));
        }
    }
    prob.conic.a = rows;
    prob.conic.b = DVector::from_vec(rhs);
    prob.conic.cones = cones;
    prob.conic.validate()?;
    Ok(prob)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Solved,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcpSolution {
    pub u: PceTrajectory,
    pub y: PceTrajectory,
    pub cost: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    #[serde(with = "vector_serde")]
    pub x: DVector<f64>,
}

impl OcpSolution {
    /// First mean input u⁰_1.
    pub fn first_input(&self) -> DVector<f64> {
        self.u.coeffs[0].column(0).into_owned()
    }

    /// Σ_k E[Y_kᵀQY_k + U_kᵀRU_k] recomputed from the coefficients.
    pub fn recomputed_cost(&self, w: &OcpWeights) -> Result<f64> {
        (1..=self.u.len() as i64).map(|k| second_moment_quadratic(&self.y, &self.u, &w.q, &w.r, k)).sum()
    }
}

pub fn solve_ocp(p: &OcpProblem, settings: &Settings) -> Result<OcpSolution> {
    let sol = socp::solve(&p.conic, settings)?;
    let (u, y) = p.coefficients(&sol.x)?;
    Ok(OcpSolution {
        u,
        y,
        cost: p.cost(&sol.x),
        status: SolveStatus::Solved,
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        x: sol.x,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenLoopSettings {
    pub samples: usize,
    pub seed: u64,
    pub bins: usize,
    /// Output components to export histograms for (zero-based).
    pub components: Vec<usize>,
    pub solver: Settings,
}

impl Default for OpenLoopSettings {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, bins: 40, components: vec![0, 1], solver: Settings::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSatisfaction {
    pub constraint: usize,
    pub k: i64,
    /// Empirical ℙ[lower ≤ Y^c_k ≤ upper].
    pub frequency: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentHistograms {
    pub component: usize,
    pub steps: Vec<(i64, Vec<HistogramBin>)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenLoopReport {
    pub solution: OcpSolution,
    pub satisfaction: Vec<StepSatisfaction>,
    pub histograms: Vec<ComponentHistograms>,
    pub samples: usize,
}

impl OpenLoopReport {
    pub fn min_frequency(&self) -> f64 {
        self.satisfaction.iter().map(|s| s.frequency).fold(1.0, f64::min)
    }
}

/// Solves the OCP once and checks the chance constraints by sampling germs.
pub fn open_loop_experiment(
    dynamics: &dyn CoefficientDynamics,
    basis: &JointBasis,
    spec: &DisturbanceSpec,
    init: &InitialCondition,
    weights: &OcpWeights,
    constraints: &[ChanceConstraint],
    settings: &OpenLoopSettings,
) -> Result<OpenLoopReport> {
    let p = build_ocp(dynamics, basis, spec, init, weights, constraints)?;
    let solution = solve_ocp(&p, &settings.solver)?;
    let draws = sample_realizations(&solution.u, &solution.y, basis, settings.samples, settings.seed)?;
    let mut satisfaction = Vec::new();
    for (ci, c) in constraints.iter().enumerate() {
        for k in c.first_step..=p.horizon {
            let inside = draws
                .iter()
                .filter(|t| {
                    let v = t.y[k - 1][c.component];
                    v >= c.lower && v <= c.upper
                })
                .count();
            let kk = k as i64;
            satisfaction.push(StepSatisfaction {
                constraint: ci,
                k: kk,
                frequency: inside as f64 / draws.len().max(1) as f64,
                mean: solution.y.mean(kk)?[c.component],
                std: solution.y.std(kk)?[c.component],
            });
        }
    }
    let mut histograms = Vec::new();
    for &comp in &settings.components {
        if comp >= p.n_y {
            return Err(dim_err(format!("histogram component {comp} out of range")));
        }
        let steps = (1..=p.horizon)
            .map(|k| {
                let vals: Vec<f64> = draws.iter().map(|t| t.y[k - 1][comp]).collect();
                (k as i64, histogram(&vals, settings.bins, None))
            })
            .collect();
        histograms.push(ComponentHistograms { component: comp, steps });
    }
    Ok(OpenLoopReport { solution, satisfaction, histograms, samples: settings.samples })
}
