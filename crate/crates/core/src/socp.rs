//! Dense primal-dual interior-point solver for
//!
//! ```text
//! minimize   ½ xᵀPx + qᵀx
//! subject to Ax + s = b,  s ∈ K
//! ```
//!
//! where K is a product of zero cones (equalities), nonnegative orthants and
//! second-order cones {(t, v) : ‖v‖ ≤ t}. The method follows the homogeneous
//! self-dual embedding with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step. Newton systems are reduced to the normal
//! equations in x and factored with a dense Cholesky decomposition; remaining
//! equality rows are handled by a Schur complement. Equality rows that fix a
//! single variable are eliminated before the iteration starts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::io::{matrix_serde, vector_serde};

/// Sparse row of the constraint matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn new(idx: Vec<usize>, val: Vec<f64>) -> Self {
        Self { idx, val }
    }

    /// Keeps entries with |v| > 0.
    pub fn from_dense(v: &[f64], offset: usize) -> Self {
        let mut r = Self::default();
        for (i, &x) in v.iter().enumerate() {
            if x != 0.0 {
                r.idx.push(offset + i);
                r.val.push(x);
            }
        }
        r
    }

    pub fn push(&mut self, i: usize, v: f64) {
        if v != 0.0 {
            self.idx.push(i);
            self.val.push(v);
        }
    }

    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn nnz(&self) -> usize {
        self.idx.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum Cone {
    Zero(usize),
    NonNeg(usize),
    Soc(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::NonNeg(d) | Cone::Soc(d) => d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    #[serde(with = "matrix_serde")]
    pub p: DMatrix<f64>,
    #[serde(with = "vector_serde")]
    pub q: DVector<f64>,
    pub a: Vec<SparseRow>,
    #[serde(with = "vector_serde")]
    pub b: DVector<f64>,
    pub cones: Vec<Cone>,
}

impl ConicProblem {
    pub fn n(&self) -> usize {
        self.q.len()
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.p.shape() != (n, n) {
            return Err(dim_err("P must be n x n"));
        }
        if self.a.len() != self.m() {
            return Err(dim_err("A rows and b differ"));
        }
        if self.cones.iter().map(|c| c.dim()).sum::<usize>() != self.m() {
            return Err(dim_err("cone dimensions do not cover the rows"));
        }
        if self.cones.iter().any(|c| c.dim() == 0) {
            return Err(dim_err("empty cone"));
        }
        for r in &self.a {
            if r.idx.len() != r.val.len() || r.idx.iter().any(|&i| i >= n) {
                return Err(dim_err("constraint row index out of range"));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(self.p.as_slice()) || !finite(self.q.as_slice()) || !finite(self.b.as_slice()) || self.a.iter().any(|r| !finite(&r.val)) {
            return Err(dim_err("non-finite problem data"));
        }
        Ok(())
    }

    /// Ax.
    pub fn a_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.a.iter().map(|r| r.dot(x)))
    }

    /// Aᵀz.
    pub fn at_mul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (r, &zr) in self.a.iter().zip(z.iter()) {
            if zr != 0.0 {
                for (&i, &v) in r.idx.iter().zip(&r.val) {
                    out[i] += v * zr;
                }
            }
        }
        out
    }

    pub fn nnz(&self) -> usize {
        self.a.iter().map(|r| r.nnz()).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub max_iter: usize,
    pub tol_gap_abs: f64,
    pub tol_gap_rel: f64,
    pub tol_feas: f64,
    pub tol_infeas: f64,
    pub static_reg: f64,
    pub refine_steps: usize,
    pub step_fraction: f64,
    /// Tolerances are multiplied by this factor when accepting the best
    /// iterate after a stalled run.
    pub reduced_accuracy: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            tol_feas: 1e-8,
            tol_infeas: 1e-8,
            static_reg: 1e-10,
            refine_steps: 3,
            step_fraction: 0.99,
            reduced_accuracy: 100.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConicSolution {
    #[serde(with = "vector_serde")]
    pub x: DVector<f64>,
    #[serde(with = "vector_serde")]
    pub s: DVector<f64>,
    #[serde(with = "vector_serde")]
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Solves the problem; failures are reported as errors.
pub fn solve(prob: &ConicProblem, settings: &Settings) -> Result<ConicSolution> {
    prob.validate()?;
    let pre = Presolved::new(prob)?;
    let sol = Ipm::new(&pre.reduced, settings).run()?;
    Ok(pre.restore(prob, sol))
}

/// Optimality residuals of a candidate primal-dual point on the original problem.
pub fn kkt_residuals(prob: &ConicProblem, x: &DVector<f64>, s: &DVector<f64>, z: &DVector<f64>) -> (f64, f64, f64) {
    let rp = (prob.a_mul(x) + s - &prob.b).amax();
    let rd = (&prob.p * x + prob.at_mul(z) + &prob.q).amax();
    (rp, rd, s.dot(z).abs())
}

// ---------------------------------------------------------------- presolve

struct Presolved {
    reduced: ConicProblem,
    /// Map reduced variable -> original index.
    keep: Vec<usize>,
    fixed: Vec<Option<f64>>,
    /// Original row indices kept, in order.
    rows: Vec<usize>,
    /// Removed singleton rows: (row, variable, coefficient).
    removed: Vec<(usize, usize, f64)>,
}

impl Presolved {
    fn new(p: &ConicProblem) -> Result<Self> {
        let n = p.n();
        let mut fixed: Vec<Option<f64>> = vec![None; n];
        let mut removed = Vec::new();
        let mut row = 0;
        let mut zero_rows = vec![false; p.m()];
        for c in &p.cones {
            if let Cone::Zero(d) = *c {
                for r in row..row + d {
                    zero_rows[r] = true;
                    let a = &p.a[r];
                    if a.nnz() == 1 {
                        let (i, v) = (a.idx[0], a.val[0]);
                        let val = p.b[r] / v;
                        match fixed[i] {
                            Some(old) if (old - val).abs() > 1e-12 * (1.0 + val.abs()) => return Err(Error::Infeasible),
                            _ => fixed[i] = Some(val),
                        }
                        removed.push((r, i, v));
                    }
                }
            }
            row += c.dim();
        }
        let keep: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let xf = DVector::from_iterator(n, fixed.iter().map(|f| f.unwrap_or(0.0)));
        let nk = keep.len();
        let mut rp = DMatrix::zeros(nk, nk);
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                rp[(a, b)] = p.p[(i, j)];
            }
        }
        let pxf = &p.p * &xf;
        let rq = DVector::from_iterator(nk, keep.iter().map(|&i| p.q[i] + pxf[i]));
        let removed_rows: std::collections::HashSet<usize> = removed.iter().map(|r| r.0).collect();
        let mut rows = Vec::new();
        let mut ra = Vec::new();
        let mut rb = Vec::new();
        let mut cones = Vec::new();
        let mut row = 0;
        for c in &p.cones {
            let d = c.dim();
            let mut count = 0;
            for r in row..row + d {
                if removed_rows.contains(&r) {
                    continue;
                }
                let mut sr = SparseRow::default();
                let mut shift = 0.0;
                for (&i, &v) in p.a[r].idx.iter().zip(&p.a[r].val) {
                    match fixed[i] {
                        Some(f) => shift += v * f,
                        None => sr.push(pos[i], v),
                    }
                }
                if matches!(c, Cone::Zero(_)) && sr.nnz() == 0 {
                    if (p.b[r] - shift).abs() > 1e-9 * (1.0 + p.b[r].abs()) {
                        return Err(Error::Infeasible);
                    }
                    continue;
                }
                rows.push(r);
                ra.push(sr);
                rb.push(p.b[r] - shift);
                count += 1;
            }
            match c {
                Cone::Zero(_) if count > 0 => cones.push(Cone::Zero(count)),
                Cone::Zero(_) => {}
                // partial removal never happens for inequality cones
                Cone::NonNeg(_) => cones.push(Cone::NonNeg(count)),
                Cone::Soc(_) => cones.push(Cone::Soc(count)),
            }
            row += d;
        }
        let _ = zero_rows;
        let reduced = ConicProblem { p: rp, q: rq, a: ra, b: DVector::from_vec(rb), cones };
        Ok(Self { reduced, keep, fixed, rows, removed })
    }

    fn restore(&self, p: &ConicProblem, sol: ConicSolution) -> ConicSolution {
        let n = p.n();
        let mut x = DVector::from_iterator(n, self.fixed.iter().map(|f| f.unwrap_or(0.0)));
        for (k, &i) in self.keep.iter().enumerate() {
            x[i] = sol.x[k];
        }
        let mut s = DVector::zeros(p.m());
        let mut z = DVector::zeros(p.m());
        for (k, &r) in self.rows.iter().enumerate() {
            s[r] = sol.s[k];
            z[r] = sol.z[k];
        }
        // stationarity on a fixed variable determines the multiplier of its row
        let g = &p.p * &x + p.at_mul(&z) + &p.q;
        let mut seen = vec![false; n];
        for &(r, i, v) in &self.removed {
            if !seen[i] {
                z[r] = -g[i] / v;
                seen[i] = true;
            }
        }
        let objective = 0.5 * x.dot(&(&p.p * &x)) + p.q.dot(&x);
        let (rp, rd, _) = kkt_residuals(p, &x, &s, &z);
        ConicSolution { x, s, z, objective, iterations: sol.iterations, primal_residual: rp, dual_residual: rd, gap: sol.gap }
    }
}

// ---------------------------------------------------------------- cones

#[derive(Clone)]
enum Scale {
    Zero,
    /// w = sqrt(s/z) per entry.
    NonNeg(Vec<f64>),
    /// η and the normalized w̄ (w̄ᵀJw̄ = 1).
    Soc { eta: f64, w: Vec<f64> },
}

#[derive(Clone, Copy)]
struct Block {
    cone: Cone,
    start: usize,
}

impl Block {
    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.cone.dim()
    }
}

/// v0² − ‖v1‖², factored to keep precision near the boundary.
fn soc_res(v: &[f64]) -> f64 {
    let n1 = v[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
    (v[0] - n1) * (v[0] + n1)
}

/// W v for one SOC block (W symmetric).
fn soc_w(eta: f64, w: &[f64], v: &[f64], out: &mut [f64]) {
    let w1v1: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = eta * (w[0] * v[0] + w1v1);
    let c = w1v1 / (1.0 + w[0]) + v[0];
    for i in 1..v.len() {
        out[i] = eta * (v[i] + c * w[i]);
    }
}

/// W⁻¹ v for one SOC block.
fn soc_winv(eta: f64, w: &[f64], v: &[f64], out: &mut [f64]) {
    let w1v1: f64 = w[1..].iter().zip(&v[1..]).map(|(a, b)| a * b).sum();
    out[0] = (w[0] * v[0] - w1v1) / eta;
    let c = w1v1 / (1.0 + w[0]) - v[0];
    for i in 1..v.len() {
        out[i] = (v[i] + c * w[i]) / eta;
    }
}

/// Jordan product x ∘ y on an SOC block.
fn soc_circ(x: &[f64], y: &[f64], out: &mut [f64]) {
    out[0] = x.iter().zip(y).map(|(a, b)| a * b).sum();
    for i in 1..x.len() {
        out[i] = x[0] * y[i] + y[0] * x[i];
    }
}

/// Solves λ ∘ x = d on an SOC block.
fn soc_inv_circ(l: &[f64], d: &[f64], out: &mut [f64]) {
    let l1d1: f64 = l[1..].iter().zip(&d[1..]).map(|(a, b)| a * b).sum();
    let x0 = (l[0] * d[0] - l1d1) / soc_res(l);
    out[0] = x0;
    for i in 1..l.len() {
        out[i] = (d[i] - x0 * l[i]) / l[0];
    }
}

/// Largest α ≤ `cap` with x + α d inside the cone block (x interior).
fn max_step(cone: Cone, x: &[f64], d: &[f64], cap: f64) -> f64 {
    match cone {
        Cone::Zero(_) => cap,
        Cone::NonNeg(_) => x
            .iter()
            .zip(d)
            .filter(|(_, &di)| di < 0.0)
            .map(|(&xi, &di)| -xi / di)
            .fold(cap, f64::min),
        Cone::Soc(_) => {
            let mut alpha = cap;
            if d[0] < 0.0 {
                alpha = alpha.min(-x[0] / d[0]);
            }
            let a = soc_res(d);
            let b = 2.0 * (x[0] * d[0] - x[1..].iter().zip(&d[1..]).map(|(p, q)| p * q).sum::<f64>());
            let c = soc_res(x).max(0.0);
            let mut roots = Vec::with_capacity(2);
            if a.abs() < 1e-300 {
                if b < 0.0 {
                    roots.push(-c / b);
                }
            } else {
                let disc = b * b - 4.0 * a * c;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    let qq = -0.5 * (b + b.signum() * sq);
                    if qq != 0.0 {
                        roots.push(qq / a);
                        roots.push(c / qq);
                    }
                }
            }
            for r in roots {
                if r > 0.0 {
                    alpha = alpha.min(r);
                }
            }
            alpha
        }
    }
}

// ---------------------------------------------------------------- iteration

struct Ipm<'a> {
    p: &'a ConicProblem,
    st: &'a Settings,
    blocks: Vec<Block>,
    degree: f64,
    /// Dense copy of the equality rows.
    eq_rows: Vec<usize>,
}

struct Factor {
    phi: Cholesky<f64, Dyn>,
    /// Φ⁻¹ A_Eᵀ and the Schur complement factor, when equality rows remain.
    schur: Option<(DMatrix<f64>, DMatrix<f64>, Cholesky<f64, Dyn>)>,
}

impl<'a> Ipm<'a> {
    fn new(p: &'a ConicProblem, st: &'a Settings) -> Self {
        let mut blocks = Vec::new();
        let mut start = 0;
        let mut degree = 0.0;
        let mut eq_rows = Vec::new();
        for &c in &p.cones {
            blocks.push(Block { cone: c, start });
            match c {
                Cone::Zero(d) => eq_rows.extend(start..start + d),
                Cone::NonNeg(d) => degree += d as f64,
                Cone::Soc(_) => degree += 1.0,
            }
            start += c.dim();
        }
        Self { p, st, blocks, degree, eq_rows }
    }

    fn scalings(&self, s: &DVector<f64>, z: &DVector<f64>) -> Result<(Vec<Scale>, DVector<f64>)> {
        let mut scales = Vec::with_capacity(self.blocks.len());
        let mut lambda = DVector::zeros(s.len());
        for b in &self.blocks {
            let r = b.range();
            match b.cone {
                Cone::Zero(_) => scales.push(Scale::Zero),
                Cone::NonNeg(_) => {
                    let mut w = Vec::with_capacity(r.len());
                    for i in r {
                        w.push((s[i] / z[i]).sqrt());
                        lambda[i] = (s[i] * z[i]).sqrt();
                    }
                    scales.push(Scale::NonNeg(w));
                }
                Cone::Soc(_) => {
                    let (sv, zv) = (&s.as_slice()[r.clone()], &z.as_slice()[r.clone()]);
                    let (sr, zr) = (soc_res(sv), soc_res(zv));
                    if !(sr > 0.0 && zr > 0.0) {
                        return Err(Error::NumericalBreakdown("iterate left the cone interior".into()));
                    }
                    let (ss, zs) = (sr.sqrt(), zr.sqrt());
                    let sbar: Vec<f64> = sv.iter().map(|x| x / ss).collect();
                    let zbar: Vec<f64> = zv.iter().map(|x| x / zs).collect();
                    let dot: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + dot) / 2.0).sqrt();
                    let mut w: Vec<f64> = sbar.iter().zip(&zbar).map(|(a, b)| -(a + b) / (2.0 * gamma)).collect();
                    w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                    for i in 1..w.len() {
                        w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                    }
                    let eta = (sr / zr).sqrt().sqrt();
                    let mut out = vec![0.0; w.len()];
                    soc_w(eta, &w, zv, &mut out);
                    lambda.as_mut_slice()[r].copy_from_slice(&out);
                    scales.push(Scale::Soc { eta, w });
                }
            }
        }
        Ok((scales, lambda))
    }

    /// Applies W (or W⁻¹) blockwise; zero-cone rows map to zero.
    fn apply_w(&self, scales: &[Scale], v: &DVector<f64>, inverse: bool) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for (b, sc) in self.blocks.iter().zip(scales) {
            let r = b.range();
            match sc {
                Scale::Zero => {}
                Scale::NonNeg(w) => {
                    for (k, i) in r.enumerate() {
                        out[i] = if inverse { v[i] / w[k] } else { v[i] * w[k] };
                    }
                }
                Scale::Soc { eta, w } => {
                    let (src, dst) = (&v.as_slice()[r.clone()], &mut out.as_mut_slice()[r]);
                    if inverse {
                        soc_winv(*eta, w, src, dst)
                    } else {
                        soc_w(*eta, w, src, dst)
                    }
                }
            }
        }
        out
    }

    /// H v with H = WᵀW (zero on equality rows).
    fn apply_h(&self, scales: &[Scale], v: &DVector<f64>) -> DVector<f64> {
        let wv = self.apply_w(scales, v, false);
        self.apply_w(scales, &wv, false)
    }

    /// H⁻¹ v on inequality rows (zero on equality rows).
    fn apply_hinv(&self, scales: &[Scale], v: &DVector<f64>) -> DVector<f64> {
        let wv = self.apply_w(scales, v, true);
        self.apply_w(scales, &wv, true)
    }

    fn circ(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for b in &self.blocks {
            let r = b.range();
            match b.cone {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => {
                    for i in r {
                        out[i] = x[i] * y[i];
                    }
                }
                Cone::Soc(_) => soc_circ(&x.as_slice()[r.clone()], &y.as_slice()[r.clone()], &mut out.as_mut_slice()[r]),
            }
        }
        out
    }

    fn inv_circ(&self, l: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(l.len());
        for b in &self.blocks {
            let r = b.range();
            match b.cone {
                Cone::Zero(_) => {}
                Cone::NonNeg(_) => {
                    for i in r {
                        out[i] = d[i] / l[i];
                    }
                }
                Cone::Soc(_) => soc_inv_circ(&l.as_slice()[r.clone()], &d.as_slice()[r.clone()], &mut out.as_mut_slice()[r]),
            }
        }
        out
    }

    /// Identity element e scaled by `v` on inequality rows.
    fn unit(&self, v: f64) -> DVector<f64> {
        let mut e = DVector::zeros(self.p.m());
        for b in &self.blocks {
            match b.cone {
                Cone::Zero(_) => {}
                Cone::NonNeg(d) => e.rows_mut(b.start, d).fill(v),
                Cone::Soc(_) => e[b.start] = v,
            }
        }
        e
    }

    fn interior(&self, x: &DVector<f64>) -> bool {
        self.blocks.iter().all(|b| {
            let v = &x.as_slice()[b.range()];
            match b.cone {
                Cone::Zero(_) => true,
                Cone::NonNeg(_) => v.iter().all(|&t| t > 0.0),
                Cone::Soc(_) => v[0] > 0.0 && soc_res(v) > 0.0,
            }
        })
    }

    fn step_to_boundary(&self, x: &DVector<f64>, d: &DVector<f64>, cap: f64) -> f64 {
        self.blocks.iter().fold(cap, |a, b| {
            let r = b.range();
            max_step(b.cone, &x.as_slice()[r.clone()], &d.as_slice()[r], a)
        })
    }

    fn factor(&self, scales: &[Scale], reg: f64) -> Result<Factor> {
        let n = self.p.n();
        let mut phi = self.p.p.clone();
        for i in 0..n {
            phi[(i, i)] += reg;
        }
        let a = &self.p.a;
        let data = phi.as_mut_slice();
        let mut outer = |row: &SparseRow, c: f64| {
            for (&i, &vi) in row.idx.iter().zip(&row.val) {
                let f = c * vi;
                for (&j, &vj) in row.idx.iter().zip(&row.val) {
                    data[i + j * n] += f * vj;
                }
            }
        };
        let mut dense_p = Vec::new();
        for (b, sc) in self.blocks.iter().zip(scales) {
            match sc {
                Scale::Zero => {}
                Scale::NonNeg(w) => {
                    for (k, r) in b.range().enumerate() {
                        outer(&a[r], 1.0 / (w[k] * w[k]));
                    }
                }
                Scale::Soc { eta, w } => {
                    let e2 = 1.0 / (eta * eta);
                    let rows = b.range();
                    outer(&a[rows.start], -e2);
                    for r in rows.start + 1..rows.end {
                        outer(&a[r], e2);
                    }
                    // p = Gᵀ J w̄
                    let mut pv = DVector::zeros(n);
                    for (k, r) in rows.enumerate() {
                        let coef = if k == 0 { w[0] } else { -w[k] };
                        for (&i, &v) in a[r].idx.iter().zip(&a[r].val) {
                            pv[i] += coef * v;
                        }
                    }
                    dense_p.push((2.0 * e2, pv));
                }
            }
        }
        for (c, pv) in dense_p {
            phi.ger(c, &pv, &pv, 1.0);
        }
        let chol = Cholesky::new(phi).ok_or_else(|| Error::NumericalBreakdown("normal matrix not positive definite".into()))?;
        let schur = if self.eq_rows.is_empty() {
            None
        } else {
            let me = self.eq_rows.len();
            let mut ae_t = DMatrix::zeros(n, me);
            for (k, &r) in self.eq_rows.iter().enumerate() {
                for (&i, &v) in a[r].idx.iter().zip(&a[r].val) {
                    ae_t[(i, k)] = v;
                }
            }
            let y = chol.solve(&ae_t);
            let mut s = ae_t.transpose() * &y;
            for i in 0..me {
                s[(i, i)] += reg;
            }
            let sc = Cholesky::new(s).ok_or_else(|| Error::NumericalBreakdown("equality rows are dependent".into()))?;
            Some((ae_t, y, sc))
        };
        Ok(Factor { phi: chol, schur })
    }

    /// One solve of [P Aᵀ; A -H] [x; z] = [r1; r2] using the reduced factorization.
    fn solve_reduced(&self, f: &Factor, scales: &[Scale], r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let hinv_r2 = self.apply_hinv(scales, r2);
        let rhs = r1 + self.p.at_mul(&hinv_r2);
        let (x, z_eq) = match &f.schur {
            None => (f.phi.solve(&rhs), None),
            Some((ae_t, y, sc)) => {
                let x0 = f.phi.solve(&rhs);
                let r2e = DVector::from_iterator(self.eq_rows.len(), self.eq_rows.iter().map(|&r| r2[r]));
                let ze = sc.solve(&(ae_t.transpose() * &x0 - r2e));
                (x0 - y * &ze, Some(ze))
            }
        };
        // z = H⁻¹(Ax - r2) on inequality rows
        let ax = self.p.a_mul(&x);
        let mut z = self.apply_hinv(scales, &(ax - r2));
        if let Some(ze) = z_eq {
            for (k, &r) in self.eq_rows.iter().enumerate() {
                z[r] = ze[k];
            }
        }
        (x, z)
    }

    fn solve_kkt(&self, f: &Factor, scales: &[Scale], r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (mut x, mut z) = self.solve_reduced(f, scales, r1, r2);
        for _ in 0..self.st.refine_steps {
            let e1 = r1 - (&self.p.p * &x + self.p.at_mul(&z));
            let e2 = r2 - (self.p.a_mul(&x) - self.apply_h(scales, &z));
            let norm = e1.amax().max(e2.amax());
            if norm <= 1e-14 * (1.0 + r1.amax().max(r2.amax())) {
                break;
            }
            let (dx, dz) = self.solve_reduced(f, scales, &e1, &e2);
            x += dx;
            z += dz;
        }
        (x, z)
    }

    fn factor_with_retry(&self, scales: &[Scale]) -> Result<Factor> {
        let mut reg = self.st.static_reg.max(1e-14);
        for _ in 0..8 {
            match self.factor(scales, reg) {
                Ok(f) => return Ok(f),
                Err(_) => reg *= 100.0,
            }
        }
        Err(Error::NumericalBreakdown("could not factor the Newton system".into()))
    }

    fn initial_point(&self) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        // H = I on inequality rows
        let unit: Vec<Scale> = self
            .blocks
            .iter()
            .map(|b| match b.cone {
                Cone::Zero(_) => Scale::Zero,
                Cone::NonNeg(d) => Scale::NonNeg(vec![1.0; d]),
                Cone::Soc(d) => {
                    let mut w = vec![0.0; d];
                    w[0] = 1.0;
                    Scale::Soc { eta: 1.0, w }
                }
            })
            .collect();
        let f = self.factor_with_retry(&unit)?;
        let (x, z) = self.solve_kkt(&f, &unit, &(-&self.p.q), &self.p.b);
        let mut s = -z.clone();
        for &r in &self.eq_rows {
            s[r] = 0.0;
        }
        let mut z = z;
        self.shift_interior(&mut s);
        self.shift_interior(&mut z);
        Ok((x, s, z))
    }

    fn shift_interior(&self, v: &mut DVector<f64>) {
        for b in &self.blocks {
            let r = b.range();
            let alpha = match b.cone {
                Cone::Zero(_) => continue,
                Cone::NonNeg(_) => -r.clone().map(|i| v[i]).fold(f64::INFINITY, f64::min),
                Cone::Soc(_) => {
                    let t = &v.as_slice()[r.clone()];
                    t[1..].iter().map(|x| x * x).sum::<f64>().sqrt() - t[0]
                }
            };
            if alpha >= -1e-8 {
                let shift = 1.0 + alpha;
                match b.cone {
                    Cone::NonNeg(_) => r.for_each(|i| v[i] += shift),
                    Cone::Soc(_) => v[b.start] += shift,
                    Cone::Zero(_) => {}
                }
            }
        }
    }

    fn run(&self) -> Result<ConicSolution> {
        let (p, st) = (self.p, self.st);
        let (n, m) = (p.n(), p.m());
        let (mut x, mut s, mut z) = self.initial_point()?;
        let (mut tau, mut kappa) = (1.0f64, 1.0f64);
        let qn = p.q.amax();
        let bn = p.b.amax();
        if m == 0 {
            // unconstrained: one Newton solve on the regularized P
            let f = self.factor_with_retry(&[])?;
            let (x, _) = self.solve_kkt(&f, &[], &(-&p.q), &DVector::zeros(0));
            let px = &p.p * &x;
            let rd = (&px + &p.q).amax();
            if rd > st.tol_feas * (1.0 + qn) {
                return Err(Error::Unbounded);
            }
            let objective = 0.5 * x.dot(&px) + p.q.dot(&x);
            return Ok(ConicSolution { x, s, z, objective, iterations: 1, primal_residual: 0.0, dual_residual: rd, gap: 0.0 });
        }
        // best (residual score, solution) meeting the reduced tolerances
        let mut best: Option<(f64, ConicSolution)> = None;
        let fallback = |best: Option<(f64, ConicSolution)>, e: Error| match best {
            Some((_, sol)) => {
                log::debug!("ipm stalled ({e}); returning reduced-accuracy iterate");
                Ok(sol)
            }
            None => Err(e),
        };
        for iter in 0..=st.max_iter {
            let px = &p.p * &x;
            let xpx = x.dot(&px);
            let atz = p.at_mul(&z);
            let ax = p.a_mul(&x);
            let rx = &px + &atz + &p.q * tau;
            let rz = &ax + &s - &p.b * tau;
            let rtau = p.q.dot(&x) + p.b.dot(&z) + xpx / tau + kappa;

            // termination on the unscaled iterate
            let (xh, zh) = (&x / tau, &z / tau);
            let pobj = 0.5 * xpx / (tau * tau) + p.q.dot(&xh);
            let dobj = -0.5 * xpx / (tau * tau) - p.b.dot(&zh);
            let gap_abs = s.dot(&z).abs() / (tau * tau);
            let gap_rel = gap_abs / pobj.abs().min(dobj.abs()).max(1.0);
            let pres = rz.amax() / tau / (1.0 + bn.max(ax.amax() / tau).max(s.amax() / tau));
            let dres = rx.amax() / tau / (1.0 + qn.max(px.amax() / tau).max(atz.amax() / tau));
            log::trace!("ipm {iter:3} pres {pres:.2e} dres {dres:.2e} gap {gap_abs:.2e} rel {gap_rel:.2e} tau {tau:.2e} kappa {kappa:.2e}");
            if pres <= st.tol_feas && dres <= st.tol_feas && (gap_abs <= st.tol_gap_abs || gap_rel <= st.tol_gap_rel) {
                return Ok(ConicSolution {
                    x: xh,
                    s: &s / tau,
                    z: zh,
                    objective: pobj,
                    iterations: iter,
                    primal_residual: pres,
                    dual_residual: dres,
                    gap: gap_abs,
                });
            }
            let f = st.reduced_accuracy;
            if pres <= f * st.tol_feas && dres <= f * st.tol_feas && (gap_abs <= f * st.tol_gap_abs || gap_rel <= f * st.tol_gap_rel) {
                let score = (pres / st.tol_feas).max(dres / st.tol_feas).max((gap_abs / st.tol_gap_abs).min(gap_rel / st.tol_gap_rel));
                if best.as_ref().map_or(true, |(b, _)| score < *b) {
                    let sol = ConicSolution {
                        x: xh.clone(),
                        s: &s / tau,
                        z: zh.clone(),
                        objective: pobj,
                        iterations: iter,
                        primal_residual: pres,
                        dual_residual: dres,
                        gap: gap_abs,
                    };
                    best = Some((score, sol));
                }
            }
            // infeasibility certificates
            let btz = p.b.dot(&z);
            if btz < 0.0 && atz.amax() <= st.tol_infeas * (-btz) && tau < kappa {
                return Err(Error::Infeasible);
            }
            let qtx = p.q.dot(&x);
            if qtx < 0.0 && px.amax() <= st.tol_infeas * (-qtx) && (&ax + &s).amax() <= st.tol_infeas * (-qtx) && tau < kappa {
                return Err(Error::Unbounded);
            }
            if iter == st.max_iter {
                break;
            }

            let (scales, lambda) = match self.scalings(&s, &z) {
                Ok(v) => v,
                Err(e) => return fallback(best, e),
            };
            let f = match self.factor_with_retry(&scales) {
                Ok(f) => f,
                Err(e) => return fallback(best, e),
            };
            let (v2x, v2z) = self.solve_kkt(&f, &scales, &(-&p.q), &p.b);
            let c_x = &p.q + &px * (2.0 / tau);
            let denom_base = c_x.dot(&v2x) + p.b.dot(&v2z) - xpx / (tau * tau) - kappa / tau;
            let mu = (s.dot(&z) + tau * kappa) / (self.degree + 1.0);

            let direction = |ds: &DVector<f64>, dkappa: f64, eta: f64| -> (DVector<f64>, DVector<f64>, DVector<f64>, f64, f64) {
                let ls = self.inv_circ(&lambda, ds);
                let wls = self.apply_w(&scales, &ls, false);
                let r1 = -&rx * eta;
                let r2 = -&rz * eta + &wls;
                let (v1x, v1z) = self.solve_kkt(&f, &scales, &r1, &r2);
                let dtau = (-eta * rtau + dkappa / tau - c_x.dot(&v1x) - p.b.dot(&v1z)) / denom_base;
                let dx = v1x + &v2x * dtau;
                let dz = v1z + &v2z * dtau;
                let mut dsv = -wls - self.apply_h(&scales, &dz);
                for &r in &self.eq_rows {
                    dsv[r] = 0.0;
                }
                let dk = -(dkappa + kappa * dtau) / tau;
                (dx, dsv, dz, dtau, dk)
            };
            let scalar_step = |v: f64, d: f64, cap: f64| if d < 0.0 { cap.min(-v / d) } else { cap };

            // predictor
            let ds_aff = self.circ(&lambda, &lambda);
            let (_, dsa, dza, dta, dka) = direction(&ds_aff, tau * kappa, 1.0);
            let mut a_aff = self.step_to_boundary(&s, &dsa, 1.0);
            a_aff = self.step_to_boundary(&z, &dza, a_aff);
            a_aff = scalar_step(tau, dta, scalar_step(kappa, dka, a_aff));
            let sigma = (1.0 - a_aff).powi(3);

            // corrector
            let corr = self.circ(&self.apply_w(&scales, &dsa, true), &self.apply_w(&scales, &dza, false));
            let ds_c = ds_aff + corr - self.unit(sigma * mu);
            let dk_c = tau * kappa + dta * dka - sigma * mu;
            let (dx, dsv, dz, dt, dk) = direction(&ds_c, dk_c, 1.0 - sigma);
            let mut a = self.step_to_boundary(&s, &dsv, f64::INFINITY);
            a = self.step_to_boundary(&z, &dz, a);
            a = scalar_step(tau, dt, scalar_step(kappa, dk, a));
            let mut alpha = (st.step_fraction * a).min(1.0);
            // the boundary step is computed in floating point; back off until strictly interior
            while alpha > 1e-12 && !(self.interior(&(&s + &dsv * alpha)) && self.interior(&(&z + &dz * alpha))) {
                alpha *= 0.8;
            }
            if !(alpha > 1e-12) {
                return fallback(best, Error::NumericalBreakdown("step length collapsed".into()));
            }
            x += &dx * alpha;
            s += &dsv * alpha;
            z += &dz * alpha;
            tau += alpha * dt;
            kappa += alpha * dk;
            if ![tau, kappa].iter().all(|v| v.is_finite() && *v > 0.0) || !x.iter().all(|v| v.is_finite()) {
                return fallback(best, Error::NumericalBreakdown("non-finite iterate".into()));
            }
            let _ = n;
        }
        fallback(best, Error::MaxIterations(st.max_iter))
    }
}
