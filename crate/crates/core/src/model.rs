//! Plant representations: state space, the equivalent VARX form, and exact
//! simulation of both.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::io::{matrix_serde, opt_vectors_serde, vectors_serde};
use crate::linalg::{self, matrix_power, pinv, PINV_RTOL};

/// Rank cutoff used by the observability test.
const OBS_RTOL: f64 = 1e-9;

/// x_{k+1} = A x_k + B u_k + E w_k,  y_k = C x_k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpaceModel {
    #[serde(with = "matrix_serde")]
    pub a: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub b: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub c: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub e: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, e: DMatrix<f64>) -> Result<Self> {
        let m = Self { a, b, c, e };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n {
            return Err(dim_err("A must be square and nonempty"));
        }
        if self.b.nrows() != n || self.b.ncols() == 0 {
            return Err(dim_err("B rows must match A"));
        }
        if self.c.ncols() != n || self.c.nrows() == 0 {
            return Err(dim_err("C columns must match A"));
        }
        if self.e.nrows() != n || self.e.ncols() == 0 {
            return Err(dim_err("E rows must match A"));
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.e.ncols()
    }
}

/// y_k = Â y_{[k-ℓ,k-1]} + B̂ u_{[k-ℓ,k-1]} + Ê w_{[k-ℓ,k-1]}, blocks ordered oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarxModel {
    #[serde(with = "matrix_serde")]
    pub a_hat: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub b_hat: DMatrix<f64>,
    #[serde(with = "matrix_serde")]
    pub e_hat: DMatrix<f64>,
    pub lag: usize,
    /// Disturbance enters only as `w_{k-1}` (Ê = [0 … 0 I]).
    pub last_step_disturbance: bool,
}

impl VarxModel {
    pub fn new(
        a_hat: DMatrix<f64>,
        b_hat: DMatrix<f64>,
        e_hat: DMatrix<f64>,
        lag: usize,
        last_step_disturbance: bool,
    ) -> Result<Self> {
        let m = Self { a_hat, b_hat, e_hat, lag, last_step_disturbance };
        m.validate()?;
        Ok(m)
    }

    /// Model with Ê = [0 … 0 I], the form the data-driven predictors assume.
    pub fn with_unit_disturbance(a_hat: DMatrix<f64>, b_hat: DMatrix<f64>, lag: usize) -> Result<Self> {
        let n_y = a_hat.nrows();
        Self::new(a_hat, b_hat, unit_disturbance_map(n_y, lag), lag, true)
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.lag;
        let n_y = self.a_hat.nrows();
        if l == 0 || n_y == 0 {
            return Err(dim_err("lag and n_y must be positive"));
        }
        for (name, m) in [("A_hat", &self.a_hat), ("B_hat", &self.b_hat), ("E_hat", &self.e_hat)] {
            if m.nrows() != n_y {
                return Err(dim_err(format!("{name} must have n_y rows")));
            }
            if m.ncols() == 0 || m.ncols() % l != 0 {
                return Err(dim_err(format!("{name} columns must be a positive multiple of the lag")));
            }
        }
        if self.a_hat.ncols() != l * n_y {
            return Err(dim_err("A_hat must be n_y x (lag * n_y)"));
        }
        if self.last_step_disturbance {
            let target = unit_disturbance_map(n_y, l);
            if self.e_hat.shape() != target.shape() || linalg::max_abs(&(&self.e_hat - &target)) > 1e-9 {
                return Err(dim_err("last_step_disturbance set but E_hat is not [0 ... 0 I]"));
            }
        }
        Ok(())
    }

    pub fn n_y(&self) -> usize {
        self.a_hat.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.b_hat.ncols() / self.lag
    }
    pub fn n_w(&self) -> usize {
        self.e_hat.ncols() / self.lag
    }

    /// Dimension of the past-I/O vector z_k = [u_{[k-ℓ,k-1]}; y_{[k-ℓ,k-1]}].
    pub fn n_z(&self) -> usize {
        self.lag * (self.n_u() + self.n_y())
    }

    /// Companion form in z: z_{k+1} = F z_k + G u_k + H w_{k-1}, y_k = [B̂ Â] z_k + w_{k-1}.
    /// Only meaningful when the disturbance enters through the last step.
    pub fn companion(&self) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (l, nu, ny) = (self.lag, self.n_u(), self.n_y());
        let nz = self.n_z();
        let mut f = DMatrix::zeros(nz, nz);
        let mut g = DMatrix::zeros(nz, nu);
        let mut h = DMatrix::zeros(nz, ny);
        let ub = l * nu;
        // shift registers
        for i in 0..(l - 1) * nu {
            f[(i, i + nu)] = 1.0;
        }
        for i in 0..(l - 1) * ny {
            f[(ub + i, ub + i + ny)] = 1.0;
        }
        for i in 0..nu {
            g[((l - 1) * nu + i, i)] = 1.0;
        }
        let out = (l - 1) * ny + ub;
        f.view_mut((out, 0), (ny, ub)).copy_from(&self.b_hat);
        f.view_mut((out, ub), (ny, l * ny)).copy_from(&self.a_hat);
        for i in 0..ny {
            h[(out + i, i)] = 1.0;
        }
        (f, g, h)
    }

    /// Row map [B̂ Â] from z_k to the noise-free part of y_k.
    pub fn theta(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.b_hat, &self.a_hat])
    }
}

pub fn unit_disturbance_map(n_y: usize, lag: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n_y, lag * n_y);
    for i in 0..n_y {
        e[(i, (lag - 1) * n_y + i)] = 1.0;
    }
    e
}

/// Time-indexed realization of (u, y[, w]); index `i` of each vector is time `start + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealTrajectory {
    pub start: i64,
    pub n_u: usize,
    pub n_y: usize,
    #[serde(with = "vectors_serde")]
    pub u: Vec<DVector<f64>>,
    #[serde(with = "vectors_serde")]
    pub y: Vec<DVector<f64>>,
    #[serde(default, with = "opt_vectors_serde", skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<DVector<f64>>>,
}

impl RealTrajectory {
    pub fn new(
        start: i64,
        u: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
        w: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        let n_u = u.first().map_or(0, |v| v.len());
        let n_y = y.first().map_or(0, |v| v.len());
        Self::with_dims(start, n_u, n_y, u, y, w)
    }

    pub fn with_dims(
        start: i64,
        n_u: usize,
        n_y: usize,
        u: Vec<DVector<f64>>,
        y: Vec<DVector<f64>>,
        w: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if u.len() != y.len() {
            return Err(dim_err(format!("u has {} steps, y has {}", u.len(), y.len())));
        }
        if u.iter().any(|v| v.len() != n_u) || y.iter().any(|v| v.len() != n_y) {
            return Err(dim_err("inconsistent vector dimensions in trajectory"));
        }
        if let Some(w) = &w {
            if w.len() != u.len() {
                return Err(dim_err("w length differs from u"));
            }
            let n_w = w.first().map_or(0, |v| v.len());
            if w.iter().any(|v| v.len() != n_w) {
                return Err(dim_err("inconsistent w dimensions"));
            }
        }
        Ok(Self { start, n_u, n_y, u, y, w })
    }

    /// All-zero window of `len` steps.
    pub fn zeros(start: i64, len: usize, n_u: usize, n_y: usize) -> Self {
        Self {
            start,
            n_u,
            n_y,
            u: vec![DVector::zeros(n_u); len],
            y: vec![DVector::zeros(n_y); len],
            w: None,
        }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
    pub fn n_w(&self) -> usize {
        self.w.as_ref().and_then(|w| w.first()).map_or(0, |v| v.len())
    }
    /// Last time index (start - 1 when empty).
    pub fn end(&self) -> i64 {
        self.start + self.len() as i64 - 1
    }

    /// Sub-window of `len` steps starting at absolute time `from`.
    pub fn window(&self, from: i64, len: usize) -> Result<Self> {
        let off = from - self.start;
        if off < 0 || off as usize + len > self.len() {
            return Err(Error::TooShort { needed: (off.max(0) as usize) + len, got: self.len() });
        }
        let r = off as usize..off as usize + len;
        Ok(Self {
            start: from,
            n_u: self.n_u,
            n_y: self.n_y,
            u: self.u[r.clone()].to_vec(),
            y: self.y[r.clone()].to_vec(),
            w: self.w.as_ref().map(|w| w[r].to_vec()),
        })
    }

    /// Last `len` steps.
    pub fn tail(&self, len: usize) -> Result<Self> {
        if len > self.len() {
            return Err(Error::InitTooShort { expected: len, got: self.len() });
        }
        self.window(self.end() - len as i64 + 1, len)
    }

    pub fn without_w(&self) -> Self {
        Self { w: None, ..self.clone() }
    }

    /// Append another trajectory that starts right after this one ends.
    pub fn extend(&mut self, other: &RealTrajectory) -> Result<()> {
        if other.start != self.end() + 1 || other.n_u != self.n_u || other.n_y != self.n_y {
            return Err(dim_err("trajectories are not contiguous"));
        }
        self.u.extend(other.u.iter().cloned());
        self.y.extend(other.y.iter().cloned());
        match (&mut self.w, &other.w) {
            (Some(a), Some(b)) => a.extend(b.iter().cloned()),
            (None, None) => {}
            _ => self.w = None,
        }
        Ok(())
    }
}

/// Stacked observability matrix [C; CA; …; CA^{depth-1}].
pub fn observability_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, depth: usize) -> DMatrix<f64> {
    let (ny, nx) = (c.nrows(), a.ncols());
    let mut o = DMatrix::zeros(depth * ny, nx);
    let mut blk = c.clone();
    for i in 0..depth {
        o.view_mut((i * ny, 0), (ny, nx)).copy_from(&blk);
        blk = &blk * a;
    }
    o
}

/// Smallest ℓ with rank O_ℓ = n_x.
pub fn lag(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<usize> {
    let nx = a.nrows();
    if a.ncols() != nx || c.ncols() != nx || nx == 0 {
        return Err(dim_err("A square, C with n_x columns"));
    }
    for l in 1..=nx {
        if linalg::rank(&observability_matrix(a, c, l), OBS_RTOL) == nx {
            return Ok(l);
        }
    }
    Err(Error::NotObservable)
}

/// Maps a depth-ℓ input window (oldest first) to x_ℓ from x_0 = 0: [A^{ℓ-1}D … AD D].
fn reach_matrix(a: &DMatrix<f64>, d: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let (nx, nd) = (a.nrows(), d.ncols());
    let mut out = DMatrix::zeros(nx, l * nd);
    for i in 0..l {
        let blk = matrix_power(a, l - 1 - i) * d;
        out.view_mut((0, i * nd), (nx, nd)).copy_from(&blk);
    }
    out
}

/// Strictly block lower-triangular Toeplitz map from an input window to the window outputs.
fn toeplitz_matrix(a: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let (ny, nd) = (c.nrows(), d.ncols());
    let mut out = DMatrix::zeros(l * ny, l * nd);
    for i in 0..l {
        for j in 0..i {
            let blk = c * matrix_power(a, i - j - 1) * d;
            out.view_mut((i * ny, j * nd), (ny, nd)).copy_from(&blk);
        }
    }
    out
}

/// Equivalent VARX model of lag ℓ (ℓ must be at least the observability index).
pub fn varx_from_state_space(m: &StateSpaceModel, l: usize) -> Result<VarxModel> {
    m.validate()?;
    let min_lag = lag(&m.a, &m.c)?;
    if l < min_lag {
        return Err(Error::Precondition(format!("lag {l} below observability index {min_lag}")));
    }
    let o = observability_matrix(&m.a, &m.c, l);
    let o_pinv = pinv(&o, PINV_RTOL);
    let al = matrix_power(&m.a, l);
    let al_opinv = &al * &o_pinv;
    let a_hat = &m.c * &al_opinv;
    let conv = |d: &DMatrix<f64>| {
        &m.c * (reach_matrix(&m.a, d, l) - &al_opinv * toeplitz_matrix(&m.a, &m.c, d, l))
    };
    let b_hat = conv(&m.b);
    let e_hat = conv(&m.e);
    let n_y = m.n_y();
    let target = unit_disturbance_map(n_y, l);
    let a2 = e_hat.shape() == target.shape() && linalg::max_abs(&(&e_hat - &target)) <= 1e-9;
    VarxModel::new(a_hat, b_hat, e_hat, l, a2)
}

/// Exact state-space recursion from time 0.
pub fn simulate_state_space(
    m: &StateSpaceModel,
    x0: &DVector<f64>,
    u_seq: &[DVector<f64>],
    w_seq: &[DVector<f64>],
) -> Result<RealTrajectory> {
    m.validate()?;
    if x0.len() != m.n_x() {
        return Err(dim_err("x0 dimension"));
    }
    if u_seq.len() != w_seq.len() {
        return Err(dim_err("u and w sequences differ in length"));
    }
    if u_seq.iter().any(|u| u.len() != m.n_u()) || w_seq.iter().any(|w| w.len() != m.n_w()) {
        return Err(dim_err("input or disturbance dimension"));
    }
    let mut x = x0.clone();
    let mut ys = Vec::with_capacity(u_seq.len());
    for (u, w) in u_seq.iter().zip(w_seq) {
        ys.push(&m.c * &x);
        x = &m.a * &x + &m.b * u + &m.e * w;
    }
    RealTrajectory::with_dims(0, m.n_u(), m.n_y(), u_seq.to_vec(), ys, Some(w_seq.to_vec()))
}

/// VARX recursion continuing an ℓ-step initial window.
///
/// Returns the new steps only, starting at `init.end() + 1`. The disturbance
/// entry of step k in the result is `w_{k}`, so output `y_{k+1}` is the first
/// one it affects. Disturbances in the initial window are taken from `init.w`
/// when present and are zero otherwise.
pub fn simulate_varx(
    m: &VarxModel,
    init: &RealTrajectory,
    u_seq: &[DVector<f64>],
    w_seq: &[DVector<f64>],
) -> Result<RealTrajectory> {
    m.validate()?;
    let (l, nu, ny, nw) = (m.lag, m.n_u(), m.n_y(), m.n_w());
    if init.len() != l {
        return Err(Error::InitTooShort { expected: l, got: init.len() });
    }
    if init.n_u != nu || init.n_y != ny {
        return Err(dim_err("initial window dimensions"));
    }
    if u_seq.len() != w_seq.len() {
        return Err(dim_err("u and w sequences differ in length"));
    }
    if u_seq.iter().any(|u| u.len() != nu) || w_seq.iter().any(|w| w.len() != nw) {
        return Err(dim_err("input or disturbance dimension"));
    }
    if init.n_w() != 0 && init.n_w() != nw {
        return Err(dim_err("initial window disturbance dimension"));
    }
    let mut us: Vec<DVector<f64>> = init.u.clone();
    let mut ys: Vec<DVector<f64>> = init.y.clone();
    let mut ws: Vec<DVector<f64>> = init.w.clone().unwrap_or_else(|| vec![DVector::zeros(nw); l]);
    let n = u_seq.len();
    let mut out_y = Vec::with_capacity(n);
    for t in 0..n {
        // the step being produced sits at history index l + t and depends on the previous l entries
        let base = t;
        let mut y = DVector::zeros(ny);
        for i in 0..l {
            let h = base + i;
            y += m.a_hat.columns(i * ny, ny) * &ys[h];
            y += m.b_hat.columns(i * nu, nu) * &us[h];
            y += m.e_hat.columns(i * nw, nw) * &ws[h];
        }
        ys.push(y.clone());
        us.push(u_seq[t].clone());
        ws.push(w_seq[t].clone());
        out_y.push(y);
    }
    RealTrajectory::with_dims(init.end() + 1, nu, ny, u_seq.to_vec(), out_y, Some(w_seq.to_vec()))
}
