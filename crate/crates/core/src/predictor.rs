//! Trajectory prediction from recorded data.
//!
//! [`DataPredictor`] works from undisturbed input/output data only. The mean
//! coefficient is propagated with a depth ℓ+N stack plus the precomputed
//! response to E[W]; each germ coefficient j ≥ 1 uses a shorter stack that
//! starts at step k'(j)+1, where its germ first appears. Stacks depend only
//! on k'(j), so one solve operator per step is cached.
//!
//! [`DisturbedDataPredictor`] works from data with recorded disturbances and
//! solves one joint (u, y, w) stack per basis index.
//!
//! Every solve is a minimum-norm least-squares fit of the pinned rows
//! followed by evaluation of the free output rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::hankel::{
    self, check_stack_pe, count_nonzero_entries, hankel, CountConvention, HankelDims, PredictorForm,
    PeCertificate,
};
use crate::io::{vector_serde, vectors_serde};
use crate::linalg::{self, concat, split, PINV_RTOL};
use crate::model::RealTrajectory;
use crate::pce::{germ_pattern, BasisTerm, DisturbanceSpec, JointBasis, PceTrajectory};

/// Relative tolerance on the pinned-row residual.
pub const PIN_TOL: f64 = 1e-6;

/// Minimum-norm solve operator of one stacked Hankel equation.
#[derive(Debug, Clone)]
pub struct PinnedSolve {
    pub pinned: DMatrix<f64>,
    pub output: DMatrix<f64>,
    pub pinv: DMatrix<f64>,
    /// output · pinv: maps pinned values to output values.
    pub gain: DMatrix<f64>,
    pub certificate: PeCertificate,
}

impl PinnedSolve {
    pub fn new(pinned: DMatrix<f64>, output: DMatrix<f64>, ridge: Option<f64>) -> Self {
        let pinv = linalg::pinv_filtered(&pinned, PINV_RTOL, ridge.unwrap_or(0.0));
        let gain = &output * &pinv;
        let certificate = PeCertificate::of(&pinned, pinned.nrows());
        Self { pinned, output, pinv, gain, certificate }
    }

    pub fn n_g(&self) -> usize {
        self.pinned.ncols()
    }

    /// Returns (g, output, residual norm); errors if the pinned rows cannot be met.
    pub fn solve(&self, rhs: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        if rhs.len() != self.pinned.nrows() {
            return Err(dim_err(format!("stack expects {} pinned values, got {}", self.pinned.nrows(), rhs.len())));
        }
        let g = &self.pinv * rhs;
        let residual = (&self.pinned * &g - rhs).norm();
        let tolerance = PIN_TOL * (1.0 + rhs.norm());
        if !(residual <= tolerance) {
            return Err(Error::InfeasibleInit { residual, tolerance });
        }
        let out = &self.output * &g;
        Ok((g, out, residual))
    }

    /// Structural non-zeros of the assembled stack.
    pub fn nonzeros(&self) -> usize {
        hankel::count_structural_nonzeros(&self.pinned) + hankel::count_structural_nonzeros(&self.output)
    }
}

/// Affine map `v = m x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub m: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl AffineMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x + &self.c
    }
}

/// Coefficient dynamics of one basis index as seen by the optimizer:
/// `u^j_{[1,N]} = u_map x` and `y^j_{[1,N]} = y_map(x)` for decision vector `x`.
#[derive(Debug, Clone)]
pub struct CoefficientBlock {
    pub j: usize,
    pub n_dec: usize,
    pub u_map: DMatrix<f64>,
    pub y_map: AffineMap,
    /// Decision entries that must vanish for causality.
    pub fixed_zero: Vec<usize>,
}

/// Initial window, deterministic or with chaos coefficients (times 1-ℓ..0).
#[derive(Debug, Clone)]
pub enum InitialCondition {
    Deterministic(RealTrajectory),
    Uncertain { u: PceTrajectory, y: PceTrajectory },
}

impl InitialCondition {
    /// Coefficient windows (u, y) for basis index j, stacked oldest first.
    fn window(&self, j: usize) -> (DVector<f64>, DVector<f64>) {
        match self {
            Self::Deterministic(t) => {
                if j == 0 {
                    (concat(&t.u), concat(&t.y))
                } else {
                    (DVector::zeros(t.len() * t.n_u), DVector::zeros(t.len() * t.n_y))
                }
            }
            Self::Uncertain { u, y } => (concat(&u.series(j)), concat(&y.series(j))),
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Deterministic(t) => t.len(),
            Self::Uncertain { u, .. } => u.len(),
        }
    }

    fn validate(&self, lag: usize, n_u: usize, n_y: usize, basis: Option<&JointBasis>) -> Result<()> {
        if self.len() != lag {
            return Err(Error::InitTooShort { expected: lag, got: self.len() });
        }
        match self {
            Self::Deterministic(t) => {
                if t.n_u != n_u || t.n_y != n_y {
                    return Err(dim_err("initial window dimensions"));
                }
            }
            Self::Uncertain { u, y } => {
                if u.dim != n_u || y.dim != n_y || u.len() != y.len() || u.basis_len != y.basis_len {
                    return Err(dim_err("uncertain initial window dimensions"));
                }
                if let Some(b) = basis {
                    if u.basis_len != b.len() {
                        return Err(Error::BasisMismatch);
                    }
                    for j in 1..b.disturbance_len() {
                        if u.series(j).iter().chain(y.series(j).iter()).any(|v| v.amax() != 0.0) {
                            return Err(Error::Precondition(format!(
                                "initial window depends on disturbance germ {j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Providers of per-index affine coefficient dynamics.
pub trait CoefficientDynamics: Send + Sync {
    fn lag(&self) -> usize;
    fn horizon(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    fn blocks(&self, basis: &JointBasis, spec: &DisturbanceSpec, init: &InitialCondition) -> Result<Vec<CoefficientBlock>>;
    /// Non-zero Hankel entries handled per problem instance.
    fn nonzeros(&self, basis_len: usize) -> usize;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub rows: usize,
    pub n_g: usize,
    pub rank: usize,
}

/// Coefficient trajectories over times 1..N, with the solve vectors per j.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub horizon: usize,
    pub u: PceTrajectory,
    pub y: PceTrajectory,
    #[serde(with = "vectors_serde")]
    pub g: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub blocks: Vec<BlockReport>,
}

impl Prediction {
    /// Asserts the causality pattern of every disturbance index.
    pub fn check_causality(&self, basis: &JointBasis, spec: &DisturbanceSpec) -> Result<()> {
        for j in 1..basis.disturbance_len() {
            let kp = basis.k_prime(j)?;
            for k in 1..=kp {
                let (u, y) = (self.u.coeff(k as i64, j)?, self.y.coeff(k as i64, j)?);
                if u.amax() != 0.0 || y.amax() != 0.0 {
                    return Err(Error::CausalityViolation { j, k });
                }
            }
            let pin = germ_pattern(spec, basis.within_index(j)?)?;
            if self.y.coeff(kp as i64 + 1, j)? != pin {
                return Err(Error::CausalityViolation { j, k: kp + 1 });
            }
        }
        Ok(())
    }
}

fn report(name: &str, s: &PinnedSolve) -> BlockReport {
    BlockReport { name: name.into(), rows: s.pinned.nrows(), n_g: s.n_g(), rank: s.certificate.rank }
}

/// Predictor built from undisturbed data (u, y)^ud.
#[derive(Debug, Clone)]
pub struct DataPredictor {
    lag: usize,
    horizon: usize,
    n_u: usize,
    n_y: usize,
    n_g: usize,
    pub certificate: PeCertificate,
    mean: PinnedSolve,
    yw: Option<PinnedSolve>,
    /// Indexed by k' = 0..N-1.
    shortened: Vec<PinnedSolve>,
}

impl DataPredictor {
    pub fn new(data: &RealTrajectory, lag: usize, horizon: usize, ridge: Option<f64>) -> Result<Self> {
        let certificate = check_stack_pe(data, lag, horizon)?;
        certificate.require()?;
        let (nu, ny, t) = (data.n_u, data.n_y, data.len());
        let depth = lag + horizon;
        let n_g = t - depth + 1;
        let stack = |d: usize, cols: usize| -> Result<PinnedSolve> {
            let hu = hankel(&data.u[..cols + d - 1], d)?;
            let hy = hankel(&data.y[..cols + d - 1], d)?;
            let pinned = linalg::vstack(&[&hu, &hy.rows(0, lag * ny).into_owned()]);
            let output = hy.rows(lag * ny, (d - lag) * ny).into_owned();
            Ok(PinnedSolve::new(pinned, output, ridge))
        };
        let mean = stack(depth, n_g)?;
        let yw = if horizon >= 2 { Some(stack(depth - 1, n_g + 1)?) } else { None };
        let shortened = (0..horizon).map(|kp| stack(lag - 1 + horizon - kp, n_g)).collect::<Result<Vec<_>>>()?;
        for s in std::iter::once(&mean).chain(yw.iter()).chain(shortened.iter()) {
            s.certificate.require()?;
        }
        Ok(Self { lag, horizon, n_u: nu, n_y: ny, n_g, certificate, mean, yw, shortened })
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    fn check_inputs(&self, inputs: &[DVector<f64>], steps: usize) -> Result<()> {
        if inputs.len() != steps || inputs.iter().any(|u| u.len() != self.n_u) {
            return Err(dim_err(format!("expected {steps} inputs of dimension {}", self.n_u)));
        }
        Ok(())
    }

    /// Undisturbed continuation y_{[1,N]} of an initial window under inputs u_{[1,N]}.
    pub fn predict_undisturbed(&self, init: &RealTrajectory, inputs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        InitialCondition::Deterministic(init.clone()).validate(self.lag, self.n_u, self.n_y, None)?;
        self.check_inputs(inputs, self.horizon)?;
        let rhs = concat(&[concat(&init.u), concat(inputs), concat(&init.y)]);
        let (_, out, _) = self.mean.solve(&rhs)?;
        Ok(split(&out, self.n_y))
    }

    /// Response y^w_{[1,N]} of the system to a single mean disturbance E[W] at step 0.
    pub fn precompute_yw(&self, mean_w: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if mean_w.len() != self.n_y {
            return Err(dim_err("E[W] must have n_y entries"));
        }
        let mut out = vec![mean_w.clone()];
        if let Some(s) = &self.yw {
            let d = self.lag + self.horizon - 1;
            let mut rhs = DVector::zeros(d * self.n_u + self.lag * self.n_y);
            rhs.rows_mut(d * self.n_u + (self.lag - 1) * self.n_y, self.n_y).copy_from(mean_w);
            let (_, y, _) = s.solve(&rhs)?;
            out.extend(split(&y, self.n_y));
        }
        Ok(out)
    }

    /// Mean trajectory y⁰_{[1,N]} and its solve vector.
    pub fn propagate_mean(
        &self,
        init: &RealTrajectory,
        u0: &[DVector<f64>],
        mean_w: &DVector<f64>,
    ) -> Result<(Vec<DVector<f64>>, DVector<f64>)> {
        InitialCondition::Deterministic(init.clone()).validate(self.lag, self.n_u, self.n_y, None)?;
        self.check_inputs(u0, self.horizon)?;
        let rhs = concat(&[concat(&init.u), concat(u0), concat(&init.y)]);
        let (g, yu, _) = self.mean.solve(&rhs)?;
        let yw = self.precompute_yw(mean_w)?;
        let mut acc = DVector::zeros(self.n_y);
        let y = split(&yu, self.n_y)
            .into_iter()
            .zip(yw)
            .map(|(yk, w)| {
                acc += w;
                yk + &acc
            })
            .collect();
        Ok((y, g))
    }

    /// Coefficients (u^j, y^j)_{[1,N]} of a disturbance index j ≥ 1, given its free inputs u^j_{[k'+1,N]}.
    pub fn propagate_pce_j(
        &self,
        basis: &JointBasis,
        spec: &DisturbanceSpec,
        j: usize,
        u_free: &[DVector<f64>],
    ) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>, DVector<f64>)> {
        let BasisTerm::Disturbance { step: kp, .. } = basis.term(j)? else {
            return Err(Error::IndexOutOfRange { index: j, len: basis.disturbance_len() });
        };
        if basis.horizon != self.horizon || spec.dim() != self.n_y {
            return Err(Error::BasisMismatch);
        }
        let nbar = self.horizon - kp;
        self.check_inputs(u_free, nbar)?;
        let pin = germ_pattern(spec, basis.within_index(j)?)?;
        let rhs = self.shortened_rhs(kp, &concat(u_free), &pin);
        let (g, out, _) = self.shortened[kp].solve(&rhs)?;
        let mut u = vec![DVector::zeros(self.n_u); kp];
        u.extend(u_free.iter().cloned());
        let mut y = vec![DVector::zeros(self.n_y); kp];
        y.push(pin);
        y.extend(split(&out, self.n_y));
        Ok((u, y, g))
    }

    fn shortened_rhs(&self, kp: usize, u_free: &DVector<f64>, pin: &DVector<f64>) -> DVector<f64> {
        let (l, nu, ny) = (self.lag, self.n_u, self.n_y);
        let d = l - 1 + self.horizon - kp;
        let mut rhs = DVector::zeros(d * nu + l * ny);
        rhs.rows_mut((l - 1) * nu, u_free.len()).copy_from(u_free);
        rhs.rows_mut(d * nu + (l - 1) * ny, ny).copy_from(pin);
        rhs
    }

    /// Full coefficient prediction for given input coefficients over times 1..N.
    pub fn propagate_all(
        &self,
        basis: &JointBasis,
        spec: &DisturbanceSpec,
        init: &InitialCondition,
        u_coeffs: &PceTrajectory,
    ) -> Result<Prediction> {
        init.validate(self.lag, self.n_u, self.n_y, Some(basis))?;
        self.check_coeffs(basis, u_coeffs)?;
        let n = self.horizon;
        let mut y = PceTrajectory::zeros(1, n, self.n_y, basis.len());
        let mut g = Vec::with_capacity(basis.len());
        let mut residuals = Vec::with_capacity(basis.len());
        let mut blocks = vec![report("mean", &self.mean)];
        for j in 0..basis.len() {
            let uj = u_coeffs.series(j);
            let (yj, gj, r) = match basis.term(j)? {
                BasisTerm::Constant => {
                    let (ui, yi) = init.window(0);
                    let t = RealTrajectory::with_dims(1 - self.lag as i64, self.n_u, self.n_y, split(&ui, self.n_u), split(&yi, self.n_y), None)?;
                    let (yj, gj) = self.propagate_mean(&t, &uj, &spec.mean())?;
                    let r = (&self.mean.pinned * &gj - concat(&[ui, concat(&uj), yi])).norm();
                    (yj, gj, r)
                }
                BasisTerm::Disturbance { step: kp, .. } => {
                    let (_, yj, gj) = self.propagate_pce_j(basis, spec, j, &uj[kp..])?;
                    let pin = germ_pattern(spec, basis.within_index(j)?)?;
                    let rhs = self.shortened_rhs(kp, &concat(&uj[kp..]), &pin);
                    let r = (&self.shortened[kp].pinned * &gj - rhs).norm();
                    (yj, gj, r)
                }
                BasisTerm::Initial { .. } => {
                    let (ui, yi) = init.window(j);
                    let rhs = concat(&[ui, concat(&uj), yi]);
                    let (gj, out, r) = self.mean.solve(&rhs)?;
                    (split(&out, self.n_y), gj, r)
                }
            };
            y.set_series(j, &yj)?;
            g.push(gj);
            residuals.push(r);
        }
        for (kp, s) in self.shortened.iter().enumerate() {
            blocks.push(report(&format!("shortened_k{kp}"), s));
        }
        Ok(Prediction { horizon: n, u: u_coeffs.clone(), y, g, residuals, blocks })
    }

    /// Prediction with an uncertain initial window carried by the basis' initial block.
    pub fn propagate_uncertain_init(
        &self,
        basis: &JointBasis,
        spec: &DisturbanceSpec,
        init_u: &PceTrajectory,
        init_y: &PceTrajectory,
        u_coeffs: &PceTrajectory,
    ) -> Result<Prediction> {
        let init = InitialCondition::Uncertain { u: init_u.clone(), y: init_y.clone() };
        self.propagate_all(basis, spec, &init, u_coeffs)
    }

    fn check_coeffs(&self, basis: &JointBasis, u: &PceTrajectory) -> Result<()> {
        if basis.horizon != self.horizon || u.basis_len != basis.len() {
            return Err(Error::BasisMismatch);
        }
        if u.start != 1 || u.len() != self.horizon || u.dim != self.n_u {
            return Err(dim_err("input coefficients must cover times 1..N"));
        }
        for j in 1..basis.disturbance_len() {
            let kp = basis.k_prime(j)?;
            for k in 1..=kp {
                if u.coeff(k as i64, j)?.amax() != 0.0 {
                    return Err(Error::CausalityViolation { j, k });
                }
            }
        }
        Ok(())
    }

    fn mean_block(&self, init: &InitialCondition, spec: &DisturbanceSpec, j: usize, with_yw: bool) -> Result<CoefficientBlock> {
        let (l, n, nu, ny) = (self.lag, self.horizon, self.n_u, self.n_y);
        let g = &self.mean.gain;
        let (ui, yi) = init.window(j);
        let m = g.columns(l * nu, n * nu).into_owned();
        let mut c = g.columns(0, l * nu) * ui + g.columns((l + n) * nu, l * ny) * yi;
        if with_yw {
            let yw = self.precompute_yw(&spec.mean())?;
            let mut acc = DVector::zeros(ny);
            for (k, w) in yw.iter().enumerate() {
                acc += w;
                let mut seg = c.rows_mut(k * ny, ny);
                seg += &acc;
            }
        }
        Ok(CoefficientBlock { j, n_dec: n * nu, u_map: DMatrix::identity(n * nu, n * nu), y_map: AffineMap { m, c }, fixed_zero: Vec::new() })
    }
}

impl CoefficientDynamics for DataPredictor {
    fn lag(&self) -> usize {
        self.lag
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.n_y
    }

    fn blocks(&self, basis: &JointBasis, spec: &DisturbanceSpec, init: &InitialCondition) -> Result<Vec<CoefficientBlock>> {
        init.validate(self.lag, self.n_u, self.n_y, Some(basis))?;
        if basis.horizon != self.horizon || spec.dim() != self.n_y || basis.n_w() != spec.dim() {
            return Err(Error::BasisMismatch);
        }
        let (l, n, nu, ny) = (self.lag, self.horizon, self.n_u, self.n_y);
        let mut out = Vec::with_capacity(basis.len());
        for j in 0..basis.len() {
            out.push(match basis.term(j)? {
                BasisTerm::Constant => self.mean_block(init, spec, 0, true)?,
                BasisTerm::Initial { .. } => self.mean_block(init, spec, j, false)?,
                BasisTerm::Disturbance { step: kp, .. } => {
                    let nbar = n - kp;
                    let g = &self.shortened[kp].gain;
                    let pin = germ_pattern(spec, basis.within_index(j)?)?;
                    let mut m = DMatrix::zeros(n * ny, nbar * nu);
                    let mut c = DVector::zeros(n * ny);
                    c.rows_mut(kp * ny, ny).copy_from(&pin);
                    if nbar > 1 {
                        let d = l - 1 + nbar;
                        let rows = (nbar - 1) * ny;
                        m.view_mut(((kp + 1) * ny, 0), (rows, nbar * nu))
                            .copy_from(&g.columns((l - 1) * nu, nbar * nu));
                        let pc = g.columns(d * nu + (l - 1) * ny, ny) * &pin;
                        c.rows_mut((kp + 1) * ny, rows).copy_from(&pc);
                    }
                    let mut u_map = DMatrix::zeros(n * nu, nbar * nu);
                    u_map.view_mut((kp * nu, 0), (nbar * nu, nbar * nu)).fill_with_identity();
                    CoefficientBlock { j, n_dec: nbar * nu, u_map, y_map: AffineMap { m, c }, fixed_zero: Vec::new() }
                }
            });
        }
        Ok(out)
    }

    fn nonzeros(&self, basis_len: usize) -> usize {
        let dims = HankelDims {
            n_u: self.n_u,
            n_y: self.n_y,
            n_w: self.n_y,
            lag: self.lag,
            horizon: self.horizon,
            basis_len,
            n_g: self.n_g,
        };
        count_nonzero_entries(PredictorForm::Shortened, &dims, CountConvention::AssembledBlocks)
    }
}

/// Predictor built from disturbed data (u, y, w)^d with the disturbance recorded.
#[derive(Debug, Clone)]
pub struct DisturbedDataPredictor {
    lag: usize,
    horizon: usize,
    n_u: usize,
    n_y: usize,
    n_w: usize,
    n_g: usize,
    stack: PinnedSolve,
    /// Excitation of the stacked (u, w) record of order ℓ+N+ℓ·n_y (observer-form state bound).
    pub input_certificate: PeCertificate,
}

impl DisturbedDataPredictor {
    /// Window positions 1..ℓ+N cover times 1-ℓ..N. Pinned: u at all positions,
    /// y at the first ℓ, w at times 0..N-1. Output: y at times 1..N.
    pub fn new(data: &RealTrajectory, lag: usize, horizon: usize, ridge: Option<f64>) -> Result<Self> {
        let w = data.w.as_ref().ok_or_else(|| dim_err("disturbed data need a recorded w"))?;
        if lag == 0 || horizon == 0 {
            return Err(Error::Precondition("lag and horizon must be positive".into()));
        }
        let (nu, ny, nw, t) = (data.n_u, data.n_y, data.n_w(), data.len());
        let depth = lag + horizon;
        if t < depth {
            return Err(Error::TooShort { needed: depth, got: t });
        }
        let hu = hankel(&data.u, depth)?;
        let hy = hankel(&data.y, depth)?;
        let hw = hankel(w, depth)?;
        let n_g = hu.ncols();
        let pinned = linalg::vstack(&[
            &hu,
            &hy.rows(0, lag * ny).into_owned(),
            &hw.rows((lag - 1) * nw, horizon * nw).into_owned(),
        ]);
        let output = hy.rows(lag * ny, horizon * ny).into_owned();
        let stack = PinnedSolve::new(pinned, output, ridge);
        stack.certificate.require()?;
        let uw: Vec<DVector<f64>> = data.u.iter().zip(w).map(|(u, w)| concat(&[u.clone(), w.clone()])).collect();
        let order = depth + lag * ny;
        let input_certificate = if t >= order {
            hankel::is_persistently_exciting(&uw, order)?
        } else {
            PeCertificate { rank: 0, required: order * (nu + nw), pass: false, columns: 0, singular_values: vec![], condition_number: f64::INFINITY }
        };
        Ok(Self { lag, horizon, n_u: nu, n_y: ny, n_w: nw, n_g, stack, input_certificate })
    }

    pub fn n_g(&self) -> usize {
        self.n_g
    }

    pub fn pinned_certificate(&self) -> &PeCertificate {
        &self.stack.certificate
    }

    /// Literal non-zero count of one joint (u, y, w) block.
    pub fn block_nonzeros(&self) -> usize {
        self.stack.nonzeros()
    }

    fn rhs(&self, ui: &DVector<f64>, uf: &DVector<f64>, yi: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        concat(&[ui.clone(), uf.clone(), yi.clone(), w.clone()])
    }

    /// Per-index solve with input coefficients over 1..N and disturbance coefficients over 0..N-1.
    pub fn predict(
        &self,
        basis: &JointBasis,
        init: &InitialCondition,
        inputs: &PceTrajectory,
        w_coeffs: &PceTrajectory,
    ) -> Result<Prediction> {
        init.validate(self.lag, self.n_u, self.n_y, Some(basis))?;
        if inputs.basis_len != basis.len() || w_coeffs.basis_len != basis.len() {
            return Err(Error::BasisMismatch);
        }
        if inputs.start != 1 || inputs.len() != self.horizon || inputs.dim != self.n_u {
            return Err(dim_err("input coefficients must cover times 1..N"));
        }
        if w_coeffs.start != 0 || w_coeffs.len() != self.horizon || w_coeffs.dim != self.n_w {
            return Err(dim_err("disturbance coefficients must cover times 0..N-1"));
        }
        for j in 1..basis.disturbance_len() {
            for k in 1..=basis.k_prime(j)? {
                if inputs.coeff(k as i64, j)?.amax() != 0.0 {
                    return Err(Error::CausalityViolation { j, k });
                }
            }
        }
        let mut y = PceTrajectory::zeros(1, self.horizon, self.n_y, basis.len());
        let mut g = Vec::new();
        let mut residuals = Vec::new();
        for j in 0..basis.len() {
            let (ui, yi) = init.window(j);
            let rhs = self.rhs(&ui, &concat(&inputs.series(j)), &yi, &concat(&w_coeffs.series(j)));
            let (gj, out, r) = self.stack.solve(&rhs)?;
            let mut yj = split(&out, self.n_y);
            if let BasisTerm::Disturbance { step: kp, .. } = basis.term(j)? {
                enforce_causality(&mut yj, kp, w_coeffs.coeff(kp as i64, j)?, j)?;
            }
            y.set_series(j, &yj)?;
            g.push(gj);
            residuals.push(r);
        }
        Ok(Prediction {
            horizon: self.horizon,
            u: inputs.clone(),
            y,
            g,
            residuals,
            blocks: vec![report("joint", &self.stack)],
        })
    }
}

impl CoefficientDynamics for DisturbedDataPredictor {
    fn lag(&self) -> usize {
        self.lag
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.n_y
    }

    fn blocks(&self, basis: &JointBasis, spec: &DisturbanceSpec, init: &InitialCondition) -> Result<Vec<CoefficientBlock>> {
        init.validate(self.lag, self.n_u, self.n_y, Some(basis))?;
        if basis.horizon != self.horizon || spec.dim() != self.n_w {
            return Err(Error::BasisMismatch);
        }
        let (l, n, nu, ny, nw) = (self.lag, self.horizon, self.n_u, self.n_y, self.n_w);
        let g = &self.stack.gain;
        let m = g.columns(l * nu, n * nu).into_owned();
        let (g_ui, g_yi) = (g.columns(0, l * nu), g.columns((l + n) * nu, l * ny));
        let g_w = g.columns((l + n) * nu + l * ny, n * nw);
        let w = PceTrajectory::disturbance(basis, spec)?;
        let mut out = Vec::with_capacity(basis.len());
        for j in 0..basis.len() {
            let (ui, yi) = init.window(j);
            let c = &g_ui * ui + &g_yi * yi + &g_w * concat(&w.series(j));
            let fixed_zero = match basis.term(j)? {
                BasisTerm::Disturbance { step, .. } => (0..step * nu).collect(),
                _ => Vec::new(),
            };
            out.push(CoefficientBlock {
                j,
                n_dec: n * nu,
                u_map: DMatrix::identity(n * nu, n * nu),
                y_map: AffineMap { m: m.clone(), c },
                fixed_zero,
            });
        }
        Ok(out)
    }

    fn nonzeros(&self, basis_len: usize) -> usize {
        let dims = HankelDims {
            n_u: self.n_u,
            n_y: self.n_y,
            n_w: self.n_w,
            lag: self.lag,
            horizon: self.horizon,
            basis_len,
            n_g: self.n_g,
        };
        count_nonzero_entries(PredictorForm::Joint, &dims, CountConvention::AssembledBlocks)
    }
}

/// Sets y^j_{[1,k']} to zero and y^j_{k'+1} to the germ pattern once the
/// solved values agree with them to the pin tolerance.
fn enforce_causality(y: &mut [DVector<f64>], kp: usize, pin: DVector<f64>, j: usize) -> Result<()> {
    let tol = PIN_TOL * (1.0 + pin.amax());
    for (k, v) in y[..kp].iter_mut().enumerate() {
        if v.amax() > tol {
            return Err(Error::CausalityViolation { j, k: k + 1 });
        }
        v.fill(0.0);
    }
    if (&y[kp] - &pin).amax() > tol {
        return Err(Error::CausalityViolation { j, k: kp + 1 });
    }
    y[kp] = pin;
    Ok(())
}

/// One-shot undisturbed prediction from data.
pub fn predict_undisturbed(
    data: &RealTrajectory,
    lag: usize,
    init: &RealTrajectory,
    inputs: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    DataPredictor::new(data, lag, inputs.len(), None)?.predict_undisturbed(init, inputs)
}

/// One-shot joint prediction from disturbed data with recorded w.
pub fn predict_joint(
    data: &RealTrajectory,
    lag: usize,
    basis: &JointBasis,
    init: &InitialCondition,
    inputs: &PceTrajectory,
    w_coeffs: &PceTrajectory,
) -> Result<Prediction> {
    DisturbedDataPredictor::new(data, lag, basis.horizon, None)?.predict(basis, init, inputs, w_coeffs)
}

/// Serializable summary of a solve, for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub blocks: Vec<BlockReport>,
    pub max_residual: f64,
    #[serde(with = "vector_serde")]
    pub residuals: DVector<f64>,
}

impl From<&Prediction> for SolveReport {
    fn from(p: &Prediction) -> Self {
        Self {
            blocks: p.blocks.clone(),
            max_residual: p.residuals.iter().copied().fold(0.0, f64::max),
            residuals: DVector::from_vec(p.residuals.clone()),
        }
    }
}
