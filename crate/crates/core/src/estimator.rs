//! Disturbance estimation from disturbed I/O data and synthesis of
//! undisturbed trajectories from the same record.
//!
//! The estimate is the least-squares residual of y_k regressed on the lagged
//! vector z_k = [u_{[k-ℓ,k-1]}; y_{[k-ℓ,k-1]}]. The residual is exactly
//! consistent with the identified model, so zeroing it in a Hankel stack
//! yields trajectories of that model without disturbance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::closed_loop::Plant;
use crate::error::{dim_err, Error, Result};
use crate::hankel::{hankel, PeCertificate};
use crate::io::{matrix_serde, vectors_serde};
use crate::linalg::{self, concat, split, PINV_RTOL, RANK_RTOL};
use crate::model::{RealTrajectory, VarxModel};
use crate::predictor::PIN_TOL;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DisturbanceEstimate {
    /// Time of the first estimate; entry i estimates w_{start+i}, which enters y_{start+i+1}.
    pub start: i64,
    #[serde(with = "vectors_serde")]
    pub w: Vec<DVector<f64>>,
    /// Identified [B̂ Â] acting on z_k.
    #[serde(with = "matrix_serde")]
    pub theta: DMatrix<f64>,
    pub lag: usize,
}

impl DisturbanceEstimate {
    pub fn model(&self, n_u: usize) -> Result<VarxModel> {
        let l = self.lag;
        let b = self.theta.columns(0, l * n_u).into_owned();
        let a = self.theta.columns(l * n_u, self.theta.ncols() - l * n_u).into_owned();
        VarxModel::with_unit_disturbance(a, b, l)
    }
}

/// Lagged regressors z_k for k = start+ℓ .. end, one column each.
fn regressors(data: &RealTrajectory, lag: usize) -> DMatrix<f64> {
    let cols = data.len() - lag;
    let nz = lag * (data.n_u + data.n_y);
    let mut z = DMatrix::zeros(nz, cols);
    for c in 0..cols {
        z.set_column(c, &z_vector(&data.u[c..c + lag], &data.y[c..c + lag]));
    }
    z
}

fn z_vector(u: &[DVector<f64>], y: &[DVector<f64>]) -> DVector<f64> {
    concat(&[concat(u), concat(y)])
}

/// Least-squares estimate of the disturbance realizations in a disturbed record.
pub fn estimate_disturbances(data: &RealTrajectory, lag: usize) -> Result<DisturbanceEstimate> {
    if lag == 0 {
        return Err(Error::Precondition("lag must be positive".into()));
    }
    let nz = lag * (data.n_u + data.n_y);
    if data.len() < lag + nz {
        return Err(Error::TooShort { needed: lag + nz, got: data.len() });
    }
    let z = regressors(data, lag);
    if linalg::rank(&z, RANK_RTOL) < nz {
        return Err(Error::RankDeficientData);
    }
    let mut y = DMatrix::zeros(data.n_y, z.ncols());
    for c in 0..z.ncols() {
        y.set_column(c, &data.y[c + lag]);
    }
    let theta = &y * linalg::pinv(&z, PINV_RTOL);
    let res = &y - &theta * &z;
    let w = (0..res.ncols()).map(|c| res.column(c).into_owned()).collect();
    Ok(DisturbanceEstimate { start: data.start + lag as i64 - 1, w, theta, lag })
}

fn check_alignment(data: &RealTrajectory, est: &DisturbanceEstimate) -> Result<()> {
    if est.start != data.start + est.lag as i64 - 1 || est.w.len() + est.lag != data.len() {
        return Err(dim_err("disturbance estimate not aligned with data"));
    }
    if est.w.first().is_some_and(|w| w.len() != data.n_y) {
        return Err(dim_err("estimate dimension"));
    }
    Ok(())
}

/// Undisturbed continuation of `init` under `inputs` (T̂ = inputs.len() steps),
/// synthesized from the disturbed record with estimated disturbances pinned to zero.
pub fn generate_undisturbed_trajectory(
    data: &RealTrajectory,
    est: &DisturbanceEstimate,
    init: &RealTrajectory,
    inputs: &[DVector<f64>],
) -> Result<RealTrajectory> {
    check_alignment(data, est)?;
    let (l, nu, ny) = (est.lag, data.n_u, data.n_y);
    let t_hat = inputs.len();
    if t_hat == 0 {
        return Err(Error::Precondition("T̂ must be positive".into()));
    }
    if init.len() != l {
        return Err(Error::InitTooShort { expected: l, got: init.len() });
    }
    if init.n_u != nu || init.n_y != ny || inputs.iter().any(|u| u.len() != nu) {
        return Err(dim_err("initial window or input dimension"));
    }
    let depth = l + t_hat;
    if data.len() < depth {
        return Err(Error::TooShort { needed: depth, got: data.len() });
    }
    let hu = hankel(&data.u, depth)?;
    let hy = hankel(&data.y, depth)?;
    let hw = hankel(&est.w, t_hat)?;
    let io = linalg::vstack(&[&hu, &hy.rows(0, l * ny).into_owned()]);
    let cert = PeCertificate::of(&io, io.nrows());
    cert.require()?;
    let pinned = linalg::vstack(&[&io, &hw]);
    let output = hy.rows(l * ny, t_hat * ny).into_owned();
    let rhs = concat(&[concat(&init.u), concat(inputs), concat(&init.y), DVector::zeros(t_hat * ny)]);
    let g = linalg::pinv(&pinned, PINV_RTOL) * &rhs;
    let residual = (&pinned * &g - &rhs).norm();
    if residual > PIN_TOL * (1.0 + rhs.norm()) {
        return Err(Error::InfeasibleStack { residual });
    }
    let y = split(&(output * g), ny);
    RealTrajectory::with_dims(init.end() + 1, nu, ny, inputs.to_vec(), y, None)
}

/// Chains T̂-step syntheses, re-seeding each chunk with the last ℓ generated steps.
/// Returns the initial window followed by `inputs.len()` synthesized steps.
pub fn generate_undisturbed_long(
    data: &RealTrajectory,
    est: &DisturbanceEstimate,
    t_hat: usize,
    init: &RealTrajectory,
    inputs: &[DVector<f64>],
) -> Result<RealTrajectory> {
    if t_hat == 0 {
        return Err(Error::Precondition("T̂ must be positive".into()));
    }
    let mut out = init.without_w();
    for chunk in inputs.chunks(t_hat) {
        let window = out.tail(est.lag)?;
        let next = generate_undisturbed_trajectory(data, est, &window, chunk)?;
        out.extend(&next)?;
    }
    Ok(out)
}

/// u = K z + v with dither v uniform on [-dither, dither].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLaw {
    #[serde(with = "matrix_serde")]
    pub k: DMatrix<f64>,
    pub dither: f64,
    pub iterations: usize,
}

impl FeedbackLaw {
    pub fn zero(n_u: usize, n_z: usize, dither: f64) -> Self {
        Self { k: DMatrix::zeros(n_u, n_z), dither, iterations: 0 }
    }

    /// Input for past-I/O vector z plus dither drawn from `rng`.
    pub fn input<R: Rng>(&self, z: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let mut u = &self.k * z;
        if self.dither > 0.0 {
            for x in u.iter_mut() {
                *x += rng.gen_range(-self.dither..=self.dither);
            }
        }
        u
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NearOriginTrajectory {
    /// v_1..v_T̂ (per chunk concatenation for long runs).
    #[serde(with = "vectors_serde")]
    pub v: Vec<DVector<f64>>,
    #[serde(with = "vectors_serde")]
    pub z: Vec<DVector<f64>>,
    /// I/O embedded in z: times 1-ℓ .. T̂-1.
    pub io: RealTrajectory,
    /// Condition number of the one-step Hankel matrix of the returned z.
    pub condition_number: f64,
}

/// Synthesizes an undisturbed closed-loop trajectory in (v, z) coordinates,
/// pinning v to `v`, the first z to `z1`, and the estimated disturbances to zero.
pub fn generate_undisturbed_near_origin(
    data: &RealTrajectory,
    est: &DisturbanceEstimate,
    k: &DMatrix<f64>,
    z1: &DVector<f64>,
    v: &[DVector<f64>],
) -> Result<NearOriginTrajectory> {
    check_alignment(data, est)?;
    let (l, nu, ny) = (est.lag, data.n_u, data.n_y);
    let nz = l * (nu + ny);
    let t_hat = v.len();
    if t_hat == 0 {
        return Err(Error::Precondition("T̂ must be positive".into()));
    }
    if k.shape() != (nu, nz) || z1.len() != nz || v.iter().any(|x| x.len() != nu) {
        return Err(dim_err("feedback gain, z1 or v dimension"));
    }
    let zs: Vec<DVector<f64>> = regressors(data, l).column_iter().map(|c| c.into_owned()).collect();
    let vs: Vec<DVector<f64>> = zs.iter().enumerate().map(|(i, z)| &data.u[i + l] - k * z).collect();
    if zs.len() < t_hat {
        return Err(Error::TooShort { needed: t_hat + l, got: data.len() });
    }
    let hv = hankel(&vs, t_hat)?;
    let hz = hankel(&zs, t_hat)?;
    let hw = hankel(&est.w, t_hat)?;
    let io = linalg::vstack(&[&hv, &hz.rows(0, nz).into_owned()]);
    PeCertificate::of(&io, io.nrows()).require()?;
    let pinned = linalg::vstack(&[&io, &hw]);
    let rhs = concat(&[concat(v), z1.clone(), DVector::zeros(t_hat * ny)]);
    let g = linalg::pinv(&pinned, PINV_RTOL) * &rhs;
    let residual = (&pinned * &g - &rhs).norm();
    if residual > PIN_TOL * (1.0 + rhs.norm()) {
        return Err(Error::InfeasibleStack { residual });
    }
    let mut z = vec![z1.clone()];
    z.extend(split(&(hz.rows(nz, (t_hat - 1) * nz) * g), nz));
    let io = io_from_z(&z, l, nu, ny)?;
    let condition_number = linalg::condition_number(&hankel(&z, 1)?);
    Ok(NearOriginTrajectory { v: v.to_vec(), z, io, condition_number })
}

/// Chunked near-origin synthesis; each chunk starts from the last z of the previous one.
pub fn generate_near_origin_long(
    data: &RealTrajectory,
    est: &DisturbanceEstimate,
    k: &DMatrix<f64>,
    t_hat: usize,
    z1: &DVector<f64>,
    v: &[DVector<f64>],
) -> Result<NearOriginTrajectory> {
    if t_hat < 2 {
        return Err(Error::Precondition("chunked synthesis needs T̂ ≥ 2".into()));
    }
    let mut z = vec![z1.clone()];
    let mut used = Vec::new();
    for chunk in v.chunks(t_hat) {
        if chunk.len() < 2 {
            break;
        }
        let last = z.last().cloned().expect("nonempty");
        let part = generate_undisturbed_near_origin(data, est, k, &last, chunk)?;
        z.extend(part.z.into_iter().skip(1));
        used.extend(chunk[..chunk.len() - 1].iter().cloned());
    }
    let (nu, ny) = (data.n_u, data.n_y);
    let io = io_from_z(&z, est.lag, nu, ny)?;
    let condition_number = linalg::condition_number(&hankel(&z, 1)?);
    Ok(NearOriginTrajectory { v: used, z, io, condition_number })
}

fn io_from_z(z: &[DVector<f64>], l: usize, nu: usize, ny: usize) -> Result<RealTrajectory> {
    let z1 = &z[0];
    let mut u = split(&z1.rows(0, l * nu).into_owned(), nu);
    let mut y = split(&z1.rows(l * nu, l * ny).into_owned(), ny);
    for zk in &z[1..] {
        u.push(zk.rows((l - 1) * nu, nu).into_owned());
        y.push(zk.rows(l * nu + (l - 1) * ny, ny).into_owned());
    }
    RealTrajectory::with_dims(1 - l as i64, nu, ny, u, y, None)
}

/// Discrete-time LQR gain for u = K z (sign included), by Riccati iteration.
/// Returns None when the iteration does not converge.
pub fn dlqr(f: &DMatrix<f64>, g: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut p = q.clone();
    for _ in 0..20_000 {
        let gt_p = g.transpose() * &p;
        let s = r + &gt_p * g;
        let kk = s.clone().cholesky()?.solve(&(&gt_p * f));
        let next = q + f.transpose() * &p * (f - g * &kk);
        let next = 0.5 * (&next + next.transpose());
        if !next.iter().all(|x| x.is_finite()) || linalg::max_abs(&next) > 1e14 {
            return None;
        }
        let done = linalg::max_abs(&(&next - &p)) <= 1e-11 * linalg::max_abs(&next).max(1.0);
        p = next;
        if done {
            let gt_p = g.transpose() * &p;
            let s = r + &gt_p * g;
            return Some(-s.cholesky()?.solve(&(&gt_p * f)));
        }
    }
    None
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackSearch {
    pub lag: usize,
    /// Steps recorded per identification experiment.
    pub sample_len: usize,
    /// Excitation amplitude during identification experiments.
    pub excitation: f64,
    /// Dither of the returned law.
    pub dither: f64,
    pub max_iter: usize,
    pub test_window: usize,
    pub radius_factor: f64,
    /// Fixed test radius; overrides `radius_factor` when set.
    pub radius: Option<f64>,
    pub overflow: f64,
}

impl Default for FeedbackSearch {
    fn default() -> Self {
        Self::new(2)
    }
}

impl FeedbackSearch {
    pub fn new(lag: usize) -> Self {
        Self {
            lag,
            sample_len: 60,
            excitation: 1.0,
            dither: 1e-3,
            max_iter: 20,
            test_window: 50,
            radius_factor: 10.0,
            radius: None,
            overflow: 1e12,
        }
    }
}

pub fn record_policy<R: Rng>(
    plant: &mut dyn Plant,
    k: &DMatrix<f64>,
    amp: f64,
    steps: usize,
    overflow: f64,
    rng: &mut R,
) -> Result<RealTrajectory> {
    let mut traj = plant.reset();
    let l = traj.len();
    for _ in 0..steps {
        let z = z_vector(&traj.u[traj.len() - l..], &traj.y[traj.len() - l..]);
        let mut u = k * z;
        for x in u.iter_mut() {
            *x += if amp > 0.0 { rng.gen_range(-amp..=amp) } else { 0.0 };
        }
        let y = plant.step(&u)?;
        if y.iter().any(|v| !v.is_finite() || v.abs() > overflow) {
            return Err(Error::PlantUnbounded);
        }
        let step = RealTrajectory::with_dims(traj.end() + 1, traj.n_u, traj.n_y, vec![u], vec![y], None)?;
        traj.extend(&step)?;
    }
    Ok(traj)
}

/// Iterative experiment: record, estimate, synthesize an LQR gain on the
/// identified model, then test that the closed loop stays bounded.
pub fn find_stabilizing_feedback<R: Rng>(plant: &mut dyn Plant, params: &FeedbackSearch, rng: &mut R) -> Result<FeedbackLaw> {
    let l = params.lag;
    let init = plant.reset();
    if init.len() != l {
        return Err(Error::InitTooShort { expected: l, got: init.len() });
    }
    let (nu, ny) = (init.n_u, init.n_y);
    let nz = l * (nu + ny);
    let y0 = init.y.iter().map(|y| y.norm()).fold(0.0, f64::max);
    let radius = params.radius.unwrap_or(params.radius_factor * y0.max(1.0));
    let mut k = DMatrix::zeros(nu, nz);
    for it in 1..=params.max_iter {
        let rec = record_policy(plant, &k, params.excitation, params.sample_len, params.overflow, rng)?;
        // a failed identification round keeps the previous gain
        match estimate_disturbances(&rec, l) {
            Ok(est) => {
                let (f, g, _) = est.model(nu)?.companion();
                if let Some(next) = dlqr(&f, &g, &DMatrix::identity(nz, nz), &DMatrix::identity(nu, nu)) {
                    k = next;
                }
            }
            Err(Error::RankDeficientData) => log::debug!("feedback search round {it}: record not informative"),
            Err(e) => return Err(e),
        }
        let test = record_policy(plant, &k, params.dither, params.test_window, params.overflow, rng);
        match test {
            Ok(t) if t.y.iter().all(|y| y.norm() <= radius) => {
                return Ok(FeedbackLaw { k, dither: params.dither, iterations: it });
            }
            Ok(_) | Err(Error::PlantUnbounded) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::MaxIterationsExceeded(params.max_iter))
}
