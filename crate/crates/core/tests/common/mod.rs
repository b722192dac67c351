//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use ddpce::model::{simulate_varx, RealTrajectory, StateSpaceModel, VarxModel};
use ddpce::pce::{disturbance_coeffs, DisturbanceSpec, Distribution, JointBasis, PceTrajectory};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec<R: Rng>(r: &mut R, n: usize, amp: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-amp..=amp))
}

pub fn uniform_mat<R: Rng>(r: &mut R, rows: usize, cols: usize, amp: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.gen_range(-amp..=amp))
}

/// VARX with unit disturbance on the most recent lag and small random coefficients.
pub fn random_varx<R: Rng>(r: &mut R, n_y: usize, n_u: usize, lag: usize) -> VarxModel {
    let a = uniform_mat(r, n_y, lag * n_y, 0.6 / (lag * n_y) as f64);
    let b = uniform_mat(r, n_y, lag * n_u, 1.0);
    VarxModel::with_unit_disturbance(a, b, lag).unwrap()
}

pub fn random_spec<R: Rng>(r: &mut R, n_w: usize) -> DisturbanceSpec {
    let comps = (0..n_w)
        .map(|_| {
            if r.gen_bool(0.5) {
                let lo = r.gen_range(-1.0..0.5);
                Distribution::Uniform { lower: lo, upper: lo + r.gen_range(0.1..2.0) }
            } else {
                Distribution::Gaussian { mean: r.gen_range(-0.5..0.5), variance: r.gen_range(0.01..1.0) }
            }
        })
        .collect();
    DisturbanceSpec::new(comps).unwrap()
}

pub fn random_window<R: Rng>(r: &mut R, start: i64, len: usize, n_u: usize, n_y: usize) -> RealTrajectory {
    let u = (0..len).map(|_| uniform_vec(r, n_u, 1.0)).collect();
    let y = (0..len).map(|_| uniform_vec(r, n_y, 1.0)).collect();
    RealTrajectory::with_dims(start, n_u, n_y, u, y, None).unwrap()
}

/// Undisturbed record of `len` steps driven by uniform inputs.
pub fn undisturbed_data<R: Rng>(r: &mut R, m: &VarxModel, len: usize) -> RealTrajectory {
    let (l, nu, ny) = (m.lag, m.n_u(), m.n_y());
    let mut t = random_window(r, 0, l, nu, ny);
    let u: Vec<_> = (0..len - l).map(|_| uniform_vec(r, nu, 1.0)).collect();
    let w = vec![DVector::zeros(m.n_w()); len - l];
    let rest = simulate_varx(m, &t, &u, &w).unwrap().without_w();
    t.extend(&rest).unwrap();
    t
}

/// Disturbed record with the realized w attached (entry k enters y_{k+1}).
pub fn disturbed_data<R: Rng>(r: &mut R, m: &VarxModel, spec: &DisturbanceSpec, len: usize) -> RealTrajectory {
    let (l, nu, ny) = (m.lag, m.n_u(), m.n_y());
    let init = random_window(r, 0, l, nu, ny);
    let wi: Vec<_> = (0..l).map(|_| spec.sample(r)).collect();
    let init = RealTrajectory::with_dims(0, nu, ny, init.u, init.y, Some(wi)).unwrap();
    let u: Vec<_> = (0..len - l).map(|_| uniform_vec(r, nu, 1.0)).collect();
    let w: Vec<_> = (0..len - l).map(|_| spec.sample(r)).collect();
    let rest = simulate_varx(m, &init, &u, &w).unwrap();
    let mut t = init;
    t.extend(&rest).unwrap();
    t
}

/// Smallest undisturbed data length for a predictor with this lag and horizon.
pub fn min_len(n_u: usize, n_y: usize, lag: usize, horizon: usize) -> usize {
    (lag + horizon) * (n_u + 1) + lag * n_y - 1
}

/// Coefficient recursion of the model, index by index:
/// y^j_k = Σ_i Â_i y^j + B̂_i u^j + Ê_i w^j over the previous ℓ steps.
pub fn pce_recursion(
    m: &VarxModel,
    basis: &JointBasis,
    spec: &DisturbanceSpec,
    init: &RealTrajectory,
    u: &PceTrajectory,
) -> PceTrajectory {
    let (l, nu, ny, nw) = (m.lag, m.n_u(), m.n_y(), m.n_w());
    let n = basis.horizon;
    let len = basis.len();
    let mut y = PceTrajectory::zeros(1, n, ny, len);
    for j in 0..len {
        // histories over times 1-ℓ..N, index t + ℓ - 1
        let mut uh: Vec<DVector<f64>> = Vec::new();
        let mut yh: Vec<DVector<f64>> = Vec::new();
        let mut wh: Vec<DVector<f64>> = Vec::new();
        for i in 0..l {
            let t = 1 - l as i64 + i as i64;
            uh.push(if j == 0 { init.u[i].clone() } else { DVector::zeros(nu) });
            yh.push(if j == 0 { init.y[i].clone() } else { DVector::zeros(ny) });
            wh.push(w_coeff(basis, spec, t, j, nw));
        }
        for k in 1..=n as i64 {
            let base = (k - 1) as usize;
            let mut yk = DVector::zeros(ny);
            for i in 0..l {
                yk += m.a_hat.columns(i * ny, ny) * &yh[base + i];
                yk += m.b_hat.columns(i * nu, nu) * &uh[base + i];
                yk += m.e_hat.columns(i * nw, nw) * &wh[base + i];
            }
            y.coeffs[base].set_column(j, &yk);
            yh.push(yk);
            uh.push(u.coeff(k, j).unwrap());
            wh.push(w_coeff(basis, spec, k, j, nw));
        }
    }
    y
}

fn w_coeff(basis: &JointBasis, spec: &DisturbanceSpec, t: i64, j: usize, nw: usize) -> DVector<f64> {
    if t < 0 || t as usize >= basis.horizon {
        return DVector::zeros(nw);
    }
    disturbance_coeffs(basis, spec, t as usize).unwrap().column(j).into_owned()
}

/// Mean and covariance of y_1..y_N for deterministic inputs, by the companion-form
/// recursion z_{k+1} = F z_k + G u_k + H w_{k-1}, y_k = Θ z_k + w_{k-1}.
pub fn moment_recursion(
    m: &VarxModel,
    spec: &DisturbanceSpec,
    init: &RealTrajectory,
    inputs: &[DVector<f64>],
) -> (Vec<DVector<f64>>, Vec<DMatrix<f64>>) {
    let (f, g, h) = m.companion();
    let theta = m.theta();
    let mut mz = DVector::from_iterator(
        m.n_z(),
        init.u.iter().flat_map(|v| v.iter().copied()).chain(init.y.iter().flat_map(|v| v.iter().copied())).collect::<Vec<_>>(),
    );
    let mut pz = DMatrix::zeros(m.n_z(), m.n_z());
    let mu = spec.mean();
    let sw = DMatrix::from_diagonal(&spec.variance());
    let mut means = Vec::new();
    let mut covs = Vec::new();
    for u in inputs {
        means.push(&theta * &mz + &mu);
        covs.push(&theta * &pz * theta.transpose() + &sw);
        mz = &f * &mz + &g * u + &h * &mu;
        pz = &f * &pz * f.transpose() + &h * &sw * h.transpose();
    }
    (means, covs)
}

/// Random state-space model with a well-conditioned observability matrix.
pub fn random_observable<R: Rng>(r: &mut R, nx: usize, nu: usize, ny: usize, nw: usize) -> StateSpaceModel {
    loop {
        let a = uniform_mat(r, nx, nx, 1.0 / (nx as f64).sqrt());
        let c = uniform_mat(r, ny, nx, 1.0);
        let l = match ddpce::model::lag(&a, &c) {
            Ok(l) => l,
            Err(_) => continue,
        };
        let o = ddpce::model::observability_matrix(&a, &c, l);
        if ddpce::linalg::condition_number(&o) > 1e4 {
            continue;
        }
        let b = uniform_mat(r, nx, nu, 1.0);
        let e = uniform_mat(r, nx, nw, 1.0);
        return StateSpaceModel::new(a, b, c, e).unwrap();
    }
}

/// Least-squares residual of y_k on z_k via the normal equations.
pub fn ls_residual_oracle(data: &RealTrajectory, lag: usize) -> Vec<DVector<f64>> {
    let cols = data.len() - lag;
    let nz = lag * (data.n_u + data.n_y);
    let mut z = DMatrix::zeros(nz, cols);
    let mut y = DMatrix::zeros(data.n_y, cols);
    for c in 0..cols {
        let v: Vec<f64> = data.u[c..c + lag]
            .iter()
            .flat_map(|x| x.iter().copied())
            .chain(data.y[c..c + lag].iter().flat_map(|x| x.iter().copied()))
            .collect();
        z.set_column(c, &DVector::from_vec(v));
        y.set_column(c, &data.y[c + lag]);
    }
    let zzt = &z * z.transpose();
    let theta = (&y * z.transpose()) * zzt.try_inverse().unwrap();
    let res = &y - theta * &z;
    (0..cols).map(|c| res.column(c).into_owned()).collect()
}

/// Causal random input coefficients: u^j_k = 0 for k ≤ k'(j).
pub fn causal_inputs<R: Rng>(r: &mut R, basis: &JointBasis, n_u: usize) -> PceTrajectory {
    let n = basis.horizon;
    let mut u = PceTrajectory::zeros(1, n, n_u, basis.len());
    for j in 0..basis.len() {
        let first = if j == 0 { 1 } else { basis.k_prime(j).unwrap() + 1 };
        for k in first..=n {
            u.coeffs[k - 1].set_column(j, &uniform_vec(r, n_u, 1.0));
        }
    }
    u
}

pub fn rel_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}
