//! Receding-horizon runs against a simulated plant and the three-scheme
//! benchmark.
//!
//! Plants follow a pending-input convention: `step(u_k)` returns `y_k`,
//! which depends on the inputs and outputs of the previous ℓ steps and on
//! `w_{k-1}`; `u_k` first affects `y_{k+1}`. A controller at time k therefore
//! sees the window of times k-ℓ..k-1, exactly the initial window of the OCP.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aircraft::InitLaw;
use crate::error::{dim_err, Error, Result};
use crate::estimator::{self, dlqr, estimate_disturbances, generate_near_origin_long, DisturbanceEstimate, FeedbackSearch};
use crate::io::matrix_serde;
use crate::model::{RealTrajectory, VarxModel};
use crate::ocp::{build_ocp, solve_ocp, ChanceConstraint, OcpSolution, OcpWeights};
use crate::pce::{build_joint_basis, DisturbanceSpec, JointBasis};
use crate::predictor::{CoefficientDynamics, DataPredictor, DisturbedDataPredictor, InitialCondition};
use crate::rng;
use crate::socp::Settings;

/// Sample-in/sample-out port to a plant.
pub trait Plant {
    fn lag(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;
    /// Restarts from the initial window (times 1-ℓ..0) and returns it.
    fn reset(&mut self) -> RealTrajectory;
    /// Applies u_k and returns y_k.
    fn step(&mut self, u: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DisturbanceSource {
    Zero,
    /// I.i.d. draws from `spec`; the stream continues across resets.
    Random { spec: DisturbanceSpec, seed: u64 },
    /// w_0, w_1, … in order, replayed from the start on every reset; exhausting it is an error.
    Sequence {
        #[serde(with = "crate::io::vectors_serde")]
        w: Vec<DVector<f64>>,
    },
}

/// Ground-truth VARX plant.
#[derive(Debug, Clone)]
pub struct VarxPlant {
    model: VarxModel,
    init: RealTrajectory,
    source: DisturbanceSource,
    rng: Option<ChaCha8Rng>,
    pos: usize,
    window: RealTrajectory,
    history: RealTrajectory,
}

impl VarxPlant {
    pub fn new(model: VarxModel, init: RealTrajectory, source: DisturbanceSource) -> Result<Self> {
        model.validate()?;
        if init.len() != model.lag {
            return Err(Error::InitTooShort { expected: model.lag, got: init.len() });
        }
        if init.n_u != model.n_u() || init.n_y != model.n_y() {
            return Err(dim_err("initial window dimensions"));
        }
        let rng = match &source {
            DisturbanceSource::Random { spec, seed } => {
                spec.validate()?;
                if spec.dim() != model.n_w() {
                    return Err(dim_err("disturbance dimension differs from the model"));
                }
                Some(rng::stream(*seed, "disturbance", 0))
            }
            _ => None,
        };
        let init = init.without_w();
        let mut p = Self { model, window: init.clone(), history: init.clone(), init, source, rng, pos: 0 };
        p.reset();
        Ok(p)
    }

    fn next_w(&mut self) -> Result<DVector<f64>> {
        let nw = self.model.n_w();
        let w = match &self.source {
            DisturbanceSource::Zero => DVector::zeros(nw),
            DisturbanceSource::Random { spec, .. } => spec.sample(self.rng.as_mut().expect("seeded")),
            DisturbanceSource::Sequence { w } => {
                let v = w.get(self.pos).cloned().ok_or(Error::TooShort { needed: self.pos + 1, got: w.len() })?;
                if v.len() != nw {
                    return Err(dim_err("disturbance dimension"));
                }
                v
            }
        };
        self.pos += 1;
        Ok(w)
    }

    /// Initial window and every executed step with (u_k, y_k, w_k).
    pub fn history(&self) -> &RealTrajectory {
        &self.history
    }

    pub fn model(&self) -> &VarxModel {
        &self.model
    }

    fn try_reset(&mut self) -> Result<()> {
        let nw = self.model.n_w();
        let mut w = vec![DVector::zeros(nw); self.init.len()];
        *w.last_mut().expect("lag ≥ 1") = self.next_w()?;
        self.window = RealTrajectory::with_dims(self.init.start, self.init.n_u, self.init.n_y, self.init.u.clone(), self.init.y.clone(), Some(w))?;
        self.history = self.window.clone();
        Ok(())
    }
}

impl Plant for VarxPlant {
    fn lag(&self) -> usize {
        self.model.lag
    }
    fn n_u(&self) -> usize {
        self.model.n_u()
    }
    fn n_y(&self) -> usize {
        self.model.n_y()
    }

    fn reset(&mut self) -> RealTrajectory {
        if matches!(self.source, DisturbanceSource::Sequence { .. }) {
            self.pos = 0;
        }
        // an empty sequence leaves the window without w_0
        let _ = self.try_reset();
        self.init.clone()
    }

    fn step(&mut self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let m = &self.model;
        let (l, nu, ny, nw) = (m.lag, m.n_u(), m.n_y(), m.n_w());
        if u.len() != nu {
            return Err(dim_err("input dimension"));
        }
        let ws = self.window.w.as_ref().expect("plant window carries w");
        let mut y = DVector::zeros(ny);
        for i in 0..l {
            y += m.a_hat.columns(i * ny, ny) * &self.window.y[i];
            y += m.b_hat.columns(i * nu, nu) * &self.window.u[i];
            y += m.e_hat.columns(i * nw, nw) * &ws[i];
        }
        let w = self.next_w()?;
        let step = RealTrajectory::with_dims(self.window.end() + 1, nu, ny, vec![u.clone()], vec![y.clone()], Some(vec![w]))?;
        self.history.extend(&step)?;
        self.window = self.history.tail(l)?;
        Ok(y)
    }
}

/// Runs u = K z + v with v uniform on [-amp, amp] for `steps` steps after a reset.
/// The result starts with the initial window.
pub fn record<R: Rng>(plant: &mut dyn Plant, k: &DMatrix<f64>, amp: f64, steps: usize, rng: &mut R) -> Result<RealTrajectory> {
    estimator::record_policy(plant, k, amp, steps, f64::INFINITY, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    I,
    II,
    III,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::I, Scheme::II, Scheme::III];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::I => "I",
            Scheme::II => "II",
            Scheme::III => "III",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Scheme::I),
            "II" | "2" => Ok(Scheme::II),
            "III" | "3" => Ok(Scheme::III),
            _ => Err(Error::Config(vec![format!("unknown scheme {s:?}")])),
        }
    }
}

/// Data-driven receding-horizon controller of one scheme.
pub struct SchemeController {
    pub scheme: Scheme,
    dynamics: Box<dyn CoefficientDynamics>,
    pub basis: JointBasis,
    pub spec: DisturbanceSpec,
    pub weights: OcpWeights,
    pub constraints: Vec<ChanceConstraint>,
    pub settings: Settings,
}

impl SchemeController {
    /// Schemes I and III read (u, y) only; Scheme II needs the recorded w.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        scheme: Scheme,
        data: &RealTrajectory,
        lag: usize,
        horizon: usize,
        spec: &DisturbanceSpec,
        weights: &OcpWeights,
        constraints: &[ChanceConstraint],
        settings: &Settings,
    ) -> Result<Self> {
        let dynamics: Box<dyn CoefficientDynamics> = match scheme {
            Scheme::I | Scheme::III => Box::new(DataPredictor::new(&data.without_w(), lag, horizon, None)?),
            Scheme::II => Box::new(DisturbedDataPredictor::new(data, lag, horizon, None)?),
        };
        Ok(Self {
            scheme,
            dynamics,
            basis: build_joint_basis(spec, horizon)?,
            spec: spec.clone(),
            weights: weights.clone(),
            constraints: constraints.to_vec(),
            settings: settings.clone(),
        })
    }

    pub fn horizon(&self) -> usize {
        self.dynamics.horizon()
    }

    pub fn lag(&self) -> usize {
        self.dynamics.lag()
    }

    pub fn nonzeros(&self) -> usize {
        self.dynamics.nonzeros(self.basis.len())
    }

    pub fn dynamics(&self) -> &dyn CoefficientDynamics {
        self.dynamics.as_ref()
    }

    pub fn into_dynamics(self) -> Box<dyn CoefficientDynamics> {
        self.dynamics
    }

    /// Assembles and solves the OCP for a measured ℓ-step window.
    pub fn solve(&self, window: &RealTrajectory) -> Result<OcpSolution> {
        let init = InitialCondition::Deterministic(window.without_w());
        let p = build_ocp(self.dynamics.as_ref(), &self.basis, &self.spec, &init, &self.weights, &self.constraints)?;
        solve_ocp(&p, &self.settings)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: Scheme,
    pub seed: Option<u64>,
    /// Applied u_k and measured y_k for k = 1..steps.
    pub trajectory: RealTrajectory,
    pub init: RealTrajectory,
    pub cost: f64,
    pub solve_times: Vec<f64>,
    pub time_mean_s: f64,
    pub time_sd_s: f64,
    pub iterations: Vec<usize>,
    pub nonzeros: usize,
    pub failed: Option<String>,
}

impl SchemeReport {
    /// Σ_k y_kᵀQy_k + u_kᵀRu_k over the logged steps.
    pub fn recompute_cost(&self, w: &OcpWeights) -> f64 {
        closed_loop_cost(&self.trajectory, w)
    }
}

pub fn closed_loop_cost(t: &RealTrajectory, w: &OcpWeights) -> f64 {
    t.u.iter().zip(&t.y).map(|(u, y)| y.dot(&(&w.q * y)) + u.dot(&(&w.r * u))).sum()
}

pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

/// Closed loop: each step solves the OCP on the last ℓ measurements and applies the mean first input.
pub fn run_closed_loop(ctrl: &SchemeController, plant: &mut dyn Plant, steps: usize, seed: Option<u64>) -> SchemeReport {
    let init = plant.reset();
    let (nu, ny, l) = (plant.n_u(), plant.n_y(), plant.lag());
    let mut hist = init.clone();
    let mut us = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);
    let mut times = Vec::with_capacity(steps);
    let mut iterations = Vec::with_capacity(steps);
    let mut failed = None;
    for _ in 0..steps {
        let window = match hist.tail(l) {
            Ok(w) => w,
            Err(e) => {
                failed = Some(e.to_string());
                break;
            }
        };
        let t0 = Instant::now();
        let sol = ctrl.solve(&window);
        times.push(t0.elapsed().as_secs_f64());
        let sol = match sol {
            Ok(s) => s,
            Err(e) => {
                failed = Some(format!("{} ({})", e, e.code()));
                break;
            }
        };
        iterations.push(sol.iterations);
        let u = sol.first_input();
        let y = match plant.step(&u) {
            Ok(y) => y,
            Err(e) => {
                failed = Some(e.to_string());
                break;
            }
        };
        let step = RealTrajectory::with_dims(hist.end() + 1, nu, ny, vec![u.clone()], vec![y.clone()], None).expect("consistent step");
        hist.extend(&step).expect("contiguous");
        us.push(u);
        ys.push(y);
    }
    let trajectory = RealTrajectory::with_dims(1, nu, ny, us, ys, None).expect("aligned logs");
    let cost = closed_loop_cost(&trajectory, &ctrl.weights);
    let (time_mean_s, time_sd_s) = mean_sd(&times);
    SchemeReport {
        scheme: ctrl.scheme,
        seed,
        trajectory,
        init,
        cost,
        solve_times: times,
        time_mean_s,
        time_sd_s,
        iterations,
        nonzeros: ctrl.nonzeros(),
        failed,
    }
}

/// Max-abs difference between the (u, y) logs of two runs.
pub fn max_trajectory_difference(a: &RealTrajectory, b: &RealTrajectory) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.u.iter()
        .zip(&b.u)
        .chain(a.y.iter().zip(&b.y))
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
}

/// Offline data collection and synthesis for the three schemes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSettings {
    pub len: usize,
    /// Amplitude of the uniform excitation added to the feedback input.
    pub excitation: f64,
    /// Chunk length of the near-origin synthesis for Scheme III.
    pub t_hat: usize,
    pub search: FeedbackSearch,
    /// Initial window of the recording experiments.
    pub init: InitLaw,
}

impl Default for DataSettings {
    fn default() -> Self {
        Self::new(2, 3)
    }
}

impl DataSettings {
    pub fn new(lag: usize, n_y: usize) -> Self {
        let mut search = FeedbackSearch::new(lag);
        search.radius = Some(100.0);
        Self { len: 90, excitation: 10.0, t_hat: 10, search, init: InitLaw { center: vec![0.0; n_y], half_width: 0.0, input: 0.0 } }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeData {
    pub scheme: Scheme,
    pub data: RealTrajectory,
    /// Gain used while recording.
    #[serde(with = "matrix_serde")]
    pub feedback: DMatrix<f64>,
    pub condition_number: f64,
}

/// LQR gain on the true companion form, used to keep recorded data bounded.
pub fn true_model_gain(model: &VarxModel) -> Result<DMatrix<f64>> {
    let (f, g, _) = model.companion();
    dlqr(&f, &g, &DMatrix::identity(model.n_z(), model.n_z()), &DMatrix::identity(model.n_u(), model.n_u()))
        .ok_or_else(|| Error::NumericalBreakdown("Riccati iteration did not converge".into()))
}

/// Prepares the data each scheme's controller is built from.
///
/// I: undisturbed record of the true plant. II: disturbed record with w.
/// III: disturbed record without w; a stabilizing gain is searched on the
/// plant, disturbances are estimated and an undisturbed trajectory near the
/// origin is synthesized.
pub fn prepare_data(
    scheme: Scheme,
    model: &VarxModel,
    spec: &DisturbanceSpec,
    settings: &DataSettings,
    seed: u64,
) -> Result<SchemeData> {
    let l = model.lag;
    let mut rng_init = rng::stream(seed, "data-init", 0);
    let init = settings.init.sample(&mut rng_init, l, model.n_u())?;
    let mut exc = rng::stream(seed, "excitation", 0);
    let disturbed = DisturbanceSource::Random { spec: spec.clone(), seed: rng::substream(seed, "data-disturbance", 0) };
    let steps = settings.len.checked_sub(l).ok_or(Error::TooShort { needed: l, got: settings.len })?;
    match scheme {
        Scheme::I | Scheme::II => {
            let k = true_model_gain(model)?;
            let source = if scheme == Scheme::I { DisturbanceSource::Zero } else { disturbed };
            let mut plant = VarxPlant::new(model.clone(), init, source)?;
            record(&mut plant, &k, settings.excitation, steps, &mut exc)?;
            let mut data = plant.history().clone();
            if scheme == Scheme::I {
                data = data.without_w();
            }
            let condition_number = crate::linalg::condition_number(&crate::hankel::pe_stack(&data, l, 1)?);
            Ok(SchemeData { scheme, data, feedback: k, condition_number })
        }
        Scheme::III => Ok(synthesize_scheme_iii(model, spec, settings, seed)?.data),
    }
}

/// Intermediate products of the Scheme III preparation.
#[derive(Debug, Clone)]
pub struct SynthesisArtifacts {
    /// Disturbed record the disturbances were estimated from.
    pub record: RealTrajectory,
    pub estimate: DisturbanceEstimate,
    pub data: SchemeData,
}

pub fn synthesize_scheme_iii(model: &VarxModel, spec: &DisturbanceSpec, settings: &DataSettings, seed: u64) -> Result<SynthesisArtifacts> {
    let l = model.lag;
    let mut rng_init = rng::stream(seed, "data-init", 0);
    let init = settings.init.sample(&mut rng_init, l, model.n_u())?;
    let disturbed = DisturbanceSource::Random { spec: spec.clone(), seed: rng::substream(seed, "data-disturbance", 0) };
    let steps = settings.len.checked_sub(l).ok_or(Error::TooShort { needed: l, got: settings.len })?;
    let mut plant = VarxPlant::new(model.clone(), init, disturbed)?;
    let mut rs = rng::stream(seed, "feedback-search", 0);
    let law = estimator::find_stabilizing_feedback(&mut plant, &settings.search, &mut rs)?;
    let mut exc = rng::stream(seed, "excitation", 0);
    let record = record(&mut plant, &law.k, settings.excitation, steps, &mut exc)?.without_w();
    synthesize_from_record(&record, l, &law.k, settings, &mut exc)
}

/// Estimates disturbances in `record` and synthesizes an undisturbed trajectory near the origin under `k`.
pub fn synthesize_from_record<R: Rng>(
    record: &RealTrajectory,
    lag: usize,
    k: &DMatrix<f64>,
    settings: &DataSettings,
    rng: &mut R,
) -> Result<SynthesisArtifacts> {
    let record = record.without_w();
    let estimate = estimate_disturbances(&record, lag)?;
    let nz = lag * (record.n_u + record.n_y);
    let need = settings.len + settings.len / settings.t_hat.max(2) + 2;
    let v: Vec<DVector<f64>> = (0..need)
        .map(|_| DVector::from_fn(record.n_u, |_, _| rng.gen_range(-settings.excitation..=settings.excitation)))
        .collect();
    let syn = generate_near_origin_long(&record, &estimate, k, settings.t_hat, &DVector::zeros(nz), &v)?;
    if syn.io.len() < settings.len {
        return Err(Error::TooShort { needed: settings.len, got: syn.io.len() });
    }
    let data = syn.io.window(syn.io.start, settings.len)?;
    Ok(SynthesisArtifacts {
        record,
        estimate,
        data: SchemeData { scheme: Scheme::III, data, feedback: k.clone(), condition_number: syn.condition_number },
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSettings {
    pub samples: usize,
    pub steps: usize,
    pub seed: u64,
    pub init: InitLaw,
    pub parallel: bool,
    /// Keep every per-sample report (for trajectory export).
    pub keep_runs: bool,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        Self { samples: 1000, steps: 30, seed: 0, init: InitLaw::default(), parallel: true, keep_runs: false }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub scheme: Scheme,
    pub nonzeros: usize,
    pub time_mean_s: f64,
    pub time_sd_s: f64,
    #[serde(rename = "J_cl")]
    pub j_cl: f64,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    /// Closed-loop cost per sample and scheme (NaN for failed runs).
    pub costs: Vec<Vec<f64>>,
    /// Largest |I − II| trajectory difference over samples, when both ran.
    pub max_difference_i_ii: Option<f64>,
    pub failures: Vec<String>,
    #[serde(skip)]
    pub runs: Vec<Vec<SchemeReport>>,
}

/// Seeds of the per-sample initial window and disturbance stream.
pub fn sample_seeds(root: u64, sample: usize) -> (u64, u64) {
    (rng::substream(root, "init", sample as u64), rng::substream(root, "disturbance", sample as u64))
}

/// One closed-loop run per scheme on a shared initial window and disturbance stream.
pub fn run_sample(
    model: &VarxModel,
    spec: &DisturbanceSpec,
    controllers: &[SchemeController],
    init: &RealTrajectory,
    disturbance_seed: u64,
    steps: usize,
) -> Result<Vec<SchemeReport>> {
    controllers
        .iter()
        .map(|c| {
            let source = DisturbanceSource::Random { spec: spec.clone(), seed: disturbance_seed };
            let mut plant = VarxPlant::new(model.clone(), init.clone(), source)?;
            Ok(run_closed_loop(c, &mut plant, steps, Some(disturbance_seed)))
        })
        .collect()
}

pub fn benchmark_schemes(
    model: &VarxModel,
    spec: &DisturbanceSpec,
    controllers: &[SchemeController],
    settings: &BenchmarkSettings,
) -> Result<BenchmarkReport> {
    let one = |s: usize| -> Result<Vec<SchemeReport>> {
        let (init_seed, dist_seed) = sample_seeds(settings.seed, s);
        let mut r = rng::stream(init_seed, "window", 0);
        let init = settings.init.sample(&mut r, model.lag, model.n_u())?;
        run_sample(model, spec, controllers, &init, dist_seed, settings.steps)
    };
    let runs: Vec<Result<Vec<SchemeReport>>> = if settings.parallel {
        (0..settings.samples).into_par_iter().map(one).collect()
    } else {
        (0..settings.samples).map(one).collect()
    };
    let mut costs = Vec::with_capacity(runs.len());
    let mut failures = Vec::new();
    let mut per_scheme: Vec<(Vec<f64>, Vec<f64>, usize)> = vec![(Vec::new(), Vec::new(), 0); controllers.len()];
    let mut max_diff: Option<f64> = None;
    let i_idx = controllers.iter().position(|c| c.scheme == Scheme::I);
    let ii_idx = controllers.iter().position(|c| c.scheme == Scheme::II);
    let mut kept = Vec::new();
    for (s, run) in runs.into_iter().enumerate() {
        let reports = run?;
        let mut row = Vec::with_capacity(reports.len());
        for (i, r) in reports.iter().enumerate() {
            if let Some(msg) = &r.failed {
                failures.push(format!("sample {s} scheme {}: {msg}", r.scheme.name()));
                per_scheme[i].2 += 1;
                row.push(f64::NAN);
                continue;
            }
            per_scheme[i].0.extend(&r.solve_times);
            per_scheme[i].1.push(r.cost);
            row.push(r.cost);
        }
        if let (Some(a), Some(b)) = (i_idx, ii_idx) {
            if reports[a].failed.is_none() && reports[b].failed.is_none() {
                let d = max_trajectory_difference(&reports[a].trajectory, &reports[b].trajectory);
                max_diff = Some(max_diff.map_or(d, |m| m.max(d)));
            }
        }
        costs.push(row);
        if settings.keep_runs {
            kept.push(reports);
        }
    }
    let rows = controllers
        .iter()
        .zip(per_scheme)
        .map(|(c, (times, js, fails))| {
            let (tm, tsd) = mean_sd(&times);
            BenchmarkRow {
                scheme: c.scheme,
                nonzeros: c.nonzeros(),
                time_mean_s: tm,
                time_sd_s: tsd,
                j_cl: mean_sd(&js).0,
                successes: js.len(),
                failures: fails,
            }
        })
        .collect();
    Ok(BenchmarkReport { rows, costs, max_difference_i_ii: max_diff, failures, runs: kept })
}
