//! Experiment configuration and the commands behind the `ddpce` binary.
//!
//! A run is described by one JSON document. Missing fields take the aircraft
//! defaults; `--seed` and `--out` on the command line override the document.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::aircraft::{self, InitLaw};
use crate::closed_loop::{
    benchmark_schemes, prepare_data, run_closed_loop, sample_seeds, synthesize_from_record, synthesize_scheme_iii, BenchmarkSettings,
    DataSettings, DisturbanceSource, Scheme, SchemeController, SchemeData, VarxPlant,
};
use crate::error::{Error, Result};
use crate::estimator::{self, find_stabilizing_feedback};
use crate::io::{read_json, read_pce_csv, read_trajectory_csv, write_histogram_csv, write_json, write_pce_csv, write_trajectory_csv};
use crate::model::{varx_from_state_space, RealTrajectory, StateSpaceModel, VarxModel};
use crate::ocp::{open_loop_experiment, ChanceConstraint, OcpWeights, OpenLoopSettings};
use crate::pce::{build_joint_basis, DisturbanceSpec, PceTrajectory};
use crate::predictor::{CoefficientDynamics, DataPredictor, DisturbedDataPredictor, InitialCondition, Prediction, SolveReport};
use crate::rng;
use crate::socp::Settings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSource {
    Aircraft,
    Varx(VarxModel),
    /// Converted to VARX form at the smallest admissible lag.
    StateSpace(StateSpaceModel),
    /// JSON file holding one of the other variants.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    /// Input coefficients over times 1..N (PCE CSV); zero input when absent.
    pub input_file: Option<PathBuf>,
    /// Predict from disturbed data with recorded w instead of undisturbed data.
    pub disturbed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// Defaults to the aircraft law for the aircraft model.
    pub disturbance: Option<DisturbanceSpec>,
    pub horizon: usize,
    pub open_loop_horizon: usize,
    pub steps: usize,
    pub data: DataSettings,
    /// Recorded trajectory used instead of simulated data where applicable.
    pub data_file: Option<PathBuf>,
    /// Write the w column when collecting disturbed data.
    pub record_w: bool,
    pub schemes: Vec<Scheme>,
    /// Default: identity weights.
    pub weights: Option<OcpWeights>,
    /// Default: the aircraft constraint for the aircraft model, none otherwise.
    pub constraints: Option<Vec<ChanceConstraint>>,
    pub solver: Settings,
    /// Initial window law of the control experiments.
    pub init: Option<InitLaw>,
    pub predict: PredictConfig,
    pub open_loop: OpenLoopSettings,
    pub benchmark: BenchmarkSettings,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSource::Aircraft,
            disturbance: None,
            horizon: aircraft::HORIZON,
            open_loop_horizon: aircraft::OPEN_LOOP_HORIZON,
            steps: aircraft::CLOSED_LOOP_STEPS,
            data: DataSettings::new(aircraft::LAG, aircraft::N_Y),
            data_file: None,
            record_w: true,
            schemes: Scheme::ALL.to_vec(),
            weights: None,
            constraints: None,
            solver: Settings::default(),
            init: None,
            predict: PredictConfig::default(),
            open_loop: OpenLoopSettings::default(),
            benchmark: BenchmarkSettings::default(),
            seed: 0,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg: Self = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(vec![format!("config: cannot read {}: {e}", p.display())]))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("config: {e}")]))?
            }
            None => Self::default(),
        };
        if let Some(s) = overrides.seed {
            cfg.seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }

    /// Resolves defaults and checks every field, reporting all problems at once.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut bad = Vec::new();
        let model = match load_model(&self.model) {
            Ok(m) => Some(m),
            Err(e) => {
                bad.push(format!("model: {e}"));
                None
            }
        };
        let is_aircraft = self.model == ModelSource::Aircraft;
        let spec = match (&self.disturbance, is_aircraft) {
            (Some(s), _) => s.clone(),
            (None, true) => aircraft::disturbance_spec(),
            (None, false) => {
                bad.push("disturbance: required for non-aircraft models".into());
                DisturbanceSpec { components: Vec::new() }
            }
        };
        if let Err(e) = spec.validate() {
            bad.push(format!("disturbance: {e}"));
        }
        for (name, v) in [("horizon", self.horizon), ("open_loop_horizon", self.open_loop_horizon), ("steps", self.steps)] {
            if v == 0 {
                bad.push(format!("{name}: must be positive"));
            }
        }
        if !(self.data.excitation > 0.0) {
            bad.push("data.excitation: must be positive".into());
        }
        if self.data.t_hat < 2 {
            bad.push("data.t_hat: must be at least 2".into());
        }
        if self.schemes.is_empty() {
            bad.push("schemes: at least one scheme required".into());
        }
        if self.benchmark.samples == 0 {
            bad.push("benchmark.samples: must be positive".into());
        }
        if self.open_loop.samples == 0 || self.open_loop.bins == 0 {
            bad.push("open_loop.samples, open_loop.bins: must be positive".into());
        }
        let s = &self.solver;
        if s.max_iter == 0 {
            bad.push("solver.max_iter: must be positive".into());
        }
        for (name, v) in [
            ("solver.tol_gap_abs", s.tol_gap_abs),
            ("solver.tol_gap_rel", s.tol_gap_rel),
            ("solver.tol_feas", s.tol_feas),
            ("solver.tol_infeas", s.tol_infeas),
        ] {
            if !(v > 0.0) {
                bad.push(format!("{name}: must be positive"));
            }
        }
        if !(s.step_fraction > 0.0 && s.step_fraction < 1.0) {
            bad.push("solver.step_fraction: must lie in (0, 1)".into());
        }
        if !(s.reduced_accuracy >= 1.0) {
            bad.push("solver.reduced_accuracy: must be at least 1".into());
        }
        for (name, f) in [("data_file", &self.data_file), ("predict.input_file", &self.predict.input_file)] {
            if let Some(p) = f {
                if !p.exists() {
                    bad.push(format!("{name}: {} does not exist", p.display()));
                }
            }
        }
        let Some(model) = model else {
            return Err(Error::Config(bad));
        };
        let (nu, ny, l) = (model.n_u(), model.n_y(), model.lag);
        if spec.dim() != model.n_w() && !spec.components.is_empty() {
            bad.push(format!("disturbance: {} components, model expects {}", spec.dim(), model.n_w()));
        }
        if self.data.len <= l {
            bad.push(format!("data.len: must exceed the lag {l}"));
        }
        let weights = self.weights.clone().unwrap_or_else(|| OcpWeights {
            q: DMatrix::identity(ny, ny),
            r: DMatrix::identity(nu, nu),
        });
        match weights.validate(nu, ny) {
            Err(Error::Config(v)) => bad.extend(v.into_iter().map(|m| format!("weights: {m}"))),
            Err(e) => bad.push(format!("weights: {e}")),
            Ok(()) => {}
        }
        let constraints = match (&self.constraints, is_aircraft) {
            (Some(c), _) => c.clone(),
            (None, true) => vec![aircraft::chance_constraint()],
            (None, false) => Vec::new(),
        };
        for (i, c) in constraints.iter().enumerate() {
            for h in [self.horizon, self.open_loop_horizon] {
                match c.validate(ny, h) {
                    Err(Error::Config(v)) => bad.extend(v.into_iter().map(|m| format!("constraints[{i}]: {m}"))),
                    Err(e) => bad.push(format!("constraints[{i}]: {e}")),
                    Ok(()) => {}
                }
            }
        }
        let init = self.init.clone().unwrap_or_else(|| {
            if is_aircraft {
                InitLaw::default()
            } else {
                InitLaw { center: vec![0.0; ny], half_width: 0.0, input: 0.0 }
            }
        });
        if init.center.len() != ny {
            bad.push(format!("init.center: {} entries, model has {ny} outputs", init.center.len()));
        }
        if !(init.half_width >= 0.0) {
            bad.push("init.half_width: must be non-negative".into());
        }
        let mut data = self.data.clone();
        data.search.lag = l;
        if data.init.center.len() != ny {
            data.init.center = vec![0.0; ny];
        }
        for c in &self.open_loop.components {
            if *c >= ny {
                bad.push(format!("open_loop.components: {c} out of range for {ny} outputs"));
            }
        }
        let recorded = match &self.data_file {
            Some(p) if p.exists() => match read_trajectory_csv(p) {
                Ok(t) if t.n_u != nu || t.n_y != ny => {
                    bad.push(format!("data_file: dimensions ({}, {}) differ from the model ({nu}, {ny})", t.n_u, t.n_y));
                    None
                }
                Ok(t) if t.len() <= l => {
                    bad.push(format!("data_file: {} steps, need more than {l}", t.len()));
                    None
                }
                Ok(t) => Some(t),
                Err(e) => {
                    bad.push(format!("data_file: {e}"));
                    None
                }
            },
            _ => None,
        };
        if !bad.is_empty() {
            return Err(Error::Config(bad));
        }
        Ok(Resolved { cfg: self.clone(), model, spec, weights, constraints, init, data, recorded })
    }
}

fn load_model(src: &ModelSource) -> Result<VarxModel> {
    match src {
        ModelSource::Aircraft => Ok(aircraft::varx()),
        ModelSource::Varx(m) => {
            m.validate()?;
            Ok(m.clone())
        }
        ModelSource::StateSpace(m) => {
            let l = crate::model::lag(&m.a, &m.c)?;
            varx_from_state_space(m, l)
        }
        ModelSource::File { path } => {
            let inner: ModelSource = read_json(path)?;
            if matches!(inner, ModelSource::File { .. }) {
                return Err(Error::Config(vec!["model file may not point to another file".into()]));
            }
            load_model(&inner)
        }
    }
}

/// Validated configuration with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub model: VarxModel,
    pub spec: DisturbanceSpec,
    pub weights: OcpWeights,
    pub constraints: Vec<ChanceConstraint>,
    pub init: InitLaw,
    pub data: DataSettings,
    pub recorded: Option<RealTrajectory>,
}

impl Resolved {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    fn data_seed(&self) -> u64 {
        rng::substream(self.cfg.seed, "data", 0)
    }

    fn scheme_data(&self, scheme: Scheme) -> Result<SchemeData> {
        prepare_data(scheme, &self.model, &self.spec, &self.data, self.data_seed())
    }

    fn controller(&self, scheme: Scheme, horizon: usize) -> Result<(SchemeController, SchemeData)> {
        let d = self.scheme_data(scheme)?;
        let c = SchemeController::new(scheme, &d.data, self.model.lag, horizon, &self.spec, &self.weights, &self.constraints, &self.cfg.solver)?;
        Ok((c, d))
    }

    fn init_window(&self) -> Result<RealTrajectory> {
        let mut r = rng::stream(self.cfg.seed, "init", 0);
        self.init.sample(&mut r, self.model.lag, self.model.n_u())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Collect,
    Estimate,
    Predict,
    Ocp,
    ClosedLoop,
    Benchmark,
}

/// Runs a command and returns a JSON summary of what was written.
pub fn run(cmd: Command, cfg: &ExperimentConfig, validate_only: bool) -> Result<Value> {
    let r = cfg.resolve()?;
    if validate_only {
        return Ok(json!({ "valid": true, "n_u": r.model.n_u(), "n_y": r.model.n_y(), "lag": r.model.lag }));
    }
    std::fs::create_dir_all(&r.cfg.out)?;
    match cmd {
        Command::Collect => cmd_collect(&r),
        Command::Estimate => cmd_estimate(&r),
        Command::Predict => cmd_predict(&r),
        Command::Ocp => cmd_ocp(&r),
        Command::ClosedLoop => cmd_closedloop(&r),
        Command::Benchmark => cmd_benchmark(&r),
    }
}

/// Simulates and records undisturbed and disturbed data.
pub fn cmd_collect(r: &Resolved) -> Result<Value> {
    let und = r.scheme_data(Scheme::I)?;
    let mut dist = r.scheme_data(Scheme::II)?;
    if !r.cfg.record_w {
        dist.data = dist.data.without_w();
    }
    write_trajectory_csv(&r.out("data_undisturbed.csv"), &und.data)?;
    write_trajectory_csv(&r.out("data_disturbed.csv"), &dist.data)?;
    let meta = json!({
        "seed": r.cfg.seed,
        "data_seed": r.data_seed(),
        "len": und.data.len(),
        "n_u": r.model.n_u(),
        "n_y": r.model.n_y(),
        "n_w": r.model.n_w(),
        "lag": r.model.lag,
        "excitation": r.data.excitation,
        "record_w": r.cfg.record_w,
        "condition_undisturbed": und.condition_number,
        "condition_disturbed": dist.condition_number,
        "files": ["data_undisturbed.csv", "data_disturbed.csv"],
    });
    write_json(&r.out("collect.json"), &meta)?;
    Ok(meta)
}

/// Estimates disturbances in a disturbed record and synthesizes undisturbed data.
pub fn cmd_estimate(r: &Resolved) -> Result<Value> {
    let seed = r.data_seed();
    let art = match &r.recorded {
        None => synthesize_scheme_iii(&r.model, &r.spec, &r.data, seed)?,
        Some(t) => {
            let law = search_feedback(r)?;
            synthesize_from_record(t, r.model.lag, &law.k, &r.data, &mut rng::stream(seed, "excitation", 0))?
        }
    };
    let est = &art.estimate;
    let w_start = est.start;
    let aligned = art.record.window(w_start, est.w.len())?;
    let with_w = RealTrajectory::with_dims(w_start, aligned.n_u, aligned.n_y, aligned.u, aligned.y, Some(est.w.clone()))?;
    write_trajectory_csv(&r.out("w_hat.csv"), &with_w)?;
    write_trajectory_csv(&r.out("data_synthesized.csv"), &art.data.data)?;
    write_trajectory_csv(&r.out("record.csv"), &art.record)?;
    let meta = json!({
        "seed": r.cfg.seed,
        "record_len": art.record.len(),
        "w_hat_len": est.w.len(),
        "w_hat_start": w_start,
        "theta": crate::io::MatrixDoc::from(&est.theta),
        "feedback": crate::io::MatrixDoc::from(&art.data.feedback),
        "condition_number": art.data.condition_number,
        "files": ["w_hat.csv", "data_synthesized.csv", "record.csv"],
    });
    write_json(&r.out("estimate.json"), &meta)?;
    Ok(meta)
}

fn write_prediction(r: &Resolved, p: &Prediction, prefix: &str) -> Result<()> {
    write_pce_csv(&r.out(&format!("{prefix}_u_pce.csv")), &p.u)?;
    write_pce_csv(&r.out(&format!("{prefix}_y_pce.csv")), &p.y)?;
    write_moments_csv(&r.out(&format!("{prefix}_moments.csv")), &p.y)
}

/// Rows `k,component,mean,std`; components are 1-based.
pub fn write_moments_csv(path: &Path, t: &PceTrajectory) -> Result<()> {
    let mut rows = vec!["k,component,mean,std".to_string()];
    for i in 0..t.len() {
        let k = t.start + i as i64;
        let (m, s) = (t.mean(k)?, t.std(k)?);
        for c in 0..t.dim {
            rows.push(format!("{k},{},{:?},{:?}", c + 1, m[c], s[c]));
        }
    }
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(path, rows.join("\n") + "\n")?;
    Ok(())
}

/// Coefficient prediction over the control horizon for given input coefficients.
pub fn cmd_predict(r: &Resolved) -> Result<Value> {
    let n = r.cfg.horizon;
    let l = r.model.lag;
    let basis = build_joint_basis(&r.spec, n)?;
    let inputs = match &r.cfg.predict.input_file {
        Some(p) => read_pce_csv(p, r.model.n_u(), basis.len())?,
        None => PceTrajectory::zeros(1, n, r.model.n_u(), basis.len()),
    };
    if inputs.start != 1 || inputs.len() != n {
        return Err(Error::DimensionMismatch(format!("input coefficients must cover times 1..{n}")));
    }
    let init = InitialCondition::Deterministic(r.init_window()?);
    let prediction = if r.cfg.predict.disturbed {
        let data = match &r.recorded {
            Some(t) if t.w.is_some() => t.clone(),
            Some(_) => return Err(Error::Precondition("data_file has no w column".into())),
            None => r.scheme_data(Scheme::II)?.data,
        };
        let w = PceTrajectory::disturbance(&basis, &r.spec)?;
        let w = PceTrajectory { start: 0, dim: w.dim, basis_len: w.basis_len, coeffs: w.coeffs[..n].to_vec() };
        DisturbedDataPredictor::new(&data, l, n, None)?.predict(&basis, &init, &inputs, &w)?
    } else {
        let data = match &r.recorded {
            Some(t) => t.without_w(),
            None => r.scheme_data(Scheme::I)?.data,
        };
        DataPredictor::new(&data, l, n, None)?.propagate_all(&basis, &r.spec, &init, &inputs)?
    };
    write_prediction(r, &prediction, "prediction")?;
    let report = SolveReport::from(&prediction);
    write_json(&r.out("predict.json"), &report)?;
    Ok(json!({ "horizon": n, "basis_len": basis.len(), "max_residual": report.max_residual }))
}

/// Open-loop OCP at the long horizon, with Monte-Carlo constraint checks and histograms.
pub fn cmd_ocp(r: &Resolved) -> Result<Value> {
    let n = r.cfg.open_loop_horizon;
    let scheme = r.cfg.schemes[0];
    let dynamics: Box<dyn CoefficientDynamics> = match (&r.recorded, scheme) {
        (Some(t), Scheme::II) => Box::new(DisturbedDataPredictor::new(t, r.model.lag, n, None)?),
        (Some(t), _) => Box::new(DataPredictor::new(&t.without_w(), r.model.lag, n, None)?),
        (None, _) => SchemeController::new(scheme, &r.scheme_data(scheme)?.data, r.model.lag, n, &r.spec, &r.weights, &r.constraints, &r.cfg.solver)?
            .into_dynamics(),
    };
    let basis = build_joint_basis(&r.spec, n)?;
    let init = InitialCondition::Deterministic(r.init.center_window(r.model.lag, r.model.n_u())?);
    let mut settings = r.cfg.open_loop.clone();
    settings.solver = r.cfg.solver.clone();
    settings.seed = rng::substream(r.cfg.seed, "open-loop", 0);
    let rep = open_loop_experiment(dynamics.as_ref(), &basis, &r.spec, &init, &r.weights, &r.constraints, &settings)?;
    write_pce_csv(&r.out("ocp_u_pce.csv"), &rep.solution.u)?;
    write_pce_csv(&r.out("ocp_y_pce.csv"), &rep.solution.y)?;
    write_moments_csv(&r.out("ocp_moments.csv"), &rep.solution.y)?;
    let mut files = Vec::new();
    for h in &rep.histograms {
        let name = format!("hist_y{}.csv", h.component + 1);
        write_histogram_csv(&r.out(&name), &h.steps)?;
        files.push(name);
    }
    let summary = json!({
        "scheme": scheme,
        "horizon": n,
        "cost": rep.solution.cost,
        "iterations": rep.solution.iterations,
        "samples": rep.samples,
        "min_frequency": rep.min_frequency(),
        "satisfaction": rep.satisfaction,
        "histograms": files,
    });
    write_json(&r.out("ocp.json"), &summary)?;
    Ok(summary)
}

/// One receding-horizon run per configured scheme on a shared initial window and disturbance stream.
pub fn cmd_closedloop(r: &Resolved) -> Result<Value> {
    let (init_seed, dist_seed) = sample_seeds(r.cfg.seed, 0);
    let mut ir = rng::stream(init_seed, "window", 0);
    let init = r.init.sample(&mut ir, r.model.lag, r.model.n_u())?;
    let mut reports = Vec::new();
    for &s in &r.cfg.schemes {
        let (ctrl, _) = r.controller(s, r.cfg.horizon)?;
        let source = DisturbanceSource::Random { spec: r.spec.clone(), seed: dist_seed };
        let mut plant = VarxPlant::new(r.model.clone(), init.clone(), source)?;
        let rep = run_closed_loop(&ctrl, &mut plant, r.cfg.steps, Some(dist_seed));
        write_trajectory_csv(&r.out(&format!("closedloop_{}.csv", s.name())), &rep.trajectory)?;
        reports.push(rep);
    }
    write_json(&r.out("closedloop.json"), &reports)?;
    let failed: Vec<_> = reports.iter().filter_map(|x| x.failed.clone()).collect();
    let summary = json!({
        "schemes": reports.iter().map(|x| json!({
            "scheme": x.scheme, "J_cl": x.cost, "time_mean_s": x.time_mean_s, "time_sd_s": x.time_sd_s,
            "nonzeros": x.nonzeros, "failed": x.failed,
        })).collect::<Vec<_>>(),
    });
    if let Some(f) = failed.first() {
        log::warn!("closed-loop run failed: {f}");
    }
    Ok(summary)
}

/// Table-2 benchmark over seeded samples.
pub fn cmd_benchmark(r: &Resolved) -> Result<Value> {
    let mut ctrls = Vec::new();
    for &s in &r.cfg.schemes {
        ctrls.push(r.controller(s, r.cfg.horizon)?.0);
    }
    let mut settings = r.cfg.benchmark.clone();
    settings.seed = r.cfg.seed;
    settings.steps = r.cfg.steps;
    settings.init = r.init.clone();
    let rep = benchmark_schemes(&r.model, &r.spec, &ctrls, &settings)?;
    write_table2(&r.out("table2.csv"), &rep.rows)?;
    write_json(&r.out("benchmark.json"), &rep)?;
    for (s, runs) in rep.runs.iter().enumerate() {
        for x in runs {
            write_trajectory_csv(&r.out(&format!("runs/sample{s:04}_{}.csv", x.scheme.name())), &x.trajectory)?;
        }
    }
    for f in &rep.failures {
        log::warn!("{f}");
    }
    Ok(json!({ "rows": rep.rows, "max_difference_i_ii": rep.max_difference_i_ii, "failures": rep.failures.len() }))
}

/// Header `scheme,nonzeros,time_mean_s,time_sd_s,J_cl`.
pub fn write_table2(path: &Path, rows: &[crate::closed_loop::BenchmarkRow]) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scheme", "nonzeros", "time_mean_s", "time_sd_s", "J_cl"])?;
    for row in rows {
        w.write_record(&[
            row.scheme.name().to_string(),
            row.nonzeros.to_string(),
            format!("{:?}", row.time_mean_s),
            format!("{:?}", row.time_sd_s),
            format!("{:?}", row.j_cl),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Feedback search on the configured plant.
fn search_feedback(r: &Resolved) -> Result<estimator::FeedbackLaw> {
    let seed = r.data_seed();
    let init = r.data.init.center_window(r.model.lag, r.model.n_u())?;
    let source = DisturbanceSource::Random { spec: r.spec.clone(), seed: rng::substream(seed, "data-disturbance", 0) };
    let mut plant = VarxPlant::new(r.model.clone(), init, source)?;
    find_stabilizing_feedback(&mut plant, &r.data.search, &mut rng::stream(seed, "feedback-search", 0))
}
