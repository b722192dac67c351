mod common;

use common::*;
use ddpce::aircraft::{self, InitLaw};
use ddpce::closed_loop::{
    benchmark_schemes, closed_loop_cost, max_trajectory_difference, prepare_data, record, run_closed_loop, sample_seeds,
    BenchmarkSettings, DataSettings, DisturbanceSource, Plant, Scheme, SchemeController, VarxPlant,
};
use ddpce::model::{simulate_varx, RealTrajectory};
use ddpce::socp::Settings;
use ddpce::Error;
use nalgebra::{DMatrix, DVector};

fn controller(scheme: Scheme) -> SchemeController {
    let spec = aircraft::disturbance_spec();
    let data = prepare_data(scheme, &aircraft::varx(), &spec, &DataSettings::default(), 17).unwrap().data;
    SchemeController::new(
        scheme,
        &data,
        2,
        10,
        &spec,
        &aircraft::weights(),
        &[aircraft::chance_constraint()],
        &Settings::default(),
    )
    .unwrap()
}

fn plant(init: &RealTrajectory, seed: u64) -> VarxPlant {
    let source = DisturbanceSource::Random { spec: aircraft::disturbance_spec(), seed };
    VarxPlant::new(aircraft::varx(), init.clone(), source).unwrap()
}

fn aircraft_init(seed: u64) -> RealTrajectory {
    InitLaw::default().sample(&mut rng(seed), 2, 1).unwrap()
}

#[test]
fn plant_follows_the_pending_input_convention() {
    let m = aircraft::varx();
    let mut r = rng(1);
    let init = random_window(&mut r, -1, 2, 1, 3);
    let n = 8;
    let w: Vec<_> = (0..=n).map(|_| uniform_vec(&mut r, 3, 1.0)).collect();
    let u: Vec<_> = (0..n).map(|_| uniform_vec(&mut r, 1, 1.0)).collect();
    let mut p = VarxPlant::new(m.clone(), init.clone(), DisturbanceSource::Sequence { w: w.clone() }).unwrap();
    assert_eq!(p.reset(), init);
    let ys: Vec<_> = u.iter().map(|uk| p.step(uk).unwrap()).collect();

    let mut init_w = vec![DVector::zeros(3); 2];
    init_w[1] = w[0].clone();
    let with_w = RealTrajectory::with_dims(-1, 1, 3, init.u.clone(), init.y.clone(), Some(init_w)).unwrap();
    let sim = simulate_varx(&m, &with_w, &u, &w[1..=n]).unwrap();
    for (a, b) in ys.iter().zip(&sim.y) {
        assert!((a - b).amax() < 1e-12);
    }
    assert_eq!(p.history().len(), 2 + n);
    assert_eq!(p.history().w.as_ref().unwrap()[2..], w[1..=n]);
}

#[test]
fn plant_errors() {
    let m = aircraft::varx();
    let init = InitLaw::default().center_window(2, 1).unwrap();
    let mut p = VarxPlant::new(m.clone(), init.clone(), DisturbanceSource::Sequence { w: vec![DVector::zeros(3); 2] }).unwrap();
    p.step(&DVector::zeros(1)).unwrap();
    assert!(matches!(p.step(&DVector::zeros(1)), Err(Error::TooShort { .. })));
    assert!(p.step(&DVector::zeros(2)).is_err());
    let short = init.tail(1).unwrap();
    assert!(matches!(VarxPlant::new(m, short, DisturbanceSource::Zero), Err(Error::InitTooShort { .. })));
}

#[test]
fn reset_continues_the_disturbance_stream() {
    let init = aircraft_init(2);
    let mut p = plant(&init, 5);
    let u = DVector::zeros(1);
    let a: Vec<_> = (0..3).map(|_| p.step(&u).unwrap()).collect();
    p.reset();
    let b: Vec<_> = (0..3).map(|_| p.step(&u).unwrap()).collect();
    assert_ne!(a, b);
    let mut fresh = plant(&init, 5);
    let c: Vec<_> = (0..3).map(|_| fresh.step(&u).unwrap()).collect();
    assert_eq!(a, c);
}

#[test]
fn recording_returns_window_plus_steps() {
    let init = aircraft_init(3);
    let mut p = plant(&init, 6);
    let k = DMatrix::zeros(1, 8);
    let t = record(&mut p, &k, 1.0, 20, &mut rng(4)).unwrap();
    assert_eq!((t.start, t.len()), (-1, 22));
    assert!(t.u[2..].iter().all(|u| u[0].abs() <= 1.0));
    assert_eq!(p.history().len(), 22);
}

#[test]
fn zero_disturbance_at_the_origin_costs_nothing() {
    let ctrl = controller(Scheme::I);
    let origin = InitLaw { center: vec![0.0; 3], half_width: 0.0, input: 0.0 }.center_window(2, 1).unwrap();
    let mut p = VarxPlant::new(aircraft::varx(), origin, DisturbanceSource::Zero).unwrap();
    let rep = run_closed_loop(&ctrl, &mut p, 10, None);
    assert!(rep.failed.is_none());
    assert!(rep.cost < 1e-12, "{}", rep.cost);
}

#[test]
fn reported_cost_matches_the_log() {
    let ctrl = controller(Scheme::I);
    let mut p = plant(&aircraft_init(4), 7);
    let rep = run_closed_loop(&ctrl, &mut p, 30, Some(7));
    assert!(rep.failed.is_none(), "{:?}", rep.failed);
    assert_eq!(rep.trajectory.len(), 30);
    assert_eq!(rep.solve_times.len(), 30);
    let manual: f64 = rep.trajectory.u.iter().zip(&rep.trajectory.y).map(|(u, y)| y.norm_squared() + u.norm_squared()).sum();
    assert!((rep.cost - manual).abs() <= 1e-9 * manual);
    assert!((rep.recompute_cost(&aircraft::weights()) - rep.cost).abs() <= 1e-9 * manual);
    assert_eq!(closed_loop_cost(&rep.trajectory, &aircraft::weights()), rep.cost);
}

#[test]
fn runs_are_reproducible() {
    let ctrl = controller(Scheme::II);
    let init = aircraft_init(5);
    let a = run_closed_loop(&ctrl, &mut plant(&init, 9), 15, Some(9));
    let b = run_closed_loop(&ctrl, &mut plant(&init, 9), 15, Some(9));
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.cost.to_bits(), b.cost.to_bits());
}

#[test]
fn schemes_one_and_two_agree_in_closed_loop() {
    let (c1, c2, c3) = (controller(Scheme::I), controller(Scheme::II), controller(Scheme::III));
    let init = aircraft_init(6);
    let r1 = run_closed_loop(&c1, &mut plant(&init, 11), 30, Some(11));
    let r2 = run_closed_loop(&c2, &mut plant(&init, 11), 30, Some(11));
    let r3 = run_closed_loop(&c3, &mut plant(&init, 11), 30, Some(11));
    assert!(r1.failed.is_none() && r2.failed.is_none() && r3.failed.is_none());
    let d = max_trajectory_difference(&r1.trajectory, &r2.trajectory);
    assert!(d <= 1e-3, "{d:e}");
    assert!((r1.cost - r2.cost).abs() <= 5e-3 * r1.cost);
    assert!(max_trajectory_difference(&r1.trajectory, &r3.trajectory) > d);
    assert_eq!((r1.nonzeros, r2.nonzeros), (65_412, 205_716));
}

#[test]
fn applied_input_is_the_mean_first_input() {
    let init = aircraft_init(7);
    let (c1, c2) = (controller(Scheme::I), controller(Scheme::II));
    let u1 = c1.solve(&init).unwrap().first_input();
    let u2 = c2.solve(&init).unwrap().first_input();
    assert!((&u1 - &u2).amax() <= 1e-3);
    let rep = run_closed_loop(&c1, &mut plant(&init, 12), 1, None);
    assert_eq!(rep.trajectory.u[0], u1);
}

#[test]
fn benchmark_is_independent_of_parallelism() {
    let ctrls = vec![controller(Scheme::I), controller(Scheme::II)];
    let base = BenchmarkSettings { samples: 3, steps: 5, seed: 21, ..BenchmarkSettings::default() };
    let m = aircraft::varx();
    let spec = aircraft::disturbance_spec();
    let seq = benchmark_schemes(&m, &spec, &ctrls, &BenchmarkSettings { parallel: false, ..base.clone() }).unwrap();
    let par = benchmark_schemes(&m, &spec, &ctrls, &BenchmarkSettings { parallel: true, ..base }).unwrap();
    assert_eq!(seq.costs, par.costs);
    assert_eq!(seq.rows.len(), 2);
    assert_eq!(seq.rows[0].successes, 3);
    assert!(seq.max_difference_i_ii.unwrap() <= 1e-3);
    assert_ne!(sample_seeds(21, 0), sample_seeds(21, 1));
    assert_eq!(sample_seeds(21, 0), sample_seeds(21, 0));
}
