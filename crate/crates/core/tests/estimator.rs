mod common;

use common::*;
use ddpce::aircraft;
use ddpce::closed_loop::{record, synthesize_scheme_iii, true_model_gain, DataSettings, DisturbanceSource, VarxPlant};
use ddpce::estimator::{
    dlqr, estimate_disturbances, find_stabilizing_feedback, generate_near_origin_long, generate_undisturbed_long,
    generate_undisturbed_near_origin, generate_undisturbed_trajectory, FeedbackSearch,
};
use ddpce::hankel::{check_stack_pe, hankel};
use ddpce::linalg::{concat, condition_number, spectral_radius};
use ddpce::model::{simulate_varx, RealTrajectory, VarxModel};
use ddpce::pce::{DisturbanceSpec, Distribution};
use ddpce::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Disturbed record with the plant's true w aligned to the estimate.
fn recorded(m: &VarxModel, spec: &DisturbanceSpec, len: usize, seed: u64) -> (RealTrajectory, Vec<DVector<f64>>) {
    let mut r = rng(seed);
    let init = random_window(&mut r, 0, m.lag, m.n_u(), m.n_y());
    let src = DisturbanceSource::Random { spec: spec.clone(), seed };
    let mut plant = VarxPlant::new(m.clone(), init, src).unwrap();
    let k = DMatrix::zeros(m.n_u(), m.n_z());
    let data = record(&mut plant, &k, 1.0, len - m.lag, &mut r).unwrap();
    let w = plant.history().w.clone().unwrap();
    // entry i of the estimate is w at time lag-1+i
    (data, w[m.lag - 1..len - 1].to_vec())
}

fn mean_abs_error(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs().sum()).sum::<f64>() / (a.len() * a[0].len()) as f64
}

fn stable_model(seed: u64) -> VarxModel {
    random_varx(&mut rng(seed), 2, 1, 2)
}

fn spec2() -> DisturbanceSpec {
    DisturbanceSpec::new(vec![Distribution::Uniform { lower: -0.1, upper: 0.1 }, Distribution::Gaussian { mean: 0.0, variance: 0.01 }])
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn estimate_is_the_least_squares_residual(seed in 0u64..100_000, n_y in 1usize..=3, n_u in 1usize..=2, lag in 1usize..=3) {
        let mut r = rng(seed);
        let m = random_varx(&mut r, n_y, n_u, lag);
        let spec = random_spec(&mut r, n_y);
        let data = disturbed_data(&mut r, &m, &spec, 80).without_w();
        let est = estimate_disturbances(&data, lag).unwrap();
        let oracle = ls_residual_oracle(&data, lag);
        prop_assert_eq!(est.w.len(), oracle.len());
        prop_assert_eq!(est.start, lag as i64 - 1);
        for (a, b) in est.w.iter().zip(&oracle) {
            prop_assert!((a - b).amax() < 1e-8);
        }
    }
}

#[test]
fn undisturbed_data_give_zero_estimate() {
    let mut r = rng(1);
    let m = stable_model(1);
    let data = undisturbed_data(&mut r, &m, 80);
    let est = estimate_disturbances(&data, 2).unwrap();
    assert!(est.w.iter().all(|w| w.amax() < 1e-9));
    let id = est.model(1).unwrap();
    assert!((&id.a_hat - &m.a_hat).amax() < 1e-8);
    assert!((&id.b_hat - &m.b_hat).amax() < 1e-8);
}

#[test]
fn equilibrium_data_are_rank_deficient() {
    let u = vec![DVector::from_element(1, 1.0); 40];
    let y = vec![DVector::from_row_slice(&[2.0, -1.0]); 40];
    let data = RealTrajectory::with_dims(0, 1, 2, u, y, None).unwrap();
    assert!(matches!(estimate_disturbances(&data, 2), Err(Error::RankDeficientData)));
    let short = data.window(0, 5).unwrap();
    assert!(matches!(estimate_disturbances(&short, 2), Err(Error::TooShort { .. })));
}

#[test]
fn estimation_error_shrinks_with_record_length() {
    let m = stable_model(2);
    let errs: Vec<f64> = [50, 200, 1000]
        .iter()
        .map(|&t| {
            let (data, w) = recorded(&m, &spec2(), t, 7);
            mean_abs_error(&estimate_disturbances(&data, 2).unwrap().w, &w)
        })
        .collect();
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[1] < errs[0] * 1.2, "{errs:?}");
    assert!(errs[2] < 0.1 * spec2().std().amax(), "{errs:?}");
}

#[test]
fn synthesis_from_undisturbed_data_follows_the_model() {
    let mut r = rng(3);
    let m = stable_model(3);
    let data = undisturbed_data(&mut r, &m, 80);
    let est = estimate_disturbances(&data, 2).unwrap();
    let init = random_window(&mut r, 0, 2, 1, 2);
    let inputs: Vec<_> = (0..8).map(|_| uniform_vec(&mut r, 1, 1.0)).collect();
    let out = generate_undisturbed_trajectory(&data, &est, &init, &inputs).unwrap();
    let sim = simulate_varx(&m, &init, &inputs, &vec![DVector::zeros(2); 8]).unwrap();
    for (a, b) in out.y.iter().zip(&sim.y) {
        assert!(rel_diff(a, b) < 1e-6);
    }
    let one = generate_undisturbed_trajectory(&data, &est, &init, &inputs[..1]).unwrap();
    let direct = &m.a_hat * concat(&init.y) + &m.b_hat * concat(&init.u);
    assert!(rel_diff(&one.y[0], &direct) < 1e-6);
    let long: Vec<_> = (0..80).map(|_| uniform_vec(&mut r, 1, 1.0)).collect();
    assert!(matches!(generate_undisturbed_trajectory(&data, &est, &init, &long), Err(Error::TooShort { .. })));
}

#[test]
fn synthesized_steps_satisfy_identified_model() {
    let m = stable_model(4);
    let (data, _) = recorded(&m, &spec2(), 120, 4);
    let est = estimate_disturbances(&data, 2).unwrap();
    let id = est.model(1).unwrap();
    let mut r = rng(4);
    let init = data.window(30, 2).unwrap();
    let inputs: Vec<_> = (0..25).map(|_| uniform_vec(&mut r, 1, 1.0)).collect();
    let out = generate_undisturbed_long(&data, &est, 5, &init, &inputs).unwrap();
    assert_eq!(out.len(), 27);
    for k in 2..out.len() {
        let pred = &id.a_hat * concat(&out.y[k - 2..k]) + &id.b_hat * concat(&out.u[k - 2..k]);
        assert!(rel_diff(&out.y[k], &pred) < 1e-6, "step {k}");
    }
}

#[test]
fn near_origin_with_zero_gain_matches_plain_synthesis() {
    let m = stable_model(5);
    let (data, _) = recorded(&m, &spec2(), 100, 5);
    let est = estimate_disturbances(&data, 2).unwrap();
    let mut r = rng(5);
    let init = data.window(40, 2).unwrap().without_w();
    let z1 = concat(&[concat(&init.u), concat(&init.y)]);
    let v: Vec<_> = (0..6).map(|_| uniform_vec(&mut r, 1, 1.0)).collect();
    let near = generate_undisturbed_near_origin(&data, &est, &DMatrix::zeros(1, 6), &z1, &v).unwrap();
    let plain = generate_undisturbed_trajectory(&data, &est, &init, &v[..5]).unwrap();
    for k in 0..5 {
        assert!(rel_diff(&near.io.y[k + 2], &plain.y[k]) < 1e-6);
        assert!((&near.io.u[k + 2] - &v[k]).amax() < 1e-9);
    }

    let zero = generate_undisturbed_near_origin(&data, &est, &DMatrix::zeros(1, 6), &DVector::zeros(6), &vec![DVector::zeros(1); 6])
        .unwrap();
    assert!(zero.z.iter().all(|z| z.amax() < 1e-12));
}

#[test]
fn stabilized_synthesis_is_better_conditioned_than_open_loop_record() {
    let m = aircraft::varx();
    let (f, _, _) = m.companion();
    assert!(spectral_radius(&f) > 1.0);
    let spec = aircraft::disturbance_spec();
    let art = synthesize_scheme_iii(&m, &spec, &DataSettings::default(), 3).unwrap();
    let cert = check_stack_pe(&art.data.data, 2, 10).unwrap();
    assert!(cert.pass);
    assert!(cert.condition_number < 1e8, "{}", cert.condition_number);

    let init = aircraft::InitLaw::default().center_window(2, 1).unwrap();
    let mut plant = VarxPlant::new(m.clone(), init, DisturbanceSource::Random { spec, seed: 3 }).unwrap();
    let open = record(&mut plant, &DMatrix::zeros(1, 8), 10.0, 88, &mut rng(3)).unwrap();
    let z: Vec<DVector<f64>> = (0..open.len() - 2)
        .map(|c| concat(&[concat(&open.u[c..c + 2]), concat(&open.y[c..c + 2])]))
        .collect();
    let raw = condition_number(&hankel(&z, 1).unwrap());
    assert!(art.data.condition_number < raw, "{} vs {raw}", art.data.condition_number);
}

#[test]
fn chunked_synthesis_needs_two_steps() {
    let m = stable_model(6);
    let (data, _) = recorded(&m, &spec2(), 80, 6);
    let est = estimate_disturbances(&data, 2).unwrap();
    let r = generate_near_origin_long(&data, &est, &DMatrix::zeros(1, 6), 1, &DVector::zeros(6), &[]);
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn lqr_stabilizes_the_double_integrator() {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let g = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let k = dlqr(&f, &g, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
    assert!(spectral_radius(&(&f + &g * &k)) < 1.0);
}

fn double_integrator_varx() -> VarxModel {
    VarxModel::with_unit_disturbance(
        DMatrix::from_row_slice(1, 2, &[-1.0, 2.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        2,
    )
    .unwrap()
}

#[test]
fn feedback_search_on_double_integrator() {
    let m = double_integrator_varx();
    let init = RealTrajectory::with_dims(0, 1, 1, vec![DVector::zeros(1); 2], vec![DVector::from_element(1, 1.0); 2], None).unwrap();
    let spec = DisturbanceSpec::new(vec![Distribution::Uniform { lower: -1e-3, upper: 1e-3 }]).unwrap();
    let mut plant = VarxPlant::new(m.clone(), init, DisturbanceSource::Random { spec, seed: 1 }).unwrap();
    let law = find_stabilizing_feedback(&mut plant, &FeedbackSearch::new(2), &mut rng(1)).unwrap();
    let est = estimate_disturbances(&record(&mut plant, &law.k, 1.0, 60, &mut rng(2)).unwrap(), 2).unwrap();
    let (f, g, _) = est.model(1).unwrap().companion();
    assert!(spectral_radius(&(&f + &g * &law.k)) < 1.0);
    let (ft, gt, _) = m.companion();
    assert!(spectral_radius(&(&ft + &gt * &law.k)) < 1.0);
}

#[test]
fn stable_plant_accepts_first_gain() {
    let m = stable_model(8);
    let init = RealTrajectory::with_dims(0, 1, 2, vec![DVector::zeros(1); 2], vec![DVector::from_element(2, 1.0); 2], None).unwrap();
    let mut plant = VarxPlant::new(m, init, DisturbanceSource::Zero).unwrap();
    let law = find_stabilizing_feedback(&mut plant, &FeedbackSearch::new(2), &mut rng(8)).unwrap();
    assert_eq!(law.iterations, 1);
}

#[test]
fn unreachable_unstable_mode_exhausts_the_search() {
    let m = VarxModel::with_unit_disturbance(
        DMatrix::from_row_slice(1, 2, &[0.0, 1.5]),
        DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
        2,
    )
    .unwrap();
    let init = RealTrajectory::with_dims(0, 1, 1, vec![DVector::zeros(1); 2], vec![DVector::from_element(1, 1.0); 2], None).unwrap();
    let mut plant = VarxPlant::new(m, init, DisturbanceSource::Zero).unwrap();
    let params = FeedbackSearch { max_iter: 3, ..FeedbackSearch::new(2) };
    let r = find_stabilizing_feedback(&mut plant, &params, &mut rng(9));
    assert!(matches!(r, Err(Error::MaxIterationsExceeded(3))), "{r:?}");
}

#[test]
fn true_gain_stabilizes_aircraft() {
    let m = aircraft::varx();
    let k = true_model_gain(&m).unwrap();
    let (f, g, _) = m.companion();
    assert!(spectral_radius(&(&f + &g * &k)) < 1.0);
}
