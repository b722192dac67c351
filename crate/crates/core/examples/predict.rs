//! Predicts the mean and spread of the aircraft outputs from recorded data
//! alone and compares them with the model.

use ddpce::aircraft::{self, InitLaw};
use ddpce::closed_loop::{prepare_data, DataSettings, Scheme};
use ddpce::pce::{build_joint_basis, PceTrajectory};
use ddpce::predictor::{DataPredictor, InitialCondition};
use nalgebra::DVector;

fn main() -> ddpce::Result<()> {
    let model = aircraft::varx();
    let spec = aircraft::disturbance_spec();
    let n = aircraft::HORIZON;
    let data = prepare_data(Scheme::I, &model, &spec, &DataSettings::default(), 1)?.data;
    let predictor = DataPredictor::new(&data, model.lag, n, None)?;
    println!("undisturbed record: {} samples, n_g = {}", data.len(), predictor.n_g());

    let basis = build_joint_basis(&spec, n)?;
    let init = InitLaw::default().center_window(model.lag, model.n_u())?;
    let inputs: Vec<_> = (0..n).map(|k| DVector::from_element(1, if k < 3 { 0.5 } else { 0.0 })).collect();
    let u = PceTrajectory::deterministic(1, &inputs, basis.len());
    let pred = predictor.propagate_all(&basis, &spec, &InitialCondition::Deterministic(init.clone()), &u)?;
    pred.check_causality(&basis, &spec)?;

    let nominal = ddpce::model::simulate_varx(&model, &init, &inputs, &vec![DVector::zeros(3); n])?;
    println!(" k      E[y1]      E[y2]      E[y3]   std y1   std y2   std y3   |mean - model|");
    for k in 1..=n as i64 {
        let (m, s) = (pred.y.mean(k)?, pred.y.std(k)?);
        let gap = (&m - &nominal.y[k as usize - 1]).amax();
        println!(
            "{k:2} {:10.3} {:10.3} {:10.3} {:8.3} {:8.3} {:8.3} {gap:12.2e}",
            m[0], m[1], m[2], s[0], s[1], s[2]
        );
    }
    Ok(())
}
