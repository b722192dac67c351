//! Converts a state-space model to VARX form and checks that both
//! simulate the same outputs.

use ddpce::model::{lag, simulate_state_space, simulate_varx, varx_from_state_space, StateSpaceModel};
use nalgebra::{dmatrix, dvector, DVector};

fn main() -> ddpce::Result<()> {
    // double integrator with the disturbance entering both states
    let ss = StateSpaceModel::new(
        dmatrix![1.0, 1.0; 0.0, 1.0],
        dmatrix![0.0; 1.0],
        dmatrix![1.0, 0.0],
        dmatrix![1.0; 1.0],
    )?;
    let l = lag(&ss.a, &ss.c)?;
    let varx = varx_from_state_space(&ss, l)?;
    println!("lag {l}");
    let row = |m: &nalgebra::DMatrix<f64>| m.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(" ");
    println!("A_hat [{}]", row(&varx.a_hat));
    println!("B_hat [{}]", row(&varx.b_hat));
    println!("E_hat [{}]", row(&varx.e_hat));
    println!("disturbance enters through the last step only: {}", varx.last_step_disturbance);

    let steps = 20;
    let u: Vec<DVector<f64>> = (0..steps).map(|k| dvector![(k as f64 * 0.7).sin()]).collect();
    let w: Vec<DVector<f64>> = (0..steps).map(|k| dvector![0.1 * (k as f64 * 1.3).cos()]).collect();
    let reference = simulate_state_space(&ss, &dvector![0.5, -0.2], &u, &w)?;
    let cont = simulate_varx(&varx, &reference.window(0, l)?, &u[l..], &w[l..])?;
    let gap = cont.y.iter().zip(&reference.y[l..]).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max);
    println!("max output gap over {} steps: {gap:.2e}", steps - l);
    Ok(())
}
