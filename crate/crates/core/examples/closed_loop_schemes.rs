//! One receding-horizon run per scheme from the same initial window and
//! disturbance stream.

use ddpce::aircraft::{self, InitLaw};
use ddpce::closed_loop::{max_trajectory_difference, prepare_data, run_sample, DataSettings, Scheme, SchemeController};
use ddpce::socp::Settings;
use rand::SeedableRng;

fn main() -> ddpce::Result<()> {
    let model = aircraft::varx();
    let spec = aircraft::disturbance_spec();
    let mut ctrls = Vec::new();
    for scheme in Scheme::ALL {
        let d = prepare_data(scheme, &model, &spec, &DataSettings::default(), 1)?;
        println!("scheme {:3}: data condition number {:.2e}", scheme.name(), d.condition_number);
        ctrls.push(SchemeController::new(
            scheme,
            &d.data,
            model.lag,
            aircraft::HORIZON,
            &spec,
            &aircraft::weights(),
            &[aircraft::chance_constraint()],
            &Settings::default(),
        )?);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let init = InitLaw::default().sample(&mut rng, model.lag, model.n_u())?;
    let runs = run_sample(&model, &spec, &ctrls, &init, 42, aircraft::CLOSED_LOOP_STEPS)?;

    for r in &runs {
        let y1 = r.trajectory.y.iter().map(|y| y[0].abs()).fold(0.0, f64::max);
        println!(
            "scheme {:3}: J_cl {:.4e}, mean solve {:.4}s, nonzeros {}, max |y1| {y1:.3}{}",
            r.scheme.name(),
            r.cost,
            r.time_mean_s,
            r.nonzeros,
            r.failed.as_deref().map(|f| format!(", failed: {f}")).unwrap_or_default()
        );
    }
    println!("max |I - II| {:.3e}", max_trajectory_difference(&runs[0].trajectory, &runs[1].trajectory));
    println!("max |I - III| {:.3e}", max_trajectory_difference(&runs[0].trajectory, &runs[2].trajectory));
    println!("\n k        u (I)       y2 (I)      u (III)     y2 (III)");
    for k in 0..runs[0].trajectory.len() {
        let (a, c) = (&runs[0].trajectory, &runs[2].trajectory);
        println!("{:2} {:12.4} {:12.4} {:12.4} {:12.4}", k + 1, a.u[k][0], a.y[k][1], c.u[k][0], c.y[k][1]);
    }
    Ok(())
}
