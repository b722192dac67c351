//! Solves the stochastic OCP at horizon 25 and checks the chance constraint
//! on sampled disturbance sequences.

use ddpce::aircraft::{self, InitLaw};
use ddpce::closed_loop::{prepare_data, DataSettings, Scheme};
use ddpce::ocp::{open_loop_experiment, OpenLoopSettings};
use ddpce::pce::build_joint_basis;
use ddpce::predictor::{DataPredictor, InitialCondition};

fn main() -> ddpce::Result<()> {
    let model = aircraft::varx();
    let spec = aircraft::disturbance_spec();
    let n = aircraft::OPEN_LOOP_HORIZON;
    let data = prepare_data(Scheme::I, &model, &spec, &DataSettings::default(), 1)?.data;
    let dynamics = DataPredictor::new(&data, model.lag, n, None)?;
    let basis = build_joint_basis(&spec, n)?;
    let init = InitialCondition::Deterministic(InitLaw::default().center_window(model.lag, model.n_u())?);
    let settings = OpenLoopSettings { samples: 10_000, seed: 11, ..OpenLoopSettings::default() };
    let constraint = aircraft::chance_constraint();
    let rep = open_loop_experiment(&dynamics, &basis, &spec, &init, &aircraft::weights(), &[constraint], &settings)?;

    let sol = &rep.solution;
    println!("expected cost {:.2}, {} iterations", sol.cost, sol.iterations);
    println!(" k   E[y1]   std y1   P(|y1| <= 0.349)     E[y2]   std y2");
    for s in &rep.satisfaction {
        let (m, sd) = (sol.y.mean(s.k)?, sol.y.std(s.k)?);
        println!("{:2} {:+.4} {:8.4} {:18.4} {:9.3} {:8.3}", s.k, s.mean, s.std, s.frequency, m[1], sd[1]);
    }
    println!("lowest empirical satisfaction {:.4}", rep.min_frequency());
    Ok(())
}
