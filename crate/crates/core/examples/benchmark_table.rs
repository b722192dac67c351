//! Scheme comparison over seeded samples: data volume, solve time and cost.
//!
//! Usage: `cargo run --release --example benchmark_table -- [samples]`

use ddpce::aircraft;
use ddpce::closed_loop::{benchmark_schemes, prepare_data, BenchmarkSettings, DataSettings, Scheme, SchemeController};
use ddpce::socp::Settings;

fn main() -> ddpce::Result<()> {
    let samples = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let model = aircraft::varx();
    let spec = aircraft::disturbance_spec();
    let ctrls = Scheme::ALL
        .iter()
        .map(|&s| {
            let d = prepare_data(s, &model, &spec, &DataSettings::default(), 1)?;
            SchemeController::new(s, &d.data, model.lag, aircraft::HORIZON, &spec, &aircraft::weights(), &[aircraft::chance_constraint()], &Settings::default())
        })
        .collect::<ddpce::Result<Vec<_>>>()?;
    let settings = BenchmarkSettings { samples, ..BenchmarkSettings::default() };
    let rep = benchmark_schemes(&model, &spec, &ctrls, &settings)?;

    println!("{samples} samples");
    println!("scheme  nonzeros  time mean [s]  time sd [s]        J_cl  failures");
    for r in &rep.rows {
        println!("{:6} {:9} {:14.4} {:12.4} {:11.4e} {:9}", r.scheme.name(), r.nonzeros, r.time_mean_s, r.time_sd_s, r.j_cl, r.failures);
    }
    if let Some(d) = rep.max_difference_i_ii {
        println!("max |I - II| over all samples: {d:.3e}");
    }
    let (t1, t2) = (rep.rows[0].time_mean_s, rep.rows[1].time_mean_s);
    println!("scheme I saves {:.1}% solve time against scheme II", 100.0 * (1.0 - t1 / t2));
    Ok(())
}
