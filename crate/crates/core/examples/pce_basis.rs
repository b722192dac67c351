//! The joint chaos basis of a disturbance sequence and its index algebra.

use ddpce::aircraft;
use ddpce::pce::{build_joint_basis, disturbance_coeffs, sample_realizations, PceTrajectory};

fn main() -> ddpce::Result<()> {
    let spec = aircraft::disturbance_spec();
    for n in [1, 10, 25] {
        println!("N = {n:2}: basis length {}", build_joint_basis(&spec, n)?.len());
    }

    let basis = build_joint_basis(&spec, 10)?;
    for j in [0, 1, 5, 30] {
        println!("j = {j:2}: {:?}", basis.term(j)?);
    }
    for k in [0, 3, 9] {
        println!("indices carrying w_{k}: {:?}", basis.ik(k)?);
    }

    // coefficients of w_3: mean in column 0, one std per germ
    let c = disturbance_coeffs(&basis, &spec, 3)?;
    let nz: Vec<_> = (0..c.ncols()).filter(|&j| c.column(j).amax() > 0.0).collect();
    println!("nonzero columns of w_3: {nz:?}");

    let w = PceTrajectory::disturbance(&basis, &spec)?;
    println!("std of w_3 from coefficients: {:.4?}", w.std(3)?.as_slice());
    println!("std from the law:             {:.4?}", spec.std().as_slice());

    let draws = sample_realizations(&w, &w, &basis, 20_000, 7)?;
    let n = draws.len() as f64;
    let mean2 = draws.iter().map(|t| t.y[3][1]).sum::<f64>() / n;
    let var2 = draws.iter().map(|t| (t.y[3][1] - mean2).powi(2)).sum::<f64>() / (n - 1.0);
    println!("sampled w_3[2]: mean {mean2:+.4}, std {:.4}", var2.sqrt());
    Ok(())
}
