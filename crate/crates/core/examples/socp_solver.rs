//! The bundled conic solver on a small portfolio-style problem:
//! minimize risk plus cost subject to a budget and a norm bound.

use ddpce::socp::{kkt_residuals, solve, Cone, ConicProblem, Settings, SparseRow};
use nalgebra::{dmatrix, dvector, DVector};

fn main() -> ddpce::Result<()> {
    let n = 3;
    // s = b - A x: budget row, three sign rows, then (1; x) in the second-order cone
    let mut a = vec![SparseRow::new(vec![0, 1, 2], vec![1.0, 1.0, 1.0])];
    let mut b = vec![1.0];
    for i in 0..n {
        a.push(SparseRow::new(vec![i], vec![-1.0]));
        b.push(0.0);
    }
    a.push(SparseRow::default());
    b.push(0.8);
    for i in 0..n {
        a.push(SparseRow::new(vec![i], vec![-1.0]));
        b.push(0.0);
    }
    let prob = ConicProblem {
        p: dmatrix![0.10, 0.02, 0.00; 0.02, 0.08, 0.01; 0.00, 0.01, 0.12],
        q: dvector![-0.05, -0.04, -0.06],
        a,
        b: DVector::from_vec(b),
        cones: vec![Cone::Zero(1), Cone::NonNeg(n), Cone::Soc(n + 1)],
    };
    let sol = solve(&prob, &Settings::default())?;
    let (rp, rd, gap) = kkt_residuals(&prob, &sol.x, &sol.s, &sol.z);
    println!("x = {:.6?}", sol.x.as_slice());
    println!("objective {:.8}, {} iterations", sol.objective, sol.iterations);
    println!("residuals: primal {rp:.1e}, dual {rd:.1e}, complementarity {gap:.1e}");
    println!("|x| = {:.4} (bound 0.8)", sol.x.norm());
    Ok(())
}
