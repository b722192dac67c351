mod common;

use common::*;
use ddpce::socp::{kkt_residuals, solve, ConicProblem, ConicSolution, Cone, Settings, SparseRow};
use ddpce::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn dense_rows(a: &DMatrix<f64>) -> Vec<SparseRow> {
    (0..a.nrows()).map(|i| SparseRow::from_dense(a.row(i).transpose().as_slice(), 0)).collect()
}

fn in_cones(v: &DVector<f64>, cones: &[Cone], tol: f64, dual: bool) -> bool {
    let mut at = 0;
    for c in cones {
        let d = c.dim();
        let blk = v.rows(at, d);
        let ok = match c {
            Cone::Zero(_) => dual || blk.amax() <= tol,
            Cone::NonNeg(_) => blk.iter().all(|&x| x >= -tol),
            Cone::Soc(_) => blk.rows(1, d - 1).norm() <= blk[0] + tol,
        };
        if !ok {
            return false;
        }
        at += d;
    }
    true
}

fn check_optimal(p: &ConicProblem, sol: &ConicSolution) {
    let (rp, rd, gap) = kkt_residuals(p, &sol.x, &sol.s, &sol.z);
    let scale = 1.0 + p.q.amax().max(p.b.amax());
    assert!(rp <= 1e-6 * scale, "primal residual {rp:e}");
    assert!(rd <= 1e-6 * scale, "dual residual {rd:e}");
    assert!(gap <= 1e-6 * (1.0 + sol.objective.abs()), "gap {gap:e}");
    assert!(in_cones(&sol.s, &p.cones, 1e-8, false) && in_cones(&sol.z, &p.cones, 1e-8, true));
}

#[test]
fn unconstrained_quadratic() {
    let p = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
    let q = DVector::from_row_slice(&[1.0, -2.0]);
    let prob = ConicProblem { p: p.clone(), q: q.clone(), a: vec![], b: DVector::zeros(0), cones: vec![] };
    let sol = solve(&prob, &Settings::default()).unwrap();
    let want = -p.lu().solve(&q).unwrap();
    assert!((sol.x - want).amax() < 1e-8);
}

#[test]
fn equality_constrained_quadratic_matches_kkt_solve() {
    let mut r = rng(1);
    let (n, me) = (6, 2);
    let l = uniform_mat(&mut r, n, n, 1.0);
    let p = &l * l.transpose() + DMatrix::identity(n, n);
    let q = uniform_vec(&mut r, n, 1.0);
    let a = uniform_mat(&mut r, me, n, 1.0);
    let b = uniform_vec(&mut r, me, 1.0);
    let prob = ConicProblem { p: p.clone(), q: q.clone(), a: dense_rows(&a), b: b.clone(), cones: vec![Cone::Zero(me)] };
    let sol = solve(&prob, &Settings::default()).unwrap();
    let mut kkt = DMatrix::zeros(n + me, n + me);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p);
    kkt.view_mut((0, n), (n, me)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (me, n)).copy_from(&a);
    let mut rhs = DVector::zeros(n + me);
    rhs.rows_mut(0, n).copy_from(&-&q);
    rhs.rows_mut(n, me).copy_from(&b);
    let xy = kkt.lu().solve(&rhs).unwrap();
    assert!((&sol.x - xy.rows(0, n)).amax() < 1e-7);
    check_optimal(&prob, &sol);
}

#[test]
fn linear_program() {
    // min x1 + 2 x2  s.t.  x ≥ 0, x1 + x2 ≥ 1
    let prob = ConicProblem {
        p: DMatrix::zeros(2, 2),
        q: DVector::from_row_slice(&[1.0, 2.0]),
        a: vec![SparseRow::new(vec![0], vec![-1.0]), SparseRow::new(vec![1], vec![-1.0]), SparseRow::new(vec![0, 1], vec![-1.0, -1.0])],
        b: DVector::from_row_slice(&[0.0, 0.0, -1.0]),
        cones: vec![Cone::NonNeg(3)],
    };
    let sol = solve(&prob, &Settings::default()).unwrap();
    assert!((sol.objective - 1.0).abs() < 1e-7);
    assert!((sol.x[0] - 1.0).abs() < 1e-6 && sol.x[1].abs() < 1e-6);
    check_optimal(&prob, &sol);
}

#[test]
fn second_order_cone_program() {
    // min -x1 - x2  s.t.  ‖x‖ ≤ 1  →  x = (1,1)/√2
    let prob = ConicProblem {
        p: DMatrix::zeros(2, 2),
        q: DVector::from_row_slice(&[-1.0, -1.0]),
        a: vec![SparseRow::default(), SparseRow::new(vec![0], vec![-1.0]), SparseRow::new(vec![1], vec![-1.0])],
        b: DVector::from_row_slice(&[1.0, 0.0, 0.0]),
        cones: vec![Cone::Soc(3)],
    };
    let sol = solve(&prob, &Settings::default()).unwrap();
    let h = 0.5f64.sqrt();
    assert!((sol.x[0] - h).abs() < 1e-7 && (sol.x[1] - h).abs() < 1e-7);
    assert!((sol.objective + 2f64.sqrt()).abs() < 1e-8);
    check_optimal(&prob, &sol);
}

#[test]
fn fixed_variables_are_presolved_with_multipliers() {
    // min ½‖x‖² - x3  s.t.  x1 = 2, x2 = -1, x1 + x3 ≤ 2.5
    let prob = ConicProblem {
        p: DMatrix::identity(3, 3),
        q: DVector::from_row_slice(&[0.0, 0.0, -1.0]),
        a: vec![SparseRow::new(vec![0], vec![1.0]), SparseRow::new(vec![1], vec![2.0]), SparseRow::new(vec![0, 2], vec![1.0, 1.0])],
        b: DVector::from_row_slice(&[2.0, -2.0, 2.5]),
        cones: vec![Cone::Zero(2), Cone::NonNeg(1)],
    };
    let sol = solve(&prob, &Settings::default()).unwrap();
    assert_eq!((sol.x[0], sol.x[1]), (2.0, -1.0));
    assert!((sol.x[2] - 0.5).abs() < 1e-7);
    check_optimal(&prob, &sol);
}

#[test]
fn infeasible_problem_detected() {
    // x ≥ 1 and x ≤ 0
    let prob = ConicProblem {
        p: DMatrix::zeros(1, 1),
        q: DVector::from_row_slice(&[1.0]),
        a: vec![SparseRow::new(vec![0], vec![-1.0]), SparseRow::new(vec![0], vec![1.0])],
        b: DVector::from_row_slice(&[-1.0, 0.0]),
        cones: vec![Cone::NonNeg(2)],
    };
    assert!(matches!(solve(&prob, &Settings::default()), Err(Error::Infeasible)));
}

#[test]
fn unbounded_problem_detected() {
    // min -x1  s.t.  x1 ≥ 0, |x2| ≤ 1
    let prob = ConicProblem {
        p: DMatrix::zeros(2, 2),
        q: DVector::from_row_slice(&[-1.0, 0.0]),
        a: vec![SparseRow::new(vec![0], vec![-1.0]), SparseRow::new(vec![1], vec![1.0]), SparseRow::new(vec![1], vec![-1.0])],
        b: DVector::from_row_slice(&[0.0, 1.0, 1.0]),
        cones: vec![Cone::NonNeg(3)],
    };
    assert!(matches!(solve(&prob, &Settings::default()), Err(Error::Unbounded)));
}

#[test]
fn inconsistent_fixed_rows_are_infeasible() {
    let prob = ConicProblem {
        p: DMatrix::identity(1, 1),
        q: DVector::zeros(1),
        a: vec![SparseRow::new(vec![0], vec![1.0]), SparseRow::new(vec![0], vec![1.0])],
        b: DVector::from_row_slice(&[1.0, 2.0]),
        cones: vec![Cone::Zero(2)],
    };
    assert!(matches!(solve(&prob, &Settings::default()), Err(Error::Infeasible)));
}

#[test]
fn malformed_problem_rejected() {
    let prob = ConicProblem {
        p: DMatrix::identity(2, 2),
        q: DVector::zeros(2),
        a: vec![SparseRow::new(vec![5], vec![1.0])],
        b: DVector::zeros(1),
        cones: vec![Cone::NonNeg(1)],
    };
    assert!(matches!(solve(&prob, &Settings::default()), Err(Error::DimensionMismatch(_))));
    let short_cones = ConicProblem { cones: vec![], a: vec![], ..prob };
    assert!(solve(&short_cones, &Settings::default()).is_err());
}

/// Random problem with a strictly feasible point and a norm bound on x.
fn random_feasible<R: Rng>(r: &mut R, n: usize) -> ConicProblem {
    let x0 = uniform_vec(r, n, 1.0);
    let l = uniform_mat(r, n, n, 1.0);
    let p = if r.gen_bool(0.5) { &l * l.transpose() } else { DMatrix::zeros(n, n) };
    let q = uniform_vec(r, n, 1.0);
    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut cones = Vec::new();
    // equality through x0
    let e = uniform_vec(r, n, 1.0);
    rows.push(SparseRow::from_dense(e.as_slice(), 0));
    b.push(e.dot(&x0));
    cones.push(Cone::Zero(1));
    // linear inequalities with slack
    let ni = 3;
    for _ in 0..ni {
        let a = uniform_vec(r, n, 1.0);
        rows.push(SparseRow::from_dense(a.as_slice(), 0));
        b.push(a.dot(&x0) + r.gen_range(0.1..1.0));
    }
    cones.push(Cone::NonNeg(ni));
    // ‖x‖ ≤ 10 keeps the problem bounded
    rows.push(SparseRow::default());
    b.push(10.0);
    for i in 0..n {
        rows.push(SparseRow::new(vec![i], vec![-1.0]));
        b.push(0.0);
    }
    cones.push(Cone::Soc(n + 1));
    // random cone ‖M x + c‖ ≤ t with slack at x0
    let m = uniform_mat(r, 2, n, 1.0);
    let c = uniform_vec(r, 2, 1.0);
    let t = (&m * &x0 + &c).norm() + 0.5;
    rows.push(SparseRow::default());
    b.push(t);
    for i in 0..2 {
        rows.push(SparseRow::from_dense((-m.row(i).transpose()).as_slice(), 0));
        b.push(c[i]);
    }
    cones.push(Cone::Soc(3));
    ConicProblem { p, q, a: rows, b: DVector::from_vec(b), cones }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn random_feasible_programs_satisfy_kkt(seed in 0u64..100_000, n in 2usize..8) {
        let prob = random_feasible(&mut rng(seed), n);
        let sol = solve(&prob, &Settings::default()).unwrap();
        check_optimal(&prob, &sol);
    }
}
