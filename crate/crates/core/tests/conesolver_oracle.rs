mod common;

use common::socp::{admm_objective, random_socp};
use common::{rel_diff, rng};
use phasebal::conesolver::{residuals, solve, solve_with, Settings, SparseMatrix, StandardConeProblem, Status, DEFAULT_TOL};

fn solve_default(p: &StandardConeProblem) -> phasebal::conesolver::ConeSolution {
    solve_with(p, &Settings::default()).unwrap()
}

fn assert_kkt(p: &StandardConeProblem, sol: &phasebal::conesolver::ConeSolution) {
    let r = residuals(p, sol);
    assert!(r.primal <= DEFAULT_TOL, "primal residual {}", r.primal);
    assert!(r.dual <= DEFAULT_TOL, "dual residual {}", r.dual);
    assert!(r.gap <= DEFAULT_TOL, "gap {}", r.gap);
}

#[test]
fn three_four_five() {
    // x = (x, y, z); minimize z with (z, x, y) in the cone.
    let mut p = StandardConeProblem::new(vec![0.0, 0.0, 1.0]);
    p.a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (1, 1, 1.0)]);
    p.b = vec![3.0, 4.0];
    p.g = SparseMatrix::from_triplets(3, 3, &[(0, 2, -1.0), (1, 0, -1.0), (2, 1, -1.0)]);
    p.h = vec![0.0; 3];
    p.soc = vec![3];
    let s = solve(&p, DEFAULT_TOL, 200).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.objective - 5.0).abs() <= 1e-7);
    assert_kkt(&p, &s);
}

#[test]
fn degenerate_vertex() {
    // Three constraints active at the optimum (1, 1) in two dimensions.
    let mut p = StandardConeProblem::new(vec![1.0, 1.0]);
    p.g = SparseMatrix::from_rows(
        2,
        vec![vec![(0, -1.0)], vec![(1, -1.0)], vec![(0, -1.0), (1, -1.0)]],
    );
    p.h = vec![-1.0, -1.0, -2.0];
    p.nonneg = 3;
    let s = solve_default(&p);
    assert_eq!(s.status, Status::Optimal);
    assert!((s.objective - 2.0).abs() <= 1e-7);
    assert!((s.x[0] - 1.0).abs() <= 1e-6 && (s.x[1] - 1.0).abs() <= 1e-6);
    assert_kkt(&p, &s);
}

#[test]
fn free_variables_with_equalities_only() {
    // min x0 + 2 x1 + 3 x2 subject to x0 + x1 + x2 = 1, x1 - x2 = 0, x0 in [-5, 5].
    let mut p = StandardConeProblem::new(vec![1.0, 2.0, 3.0]);
    p.a = SparseMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0), (1, 1, 1.0), (1, 2, -1.0)]);
    p.b = vec![1.0, 0.0];
    p.lower[0] = -5.0;
    p.upper[0] = 5.0;
    let s = solve_default(&p);
    assert_eq!(s.status, Status::Optimal);
    // x1 = x2 = (1 - x0)/2, so the objective is x0 + 2.5(1 - x0), minimized at x0 = 5.
    assert!((s.objective - (5.0 + 2.5 * -4.0)).abs() <= 1e-6, "{}", s.objective);
    assert_kkt(&p, &s);
}

#[test]
fn unbounded_lp_returns_a_ray() {
    // max x0 with x0 >= 0 and x1 <= 1.
    let mut p = StandardConeProblem::new(vec![-1.0, 0.0]);
    p.lower[0] = 0.0;
    p.g = SparseMatrix::from_rows(2, vec![vec![(1, 1.0)]]);
    p.h = vec![1.0];
    p.nonneg = 1;
    let s = solve_default(&p);
    assert_eq!(s.status, Status::Unbounded);
    let cx: f64 = p.c.iter().zip(&s.x).map(|(a, b)| a * b).sum();
    assert!((cx + 1.0).abs() <= 1e-6, "ray objective {cx}");
    // The ray keeps G x in the recession cone and respects the finite lower bound.
    assert!(p.g.mul(&s.x)[0] <= 1e-8);
    assert!(s.x[0] >= -1e-8);
}

#[test]
fn infeasible_lp_returns_a_certificate() {
    // x >= 2 and x <= 1.
    let mut p = StandardConeProblem::new(vec![1.0]);
    p.g = SparseMatrix::from_rows(1, vec![vec![(0, -1.0)], vec![(0, 1.0)]]);
    p.h = vec![-2.0, 1.0];
    p.nonneg = 2;
    let s = solve_default(&p);
    assert_eq!(s.status, Status::Infeasible);
    // Farkas: z >= 0, G^T z = 0, h^T z < 0.
    assert!(s.z.iter().all(|&z| z >= -1e-9));
    let gtz = p.g.t_mul(&s.z);
    let hz: f64 = p.h.iter().zip(&s.z).map(|(a, b)| a * b).sum();
    assert!(gtz[0].abs() <= 1e-7 * s.z.iter().map(|z| z.abs()).sum::<f64>().max(1.0));
    assert!(hz < 0.0);
}

#[test]
fn bounds_only_problem() {
    let mut p = StandardConeProblem::new(vec![1.0, -2.0, 0.0]);
    p.lower = vec![-1.0, -1.0, -1.0];
    p.upper = vec![1.0, 3.0, 1.0];
    let s = solve_default(&p);
    assert_eq!(s.status, Status::Optimal);
    assert!((s.objective - (-1.0 - 6.0)).abs() <= 1e-7);
    assert_kkt(&p, &s);
}

#[test]
fn positive_objective_scaling_keeps_the_argmin() {
    let mut r = rng(99);
    let p = random_socp(&mut r);
    let a = solve_default(&p);
    let mut q = p.clone();
    for c in &mut q.c {
        *c *= 7.5;
    }
    let b = solve_default(&q);
    assert_eq!(a.status, b.status);
    for (x, y) in a.x.iter().zip(&b.x) {
        assert!((x - y).abs() <= 1e-7, "{x} vs {y}");
    }
}

#[test]
fn fifty_random_socps_match_first_order_oracle() {
    let mut r = rng(2024);
    for k in 0..50 {
        let p = random_socp(&mut r);
        let s = solve_default(&p);
        assert_eq!(s.status, Status::Optimal, "problem {k}");
        assert_kkt(&p, &s);
        let oracle = admm_objective(&p, 400_000);
        assert!(rel_diff(s.objective, oracle) <= 1e-5, "problem {k}: ipm {} vs admm {}", s.objective, oracle);
    }
}

#[test]
fn solves_are_deterministic() {
    let mut r = rng(5);
    let p = random_socp(&mut r);
    let a = solve_default(&p);
    let b = solve_default(&p);
    assert_eq!(a, b);
}
