//! Light presolve aimed at branch-and-bound subproblems: substitutes fixed
//! variables, turns singleton rows into bounds or fixings, and merges pairs
//! of opposite inequalities into equalities. The postsolve step rebuilds a
//! full primal-dual point for the original problem.

use std::collections::HashMap;

use super::sparse::SparseMatrix;
use super::{ConeSolution, StandardConeProblem};

const FIX_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

pub enum Outcome {
    Reduced(Reduced),
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Src {
    Original,
    /// Inequality row `i` of `G` with coefficient `a` on the variable.
    Ineq(usize, f64),
    /// Equality row `i` of `A` with coefficient `a` on the variable.
    Eq(usize, f64),
}

struct MergedPair {
    pos: (usize, f64),
    neg: (usize, f64),
}

pub struct Reduced {
    pub problem: StandardConeProblem,
    vars: Vec<usize>,
    fixed_order: Vec<usize>,
    value: Vec<f64>,
    lb_src: Vec<Src>,
    ub_src: Vec<Src>,
    eq_rows: Vec<usize>,
    merged: Vec<MergedPair>,
    g_rows: Vec<usize>,
}

pub fn presolve(p: &StandardConeProblem) -> Outcome {
    let n = p.num_vars();
    let mut lb = p.lower.clone();
    let mut ub = p.upper.clone();
    let mut lb_src = vec![Src::Original; n];
    let mut ub_src = vec![Src::Original; n];
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut fixed_order = Vec::new();
    let mut eq_alive = vec![true; p.a.nrows];
    let mut g_alive = vec![true; p.nonneg];

    let try_fix = |j: usize,
                   lb: &[f64],
                   ub: &[f64],
                   fixed: &mut Vec<Option<f64>>,
                   order: &mut Vec<usize>|
     -> bool {
        if fixed[j].is_none() && lb[j].is_finite() && ub[j] - lb[j] <= FIX_TOL * lb[j].abs().max(1.0) {
            fixed[j] = Some(0.5 * (lb[j] + ub[j]));
            order.push(j);
            true
        } else {
            false
        }
    };
    for j in 0..n {
        if lb[j] > ub[j] + FEAS_TOL * lb[j].abs().max(1.0) {
            return Outcome::Infeasible;
        }
        try_fix(j, &lb, &ub, &mut fixed, &mut fixed_order);
    }

    // Splits a row into its constant part and the single free entry, if any.
    let scan = |row: &mut dyn Iterator<Item = (usize, f64)>, fixed: &[Option<f64>]| {
        let mut konst = 0.0;
        let mut free = 0usize;
        let mut last = (0usize, 0.0);
        let mut mag = 0.0_f64;
        for (j, a) in row {
            match fixed[j] {
                Some(v) => {
                    konst += a * v;
                    mag = mag.max((a * v).abs());
                }
                None => {
                    free += 1;
                    last = (j, a);
                }
            }
        }
        (konst, free, last, mag)
    };

    loop {
        let mut changed = false;
        for i in 0..p.a.nrows {
            if !eq_alive[i] {
                continue;
            }
            let (konst, free, (j, a), mag) = scan(&mut p.a.row(i), &fixed);
            let rhs = p.b[i] - konst;
            match free {
                0 => {
                    if rhs.abs() > FEAS_TOL * (1.0 + p.b[i].abs() + mag) {
                        return Outcome::Infeasible;
                    }
                    eq_alive[i] = false;
                    changed = true;
                }
                1 => {
                    let v = rhs / a;
                    let tol = FEAS_TOL * v.abs().max(1.0);
                    if v < lb[j] - tol || v > ub[j] + tol {
                        return Outcome::Infeasible;
                    }
                    fixed[j] = Some(v);
                    fixed_order.push(j);
                    lb_src[j] = Src::Eq(i, a);
                    ub_src[j] = Src::Eq(i, a);
                    eq_alive[i] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        for i in 0..p.nonneg {
            if !g_alive[i] {
                continue;
            }
            let (konst, free, (j, a), mag) = scan(&mut p.g.row(i), &fixed);
            let rhs = p.h[i] - konst;
            match free {
                0 => {
                    if rhs < -FEAS_TOL * (1.0 + p.h[i].abs() + mag) {
                        return Outcome::Infeasible;
                    }
                    g_alive[i] = false;
                    changed = true;
                }
                1 => {
                    let v = rhs / a;
                    if a > 0.0 {
                        if v < ub[j] {
                            ub[j] = v;
                            ub_src[j] = Src::Ineq(i, a);
                        }
                    } else if v > lb[j] {
                        lb[j] = v;
                        lb_src[j] = Src::Ineq(i, a);
                    }
                    if lb[j] > ub[j] + FEAS_TOL * lb[j].abs().max(1.0) {
                        return Outcome::Infeasible;
                    }
                    if ub[j] < lb[j] {
                        // Within tolerance: collapse onto the tighter side.
                        let mid = 0.5 * (lb[j] + ub[j]);
                        lb[j] = mid;
                        ub[j] = mid;
                    }
                    try_fix(j, &lb, &ub, &mut fixed, &mut fixed_order);
                    g_alive[i] = false;
                    changed = true;
                }
                _ => {}
            }
        }
        if !changed {
            break;
        }
    }

    // Column map for the reduced problem.
    let mut new_index = vec![usize::MAX; n];
    let mut vars = Vec::new();
    for j in 0..n {
        if fixed[j].is_none() {
            new_index[j] = vars.len();
            vars.push(j);
        }
    }
    let nr = vars.len();
    let value: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    let reduce_row = |row: &mut dyn Iterator<Item = (usize, f64)>| {
        let mut konst = 0.0;
        let mut entries = Vec::new();
        for (j, a) in row {
            match fixed[j] {
                Some(v) => konst += a * v,
                None => entries.push((new_index[j], a)),
            }
        }
        (konst, entries)
    };

    // Opposite inequality pairs with touching right-hand sides.
    let mut merged = Vec::new();
    let mut merged_rows = vec![false; p.nonneg];
    let mut eq_extra: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    {
        let mut groups: HashMap<Vec<usize>, Vec<(usize, f64, Vec<f64>, f64)>> = HashMap::new();
        let mut keys: Vec<Vec<usize>> = Vec::new();
        for i in 0..p.nonneg {
            if !g_alive[i] {
                continue;
            }
            let (konst, entries) = reduce_row(&mut p.g.row(i));
            let cols: Vec<usize> = entries.iter().map(|e| e.0).collect();
            let nrm = entries.iter().fold(0.0_f64, |m, e| m.max(e.1.abs()));
            let sign = entries[0].1.signum();
            let normalized: Vec<f64> = entries.iter().map(|e| e.1 / (sign * nrm)).collect();
            let entry = groups.entry(cols.clone()).or_insert_with(|| {
                keys.push(cols);
                Vec::new()
            });
            entry.push((i, sign * nrm, normalized, p.h[i] - konst));
        }
        for key in &keys {
            let rows = &groups[key];
            let mut used = vec![false; rows.len()];
            for u in 0..rows.len() {
                if used[u] || rows[u].1 < 0.0 {
                    continue;
                }
                for v in 0..rows.len() {
                    if used[v] || rows[v].1 > 0.0 {
                        continue;
                    }
                    let same = rows[u].2.iter().zip(&rows[v].2).all(|(a, b)| (a - b).abs() <= 1e-12);
                    if !same {
                        continue;
                    }
                    let upper = rows[u].3 / rows[u].1;
                    let lower = rows[v].3 / rows[v].1;
                    let tol = 1e-12 * (1.0 + upper.abs() + lower.abs());
                    if upper < lower - FEAS_TOL * (1.0 + upper.abs()) {
                        return Outcome::Infeasible;
                    }
                    if upper - lower <= tol {
                        used[u] = true;
                        used[v] = true;
                        merged_rows[rows[u].0] = true;
                        merged_rows[rows[v].0] = true;
                        let coeffs = key.iter().copied().zip(rows[u].2.iter().copied()).collect();
                        eq_extra.push((coeffs, 0.5 * (upper + lower)));
                        merged.push(MergedPair {
                            pos: (rows[u].0, rows[u].1),
                            neg: (rows[v].0, -rows[v].1),
                        });
                        break;
                    }
                }
            }
        }
    }

    let mut a_rows = Vec::new();
    let mut b = Vec::new();
    let mut eq_rows = Vec::new();
    for i in 0..p.a.nrows {
        if eq_alive[i] {
            let (konst, entries) = reduce_row(&mut p.a.row(i));
            a_rows.push(entries);
            b.push(p.b[i] - konst);
            eq_rows.push(i);
        }
    }
    for (coeffs, rhs) in eq_extra {
        a_rows.push(coeffs);
        b.push(rhs);
    }
    let mut g_rows_data = Vec::new();
    let mut h = Vec::new();
    let mut g_rows = Vec::new();
    for i in 0..p.nonneg {
        if g_alive[i] && !merged_rows[i] {
            let (konst, entries) = reduce_row(&mut p.g.row(i));
            g_rows_data.push(entries);
            h.push(p.h[i] - konst);
            g_rows.push(i);
        }
    }
    let nonneg = g_rows.len();
    let mut soc = Vec::new();
    let layout = p.layout();
    for blk in layout.soc_blocks() {
        let reduced: Vec<(f64, Vec<(usize, f64)>)> = blk.clone().map(|i| reduce_row(&mut p.g.row(i))).collect();
        if reduced.iter().all(|(_, e)| e.is_empty()) {
            let hv: Vec<f64> = blk.clone().zip(&reduced).map(|(i, (k, _))| p.h[i] - k).collect();
            let tail = hv[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if hv[0] - tail < -FEAS_TOL * (1.0 + hv[0].abs()) {
                return Outcome::Infeasible;
            }
            continue;
        }
        soc.push(blk.len());
        for (i, (konst, entries)) in blk.zip(reduced) {
            g_rows_data.push(entries);
            h.push(p.h[i] - konst);
            g_rows.push(i);
        }
    }

    let problem = StandardConeProblem {
        c: vars.iter().map(|&j| p.c[j]).collect(),
        a: SparseMatrix::from_rows(nr, a_rows),
        b,
        g: SparseMatrix::from_rows(nr, g_rows_data),
        h,
        nonneg,
        soc,
        lower: vars.iter().map(|&j| lb[j]).collect(),
        upper: vars.iter().map(|&j| ub[j]).collect(),
    };
    Outcome::Reduced(Reduced {
        problem,
        vars,
        fixed_order,
        value,
        lb_src,
        ub_src,
        eq_rows,
        merged,
        g_rows,
    })
}

impl Reduced {
    /// Lifts a solution of the reduced problem to one of `p`.
    pub fn postsolve(&self, p: &StandardConeProblem, r: &ConeSolution) -> ConeSolution {
        let n = p.num_vars();
        let mut x = self.value.clone();
        for (k, &j) in self.vars.iter().enumerate() {
            x[j] = r.x[k];
        }
        let gx = p.g.mul(&x);
        let mut s: Vec<f64> = p.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
        let mut y = vec![0.0; p.a.nrows];
        let mut z = vec![0.0; p.g.nrows];
        let mut z_lower = vec![0.0; n];
        let mut z_upper = vec![0.0; n];
        for (k, &i) in self.eq_rows.iter().enumerate() {
            y[i] = r.y[k];
        }
        for (k, pair) in self.merged.iter().enumerate() {
            let yr = r.y[self.eq_rows.len() + k];
            if yr >= 0.0 {
                z[pair.pos.0] = yr / pair.pos.1;
            } else {
                z[pair.neg.0] = -yr / pair.neg.1;
            }
        }
        for (k, &i) in self.g_rows.iter().enumerate() {
            z[i] = r.z[k];
            s[i] = r.s[k];
        }
        for (k, &j) in self.vars.iter().enumerate() {
            match self.lb_src[j] {
                Src::Ineq(i, a) => z[i] = r.z_lower[k] / a.abs(),
                _ => z_lower[j] = r.z_lower[k],
            }
            match self.ub_src[j] {
                Src::Ineq(i, a) => z[i] = r.z_upper[k] / a,
                _ => z_upper[j] = r.z_upper[k],
            }
        }
        // Reduced costs of fixed variables, latest fixing first.
        let at = transpose(&p.a);
        let gt = transpose(&p.g);
        for &j in self.fixed_order.iter().rev() {
            let mut rc = p.c[j];
            for (i, a) in at.row(j) {
                rc += a * y[i];
            }
            for (i, a) in gt.row(j) {
                rc += a * z[i];
            }
            let src = if rc >= 0.0 { self.lb_src[j] } else { self.ub_src[j] };
            match src {
                Src::Original => {
                    if rc >= 0.0 {
                        z_lower[j] = rc;
                    } else {
                        z_upper[j] = -rc;
                    }
                }
                Src::Ineq(i, a) => z[i] += rc.abs() / a.abs(),
                Src::Eq(i, a) => y[i] -= rc / a,
            }
        }
        ConeSolution {
            status: r.status,
            x,
            s,
            y,
            z,
            z_lower,
            z_upper,
            objective: r.objective,
            dual_objective: r.dual_objective,
            primal_res: r.primal_res,
            dual_res: r.dual_res,
            gap: r.gap,
            iterations: r.iterations,
        }
    }
}

fn transpose(m: &SparseMatrix) -> SparseMatrix {
    let trip: Vec<(usize, usize, f64)> = m.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
    SparseMatrix::from_triplets(m.ncols, m.nrows, &trip)
}

#[cfg(test)]
mod tests {
    use super::super::{residuals, solve_with, Settings, Status};
    use super::*;

    /// min x0 + 2 x1 + x2 with x2 fixed to 1 by bounds, a singleton row
    /// x1 ≥ 0.5, and an opposite pair x0 − x1 ≤ 0, x1 − x0 ≤ 0.
    fn small() -> StandardConeProblem {
        let mut p = StandardConeProblem::new(vec![1.0, 2.0, 1.0]);
        p.g = SparseMatrix::from_triplets(
            3,
            3,
            &[(0, 1, -2.0), (1, 0, 1.0), (1, 1, -1.0), (1, 2, 1.0), (2, 0, -1.0), (2, 1, 1.0), (2, 2, -1.0)],
        );
        p.h = vec![-1.0, 1.0, -1.0];
        p.nonneg = 3;
        p.lower[2] = 1.0;
        p.upper[2] = 1.0;
        p
    }

    #[test]
    fn reduces_and_matches_unpresolved_solve() {
        let p = small();
        let Outcome::Reduced(red) = presolve(&p) else { panic!("infeasible") };
        assert_eq!(red.problem.num_vars(), 2);
        assert_eq!(red.problem.a.nrows, 1, "pair merged into an equality");
        assert_eq!(red.problem.nonneg, 0);
        let with = solve_with(&p, &Settings::default()).unwrap();
        let without = solve_with(&p, &Settings { presolve: false, ..Settings::default() }).unwrap();
        assert_eq!(with.status, Status::Optimal);
        assert_eq!(without.status, Status::Optimal);
        for (a, b) in with.x.iter().zip(&without.x) {
            assert!((a - b).abs() < 1e-7);
        }
        let r = residuals(&p, &with);
        assert!(r.primal <= 1e-8 && r.dual <= 1e-8 && r.gap <= 1e-8, "{r:?}");
    }

    #[test]
    fn detects_conflicting_fixings() {
        let mut p = StandardConeProblem::new(vec![0.0, 0.0]);
        p.a = SparseMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]);
        p.b = vec![3.0];
        p.lower = vec![1.0, 1.0];
        p.upper = vec![1.0, 1.0];
        assert!(matches!(presolve(&p), Outcome::Infeasible));
        let s = solve_with(&p, &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Infeasible);
    }
}
