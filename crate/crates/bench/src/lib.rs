//! Shared inputs for the criterion benchmarks.

use phasebal::conesolver::{SparseMatrix, StandardConeProblem};

/// Chain of `k` three-dimensional cones `‖(x_i, y_i)‖ ≤ t_i` with
/// `x_i + y_i = 1` and `t_i ≤ t_{i+1}`; minimizes `Σ t_i`.
pub fn cone_chain(k: usize) -> StandardConeProblem {
    let n = 3 * k;
    let mut c = vec![0.0; n];
    let mut eq = Vec::new();
    let mut g = Vec::new();
    let mut h = Vec::new();
    for i in 0..k {
        c[3 * i + 2] = 1.0;
        eq.push((i, 3 * i, 1.0));
        eq.push((i, 3 * i + 1, 1.0));
    }
    let mut row = 0;
    for i in 0..k.saturating_sub(1) {
        g.push((row, 3 * i + 2, 1.0));
        g.push((row, 3 * (i + 1) + 2, -1.0));
        h.push(0.0);
        row += 1;
    }
    let nonneg = row;
    for i in 0..k {
        g.push((row, 3 * i + 2, -1.0));
        g.push((row + 1, 3 * i, -1.0));
        g.push((row + 2, 3 * i + 1, -1.0));
        h.extend([0.0, 0.0, 0.0]);
        row += 3;
    }
    let mut p = StandardConeProblem::new(c);
    p.a = SparseMatrix::from_triplets(k, n, &eq);
    p.b = vec![1.0; k];
    p.g = SparseMatrix::from_triplets(row, n, &g);
    p.h = h;
    p.nonneg = nonneg;
    p.soc = vec![3; k];
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use phasebal::conesolver::{solve_with, Settings, Status};

    #[test]
    fn chain_optimum_is_known() {
        // Each cone is tightest at x = y = 1/2.
        let s = solve_with(&cone_chain(8), &Settings::default()).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 8.0 * 0.5f64.sqrt()).abs() < 1e-7);
    }
}
