//! Random feasible, bounded SOCPs and a dense ADMM reference solver.

use nalgebra::{DMatrix, DVector};
use phasebal::conesolver::{SparseMatrix, StandardConeProblem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Box-bounded problem built around an interior point, so it is feasible
/// and has a finite optimum.
pub fn random_socp(r: &mut ChaCha8Rng) -> StandardConeProblem {
    let n = r.gen_range(3..=8);
    let x0: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let dot = |row: &[f64]| row.iter().zip(&x0).map(|(a, b)| a * b).sum::<f64>();
    let rand_row = |r: &mut ChaCha8Rng| (0..n).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<f64>>();

    let n_eq = r.gen_range(0..=2.min(n - 1));
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..n_eq {
        let row = rand_row(r);
        b.push(dot(&row));
        a.extend(row.iter().enumerate().map(|(j, &v)| (i, j, v)));
    }

    let mut g = Vec::new();
    let mut h = Vec::new();
    let n_lin = r.gen_range(0..=4);
    for _ in 0..n_lin {
        let row = rand_row(r);
        let slack = r.gen_range(0.05..1.0);
        h.push(dot(&row) + slack);
        let i = h.len() - 1;
        g.extend(row.iter().enumerate().map(|(j, &v)| (i, j, v)));
    }
    let mut soc = Vec::new();
    for _ in 0..r.gen_range(1..=3) {
        let d = r.gen_range(2..=5);
        // Slack (t, u) strictly inside the cone.
        let u: Vec<f64> = (1..d).map(|_| r.gen_range(-1.0..1.0)).collect();
        let t = u.iter().map(|v| v * v).sum::<f64>().sqrt() + r.gen_range(0.05..1.0);
        for k in 0..d {
            let row = rand_row(r);
            let s = if k == 0 { t } else { u[k - 1] };
            h.push(dot(&row) + s);
            let i = h.len() - 1;
            g.extend(row.iter().enumerate().map(|(j, &v)| (i, j, v)));
        }
        soc.push(d);
    }
    let c: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let mut p = StandardConeProblem::new(c);
    p.a = SparseMatrix::from_triplets(n_eq, n, &a);
    p.b = b;
    p.g = SparseMatrix::from_triplets(h.len(), n, &g);
    p.h = h;
    p.nonneg = n_lin;
    p.soc = soc;
    p.lower = vec![-3.0; n];
    p.upper = vec![3.0; n];
    p
}

enum Block {
    Zero(usize),
    Orthant(usize),
    Soc(usize),
}

fn project(blocks: &[Block], v: &mut [f64]) {
    let mut k = 0;
    for b in blocks {
        match *b {
            Block::Zero(d) => {
                v[k..k + d].fill(0.0);
                k += d;
            }
            Block::Orthant(d) => {
                for x in &mut v[k..k + d] {
                    *x = x.max(0.0);
                }
                k += d;
            }
            Block::Soc(d) => {
                let t = v[k];
                let nu = v[k + 1..k + d].iter().map(|x| x * x).sum::<f64>().sqrt();
                if nu <= -t {
                    v[k..k + d].fill(0.0);
                } else if nu > t {
                    let f = 0.5 * (t + nu);
                    v[k] = f;
                    for x in &mut v[k + 1..k + d] {
                        *x *= f / nu;
                    }
                }
                k += d;
            }
        }
    }
}

/// Minimizes `cᵀx` over `F x + s = f`, `s ∈ K` by over-relaxed ADMM on dense
/// data. Bounds become orthant rows; equalities form a zero cone.
pub fn admm_objective(p: &StandardConeProblem, max_iter: usize) -> f64 {
    let n = p.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let dense = |m: &SparseMatrix, i: usize| {
        let mut r = vec![0.0; n];
        for (j, v) in m.row(i) {
            r[j] += v;
        }
        r
    };
    let mut blocks = Vec::new();
    for i in 0..p.a.nrows {
        rows.push((dense(&p.a, i), p.b[i]));
    }
    blocks.push(Block::Zero(p.a.nrows));
    let mut nb = 0;
    for j in 0..n {
        if p.lower[j].is_finite() {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            rows.push((r, -p.lower[j]));
            nb += 1;
        }
        if p.upper[j].is_finite() {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            rows.push((r, p.upper[j]));
            nb += 1;
        }
    }
    for i in 0..p.g.nrows {
        rows.push((dense(&p.g, i), p.h[i]));
    }
    blocks.push(Block::Orthant(nb + p.nonneg));
    blocks.extend(p.soc.iter().map(|&d| Block::Soc(d)));

    let m = rows.len();
    let f_mat = DMatrix::from_fn(m, n, |i, j| rows[i].0[j]);
    let f_vec = DVector::from_iterator(m, rows.iter().map(|r| r.1));
    let c = DVector::from_column_slice(&p.c);
    let rho = 1.0;
    let alpha = 1.6;
    let chol = (f_mat.transpose() * &f_mat).cholesky().expect("full column rank");
    let mut s = DVector::zeros(m);
    let mut u = DVector::zeros(m);
    let mut x = DVector::zeros(n);
    for _ in 0..max_iter {
        let rhs = -&c / rho - f_mat.transpose() * (&s - &f_vec + &u);
        x = chol.solve(&rhs);
        let fx = &f_mat * &x;
        let relaxed = alpha * &fx - (1.0 - alpha) * (&s - &f_vec);
        let mut v: Vec<f64> = (&f_vec - &relaxed - &u).iter().copied().collect();
        project(&blocks, &mut v);
        let s_new = DVector::from_vec(v);
        u += &relaxed + &s_new - &f_vec;
        let primal = (&fx + &s_new - &f_vec).amax();
        let dual = (rho * f_mat.transpose() * (&s_new - &s)).amax();
        s = s_new;
        if primal < 1e-11 && dual < 1e-11 {
            break;
        }
    }
    c.dot(&x)
}
