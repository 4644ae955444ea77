//! The scaled KKT system
//!
//! ```text
//! [ 0   Aᵀ  Gᵀ  ] [dx]   [rx]
//! [ A   0   0   ] [dy] = [ry]
//! [ G   0  −W²  ] [dz]   [rz]
//! ```
//!
//! factored with static regularization and solved with iterative refinement
//! against the unregularized matrix.

use super::cones::{ConeLayout, NtScaling};
use super::ldl::{sym_upper_mul, Ldl, LdlError};
use super::sparse::SparseMatrix;

const STATIC_REG: f64 = 1e-8;
const DYN_EPS: f64 = 1e-13;
const DYN_DELTA: f64 = 1e-7;
const REFINE_STEPS: usize = 10;

pub struct Kkt {
    n: usize,
    p: usize,
    dim: usize,
    ap: Vec<usize>,
    ai: Vec<usize>,
    vals: Vec<f64>,
    vals_reg: Vec<f64>,
    nonneg_slots: Vec<usize>,
    /// Upper-triangle slots of each SOC block, row-major over `i ≤ j`.
    soc_slots: Vec<Vec<usize>>,
    ldl: Ldl,
    resid: Vec<f64>,
    corr: Vec<f64>,
}

impl Kkt {
    pub fn new(a: &SparseMatrix, g: &SparseMatrix, layout: &ConeLayout) -> Result<Kkt, LdlError> {
        let n = a.ncols;
        let p = a.nrows;
        let m = g.nrows;
        let dim = n + p + m;
        let mut ap = Vec::with_capacity(dim + 1);
        let mut ai = Vec::new();
        let mut vals = Vec::new();
        let mut reg = Vec::new();
        ap.push(0);
        for j in 0..n {
            ai.push(j);
            vals.push(0.0);
            reg.push(STATIC_REG);
            ap.push(ai.len());
        }
        for i in 0..p {
            for (j, v) in a.row(i) {
                ai.push(j);
                vals.push(v);
                reg.push(0.0);
            }
            ai.push(n + i);
            vals.push(0.0);
            reg.push(-STATIC_REG);
            ap.push(ai.len());
        }
        // Block start for each z row (its own index for orthant rows).
        let mut block_start: Vec<usize> = (0..m).collect();
        for b in layout.soc_blocks() {
            for k in b.clone() {
                block_start[k] = b.start;
            }
        }
        let mut nonneg_slots = Vec::with_capacity(layout.nonneg);
        let mut soc_slots: Vec<Vec<usize>> = layout.soc.iter().map(|&d| Vec::with_capacity(d * (d + 1) / 2)).collect();
        let mut soc_of_row = vec![usize::MAX; m];
        for (bi, b) in layout.soc_blocks().enumerate() {
            for k in b {
                soc_of_row[k] = bi;
            }
        }
        // Column-major over the z block means slots for block entry (i, k),
        // i ≤ k, arrive ordered by k then i; record them and reorder below.
        let mut soc_pairs: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); layout.soc.len()];
        for k in 0..m {
            for (j, v) in g.row(k) {
                ai.push(j);
                vals.push(v);
                reg.push(0.0);
            }
            for i in block_start[k]..=k {
                let slot = ai.len();
                ai.push(n + p + i);
                vals.push(0.0);
                reg.push(if i == k { -STATIC_REG } else { 0.0 });
                if k < layout.nonneg {
                    nonneg_slots.push(slot);
                } else {
                    let bi = soc_of_row[k];
                    let s0 = block_start[k];
                    soc_pairs[bi].push((i - s0, k - s0, slot));
                }
            }
            ap.push(ai.len());
        }
        for (bi, mut pairs) in soc_pairs.into_iter().enumerate() {
            pairs.sort_unstable();
            soc_slots[bi] = pairs.into_iter().map(|(_, _, s)| s).collect();
        }
        let signs: Vec<f64> = (0..dim).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
        let ldl = Ldl::analyze(dim, &ap, &ai, &signs)?;
        let vals_reg = vals.iter().zip(&reg).map(|(v, r)| v + r).collect();
        Ok(Kkt {
            n,
            p,
            dim,
            ap,
            ai,
            vals,
            vals_reg,
            nonneg_slots,
            soc_slots,
            ldl,
            resid: vec![0.0; dim],
            corr: vec![0.0; dim],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Loads `−W²` into the z block and refactors.
    pub fn update(&mut self, layout: &ConeLayout, w: &NtScaling) -> Result<(), LdlError> {
        for (slot, d2) in self.nonneg_slots.iter().zip(w.diag_sq()) {
            self.vals[*slot] = -d2;
            self.vals_reg[*slot] = -d2 - STATIC_REG;
        }
        for (bi, &d) in layout.soc.iter().enumerate() {
            let w2 = w.soc_sq(bi);
            let mut it = self.soc_slots[bi].iter();
            for i in 0..d {
                for j in i..d {
                    let slot = *it.next().expect("slot layout");
                    let v = -w2[i * d + j];
                    self.vals[slot] = v;
                    self.vals_reg[slot] = if i == j { v - STATIC_REG } else { v };
                }
            }
        }
        self.ldl.factor(&self.vals_reg, DYN_EPS, DYN_DELTA).map(|_| ())
    }

    /// Solves into `out` with iterative refinement. Returns the final
    /// relative residual.
    pub fn solve(&mut self, rhs: &[f64], out: &mut [f64]) -> f64 {
        let dim = self.dim;
        out[..dim].copy_from_slice(rhs);
        self.ldl.solve(out);
        let scale = 1.0 + rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut err = self.residual(rhs, out);
        for _ in 0..REFINE_STEPS {
            if err <= 1e-14 * scale {
                break;
            }
            self.corr.copy_from_slice(&self.resid);
            self.ldl.solve(&mut self.corr);
            for i in 0..dim {
                self.corr[i] += out[i];
            }
            // Keep `out` intact until the candidate is known to be better.
            let candidate = std::mem::take(&mut self.corr);
            let cand_err = self.residual(rhs, &candidate);
            if cand_err >= err {
                self.corr = candidate;
                // `resid` now belongs to the rejected candidate; restore it.
                self.residual(rhs, out);
                break;
            }
            out[..dim].copy_from_slice(&candidate);
            self.corr = candidate;
            err = cand_err;
        }
        err / scale
    }

    fn residual(&mut self, rhs: &[f64], x: &[f64]) -> f64 {
        sym_upper_mul(self.dim, &self.ap, &self.ai, &self.vals, x, &mut self.resid);
        let mut m = 0.0_f64;
        for i in 0..self.dim {
            self.resid[i] = rhs[i] - self.resid[i];
            m = m.max(self.resid[i].abs());
        }
        m
    }

    pub fn split<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (x, rest) = v.split_at(self.n);
        let (y, z) = rest.split_at(self.p);
        (x, y, z)
    }
}
