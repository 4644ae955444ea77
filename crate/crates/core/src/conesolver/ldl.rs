//! Sparse LDLᵀ for quasi-definite matrices, up-looking, with a fill-reducing
//! AMD permutation and sign-guided dynamic regularization.

const NONE: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum LdlError {
    Ordering,
    NotUpperTriangular,
    NonFinitePivot(usize),
}

/// Symbolic and numeric factor of `P K Pᵀ = L D Lᵀ`.
#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    perm: Vec<usize>,
    /// Permuted upper-triangular pattern of `K`.
    cp: Vec<usize>,
    ci: Vec<usize>,
    cx: Vec<f64>,
    /// `map[k]` is the slot in `cx` of the `k`-th entry of the input pattern.
    map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
    signs: Vec<f64>,
    work: Vec<f64>,
}

impl Ldl {
    /// `ap`/`ai` give the upper triangle (diagonal included) of a symmetric
    /// `n×n` matrix in compressed columns. `signs[i]` is the expected sign of
    /// pivot `i` (in the original ordering).
    pub fn analyze(n: usize, ap: &[usize], ai: &[usize], signs: &[f64]) -> Result<Ldl, LdlError> {
        let perm: Vec<usize> = if n == 0 {
            Vec::new()
        } else {
            let (p, _, _) = amd::order::<usize>(n, ap, ai, &amd::Control::default()).map_err(|_| LdlError::Ordering)?;
            p
        };
        let mut iperm = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            iperm[i] = k;
        }
        // Permuted upper triangle.
        let nnz = ap[n];
        let mut counts = vec![0usize; n + 1];
        let mut coords = Vec::with_capacity(nnz);
        for j in 0..n {
            for &i in &ai[ap[j]..ap[j + 1]] {
                if i > j {
                    return Err(LdlError::NotUpperTriangular);
                }
                let (pi, pj) = (iperm[i], iperm[j]);
                let (r, c) = if pi <= pj { (pi, pj) } else { (pj, pi) };
                counts[c + 1] += 1;
                coords.push((r, c));
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let cp = counts.clone();
        let mut next = counts;
        let mut ci = vec![0; nnz];
        let mut map = vec![0; nnz];
        for (k, &(r, c)) in coords.iter().enumerate() {
            let slot = next[c];
            next[c] += 1;
            ci[slot] = r;
            map[k] = slot;
        }
        // Elimination tree and column counts.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for &r in &ci[cp[j]..cp[j + 1]] {
                let mut i = r;
                while flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        let total = lp[n];
        Ok(Ldl {
            n,
            cp,
            ci,
            cx: vec![0.0; nnz],
            map,
            etree,
            lp,
            li: vec![0; total],
            lx: vec![0.0; total],
            d: vec![0.0; n],
            dinv: vec![0.0; n],
            signs: perm.iter().map(|&i| signs[i]).collect(),
            perm,
            work: vec![0.0; n],
        })
    }

    /// Numeric factorization with values `ax` in the input pattern order.
    /// Pivots whose sign disagrees with the expected one, or whose magnitude
    /// is below `eps`, are replaced by `sign·delta`. Returns how many pivots
    /// were regularized.
    pub fn factor(&mut self, ax: &[f64], eps: f64, delta: f64) -> Result<usize, LdlError> {
        let n = self.n;
        for (k, &slot) in self.map.iter().enumerate() {
            self.cx[slot] = ax[k];
        }
        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx = Vec::with_capacity(n);
        let mut elim = Vec::with_capacity(n);
        let mut next_space: Vec<usize> = self.lp[..n].to_vec();
        let mut bumped = 0;
        for k in 0..n {
            y_idx.clear();
            self.d[k] = 0.0;
            for p in self.cp[k]..self.cp[k + 1] {
                let b = self.ci[p];
                if b == k {
                    self.d[k] += self.cx[p];
                    continue;
                }
                y_vals[b] += self.cx[p];
                if !y_marked[b] {
                    y_marked[b] = true;
                    elim.clear();
                    elim.push(b);
                    let mut nx = self.etree[b];
                    while nx != NONE && nx < k {
                        if y_marked[nx] {
                            break;
                        }
                        y_marked[nx] = true;
                        elim.push(nx);
                        nx = self.etree[nx];
                    }
                    while let Some(e) = elim.pop() {
                        y_idx.push(e);
                    }
                }
            }
            for idx in (0..y_idx.len()).rev() {
                let c = y_idx[idx];
                let yc = y_vals[c];
                let end = next_space[c];
                for j in self.lp[c]..end {
                    y_vals[self.li[j]] -= self.lx[j] * yc;
                }
                self.li[end] = k;
                let l = yc * self.dinv[c];
                self.lx[end] = l;
                self.d[k] -= yc * l;
                next_space[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }
            let s = self.signs[k];
            if !self.d[k].is_finite() {
                return Err(LdlError::NonFinitePivot(self.perm[k]));
            }
            if s * self.d[k] <= eps {
                self.d[k] = s * delta;
                bumped += 1;
            }
            self.dinv[k] = 1.0 / self.d[k];
        }
        Ok(bumped)
    }

    /// Solves `K x = b` in place using the last factorization.
    pub fn solve(&mut self, b: &mut [f64]) {
        let n = self.n;
        let x = &mut self.work;
        for k in 0..n {
            x[k] = b[self.perm[k]];
        }
        for j in 0..n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] *= self.dinv[j];
        }
        for j in (0..n).rev() {
            let mut acc = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                acc -= self.lx[p] * x[self.li[p]];
            }
            x[j] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }
}

/// `y = K x` for `K` given by its upper triangle.
pub fn sym_upper_mul(n: usize, ap: &[usize], ai: &[usize], ax: &[f64], x: &[f64], y: &mut [f64]) {
    y[..n].fill(0.0);
    for j in 0..n {
        for p in ap[j]..ap[j + 1] {
            let i = ai[p];
            y[i] += ax[p] * x[j];
            if i != j {
                y[j] += ax[p] * x[i];
            }
        }
    }
}
