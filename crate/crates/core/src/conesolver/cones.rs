//! Cone arithmetic for `R₊ⁿ × Q^{d₁} × … × Q^{d_k}`: Jordan products,
//! Nesterov–Todd scalings and step lengths to the boundary.

/// Layout of the cone rows: `nonneg` orthant rows first, then SOC blocks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeLayout {
    pub nonneg: usize,
    pub soc: Vec<usize>,
    soc_offsets: Vec<usize>,
}

impl ConeLayout {
    pub fn new(nonneg: usize, soc: Vec<usize>) -> Self {
        let mut soc_offsets = Vec::with_capacity(soc.len());
        let mut off = nonneg;
        for &d in &soc {
            soc_offsets.push(off);
            off += d;
        }
        ConeLayout { nonneg, soc, soc_offsets }
    }

    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>()
    }

    /// Barrier degree: one per orthant row and one per second-order cone.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    pub fn soc_blocks(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.soc_offsets.iter().zip(&self.soc).map(|(&o, &d)| o..o + d)
    }

    pub fn identity(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[..self.nonneg].fill(1.0);
        for b in self.soc_blocks() {
            e[b.start] = 1.0;
        }
        e
    }

    /// Smallest "eigenvalue": `min uᵢ` on the orthant, `u₀ − ‖u₁‖` on SOCs.
    pub fn min_eig(&self, u: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &v in &u[..self.nonneg] {
            m = m.min(v);
        }
        for b in self.soc_blocks() {
            m = m.min(u[b.start] - norm(&u[b.start + 1..b.end]));
        }
        m
    }

    /// `u ∘ v`.
    pub fn jordan_prod(&self, u: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..self.nonneg {
            out[i] = u[i] * v[i];
        }
        for b in self.soc_blocks() {
            let (u0, v0) = (u[b.start], v[b.start]);
            out[b.start] = u[b.clone()].iter().zip(&v[b.clone()]).map(|(a, c)| a * c).sum();
            for k in b.start + 1..b.end {
                out[k] = u0 * v[k] + v0 * u[k];
            }
        }
    }

    /// Solves `λ ∘ x = d` for `x`.
    pub fn jordan_div(&self, lambda: &[f64], d: &[f64], out: &mut [f64]) {
        for i in 0..self.nonneg {
            out[i] = d[i] / lambda[i];
        }
        for b in self.soc_blocks() {
            let l0 = lambda[b.start];
            let l1 = &lambda[b.start + 1..b.end];
            let d0 = d[b.start];
            let d1 = &d[b.start + 1..b.end];
            let det = l0 * l0 - dot(l1, l1);
            let x0 = (l0 * d0 - dot(l1, d1)) / det;
            out[b.start] = x0;
            for (k, (li, di)) in l1.iter().zip(d1).enumerate() {
                out[b.start + 1 + k] = (di - x0 * li) / l0;
            }
        }
    }

    /// Largest `α ≥ 0` (capped at `cap`) with `u + α du` in the cone.
    pub fn max_step(&self, u: &[f64], du: &[f64], cap: f64) -> f64 {
        let mut a = cap;
        for i in 0..self.nonneg {
            if du[i] < 0.0 {
                a = a.min(-u[i] / du[i]);
            }
        }
        for b in self.soc_blocks() {
            a = a.min(soc_step(&u[b.clone()], &du[b]));
        }
        a.max(0.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Step to the boundary of one second-order cone: smallest positive root of
/// `det(u + α du) = 0`, or infinity when the ray never leaves the cone.
fn soc_step(u: &[f64], du: &[f64]) -> f64 {
    let a = du[0] * du[0] - dot(&du[1..], &du[1..]);
    let b = u[0] * du[0] - dot(&u[1..], &du[1..]);
    let c = (u[0] * u[0] - dot(&u[1..], &u[1..])).max(0.0);
    // det(u + α du) = a α² + 2 b α + c, with c > 0 inside the cone.
    let scale = a.abs().max(b.abs()).max(c);
    if scale == 0.0 {
        return f64::INFINITY;
    }
    if a.abs() <= 1e-14 * scale {
        if b < 0.0 {
            return c / (-2.0 * b);
        }
        return f64::INFINITY;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    // Stable roots of aα² + 2bα + c.
    let q = -(b + b.signum() * sq);
    let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (-b / a, -b / a) };
    let mut best = f64::INFINITY;
    for r in [r1, r2] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    // For a > 0 with both roots positive the ray exits at the smaller root
    // only if it heads out of the positive nappe; u0 + α du0 must stay ≥ 0.
    if a > 0.0 && du[0] >= 0.0 && b >= 0.0 {
        return f64::INFINITY;
    }
    best
}

/// Nesterov–Todd scaling `W` with `W z = W⁻¹ s = λ`.
#[derive(Debug, Clone)]
pub struct NtScaling {
    /// `sqrt(s/z)` on orthant rows.
    diag: Vec<f64>,
    /// `(η, w̄)` per SOC block.
    soc: Vec<(f64, Vec<f64>)>,
}

impl NtScaling {
    pub fn new(layout: &ConeLayout, s: &[f64], z: &[f64]) -> Self {
        let diag = (0..layout.nonneg).map(|i| (s[i] / z[i]).sqrt()).collect();
        let soc = layout
            .soc_blocks()
            .map(|b| {
                let sb = &s[b.clone()];
                let zb = &z[b];
                let sdet = (sb[0] * sb[0] - dot(&sb[1..], &sb[1..])).max(1e-300);
                let zdet = (zb[0] * zb[0] - dot(&zb[1..], &zb[1..])).max(1e-300);
                let (sn, zn) = (sdet.sqrt(), zdet.sqrt());
                let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
                let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
                let gamma = ((1.0 + dot(&sbar, &zbar)) / 2.0).sqrt();
                let mut w = vec![0.0; sb.len()];
                w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                for k in 1..sb.len() {
                    w[k] = (sbar[k] - zbar[k]) / (2.0 * gamma);
                }
                // Renormalize so that det(w̄) = 1 exactly.
                let wdet = w[0] * w[0] - dot(&w[1..], &w[1..]);
                if wdet > 0.0 {
                    let r = wdet.sqrt();
                    w.iter_mut().for_each(|v| *v /= r);
                }
                let eta = (sdet / zdet).powf(0.25);
                (eta, w)
            })
            .collect();
        NtScaling { diag, soc }
    }

    /// `out = W v`.
    pub fn apply(&self, layout: &ConeLayout, v: &[f64], out: &mut [f64]) {
        for (i, d) in self.diag.iter().enumerate() {
            out[i] = d * v[i];
        }
        for (b, (eta, w)) in layout.soc_blocks().zip(&self.soc) {
            let vb = &v[b.clone()];
            let w1v1 = dot(&w[1..], &vb[1..]);
            out[b.start] = eta * (w[0] * vb[0] + w1v1);
            let k = vb[0] + w1v1 / (1.0 + w[0]);
            for i in 1..vb.len() {
                out[b.start + i] = eta * (vb[i] + k * w[i]);
            }
        }
    }

    /// `out = W⁻¹ v`.
    pub fn apply_inv(&self, layout: &ConeLayout, v: &[f64], out: &mut [f64]) {
        for (i, d) in self.diag.iter().enumerate() {
            out[i] = v[i] / d;
        }
        for (b, (eta, w)) in layout.soc_blocks().zip(&self.soc) {
            let vb = &v[b.clone()];
            let w1v1 = dot(&w[1..], &vb[1..]);
            out[b.start] = (w[0] * vb[0] - w1v1) / eta;
            let k = -vb[0] + w1v1 / (1.0 + w[0]);
            for i in 1..vb.len() {
                out[b.start + i] = (vb[i] + k * w[i]) / eta;
            }
        }
    }

    /// Diagonal of `W²` on orthant rows.
    pub fn diag_sq(&self) -> impl Iterator<Item = f64> + '_ {
        self.diag.iter().map(|d| d * d)
    }

    /// Dense `W²` of SOC block `k`, row-major `d×d`: `η²(2w̄w̄ᵀ − J)`.
    pub fn soc_sq(&self, k: usize) -> Vec<f64> {
        let (eta, w) = &self.soc[k];
        let d = w.len();
        let e2 = eta * eta;
        let mut m = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut v = 2.0 * w[i] * w[j];
                if i == j {
                    v += if i == 0 { -1.0 } else { 1.0 };
                }
                m[i * d + j] = e2 * v;
            }
        }
        m
    }
}
