//! Homogeneous self-dual interior-point method with Nesterov–Todd scaling
//! and Mehrotra predictor–corrector steps. Works on problems without
//! variable bounds (see `StandardConeProblem::expand_bounds`).

use super::cones::{ConeLayout, NtScaling};
use super::kkt::Kkt;
use super::sparse::{dot, inf_norm, SparseMatrix};
use super::{Settings, StandardConeProblem, Status};

const STEP_FRACTION: f64 = 0.99;
const RUIZ_PASSES: usize = 15;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;

pub struct RawSolution {
    pub status: Status,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub pcost: f64,
    pub dcost: f64,
    pub pres: f64,
    pub dres: f64,
    pub gap: f64,
    pub iterations: usize,
}

/// Diagonal equilibration `Ã = E_A A D`, `G̃ = E_G G D`, `c̃ = σ D c`.
struct Scaling {
    d: Vec<f64>,
    ea: Vec<f64>,
    eg: Vec<f64>,
    cs: f64,
}

impl Scaling {
    fn identity(n: usize, p: usize, m: usize) -> Self {
        Scaling {
            d: vec![1.0; n],
            ea: vec![1.0; p],
            eg: vec![1.0; m],
            cs: 1.0,
        }
    }

    fn ruiz(prob: &StandardConeProblem, layout: &ConeLayout) -> Self {
        let (n, p, m) = (prob.num_vars(), prob.a.nrows, prob.g.nrows);
        let mut sc = Scaling::identity(n, p, m);
        let mut a = prob.a.clone();
        let mut g = prob.g.clone();
        for _ in 0..RUIZ_PASSES {
            let mut col = vec![0.0_f64; n];
            for mat in [&a, &g] {
                for (j, v) in mat.col_idx.iter().zip(&mat.vals) {
                    col[*j] = col[*j].max(v.abs());
                }
            }
            let row_norm = |mat: &SparseMatrix, i: usize| mat.row(i).fold(0.0_f64, |acc, (_, v)| acc.max(v.abs()));
            let mut ra: Vec<f64> = (0..p).map(|i| row_norm(&a, i)).collect();
            let mut rg: Vec<f64> = (0..m).map(|i| row_norm(&g, i)).collect();
            for b in layout.soc_blocks() {
                let mx = rg[b.clone()].iter().fold(0.0_f64, |acc, v| acc.max(*v));
                rg[b].fill(mx);
            }
            let step = |norm: f64| if norm > 0.0 { 1.0 / norm.sqrt() } else { 1.0 };
            let dc: Vec<f64> = col.iter().map(|&v| step(v)).collect();
            ra.iter_mut().for_each(|v| *v = step(*v));
            rg.iter_mut().for_each(|v| *v = step(*v));
            let clampmul = |acc: &mut [f64], f: &mut [f64]| {
                for (a, f) in acc.iter_mut().zip(f.iter_mut()) {
                    let next = (*a * *f).clamp(SCALE_MIN, SCALE_MAX);
                    *f = next / *a;
                    *a = next;
                }
            };
            let mut dc = dc;
            clampmul(&mut sc.d, &mut dc);
            clampmul(&mut sc.ea, &mut ra);
            clampmul(&mut sc.eg, &mut rg);
            scale_matrix(&mut a, &ra, &dc);
            scale_matrix(&mut g, &rg, &dc);
            let spread = col.iter().chain(&[1.0]).fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| {
                if v > 0.0 {
                    (lo.min(v), hi.max(v))
                } else {
                    (lo, hi)
                }
            });
            if spread.1 / spread.0 < 1.0 + 1e-3 {
                break;
            }
        }
        let dc_norm = prob.c.iter().zip(&sc.d).fold(0.0_f64, |m, (c, d)| m.max((c * d).abs()));
        if dc_norm > 0.0 {
            sc.cs = (1.0 / dc_norm).clamp(SCALE_MIN, SCALE_MAX);
        }
        sc
    }

    fn apply(&self, prob: &StandardConeProblem) -> ScaledData {
        let mut a = prob.a.clone();
        let mut g = prob.g.clone();
        scale_matrix(&mut a, &self.ea, &self.d);
        scale_matrix(&mut g, &self.eg, &self.d);
        ScaledData {
            c: prob.c.iter().zip(&self.d).map(|(c, d)| self.cs * c * d).collect(),
            b: prob.b.iter().zip(&self.ea).map(|(b, e)| b * e).collect(),
            h: prob.h.iter().zip(&self.eg).map(|(h, e)| h * e).collect(),
            a,
            g,
        }
    }

    fn unscale(&self, it: &Iterate, div: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let x = it.x.iter().zip(&self.d).map(|(x, d)| x * d / div).collect();
        let y = it.y.iter().zip(&self.ea).map(|(y, e)| y * e / (self.cs * div)).collect();
        let z = it.z.iter().zip(&self.eg).map(|(z, e)| z * e / (self.cs * div)).collect();
        let s = it.s.iter().zip(&self.eg).map(|(s, e)| s / (e * div)).collect();
        (x, y, z, s)
    }
}

fn scale_matrix(mat: &mut SparseMatrix, rows: &[f64], cols: &[f64]) {
    for i in 0..mat.nrows {
        for k in mat.row_ptr[i]..mat.row_ptr[i + 1] {
            mat.vals[k] *= rows[i] * cols[mat.col_idx[k]];
        }
    }
}

struct ScaledData {
    c: Vec<f64>,
    a: SparseMatrix,
    b: Vec<f64>,
    g: SparseMatrix,
    h: Vec<f64>,
}

#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Metrics {
    pres: f64,
    dres: f64,
    gap: f64,
    pcost: f64,
    dcost: f64,
}

impl Metrics {
    fn merit(&self) -> f64 {
        self.pres.max(self.dres).max(self.gap)
    }
}

fn metrics(prob: &StandardConeProblem, x: &[f64], y: &[f64], z: &[f64], s: &[f64]) -> Metrics {
    let ax = prob.a.mul(x);
    let gx = prob.g.mul(x);
    let mut pr = 0.0_f64;
    for (v, b) in ax.iter().zip(&prob.b) {
        pr = pr.max((v - b).abs());
    }
    for i in 0..prob.h.len() {
        pr = pr.max((gx[i] + s[i] - prob.h[i]).abs());
    }
    let mut r = prob.c.clone();
    prob.a.add_t_mul_vec(y, &mut r);
    prob.g.add_t_mul_vec(z, &mut r);
    let pcost = dot(&prob.c, x);
    let dcost = -dot(&prob.b, y) - dot(&prob.h, z);
    Metrics {
        pres: pr / (1.0 + inf_norm(&prob.b).max(inf_norm(&prob.h))),
        dres: inf_norm(&r) / (1.0 + inf_norm(&prob.c)),
        gap: (pcost - dcost).abs() / pcost.abs().min(dcost.abs()).max(1.0),
        pcost,
        dcost,
    }
}

pub fn solve(prob: &StandardConeProblem, settings: &Settings) -> RawSolution {
    let layout = prob.layout();
    let (n, p, m) = (prob.num_vars(), prob.a.nrows, prob.g.nrows);
    let scaling = if settings.equilibrate {
        Scaling::ruiz(prob, &layout)
    } else {
        Scaling::identity(n, p, m)
    };
    let data = scaling.apply(prob);
    let failed = |iterations| RawSolution {
        status: Status::IterationLimit,
        x: vec![0.0; n],
        s: vec![0.0; m],
        y: vec![0.0; p],
        z: vec![0.0; m],
        pcost: f64::NAN,
        dcost: f64::NAN,
        pres: f64::INFINITY,
        dres: f64::INFINITY,
        gap: f64::INFINITY,
        iterations,
    };
    let mut kkt = match Kkt::new(&data.a, &data.g, &layout) {
        Ok(k) => k,
        Err(_) => return failed(0),
    };
    let dim = kkt.dim();
    let e = layout.identity();

    // Initial point from two least-squares-like solves with W = I.
    let ident = NtScaling::new(&layout, &e, &e);
    if kkt.update(&layout, &ident).is_err() {
        return failed(0);
    }
    let mut rhs = vec![0.0; dim];
    let mut sol = vec![0.0; dim];
    rhs[n..n + p].copy_from_slice(&data.b);
    rhs[n + p..].copy_from_slice(&data.h);
    kkt.solve(&rhs, &mut sol);
    let x0 = sol[..n].to_vec();
    let mut s0: Vec<f64> = sol[n + p..].iter().map(|v| -v).collect();
    push_interior(&layout, &mut s0, &e);
    rhs.fill(0.0);
    for j in 0..n {
        rhs[j] = -data.c[j];
    }
    kkt.solve(&rhs, &mut sol);
    let y0 = sol[n..n + p].to_vec();
    let mut z0 = sol[n + p..].to_vec();
    push_interior(&layout, &mut z0, &e);
    let mut it = Iterate {
        x: x0,
        y: y0,
        z: z0,
        s: s0,
        tau: 1.0,
        kappa: 1.0,
    };

    let deg = layout.degree() as f64;
    let mut best: Option<(f64, RawSolution)> = None;
    let mut u1 = vec![0.0; dim];
    let mut u2 = vec![0.0; dim];
    let mut tmp = vec![0.0; m];
    let mut tmp2 = vec![0.0; m];
    let mut lambda = vec![0.0; m];
    let mut ds_vec = vec![0.0; m];
    let mut stalls = 0;

    for iter in 0..=settings.max_iter {
        // Residuals of the embedding in scaled space.
        let mut rx = data.a.t_mul(&it.y);
        data.g.add_t_mul_vec(&it.z, &mut rx);
        for j in 0..n {
            rx[j] += data.c[j] * it.tau;
        }
        let ax = data.a.mul(&it.x);
        let ry: Vec<f64> = (0..p).map(|i| -ax[i] + data.b[i] * it.tau).collect();
        let gx = data.g.mul(&it.x);
        let rz: Vec<f64> = (0..m).map(|i| -gx[i] + data.h[i] * it.tau - it.s[i]).collect();
        let rt = -dot(&data.c, &it.x) - dot(&data.b, &it.y) - dot(&data.h, &it.z) - it.kappa;

        // Termination on unscaled quantities.
        let (x, y, z, s) = scaling.unscale(&it, it.tau);
        let mt = metrics(prob, &x, &y, &z, &s);
        let finite = mt.pres.is_finite() && mt.dres.is_finite() && mt.gap.is_finite();
        if finite && mt.pres <= settings.tol && mt.dres <= settings.tol && mt.gap <= settings.tol {
            return RawSolution {
                status: Status::Optimal,
                x,
                s,
                y,
                z,
                pcost: mt.pcost,
                dcost: mt.dcost,
                pres: mt.pres,
                dres: mt.dres,
                gap: mt.gap,
                iterations: iter,
            };
        }
        if finite && best.as_ref().map_or(true, |(b, _)| mt.merit() < *b) {
            best = Some((
                mt.merit(),
                RawSolution {
                    status: Status::IterationLimit,
                    x,
                    s,
                    y,
                    z,
                    pcost: mt.pcost,
                    dcost: mt.dcost,
                    pres: mt.pres,
                    dres: mt.dres,
                    gap: mt.gap,
                    iterations: iter,
                },
            ));
        }
        if let Some(cert) = certificate(prob, &scaling, &it, settings.infeas_tol, iter) {
            return cert;
        }
        if iter == settings.max_iter || !finite {
            break;
        }

        let w = NtScaling::new(&layout, &it.s, &it.z);
        w.apply(&layout, &it.z, &mut lambda);
        if kkt.update(&layout, &w).is_err() {
            break;
        }
        for j in 0..n {
            rhs[j] = -data.c[j];
        }
        rhs[n..n + p].copy_from_slice(&data.b);
        rhs[n + p..].copy_from_slice(&data.h);
        kkt.solve(&rhs, &mut u1);
        let (u1x, u1y, u1z) = kkt.split(&u1);
        let denom_base = -dot(&data.c, u1x) - dot(&data.b, u1y) - dot(&data.h, u1z);
        let u1 = u1.clone();

        let mu = (dot(&it.s, &it.z) + it.tau * it.kappa) / (deg + 1.0);

        // Predictor: d_s = −λ∘λ, so λ \ d_s = −λ.
        let neg_lambda: Vec<f64> = lambda.iter().map(|v| -v).collect();
        let aff = direction(
            &mut kkt, &layout, &w, &data, &u1, denom_base, &rx, &ry, &rz, rt, 1.0, &neg_lambda,
            -it.tau * it.kappa, &it, &mut rhs, &mut u2, &mut tmp,
        );
        let alpha_aff = step_length(&layout, &it, &aff, 1.0);
        let sigma = (1.0 - alpha_aff).powi(3).clamp(0.0, 1.0);

        // Corrector: d_s = −λ∘λ + σμe − (W⁻¹Δs_a)∘(WΔz_a).
        w.apply_inv(&layout, &aff.ds, &mut tmp);
        w.apply(&layout, &aff.dz, &mut tmp2);
        layout.jordan_prod(&tmp, &tmp2, &mut ds_vec);
        layout.jordan_prod(&lambda, &lambda, &mut tmp);
        for i in 0..m {
            ds_vec[i] = -tmp[i] + sigma * mu * e[i] - ds_vec[i];
        }
        let mut lam_div = vec![0.0; m];
        layout.jordan_div(&lambda, &ds_vec, &mut lam_div);
        let dk = -it.tau * it.kappa + sigma * mu - aff.dtau * aff.dkappa;
        let comb = direction(
            &mut kkt, &layout, &w, &data, &u1, denom_base, &rx, &ry, &rz, rt, 1.0 - sigma, &lam_div, dk,
            &it, &mut rhs, &mut u2, &mut tmp,
        );
        let alpha = (STEP_FRACTION * step_length(&layout, &it, &comb, f64::INFINITY)).min(1.0);
        if !(alpha > 1e-12) {
            stalls += 1;
            if stalls >= 3 {
                break;
            }
            continue;
        }
        stalls = 0;
        for j in 0..n {
            it.x[j] += alpha * comb.dx[j];
        }
        for i in 0..p {
            it.y[i] += alpha * comb.dy[i];
        }
        for i in 0..m {
            it.z[i] += alpha * comb.dz[i];
            it.s[i] += alpha * comb.ds[i];
        }
        it.tau += alpha * comb.dtau;
        it.kappa += alpha * comb.dkappa;
        // Keep the embedding from drifting to enormous magnitudes.
        let big = it.tau.max(it.kappa);
        if big > 1e8 {
            let f = 1.0 / big;
            it.x.iter_mut().chain(it.y.iter_mut()).chain(it.z.iter_mut()).chain(it.s.iter_mut()).for_each(|v| *v *= f);
            it.tau *= f;
            it.kappa *= f;
        }
    }
    match best {
        Some((_, mut b)) => {
            b.iterations = b.iterations.max(1);
            b
        }
        None => failed(settings.max_iter),
    }
}

fn push_interior(layout: &ConeLayout, v: &mut [f64], e: &[f64]) {
    if v.is_empty() {
        return;
    }
    let alpha = -layout.min_eig(v);
    let norm = inf_norm(v).max(1.0);
    if alpha >= -1e-8 * norm {
        for (vi, ei) in v.iter_mut().zip(e) {
            *vi += (1.0 + alpha) * ei;
        }
    }
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dz: Vec<f64>,
    ds: Vec<f64>,
    dtau: f64,
    dkappa: f64,
}

/// Solves for one Newton direction given `λ \ d_s` and `d_κ`.
#[allow(clippy::too_many_arguments)]
fn direction(
    kkt: &mut Kkt,
    layout: &ConeLayout,
    w: &NtScaling,
    data: &ScaledData,
    u1: &[f64],
    denom_base: f64,
    rx: &[f64],
    ry: &[f64],
    rz: &[f64],
    rt: f64,
    eta: f64,
    lam_div_ds: &[f64],
    d_kappa: f64,
    it: &Iterate,
    rhs: &mut [f64],
    u2: &mut [f64],
    tmp: &mut [f64],
) -> Direction {
    let n = rx.len();
    let p = ry.len();
    let m = rz.len();
    w.apply(layout, lam_div_ds, tmp);
    for j in 0..n {
        rhs[j] = -eta * rx[j];
    }
    for i in 0..p {
        rhs[n + i] = eta * ry[i];
    }
    for i in 0..m {
        rhs[n + p + i] = eta * rz[i] - tmp[i];
    }
    kkt.solve(rhs, u2);
    let (u2x, u2y, u2z) = kkt.split(u2);
    let num = -eta * rt + d_kappa / it.tau + dot(&data.c, u2x) + dot(&data.b, u2y) + dot(&data.h, u2z);
    let den = it.kappa / it.tau + denom_base;
    let dtau = num / den;
    let comb: Vec<f64> = u2.iter().zip(u1).map(|(a, b)| a + dtau * b).collect();
    let dx = comb[..n].to_vec();
    let dy = comb[n..n + p].to_vec();
    let dz = comb[n + p..].to_vec();
    // ds = W(λ \ d_s − W dz)
    let mut wdz = vec![0.0; m];
    w.apply(layout, &dz, &mut wdz);
    for i in 0..m {
        wdz[i] = lam_div_ds[i] - wdz[i];
    }
    let mut ds = vec![0.0; m];
    w.apply(layout, &wdz, &mut ds);
    let dkappa = (d_kappa - it.kappa * dtau) / it.tau;
    Direction { dx, dy, dz, ds, dtau, dkappa }
}

fn step_length(layout: &ConeLayout, it: &Iterate, d: &Direction, cap: f64) -> f64 {
    let mut a = cap;
    a = a.min(layout.max_step(&it.s, &d.ds, a));
    a = a.min(layout.max_step(&it.z, &d.dz, a));
    if d.dtau < 0.0 {
        a = a.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        a = a.min(-it.kappa / d.dkappa);
    }
    a
}

/// Checks for a normalized infeasibility or unboundedness certificate.
fn certificate(prob: &StandardConeProblem, sc: &Scaling, it: &Iterate, tol: f64, iter: usize) -> Option<RawSolution> {
    if it.tau >= it.kappa {
        return None;
    }
    let (x, y, z, s) = sc.unscale(it, 1.0);
    let byhz = dot(&prob.b, &y) + dot(&prob.h, &z);
    let n = prob.num_vars();
    if byhz < 0.0 {
        let k = -1.0 / byhz;
        let yn: Vec<f64> = y.iter().map(|v| v * k).collect();
        let zn: Vec<f64> = z.iter().map(|v| v * k).collect();
        let mut r = prob.a.t_mul(&yn);
        prob.g.add_t_mul_vec(&zn, &mut r);
        let res = inf_norm(&r);
        if res <= tol {
            return Some(RawSolution {
                status: Status::Infeasible,
                x: vec![f64::NAN; n],
                s: vec![f64::NAN; s.len()],
                y: yn,
                z: zn,
                pcost: f64::INFINITY,
                dcost: f64::INFINITY,
                pres: f64::NAN,
                dres: res,
                gap: f64::NAN,
                iterations: iter,
            });
        }
    }
    let cx = dot(&prob.c, &x);
    if cx < 0.0 {
        let k = -1.0 / cx;
        let xn: Vec<f64> = x.iter().map(|v| v * k).collect();
        let sn: Vec<f64> = s.iter().map(|v| v * k).collect();
        let ax = prob.a.mul(&xn);
        let gx = prob.g.mul(&xn);
        let mut res = inf_norm(&ax);
        for i in 0..gx.len() {
            res = res.max((gx[i] + sn[i]).abs());
        }
        if res <= tol {
            return Some(RawSolution {
                status: Status::Unbounded,
                x: xn,
                s: sn,
                y: vec![f64::NAN; y.len()],
                z: vec![f64::NAN; z.len()],
                pcost: f64::NEG_INFINITY,
                dcost: f64::NEG_INFINITY,
                pres: res,
                dres: f64::NAN,
                gap: f64::NAN,
                iterations: iter,
            });
        }
    }
    None
}
