//! Second-order cone programs in standard form and a primal-dual
//! interior-point solver for them.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b
//!             G x + s = h,   s ∈ R₊^{nonneg} × Q^{d₁} × … × Q^{d_k}
//!             lower ≤ x ≤ upper
//! ```
//!
//! where `Q^d = {(t, u) : ‖u‖₂ ≤ t}`. The solver runs a homogeneous
//! self-dual embedding with Nesterov–Todd scaling and Mehrotra
//! predictor–corrector steps; infeasible and unbounded problems are reported
//! with normalized certificates.

mod cones;
pub mod dump;
mod ipm;
mod kkt;
mod ldl;
mod presolve;
mod sparse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cones::ConeLayout;
pub use dump::{dump_problem, restore_problem, DUMP_VERSION};
pub use sparse::SparseMatrix;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Error, PartialEq)]
pub enum ConeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid problem data: {0}")]
    InvalidData(String),
    #[error("invalid settings: {0}")]
    Settings(String),
    #[error("malformed problem dump: {0}")]
    Dump(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardConeProblem {
    pub c: Vec<f64>,
    pub a: SparseMatrix,
    pub b: Vec<f64>,
    pub g: SparseMatrix,
    pub h: Vec<f64>,
    /// Number of leading rows of `G` in the nonnegative orthant.
    pub nonneg: usize,
    /// Dimensions of the second-order cone blocks that follow.
    pub soc: Vec<usize>,
    /// Variable bounds; use `±∞` for none.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StandardConeProblem {
    /// Problem with `n` free variables and no constraints.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        StandardConeProblem {
            c,
            a: SparseMatrix::zeros(0, n),
            b: Vec::new(),
            g: SparseMatrix::zeros(0, n),
            h: Vec::new(),
            nonneg: 0,
            soc: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn layout(&self) -> ConeLayout {
        ConeLayout::new(self.nonneg, self.soc.clone())
    }

    pub fn check(&self) -> Result<(), ConeError> {
        let n = self.c.len();
        let dim = |what: String| Err(ConeError::Dimension(what));
        if self.a.ncols != n || self.g.ncols != n {
            return dim(format!(
                "A has {} and G has {} columns, objective has {n}",
                self.a.ncols, self.g.ncols
            ));
        }
        if self.a.nrows != self.b.len() {
            return dim(format!("A has {} rows, b has {}", self.a.nrows, self.b.len()));
        }
        if self.g.nrows != self.h.len() {
            return dim(format!("G has {} rows, h has {}", self.g.nrows, self.h.len()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return dim(format!(
                "bounds have lengths {}/{}, expected {n}",
                self.lower.len(),
                self.upper.len()
            ));
        }
        if let Some(d) = self.soc.iter().find(|&&d| d < 2) {
            return dim(format!("second-order cone of dimension {d} (minimum 2)"));
        }
        let rows = self.nonneg + self.soc.iter().sum::<usize>();
        if rows != self.g.nrows {
            return dim(format!("cone layout covers {rows} rows, G has {}", self.g.nrows));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.c) || !finite(&self.b) || !finite(&self.h) || !finite(&self.a.vals) || !finite(&self.g.vals) {
            return Err(ConeError::InvalidData("non-finite coefficient".into()));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(ConeError::InvalidData(format!("variable {j} has bounds [{l}, {u}]")));
            }
        }
        Ok(())
    }

    /// Equivalent problem with finite bounds moved into leading orthant rows
    /// of `G` (lower bounds first, then upper bounds).
    pub fn expand_bounds(&self) -> (StandardConeProblem, BoundRows) {
        let n = self.num_vars();
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut h = Vec::new();
        let mut map = BoundRows::default();
        for j in 0..n {
            if self.lower[j].is_finite() {
                map.lower.push((j, rows.len()));
                rows.push(vec![(j, -1.0)]);
                h.push(-self.lower[j]);
            }
        }
        for j in 0..n {
            if self.upper[j].is_finite() {
                map.upper.push((j, rows.len()));
                rows.push(vec![(j, 1.0)]);
                h.push(self.upper[j]);
            }
        }
        map.count = rows.len();
        let g = SparseMatrix::from_rows(n, rows).vstack(&self.g);
        h.extend_from_slice(&self.h);
        let p = StandardConeProblem {
            c: self.c.clone(),
            a: self.a.clone(),
            b: self.b.clone(),
            g,
            h,
            nonneg: self.nonneg + map.count,
            soc: self.soc.clone(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        };
        (p, map)
    }
}

/// Where the bound rows of [`StandardConeProblem::expand_bounds`] landed:
/// `(variable, row)` pairs.
#[derive(Debug, Clone, Default)]
pub struct BoundRows {
    pub lower: Vec<(usize, usize)>,
    pub upper: Vec<(usize, usize)>,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSolution {
    pub status: Status,
    /// Primal point; for `Unbounded`, a ray with `cᵀx = −1`.
    pub x: Vec<f64>,
    /// Slack of the `G` rows.
    pub s: Vec<f64>,
    /// Equality duals; for `Infeasible`, part of a ray with `bᵀy + hᵀz = −1`.
    pub y: Vec<f64>,
    /// Cone duals.
    pub z: Vec<f64>,
    /// Duals of the variable bounds (zero where the bound is infinite).
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub gap: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tol: f64,
    pub max_iter: usize,
    /// Threshold on normalized certificates.
    pub infeas_tol: f64,
    /// Remove fixed variables and singleton rows before the interior-point
    /// phase.
    pub presolve: bool,
    pub equilibrate: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            infeas_tol: 1e-8,
            presolve: true,
            equilibrate: true,
        }
    }
}

impl Settings {
    pub fn with_tol(tol: f64, max_iter: usize) -> Self {
        Settings {
            tol,
            max_iter,
            ..Settings::default()
        }
    }
}

/// Solves `p` with default settings except `tol` and `max_iter`.
pub fn solve(p: &StandardConeProblem, tol: f64, max_iter: usize) -> Result<ConeSolution, ConeError> {
    solve_with(p, &Settings::with_tol(tol, max_iter))
}

pub fn solve_with(p: &StandardConeProblem, settings: &Settings) -> Result<ConeSolution, ConeError> {
    p.check()?;
    if !(settings.tol > 0.0) || !(settings.infeas_tol > 0.0) {
        return Err(ConeError::Settings(format!("tolerance must be positive, got {}", settings.tol)));
    }
    if settings.presolve {
        if let presolve::Outcome::Reduced(red) = presolve::presolve(p) {
            let inner = solve_expanded(&red.problem, settings);
            if inner.status == Status::Optimal || inner.status == Status::IterationLimit {
                let mut sol = red.postsolve(p, &inner);
                finish(p, &mut sol);
                return Ok(sol);
            }
        }
        // Presolve-detected infeasibility, or an infeasible/unbounded reduced
        // problem: certify on the original data.
    }
    let mut sol = solve_expanded(p, settings);
    if sol.status == Status::Optimal || sol.status == Status::IterationLimit {
        finish(p, &mut sol);
    }
    Ok(sol)
}

fn finish(p: &StandardConeProblem, sol: &mut ConeSolution) {
    let r = residuals(p, sol);
    sol.primal_res = r.primal;
    sol.dual_res = r.dual;
    sol.gap = r.gap;
    sol.objective = r.primal_objective;
    sol.dual_objective = r.dual_objective;
}

/// Runs the interior-point method on the bound-expanded form and maps the
/// bound-row duals back.
fn solve_expanded(p: &StandardConeProblem, settings: &Settings) -> ConeSolution {
    let (e, rows) = p.expand_bounds();
    let raw = ipm::solve(&e, settings);
    let n = p.num_vars();
    let mut z_lower = vec![0.0; n];
    let mut z_upper = vec![0.0; n];
    for &(j, r) in &rows.lower {
        z_lower[j] = raw.z[r];
    }
    for &(j, r) in &rows.upper {
        z_upper[j] = raw.z[r];
    }
    ConeSolution {
        status: raw.status,
        x: raw.x,
        s: raw.s[rows.count..].to_vec(),
        y: raw.y,
        z: raw.z[rows.count..].to_vec(),
        z_lower,
        z_upper,
        objective: raw.pcost,
        dual_objective: raw.dcost,
        primal_res: raw.pres,
        dual_res: raw.dres,
        gap: raw.gap,
        iterations: raw.iterations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

/// Relative KKT residuals of `sol` for `p`, recomputed from the problem data.
///
/// * primal: `max(‖Ax−b‖∞, ‖Gx+s−h‖∞, bound and cone violation) / (1 + max(‖b‖∞, ‖h‖∞, ‖finite bounds‖∞))`
/// * dual: `‖c + Aᵀy + Gᵀz − z_lower + z_upper‖∞ / (1 + ‖c‖∞)`, plus any
///   dual cone violation
/// * gap: `|cᵀx − d| / max(1, min(|cᵀx|, |d|))` with `d` the dual objective.
pub fn residuals(p: &StandardConeProblem, sol: &ConeSolution) -> Residuals {
    use sparse::{dot, inf_norm};
    let n = p.num_vars();
    let layout = p.layout();
    let ax = p.a.mul(&sol.x);
    let gx = p.g.mul(&sol.x);
    let mut pr = 0.0_f64;
    for (v, b) in ax.iter().zip(&p.b) {
        pr = pr.max((v - b).abs());
    }
    for i in 0..p.h.len() {
        pr = pr.max((gx[i] + sol.s[i] - p.h[i]).abs());
    }
    let mut bound_scale = 0.0_f64;
    for j in 0..n {
        if p.lower[j].is_finite() {
            pr = pr.max(p.lower[j] - sol.x[j]);
            bound_scale = bound_scale.max(p.lower[j].abs());
        }
        if p.upper[j].is_finite() {
            pr = pr.max(sol.x[j] - p.upper[j]);
            bound_scale = bound_scale.max(p.upper[j].abs());
        }
    }
    if !sol.s.is_empty() {
        pr = pr.max(-layout.min_eig(&sol.s));
    }
    let pscale = 1.0 + inf_norm(&p.b).max(inf_norm(&p.h)).max(bound_scale);

    let mut r = p.c.clone();
    p.a.add_t_mul_vec(&sol.y, &mut r);
    p.g.add_t_mul_vec(&sol.z, &mut r);
    for j in 0..n {
        r[j] += sol.z_upper[j] - sol.z_lower[j];
    }
    let mut dr = inf_norm(&r);
    if !sol.z.is_empty() {
        dr = dr.max(-layout.min_eig(&sol.z));
    }
    for j in 0..n {
        dr = dr.max(-sol.z_lower[j]).max(-sol.z_upper[j]);
    }
    let dscale = 1.0 + inf_norm(&p.c);

    let pcost = dot(&p.c, &sol.x);
    let mut dcost = -dot(&p.b, &sol.y) - dot(&p.h, &sol.z);
    for j in 0..n {
        if p.lower[j].is_finite() {
            dcost += p.lower[j] * sol.z_lower[j];
        }
        if p.upper[j].is_finite() {
            dcost -= p.upper[j] * sol.z_upper[j];
        }
    }
    let gap = (pcost - dcost).abs() / pcost.abs().min(dcost.abs()).max(1.0);
    Residuals {
        primal: pr.max(0.0) / pscale,
        dual: dr.max(0.0) / dscale,
        gap,
        primal_objective: pcost,
        dual_objective: dcost,
    }
}
