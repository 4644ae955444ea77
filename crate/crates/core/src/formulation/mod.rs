//! One window of the dispatch problem as a solver-agnostic MISOCP.
//!
//! Every complex constraint is split into a real and an imaginary row, and
//! every norm bound becomes a second-order cone whose members are affine
//! expressions. Binary variables are the PSD phase selectors `α` (one block
//! shared by all periods of the window) and the SVC mode bits `κ` (one per
//! phase pair and period).

mod build;
mod solution;

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conesolver::{dump_problem, SparseMatrix, StandardConeProblem};
use crate::netmodel::{NetworkError, Phase, PhasePair};

pub use build::{add_feeder, add_limits, add_objective, add_svc, build_subproblem, BuildContext};
pub use solution::{
    extract_solution, merge_windows, DispatchSolution, PeriodDispatch, SvcDispatch,
    WindowAssignment,
};

pub type VarId = usize;

/// Tolerance for reading a relaxed binary as 0 or 1.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FormulationError {
    #[error("strategy uses the SVC but the network has none")]
    MissingSvc,
    #[error("window {0} does not exist or has no periods")]
    EmptySubset(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("solution vector has {got} entries, model has {expected}")]
    Length { expected: usize, got: usize },
    #[error("customer '{customer}' has fractional phase selector {value} on phase {phase}")]
    Fractional { customer: String, phase: Phase, value: f64 },
    #[error("customer '{customer}' is selected on {count} phases")]
    Assignment { customer: String, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub const BOTH: [Part; 2] = [Part::Re, Part::Im];
}

/// Symbolic name of a model variable. `t` is the global period index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarKey {
    NodeV { node: usize, phase: Phase, t: usize, part: Part },
    LineI { line: usize, phase: Phase, t: usize, part: Part },
    CustI { cust: usize, t: usize, part: Part },
    CustV { cust: usize, t: usize, part: Part },
    /// `α_φ · I_j`.
    CustPhaseI { cust: usize, phase: Phase, t: usize, part: Part },
    /// `α_φ · V_node,φ`.
    CustPhaseU { cust: usize, phase: Phase, t: usize, part: Part },
    /// `α_φ · V_j` (real part is `z^C`, imaginary part `z^D`).
    CustPhaseZ { cust: usize, phase: Phase, t: usize, part: Part },
    Alpha { cust: usize, phase: Phase },
    SvcMag { pair: PhasePair, t: usize },
    /// `κ · |I|`.
    SvcProd { pair: PhasePair, t: usize },
    SvcMode { pair: PhasePair, t: usize },
    SvcPairI { pair: PhasePair, t: usize, part: Part },
    SvcPhaseI { phase: Phase, t: usize, part: Part },
    ZNeg { t: usize },
    ZZero { t: usize },
}

/// Dense index space with per-variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarSpace {
    keys: Vec<VarKey>,
    index: HashMap<VarKey, VarId>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl VarSpace {
    pub fn add(&mut self, key: VarKey, lower: f64, upper: f64) -> VarId {
        if let Some(&id) = self.index.get(&key) {
            debug_assert!(false, "variable {key:?} added twice");
            return id;
        }
        let id = self.keys.len();
        self.keys.push(key);
        self.index.insert(key, id);
        self.lower.push(lower);
        self.upper.push(upper);
        id
    }

    pub fn free(&mut self, key: VarKey) -> VarId {
        self.add(key, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn get(&self, key: &VarKey) -> Option<VarId> {
        self.index.get(key).copied()
    }

    pub fn id(&self, key: &VarKey) -> VarId {
        self.get(key).unwrap_or_else(|| panic!("unknown variable {key:?}"))
    }

    pub fn key(&self, id: VarId) -> VarKey {
        self.keys[id]
    }

    pub fn keys(&self) -> &[VarKey] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn bounds(&self, id: VarId) -> (f64, f64) {
        (self.lower[id], self.upper[id])
    }

    pub fn set_bounds(&mut self, id: VarId, lower: f64, upper: f64) {
        self.lower[id] = lower;
        self.upper[id] = upper;
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Affine expression `Σ cᵢ·xᵢ + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        LinExpr::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn var(v: VarId) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn term(mut self, v: VarId, c: f64) -> Self {
        self.push(v, c);
        self
    }

    pub fn push(&mut self, v: VarId, c: f64) {
        if c != 0.0 {
            self.terms.push((v, c));
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        for &(v, c) in &other.terms {
            self.push(v, c * k);
        }
        self.constant += k * other.constant;
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>()
    }

    /// Merges duplicate variables and drops zero coefficients, keeping the
    /// order of first appearance.
    pub fn compact(&mut self) {
        let mut pos: HashMap<VarId, usize> = HashMap::new();
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match pos.get(&v) {
                Some(&k) => out[k].1 += c,
                None => {
                    pos.insert(v, out.len());
                    out.push((v, c));
                }
            }
        }
        out.retain(|&(_, c)| c != 0.0);
        self.terms = out;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

/// Family a row belongs to; used for counting and diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RowKind {
    RootVoltage,
    Ohm,
    Kcl,
    PhaseSelect,
    TerminalSelect,
    ServiceOhm,
    PowerBalance,
    OnePhase,
    ProductSum,
    LowerVm,
    SvcPhase,
    SvcCurrent,
    SvcProduct,
    SvcCapacity,
}

/// `Σ terms (sense) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub kind: RowKind,
}

impl LinearRow {
    /// Row from an expression compared with zero: `expr (sense) 0`.
    pub fn from_expr(mut expr: LinExpr, sense: Sense, kind: RowKind) -> Self {
        expr.compact();
        LinearRow { terms: expr.terms, sense, rhs: -expr.constant, kind }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let d = self.lhs(x) - self.rhs;
        match self.sense {
            Sense::Eq => d.abs(),
            Sense::Le => d.max(0.0),
            Sense::Ge => (-d).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConeKind {
    NodeVm,
    CustomerVm,
    Ampacity,
    NegSeqVoltage,
    ZeroSeqVoltage,
    NegSeqCurrent,
    ZeroSeqCurrent,
}

/// `√(Σ membersᵢ²) ≤ bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct SocCone {
    pub bound: LinExpr,
    pub members: Vec<LinExpr>,
    pub kind: ConeKind,
}

impl SocCone {
    /// `‖members‖ − bound`, positive when violated.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let n = self.members.iter().map(|m| m.eval(x).powi(2)).sum::<f64>().sqrt();
        n - self.bound.eval(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryClass {
    /// PSD phase selector; branched on first.
    Phase,
    /// SVC mode bit.
    Mode,
}

/// Operating strategy: which devices the optimizer may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyFlags {
    pub use_svc: bool,
    pub use_psd: bool,
}

impl StrategyFlags {
    /// Strategy `1..=4`: neither device, SVC only, PSD only, both.
    pub fn from_number(n: u8) -> Option<StrategyFlags> {
        match n {
            1 => Some(StrategyFlags { use_svc: false, use_psd: false }),
            2 => Some(StrategyFlags { use_svc: true, use_psd: false }),
            3 => Some(StrategyFlags { use_svc: false, use_psd: true }),
            4 => Some(StrategyFlags { use_svc: true, use_psd: true }),
            _ => None,
        }
    }

    pub fn number(&self) -> u8 {
        1 + u8::from(self.use_svc) + 2 * u8::from(self.use_psd)
    }
}

/// Variables of one SVC branch in one period, kept for rounding and decoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcBranch {
    pub pair: PhasePair,
    pub t: usize,
    pub mag: VarId,
    pub prod: VarId,
    pub mode: VarId,
    /// Angle of the root phase-to-phase voltage.
    pub beta: f64,
}

/// Everything needed to map a solution vector back to network quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub window: usize,
    pub periods: Range<usize>,
    pub strategy: StrategyFlags,
    pub customer_ids: Vec<String>,
    pub initial: Vec<Phase>,
    pub n_nodes: usize,
    pub n_lines: usize,
    pub dt_line: usize,
    pub svc_node: Option<usize>,
    pub beta: BTreeMap<(usize, PhasePair), f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MISOCPModel {
    pub vars: VarSpace,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<SocCone>,
    pub binaries: Vec<VarId>,
    pub binary_class: Vec<BinaryClass>,
    /// Sets of binaries that must sum to one (the phase selectors of one customer).
    pub groups: Vec<Vec<VarId>>,
    pub svc: Vec<SvcBranch>,
    pub objective: Vec<(VarId, f64)>,
    pub meta: ModelMeta,
}

impl MISOCPModel {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(v, c)| c * x[v]).sum()
    }

    pub fn row(&mut self, expr: LinExpr, sense: Sense, kind: RowKind) {
        self.rows.push(LinearRow::from_expr(expr, sense, kind));
    }

    pub fn binary(&mut self, key: VarKey, class: BinaryClass) -> VarId {
        let v = self.vars.add(key, 0.0, 1.0);
        self.binaries.push(v);
        self.binary_class.push(class);
        v
    }

    pub fn count_rows(&self, kind: RowKind) -> usize {
        self.rows.iter().filter(|r| r.kind == kind).count()
    }

    pub fn count_cones(&self, kind: ConeKind) -> usize {
        self.cones.iter().filter(|c| c.kind == kind).count()
    }

    /// Largest row or cone violation of `x`, plus bound violations.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let cones = self.cones.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        let bounds = (0..self.vars.len())
            .map(|v| {
                let (lo, hi) = self.vars.bounds(v);
                (lo - x[v]).max(x[v] - hi).max(0.0)
            })
            .fold(0.0, f64::max);
        rows.max(cones).max(bounds)
    }
}

/// Converts the model (binaries relaxed to `[0, 1]`) to standard cone form.
///
/// Equalities go to `A x = b`; inequalities and cones go to `h − G x ∈ K`,
/// orthant rows first.
pub fn to_cone_problem(model: &MISOCPModel) -> StandardConeProblem {
    let n = model.vars.len();
    let mut c = vec![0.0; n];
    for &(v, k) in &model.objective {
        c[v] += k;
    }
    let mut a_trip = Vec::new();
    let mut b = Vec::new();
    let mut g_trip = Vec::new();
    let mut h = Vec::new();
    for row in &model.rows {
        match row.sense {
            Sense::Eq => {
                let i = b.len();
                a_trip.extend(row.terms.iter().map(|&(v, k)| (i, v, k)));
                b.push(row.rhs);
            }
            Sense::Le | Sense::Ge => {
                let s = if row.sense == Sense::Le { 1.0 } else { -1.0 };
                let i = h.len();
                g_trip.extend(row.terms.iter().map(|&(v, k)| (i, v, s * k)));
                h.push(s * row.rhs);
            }
        }
    }
    let nonneg = h.len();
    let mut soc = Vec::with_capacity(model.cones.len());
    for cone in &model.cones {
        for e in std::iter::once(&cone.bound).chain(&cone.members) {
            let i = h.len();
            g_trip.extend(e.terms.iter().map(|&(v, k)| (i, v, -k)));
            h.push(e.constant);
        }
        soc.push(1 + cone.members.len());
    }
    let p = StandardConeProblem {
        c,
        a: SparseMatrix::from_triplets(b.len(), n, &a_trip),
        b,
        g: SparseMatrix::from_triplets(h.len(), n, &g_trip),
        h,
        nonneg,
        soc,
        lower: model.vars.lower().to_vec(),
        upper: model.vars.upper().to_vec(),
    };
    debug_assert!(p.check().is_ok());
    p
}

/// Cone-program dump of the relaxation followed by the binary index list,
/// for cross-checking with external mixed-integer solvers.
pub fn dump_model(model: &MISOCPModel) -> String {
    let mut out = dump_problem(&to_cone_problem(model));
    out.push_str("binaries");
    for &v in &model.binaries {
        out.push_str(&format!(" {v}"));
    }
    out.push('\n');
    out
}
