//! Typed model of a low-voltage radial feeder, stored in per-unit.
//!
//! Feeders enter through the JSON document format in [`document`] (SI units)
//! and are converted to per-unit by [`to_per_unit`]. A [`Network`] is immutable
//! once loaded and cheap to share by reference across threads.

mod document;
mod validate;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use document::{
    from_per_unit, load_network, load_network_file, to_per_unit, BaseDoc, ComplexDoc,
    CustomerDoc, CustomerKindDoc, DemandDoc, HorizonDoc, LimitsDoc, LineDoc, NetworkDocument,
    NodeDoc, SvcDoc,
};
pub use validate::{validate, Finding, FindingKind, ValidationReport};

/// Rectangular complex number used for every voltage and current.
pub type Complex = num_complex::Complex64;

/// Default limit on negative-sequence voltage magnitude, per unit of nominal.
pub const DEFAULT_NU_NEG: f64 = 0.02;
/// Default limit on zero-sequence voltage magnitude, per unit of nominal.
pub const DEFAULT_NU_ZERO: f64 = 0.045;

/// 3×3 phase-coupled impedance matrix.
pub type PhaseMatrix = [[Complex; 3]; 3];

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("malformed network document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read network document {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid per-unit base: {0}")]
    Base(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("non-radial topology: {0}")]
    NonRadial(String),
    #[error("horizon mismatch: {0}")]
    Horizon(String),
    #[error("invalid network: {}", .0.summary())]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_index(i: usize) -> Phase {
        Phase::ALL[i % 3]
    }

    /// Nominal angle of a balanced positive-sequence set, in radians.
    pub fn nominal_angle(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -2.0 * std::f64::consts::FRAC_PI_3,
            Phase::C => 2.0 * std::f64::consts::FRAC_PI_3,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Phase::A),
            "b" => Ok(Phase::B),
            "c" => Ok(Phase::C),
            other => Err(format!("unknown phase '{other}'")),
        }
    }
}

/// Phase pairs of the delta-connected SVC, in the order ab, bc, ca.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhasePair {
    Ab,
    Bc,
    Ca,
}

impl PhasePair {
    pub const ALL: [PhasePair; 3] = [PhasePair::Ab, PhasePair::Bc, PhasePair::Ca];

    pub fn index(self) -> usize {
        match self {
            PhasePair::Ab => 0,
            PhasePair::Bc => 1,
            PhasePair::Ca => 2,
        }
    }

    /// (from, to) phases: the branch current flows from the first to the second.
    pub fn phases(self) -> (Phase, Phase) {
        match self {
            PhasePair::Ab => (Phase::A, Phase::B),
            PhasePair::Bc => (Phase::B, Phase::C),
            PhasePair::Ca => (Phase::C, Phase::A),
        }
    }
}

impl fmt::Display for PhasePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, q) = self.phases();
        write!(f, "{p}{q}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub vm_min: f64,
    pub vm_max: f64,
    pub is_root: bool,
    pub is_secondary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub z: PhaseMatrix,
    /// Per-phase current magnitude limit. Only enforced on the transformer branch.
    pub ampacity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CustomerKind {
    Fixed,
    Adjustable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: String,
    pub node: usize,
    pub service_z: Complex,
    pub kind: CustomerKind,
    pub initial_phase: Phase,
    /// Net demand per period, `P + jQ` in per-unit (negative P is net export).
    pub demand: Vec<Complex>,
    pub vm_min: f64,
    pub vm_max: f64,
}

impl Customer {
    pub fn is_adjustable(&self) -> bool {
        self.kind == CustomerKind::Adjustable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcSpec {
    pub node: usize,
    pub s_cap: f64,
    pub s_ind: f64,
    /// Rated phase-to-phase voltage magnitude.
    pub v_rated: f64,
}

impl SvcSpec {
    /// Branch-current limit in capacitive (`true`) or inductive mode.
    pub fn current_limit(&self, capacitive: bool) -> f64 {
        let s = if capacitive { self.s_cap } else { self.s_ind };
        s / (3.0 * self.v_rated)
    }

    pub fn is_null(&self) -> bool {
        self.s_cap <= 0.0 && self.s_ind <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub periods: usize,
    pub n_o: usize,
    /// Contiguous 0-based period ranges, one per PSD operating window.
    pub subsets: Vec<Range<usize>>,
    /// Root voltage per period, per phase.
    pub root_voltage: Vec<[Complex; 3]>,
}

impl Horizon {
    pub fn new(root_voltage: Vec<[Complex; 3]>, n_o: usize) -> Result<Horizon, NetworkError> {
        let periods = root_voltage.len();
        let subsets = partition_periods(periods, n_o)?;
        Ok(Horizon {
            periods,
            n_o,
            subsets,
            root_voltage,
        })
    }

    /// Same horizon with a different number of PSD windows.
    pub fn with_windows(&self, n_o: usize) -> Result<Horizon, NetworkError> {
        Horizon::new(self.root_voltage.clone(), n_o)
    }
}

/// Splits `periods` into `n_o` contiguous windows whose sizes differ by at most
/// one; the first `periods % n_o` windows take the extra period.
pub fn partition_periods(periods: usize, n_o: usize) -> Result<Vec<Range<usize>>, NetworkError> {
    if n_o == 0 {
        return Err(NetworkError::Horizon("n_o must be at least 1".into()));
    }
    if n_o > periods {
        return Err(NetworkError::Horizon(format!(
            "n_o = {n_o} exceeds the horizon length T = {periods}"
        )));
    }
    let base = periods / n_o;
    let extra = periods % n_o;
    let mut out = Vec::with_capacity(n_o);
    let mut start = 0;
    for k in 0..n_o {
        let len = base + usize::from(k < extra);
        out.push(start..start + len);
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnbalanceLimits {
    pub nu_neg: f64,
    pub nu_zero: f64,
}

impl Default for UnbalanceLimits {
    fn default() -> Self {
        UnbalanceLimits {
            nu_neg: DEFAULT_NU_NEG,
            nu_zero: DEFAULT_NU_ZERO,
        }
    }
}

/// Per-unit bases. `volts` is the phase-to-neutral base voltage, `kva` the
/// single-phase base power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Base {
    pub kva: f64,
    pub volts: f64,
}

impl Base {
    pub fn new(kva: f64, volts: f64) -> Result<Base, NetworkError> {
        if !(kva > 0.0 && kva.is_finite()) {
            return Err(NetworkError::Base(format!("base kva must be positive, got {kva}")));
        }
        if !(volts > 0.0 && volts.is_finite()) {
            return Err(NetworkError::Base(format!("base volts must be positive, got {volts}")));
        }
        Ok(Base { kva, volts })
    }

    pub fn va(&self) -> f64 {
        self.kva * 1000.0
    }

    pub fn ohms(&self) -> f64 {
        self.volts * self.volts / self.va()
    }

    pub fn amps(&self) -> f64 {
        self.va() / self.volts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base: Base,
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub customers: Vec<Customer>,
    pub svc: Option<SvcSpec>,
    pub horizon: Horizon,
    pub limits: UnbalanceLimits,
    pub nominal_vm: f64,
}

/// Rooted view of a radial network.
#[derive(Debug, Clone)]
pub struct Topology {
    pub root: usize,
    pub secondary: usize,
    /// Index of the transformer line (root to secondary).
    pub dt_line: usize,
    /// Line feeding each node from its parent (`None` for the root).
    pub parent_line: Vec<Option<usize>>,
    /// Lines leaving each node towards the leaves.
    pub child_lines: Vec<Vec<usize>>,
    /// Nodes in breadth-first order from the root.
    pub order: Vec<usize>,
    /// Customers attached to each node.
    pub customers_at: Vec<Vec<usize>>,
}

impl Network {
    pub fn root(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.is_root)
    }

    pub fn secondary(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.is_secondary)
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn customer_index(&self, id: &str) -> Option<usize> {
        self.customers.iter().position(|c| c.id == id)
    }

    pub fn adjustable(&self) -> impl Iterator<Item = usize> + '_ {
        self.customers
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_adjustable())
            .map(|(i, _)| i)
    }

    pub fn initial_assignment(&self) -> Vec<Phase> {
        self.customers.iter().map(|c| c.initial_phase).collect()
    }

    /// Effective SVC: `None` when absent or of zero capacity in both modes.
    pub fn active_svc(&self) -> Option<&SvcSpec> {
        self.svc.as_ref().filter(|s| !s.is_null())
    }

    /// Builds the rooted topology. Lines must already point away from the root.
    pub fn topology(&self) -> Result<Topology, NetworkError> {
        let n = self.nodes.len();
        let root = self
            .root()
            .ok_or_else(|| NetworkError::Schema("no root node".into()))?;
        let secondary = self
            .secondary()
            .ok_or_else(|| NetworkError::Schema("no secondary node".into()))?;
        if self.lines.len() + 1 != n {
            return Err(NetworkError::NonRadial(format!(
                "{} lines for {} nodes (a tree needs {})",
                self.lines.len(),
                n,
                n.saturating_sub(1)
            )));
        }
        let mut parent_line = vec![None; n];
        let mut child_lines = vec![Vec::new(); n];
        for (l, line) in self.lines.iter().enumerate() {
            if line.from >= n || line.to >= n {
                return Err(NetworkError::Schema(format!("line {l} references an unknown node")));
            }
            if parent_line[line.to].is_some() || line.to == root {
                return Err(NetworkError::NonRadial(format!(
                    "node '{}' is fed by more than one line",
                    self.nodes[line.to].id
                )));
            }
            parent_line[line.to] = Some(l);
            child_lines[line.from].push(l);
        }
        let mut order = Vec::with_capacity(n);
        let mut seen = vec![false; n];
        order.push(root);
        seen[root] = true;
        let mut head = 0;
        while head < order.len() {
            let u = order[head];
            head += 1;
            for &l in &child_lines[u] {
                let v = self.lines[l].to;
                if seen[v] {
                    return Err(NetworkError::NonRadial(format!(
                        "cycle through node '{}'",
                        self.nodes[v].id
                    )));
                }
                seen[v] = true;
                order.push(v);
            }
        }
        if order.len() != n {
            let lost = (0..n).find(|&i| !seen[i]).unwrap_or(0);
            return Err(NetworkError::NonRadial(format!(
                "node '{}' is not connected to the root",
                self.nodes[lost].id
            )));
        }
        if child_lines[root].len() != 1 {
            return Err(NetworkError::Schema(
                "root node must connect only to the transformer secondary".into(),
            ));
        }
        let dt_line = child_lines[root][0];
        if self.lines[dt_line].to != secondary {
            return Err(NetworkError::Schema(
                "root and secondary nodes must be joined by the transformer branch".into(),
            ));
        }
        let mut customers_at = vec![Vec::new(); n];
        for (j, c) in self.customers.iter().enumerate() {
            if c.node >= n {
                return Err(NetworkError::Schema(format!(
                    "customer '{}' references an unknown node",
                    c.id
                )));
            }
            customers_at[c.node].push(j);
        }
        Ok(Topology {
            root,
            secondary,
            dt_line,
            parent_line,
            child_lines,
            order,
            customers_at,
        })
    }

    /// Lines on the path from the root to `node`, root side first.
    pub fn path_lines(&self, topo: &Topology, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = node;
        while let Some(l) = topo.parent_line[cur] {
            path.push(l);
            cur = self.lines[l].from;
        }
        path.reverse();
        path
    }

    /// Copy with every SVC capacity replaced by `s` (both modes).
    pub fn with_svc_capacity(&self, s: f64) -> Network {
        let mut net = self.clone();
        if let Some(svc) = net.svc.as_mut() {
            svc.s_cap = s;
            svc.s_ind = s;
        }
        net
    }

    pub fn with_windows(&self, n_o: usize) -> Result<Network, NetworkError> {
        let mut net = self.clone();
        net.horizon = self.horizon.with_windows(n_o)?;
        Ok(net)
    }
}
