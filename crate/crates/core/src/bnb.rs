//! Best-first branch-and-bound over the binaries of a [`MISOCPModel`], with
//! the SOCP relaxation as bound.
//!
//! Node processing order is fully deterministic: nodes are popped by bound,
//! then by creation order, and branching ties go to the lowest variable
//! index. The search is single-threaded; callers parallelize across
//! independent windows instead.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conesolver::{solve_with, ConeError, ConeSolution, Settings, StandardConeProblem, Status};
use crate::formulation::{to_cone_problem, BinaryClass, MISOCPModel, VarId, INTEGRALITY_TOL};

pub const DEFAULT_GAP_TOL: f64 = 1e-6;
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;
/// Relative slack allowed when checking that a child bound does not fall
/// below its parent's; interior-point objectives are only accurate to about
/// the solver tolerance.
pub const MONOTONICITY_TOL: f64 = 1e-7;
/// The rounding heuristic runs at every node up to this depth, while no
/// incumbent exists, and on every `HEURISTIC_EVERY`-th node otherwise.
const HEURISTIC_DEPTH: usize = 3;
const HEURISTIC_EVERY: usize = 10;
/// Residual level at which an iteration-limited relaxation is still usable.
const ACCEPT_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BnbError {
    #[error("relaxation is integral; nothing to branch on")]
    Integral,
    #[error("relaxation is unbounded")]
    Unbounded,
    #[error(transparent)]
    Cone(#[from] ConeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbSettings {
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: usize,
    pub cone: Settings,
    pub keep_log: bool,
}

impl Default for BnbSettings {
    fn default() -> Self {
        BnbSettings {
            gap_tol: DEFAULT_GAP_TOL,
            time_limit: None,
            node_limit: DEFAULT_NODE_LIMIT,
            cone: Settings::default(),
            keep_log: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MipStatus {
    Optimal,
    /// Stopped by the node limit, or numerical trouble left a gap above
    /// tolerance.
    GapLimit,
    Infeasible,
    TimeLimit,
}

impl fmt::Display for MipStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MipStatus::Optimal => "optimal",
            MipStatus::GapLimit => "gap-limit",
            MipStatus::Infeasible => "infeasible",
            MipStatus::TimeLimit => "time-limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbNode {
    pub id: usize,
    pub parent: Option<usize>,
    /// Fixed binaries, sorted by variable.
    pub fixings: Vec<(VarId, u8)>,
    /// Valid lower bound for every completion of `fixings`.
    pub bound: f64,
    /// Raw relaxation value of the parent, for the monotonicity check.
    pub parent_relaxation: f64,
    pub depth: usize,
}

impl BnbNode {
    pub fn fixed(&self, v: VarId) -> Option<u8> {
        self.fixings.binary_search_by_key(&v, |&(u, _)| u).ok().map(|k| self.fixings[k].1)
    }

    fn with(&self, v: VarId, val: u8) -> Vec<(VarId, u8)> {
        let mut f = self.fixings.clone();
        match f.binary_search_by_key(&v, |&(u, _)| u) {
            Ok(k) => f[k].1 = val,
            Err(k) => f.insert(k, (v, val)),
        }
        f
    }

    pub fn fixings_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.fixings.hash(&mut h);
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum NodeAction {
    Branched { var: VarId, value: f64 },
    /// Relaxation integral: closed after a repair solve.
    Integral,
    PrunedBound,
    Infeasible,
    /// Relaxation failed numerically with every binary fixed; dropped.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLogEntry {
    pub node: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    pub fixings_hash: u64,
    pub bound: f64,
    pub relaxation: Option<f64>,
    pub action: NodeAction,
    /// Incumbent value in force when the action was taken.
    pub incumbent: f64,
}

impl fmt::Display for NodeLogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node={} hash={:016x} depth={} bound={:.12e}", self.node, self.fixings_hash, self.depth, self.bound)?;
        match self.action {
            NodeAction::Branched { var, value } => write!(f, " action=branch var={var} value={value:.6}")?,
            NodeAction::Integral => f.write_str(" action=integral")?,
            NodeAction::PrunedBound => f.write_str(" action=prune-bound")?,
            NodeAction::Infeasible => f.write_str(" action=prune-infeasible")?,
            NodeAction::Numerical => f.write_str(" action=numerical")?,
        }
        write!(f, " incumbent={:.12e}", self.incumbent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIPSolution {
    pub status: MipStatus,
    /// Incumbent point (empty when none was found).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Proven lower bound.
    pub bound: f64,
    /// `(objective − bound) / max(1, |objective|)`.
    pub gap: f64,
    pub nodes_explored: usize,
    pub relaxations: usize,
    pub numerical_failures: usize,
    pub monotonicity_violations: usize,
    pub log: Vec<NodeLogEntry>,
}

impl MIPSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.x.is_empty()
    }

    pub fn log_text(&self) -> String {
        self.log.iter().map(|e| format!("{e}\n")).collect()
    }
}

fn fractionality(v: f64) -> f64 {
    (v - v.floor()).min(v.ceil() - v)
}

/// Splits `node` on the most fractional binary of `relaxation`. Lower
/// `priority` classes are considered first; within a class ties go to the
/// lowest variable index. Returns the `0` child then the `1` child.
pub fn branch(
    node: &BnbNode,
    relaxation: &ConeSolution,
    binaries: &[VarId],
    priority: &[u8],
) -> Result<(BnbNode, BnbNode), BnbError> {
    let mut best: Option<(u8, f64, VarId)> = None;
    for (k, &v) in binaries.iter().enumerate() {
        let fr = fractionality(relaxation.x[v]);
        if fr <= INTEGRALITY_TOL {
            continue;
        }
        let p = priority.get(k).copied().unwrap_or(0);
        let better = match best {
            None => true,
            Some((bp, bf, bv)) => p < bp || (p == bp && (fr > bf || (fr == bf && v < bv))),
        };
        if better {
            best = Some((p, fr, v));
        }
    }
    let (_, _, var) = best.ok_or(BnbError::Integral)?;
    let child = |val: u8| BnbNode {
        id: 0,
        parent: Some(node.id),
        fixings: node.with(var, val),
        bound: node.bound,
        parent_relaxation: relaxation.objective,
        depth: node.depth + 1,
    };
    Ok((child(0), child(1)))
}

/// Applies the one-hot groups to `fixings`; `None` if they conflict.
fn propagate(mut fixings: Vec<(VarId, u8)>, groups: &[Vec<VarId>]) -> Option<Vec<(VarId, u8)>> {
    let get = |f: &[(VarId, u8)], v: VarId| f.binary_search_by_key(&v, |&(u, _)| u).ok().map(|k| f[k].1);
    let set = |f: &mut Vec<(VarId, u8)>, v: VarId, val: u8| match f.binary_search_by_key(&v, |&(u, _)| u) {
        Ok(k) => f[k].1 = val,
        Err(k) => f.insert(k, (v, val)),
    };
    for g in groups {
        let ones = g.iter().filter(|&&v| get(&fixings, v) == Some(1)).count();
        let zeros = g.iter().filter(|&&v| get(&fixings, v) == Some(0)).count();
        if ones > 1 || zeros == g.len() {
            return None;
        }
        if ones == 1 {
            for &v in g {
                if get(&fixings, v).is_none() {
                    set(&mut fixings, v, 0);
                }
            }
        } else if zeros == g.len() - 1 {
            let free = g.iter().copied().find(|&v| get(&fixings, v).is_none())?;
            set(&mut fixings, free, 1);
        }
    }
    Some(fixings)
}

#[derive(PartialEq)]
struct Queued {
    bound: f64,
    id: usize,
}

impl Eq for Queued {}

impl Ord for Queued {
    fn cmp(&self, o: &Self) -> Ordering {
        // Max-heap: smallest bound first, then oldest node.
        o.bound.total_cmp(&self.bound).then(o.id.cmp(&self.id))
    }
}

impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

enum Relax {
    Solved(ConeSolution),
    Infeasible,
    Failed,
}

struct Search<'a> {
    model: &'a MISOCPModel,
    base: StandardConeProblem,
    settings: &'a BnbSettings,
    priority: Vec<u8>,
    incumbent: Option<(f64, Vec<f64>)>,
    tried: HashSet<Vec<u8>>,
    relaxations: usize,
    numerical: usize,
}

impl<'a> Search<'a> {
    fn threshold(&self) -> f64 {
        match &self.incumbent {
            Some((u, _)) => u - self.settings.gap_tol * u.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    fn upper(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(u, _)| *u)
    }

    fn solve(&mut self, fixings: &[(VarId, u8)]) -> Result<Relax, BnbError> {
        let mut p = self.base.clone();
        for &(v, val) in fixings {
            p.lower[v] = f64::from(val);
            p.upper[v] = f64::from(val);
        }
        self.relaxations += 1;
        let mut sol = solve_with(&p, &self.settings.cone)?;
        if !usable(&sol) && sol.status != Status::Infeasible {
            // Second attempt without presolve and scaling.
            let plain = Settings { presolve: false, equilibrate: false, ..self.settings.cone.clone() };
            self.relaxations += 1;
            let retry = solve_with(&p, &plain)?;
            if usable(&retry) || retry.status == Status::Infeasible {
                sol = retry;
            }
        }
        Ok(match sol.status {
            Status::Infeasible => Relax::Infeasible,
            Status::Unbounded => return Err(BnbError::Unbounded),
            _ if usable(&sol) => Relax::Solved(sol),
            _ => {
                self.numerical += 1;
                Relax::Failed
            }
        })
    }

    /// Fixed-binary solve of a rounded point; updates the incumbent.
    fn repair(&mut self, values: Vec<u8>) -> Result<(), BnbError> {
        if !self.tried.insert(values.clone()) {
            return Ok(());
        }
        let fixings: Vec<(VarId, u8)> = {
            let mut f: Vec<(VarId, u8)> = self.model.binaries.iter().copied().zip(values).collect();
            f.sort_unstable_by_key(|&(v, _)| v);
            f
        };
        if let Relax::Solved(sol) = self.solve(&fixings)? {
            self.offer(sol);
        }
        Ok(())
    }

    fn offer(&mut self, sol: ConeSolution) {
        if sol.objective < self.upper() {
            let mut x = sol.x;
            for &v in &self.model.binaries {
                x[v] = x[v].round();
            }
            self.incumbent = Some((sol.objective, x));
        }
    }

    /// Rounds a relaxation: argmax within each one-hot group, SVC mode from
    /// the sign of the branch current, anything else to nearest.
    fn rounding(&self, x: &[f64]) -> Vec<u8> {
        let m = self.model;
        let mut val: std::collections::HashMap<VarId, u8> = m.binaries.iter().map(|&v| (v, u8::from(x[v] >= 0.5))).collect();
        for g in &m.groups {
            let mut best = g[0];
            for &v in &g[1..] {
                if x[v] > x[best] {
                    best = v;
                }
            }
            for &v in g {
                val.insert(v, u8::from(v == best));
            }
        }
        for b in &m.svc {
            let lo = self.base.lower[b.mode];
            let hi = self.base.upper[b.mode];
            let signed = x[b.mag] - 2.0 * x[b.prod];
            let mut k = u8::from(signed < 0.0);
            if lo == hi {
                k = lo as u8;
            }
            val.insert(b.mode, k);
        }
        m.binaries.iter().map(|v| val[v]).collect()
    }
}

fn usable(sol: &ConeSolution) -> bool {
    match sol.status {
        Status::Optimal => true,
        Status::IterationLimit => {
            sol.primal_res <= ACCEPT_RESIDUAL && sol.dual_res <= ACCEPT_RESIDUAL && sol.gap <= ACCEPT_RESIDUAL
        }
        _ => false,
    }
}

fn integral(model: &MISOCPModel, x: &[f64]) -> bool {
    model.binaries.iter().all(|&v| fractionality(x[v]) <= INTEGRALITY_TOL)
}

/// Solves `model` to within `settings.gap_tol`.
pub fn solve_misocp(model: &MISOCPModel, settings: &BnbSettings) -> Result<MIPSolution, BnbError> {
    let start = Instant::now();
    let base = to_cone_problem(model);
    let priority = model
        .binary_class
        .iter()
        .map(|c| match c {
            BinaryClass::Phase => 0,
            BinaryClass::Mode => 1,
        })
        .collect();
    let mut s = Search {
        model,
        base,
        settings,
        priority,
        incumbent: None,
        tried: HashSet::new(),
        relaxations: 0,
        numerical: 0,
    };
    let mut log = Vec::new();
    let out = |status: MipStatus, s: &Search<'_>, bound: f64, nodes: usize, mono: usize, log: Vec<NodeLogEntry>| {
        let (objective, x) = s.incumbent.clone().unwrap_or((f64::INFINITY, Vec::new()));
        let bound = bound.min(objective);
        let gap = if x.is_empty() { f64::INFINITY } else { (objective - bound) / objective.abs().max(1.0) };
        MIPSolution {
            status,
            x,
            objective,
            bound,
            gap,
            nodes_explored: nodes,
            relaxations: s.relaxations,
            numerical_failures: s.numerical,
            monotonicity_violations: mono,
            log,
        }
    };

    let all_fixed = model.binaries.iter().all(|&v| s.base.lower[v] == s.base.upper[v]);
    if all_fixed {
        return Ok(match s.solve(&[])? {
            Relax::Solved(sol) => {
                let b = sol.objective;
                s.offer(sol);
                out(MipStatus::Optimal, &s, b, 1, 0, log)
            }
            Relax::Infeasible => out(MipStatus::Infeasible, &s, f64::INFINITY, 1, 0, log),
            Relax::Failed => out(MipStatus::GapLimit, &s, f64::NEG_INFINITY, 1, 0, log),
        });
    }

    let group_of: std::collections::HashMap<VarId, usize> =
        model.groups.iter().enumerate().flat_map(|(g, m)| m.iter().map(move |&v| (v, g))).collect();
    let mut nodes: Vec<BnbNode> = Vec::new();
    let mut heap = BinaryHeap::new();
    let root = BnbNode {
        id: 0,
        parent: None,
        fixings: Vec::new(),
        bound: f64::NEG_INFINITY,
        parent_relaxation: f64::NEG_INFINITY,
        depth: 0,
    };
    heap.push(Queued { bound: root.bound, id: 0 });
    nodes.push(root);
    // Smallest bound among nodes closed without proving anything better.
    let mut closed_bound = f64::INFINITY;
    let mut explored = 0usize;
    let mut mono = 0usize;
    let mut status = None;

    while let Some(Queued { id, .. }) = heap.pop() {
        if settings.time_limit.is_some_and(|lim| start.elapsed() >= lim) {
            heap.push(Queued { bound: nodes[id].bound, id });
            status = Some(MipStatus::TimeLimit);
            break;
        }
        if explored >= settings.node_limit {
            heap.push(Queued { bound: nodes[id].bound, id });
            status = Some(MipStatus::GapLimit);
            break;
        }
        let node = nodes[id].clone();
        let entry = |action, relaxation, s: &Search<'_>, bound: f64| NodeLogEntry {
            node: node.id,
            parent: node.parent,
            depth: node.depth,
            fixings_hash: node.fixings_hash(),
            bound,
            relaxation,
            action,
            incumbent: s.upper(),
        };
        if node.bound >= s.threshold() {
            closed_bound = closed_bound.min(node.bound);
            if settings.keep_log {
                log.push(entry(NodeAction::PrunedBound, None, &s, node.bound));
            }
            continue;
        }
        explored += 1;
        let relax = s.solve(&node.fixings)?;
        let sol = match relax {
            Relax::Infeasible => {
                if id == 0 {
                    if settings.keep_log {
                        log.push(entry(NodeAction::Infeasible, None, &s, node.bound));
                    }
                    return Ok(out(MipStatus::Infeasible, &s, f64::INFINITY, explored, mono, log));
                }
                if settings.keep_log {
                    log.push(entry(NodeAction::Infeasible, None, &s, node.bound));
                }
                continue;
            }
            Relax::Failed => {
                // Keep the inherited bound and split on the first free binary.
                let free = model.binaries.iter().copied().find(|&v| node.fixed(v).is_none());
                match free {
                    Some(var) => {
                        for val in [0u8, 1] {
                            if let Some(f) = propagate(node.with(var, val), &model.groups) {
                                let cid = nodes.len();
                                nodes.push(BnbNode {
                                    id: cid,
                                    parent: Some(node.id),
                                    fixings: f,
                                    bound: node.bound,
                                    parent_relaxation: node.parent_relaxation,
                                    depth: node.depth + 1,
                                });
                                heap.push(Queued { bound: node.bound, id: cid });
                            }
                        }
                        if settings.keep_log {
                            log.push(entry(NodeAction::Branched { var, value: f64::NAN }, None, &s, node.bound));
                        }
                    }
                    None => {
                        closed_bound = closed_bound.min(node.bound);
                        if settings.keep_log {
                            log.push(entry(NodeAction::Numerical, None, &s, node.bound));
                        }
                    }
                }
                continue;
            }
            Relax::Solved(sol) => sol,
        };
        let relax_value = sol.objective;
        if node.parent_relaxation.is_finite()
            && relax_value < node.parent_relaxation - MONOTONICITY_TOL * node.parent_relaxation.abs().max(1.0)
        {
            mono += 1;
        }
        let bound = node.bound.max(relax_value);
        let fully_fixed = model.binaries.iter().all(|&v| node.fixed(v).is_some());
        if integral(model, &sol.x) {
            if fully_fixed {
                s.offer(sol);
            } else {
                let vals = model.binaries.iter().map(|&v| sol.x[v].round() as u8).collect();
                s.repair(vals)?;
            }
            closed_bound = closed_bound.min(bound);
            if settings.keep_log {
                log.push(entry(NodeAction::Integral, Some(relax_value), &s, bound));
            }
            continue;
        }
        if s.incumbent.is_none() || node.depth <= HEURISTIC_DEPTH || explored % HEURISTIC_EVERY == 0 {
            let guess = s.rounding(&sol.x);
            s.repair(guess)?;
        }
        if bound >= s.threshold() {
            closed_bound = closed_bound.min(bound);
            if settings.keep_log {
                log.push(entry(NodeAction::PrunedBound, Some(relax_value), &s, bound));
            }
            continue;
        }
        let mut parent = node.clone();
        parent.bound = bound;
        let (c0, c1) = branch(&parent, &sol, &model.binaries, &s.priority)?;
        let var = c1.fixings.iter().find(|(v, _)| node.fixed(*v).is_none()).map(|&(v, _)| v).unwrap_or(0);
        // A selector whose group still has three or more open members splits
        // into one child per member instead of a 0/1 pair.
        let children = match group_of.get(&var).map(|&g| &model.groups[g]) {
            Some(g) if g.iter().filter(|&&v| node.fixed(v).is_none()).count() > 2 => g
                .iter()
                .filter(|&&v| node.fixed(v).is_none())
                .map(|&v| BnbNode { fixings: node.with(v, 1), ..c1.clone() })
                .collect(),
            _ => vec![c0, c1],
        };
        for mut c in children {
            if let Some(f) = propagate(c.fixings.clone(), &model.groups) {
                c.fixings = f;
                c.id = nodes.len();
                heap.push(Queued { bound: c.bound, id: c.id });
                nodes.push(c);
            }
        }
        if settings.keep_log {
            log.push(entry(NodeAction::Branched { var, value: sol.x[var] }, Some(relax_value), &s, bound));
        }
    }

    let open = heap.iter().map(|q| q.bound).fold(f64::INFINITY, f64::min);
    let lower = open.min(closed_bound);
    let status = match status {
        Some(st) => st,
        None if s.incumbent.is_none() => MipStatus::Infeasible,
        None => {
            let u = s.upper();
            if (u - lower.min(u)) / u.abs().max(1.0) <= settings.gap_tol {
                MipStatus::Optimal
            } else {
                MipStatus::GapLimit
            }
        }
    };
    Ok(out(status, &s, lower, explored, mono, log))
}
