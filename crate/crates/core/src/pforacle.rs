//! Exact three-phase power flow by backward/forward sweep, used to validate
//! optimizer output and as a brute-force reference.
//!
//! Customers are constant-power loads; the SVC is a fixed current injection
//! at its node. Lines use their full 3×3 impedance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulation::{DispatchSolution, StrategyFlags};
use crate::netmodel::{Network, NetworkError, Phase, PhasePair, Topology};
use crate::seqcomp::{decompose, neg_seq, zero_seq, PhaseTriple, SequenceTriple};
use crate::Complex;

pub const SWEEP_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 200;
/// Largest number of adjustable customers [`enumerate_assignments`] accepts.
pub const MAX_ENUMERATED: usize = 6;

#[derive(Debug, Error)]
pub enum PowerFlowError {
    #[error("power flow for period {t} did not converge in {sweeps} sweeps (last change {change:.3e})")]
    Diverged { t: usize, sweeps: usize, change: f64, last: Box<PFState> },
    #[error("terminal voltage of customer '{customer}' collapsed to zero in period {t}")]
    ZeroVoltage { t: usize, customer: String },
    #[error("demand of customer '{customer}' ({s:.4} pu) exceeds the screening limit {limit:.4} pu")]
    Screening { customer: String, s: f64, limit: f64 },
    #[error("assignment has {got} entries for {expected} customers")]
    Assignment { expected: usize, got: usize },
    #[error("period {0} outside the horizon")]
    Period(usize),
    #[error("solution has no data for period {0}")]
    MissingPeriod(usize),
    #[error("{0} adjustable customers exceed the enumeration cap of {MAX_ENUMERATED}")]
    TooLarge(usize),
    #[error("window {0} does not exist")]
    Window(usize),
    #[error("no assignment satisfies the network limits")]
    NoFeasible,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Smallest margin to each limit family; negative values are violations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSlacks {
    pub node_vm_min: f64,
    pub node_vm_max: f64,
    pub customer_vm_min: f64,
    pub customer_vm_max: f64,
    pub ampacity: f64,
    pub nsv: f64,
    pub zsv: f64,
}

impl LimitSlacks {
    pub fn worst(&self) -> f64 {
        [
            self.node_vm_min,
            self.node_vm_max,
            self.customer_vm_min,
            self.customer_vm_max,
            self.ampacity,
            self.nsv,
            self.zsv,
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }

    pub fn feasible(&self, tol: f64) -> bool {
        self.worst() >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PFState {
    pub t: usize,
    pub node_v: Vec<[Complex; 3]>,
    pub customer_v: Vec<Complex>,
    pub customer_i: Vec<Complex>,
    pub line_i: Vec<[Complex; 3]>,
    /// Current drawn by the SVC from each phase.
    pub svc_i: [Complex; 3],
    pub dt_seq: SequenceTriple,
    /// Largest NSV and ZSV magnitudes over non-root nodes.
    pub max_nsv: f64,
    pub max_zsv: f64,
    pub slacks: LimitSlacks,
    pub sweeps: usize,
    /// Largest voltage update of each sweep.
    pub changes: Vec<f64>,
}

impl PFState {
    /// `|I⁻| + |I⁰|` of the transformer current.
    pub fn unbalance(&self) -> f64 {
        self.dt_seq.neg.norm() + self.dt_seq.zero.norm()
    }
}

fn screen(net: &Network, topo: &Topology, t: usize) -> Result<(), PowerFlowError> {
    for c in &net.customers {
        let path: f64 = net
            .path_lines(topo, c.node)
            .iter()
            .map(|&l| (0..3).map(|k| net.lines[l].z[k][k].norm()).fold(0.0, f64::max))
            .sum::<f64>()
            + c.service_z.norm();
        if path <= 0.0 {
            continue;
        }
        let limit = 0.25 * c.vm_min * c.vm_min / path;
        let s = c.demand[t].norm();
        if s > limit {
            return Err(PowerFlowError::Screening { customer: c.id.clone(), s, limit });
        }
    }
    Ok(())
}

/// SVC phase currents from branch currents in the order ab, bc, ca.
pub fn svc_phase_currents(pairs: &[Complex; 3]) -> [Complex; 3] {
    let (ab, bc, ca) = (pairs[0], pairs[1], pairs[2]);
    [ab - ca, bc - ab, ca - bc]
}

fn mat_vec(z: &[[Complex; 3]; 3], i: &[Complex; 3]) -> [Complex; 3] {
    let mut out = [Complex::new(0.0, 0.0); 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r] += z[r][c] * i[c];
        }
    }
    out
}

/// Power flow of period `t` with the given customer phases and SVC branch
/// currents (`None` for no SVC).
pub fn solve_power_flow(
    net: &Network,
    assignment: &[Phase],
    svc_currents: Option<&[Complex; 3]>,
    t: usize,
) -> Result<PFState, PowerFlowError> {
    let topo = net.topology()?;
    solve_with_topology(net, &topo, assignment, svc_currents, t)
}

fn solve_with_topology(
    net: &Network,
    topo: &Topology,
    assignment: &[Phase],
    svc_currents: Option<&[Complex; 3]>,
    t: usize,
) -> Result<PFState, PowerFlowError> {
    let nc = net.customers.len();
    if assignment.len() != nc {
        return Err(PowerFlowError::Assignment { expected: nc, got: assignment.len() });
    }
    if t >= net.horizon.periods {
        return Err(PowerFlowError::Period(t));
    }
    screen(net, topo, t)?;
    let zero = Complex::new(0.0, 0.0);
    let v0 = net.horizon.root_voltage[t];
    let svc_node = net.svc.as_ref().map(|s| s.node);
    let svc_i = svc_currents.map(svc_phase_currents).unwrap_or([zero; 3]);
    let n = net.nodes.len();
    let mut node_v = vec![v0; n];
    let mut cust_v: Vec<Complex> = assignment.iter().map(|p| v0[p.index()]).collect();
    let mut cust_i = vec![zero; nc];
    let mut line_i = vec![[zero; 3]; net.lines.len()];
    let mut changes = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        for (j, c) in net.customers.iter().enumerate() {
            let v = cust_v[j];
            if v.norm() < 1e-9 {
                return Err(PowerFlowError::ZeroVoltage { t, customer: c.id.clone() });
            }
            cust_i[j] = (c.demand[t] / v).conj();
        }
        // Backward: accumulate currents from the leaves.
        for &node in topo.order.iter().rev() {
            let Some(pl) = topo.parent_line[node] else { continue };
            let mut acc = [zero; 3];
            for &l in &topo.child_lines[node] {
                for k in 0..3 {
                    acc[k] += line_i[l][k];
                }
            }
            for &j in &topo.customers_at[node] {
                acc[assignment[j].index()] += cust_i[j];
            }
            if svc_node == Some(node) {
                for k in 0..3 {
                    acc[k] += svc_i[k];
                }
            }
            line_i[pl] = acc;
        }
        // Forward: voltage drops from the root.
        let mut change = 0.0_f64;
        for &node in &topo.order {
            let new = match topo.parent_line[node] {
                None => v0,
                Some(l) => {
                    let line = &net.lines[l];
                    let drop = mat_vec(&line.z, &line_i[l]);
                    let up = node_v[line.from];
                    [up[0] - drop[0], up[1] - drop[1], up[2] - drop[2]]
                }
            };
            for k in 0..3 {
                change = change.max((new[k] - node_v[node][k]).norm());
            }
            node_v[node] = new;
        }
        for (j, c) in net.customers.iter().enumerate() {
            let new = node_v[c.node][assignment[j].index()] - c.service_z * cust_i[j];
            change = change.max((new - cust_v[j]).norm());
            cust_v[j] = new;
        }
        changes.push(change);
        if change <= SWEEP_TOL {
            converged = true;
            break;
        }
    }
    // Currents consistent with the final voltages.
    for (j, c) in net.customers.iter().enumerate() {
        cust_i[j] = (c.demand[t] / cust_v[j]).conj();
    }
    let dt = PhaseTriple::from_array(line_i[topo.dt_line]);
    let mut st = PFState {
        t,
        node_v,
        customer_v: cust_v,
        customer_i: cust_i,
        line_i,
        svc_i,
        dt_seq: decompose(&dt),
        max_nsv: 0.0,
        max_zsv: 0.0,
        slacks: LimitSlacks {
            node_vm_min: f64::INFINITY,
            node_vm_max: f64::INFINITY,
            customer_vm_min: f64::INFINITY,
            customer_vm_max: f64::INFINITY,
            ampacity: f64::INFINITY,
            nsv: f64::INFINITY,
            zsv: f64::INFINITY,
        },
        sweeps: changes.len(),
        changes,
    };
    fill_limits(net, topo, &mut st);
    if !converged {
        let change = st.changes.last().copied().unwrap_or(f64::INFINITY);
        return Err(PowerFlowError::Diverged { t, sweeps: MAX_SWEEPS, change, last: Box::new(st) });
    }
    Ok(st)
}

fn fill_limits(net: &Network, topo: &Topology, st: &mut PFState) {
    let s = &mut st.slacks;
    let nu_neg = net.limits.nu_neg * net.nominal_vm;
    let nu_zero = net.limits.nu_zero * net.nominal_vm;
    for (i, node) in net.nodes.iter().enumerate() {
        if i == topo.root {
            continue;
        }
        for v in st.node_v[i] {
            s.node_vm_min = s.node_vm_min.min(v.norm() - node.vm_min);
            s.node_vm_max = s.node_vm_max.min(node.vm_max - v.norm());
        }
        let tri = PhaseTriple::from_array(st.node_v[i]);
        let (vn, vz) = (neg_seq(&tri).norm(), zero_seq(&tri).norm());
        st.max_nsv = st.max_nsv.max(vn);
        st.max_zsv = st.max_zsv.max(vz);
        s.nsv = s.nsv.min(nu_neg - vn);
        s.zsv = s.zsv.min(nu_zero - vz);
    }
    for (j, c) in net.customers.iter().enumerate() {
        let m = st.customer_v[j].norm();
        s.customer_vm_min = s.customer_vm_min.min(m - c.vm_min);
        s.customer_vm_max = s.customer_vm_max.min(c.vm_max - m);
    }
    if let Some(amp) = net.lines[topo.dt_line].ampacity {
        for i in st.line_i[topo.dt_line] {
            s.ampacity = s.ampacity.min(amp - i.norm());
        }
    }
}

/// Largest KCL mismatch of a state, over all non-root nodes and phases.
pub fn kcl_residual(net: &Network, assignment: &[Phase], st: &PFState) -> Result<f64, PowerFlowError> {
    let topo = net.topology()?;
    let svc_node = net.svc.as_ref().map(|s| s.node);
    let mut worst = 0.0_f64;
    for node in 0..net.nodes.len() {
        let Some(pl) = topo.parent_line[node] else { continue };
        for k in 0..3 {
            let mut r = st.line_i[pl][k];
            for &l in &topo.child_lines[node] {
                r -= st.line_i[l][k];
            }
            for &j in &topo.customers_at[node] {
                if assignment[j].index() == k {
                    r -= st.customer_i[j];
                }
            }
            if svc_node == Some(node) {
                r -= st.svc_i[k];
            }
            worst = worst.max(r.norm());
        }
    }
    Ok(worst)
}

/// Largest Ohm's-law mismatch over lines and service lines.
pub fn ohm_residual(net: &Network, assignment: &[Phase], st: &PFState) -> f64 {
    let mut worst = 0.0_f64;
    for (l, line) in net.lines.iter().enumerate() {
        let drop = mat_vec(&line.z, &st.line_i[l]);
        for k in 0..3 {
            let r = st.node_v[line.from][k] - st.node_v[line.to][k] - drop[k];
            worst = worst.max(r.norm());
        }
    }
    for (j, c) in net.customers.iter().enumerate() {
        let r = st.node_v[c.node][assignment[j].index()] - st.customer_v[j] - c.service_z * st.customer_i[j];
        worst = worst.max(r.norm());
    }
    worst
}

/// Largest `|V·I* − S|` over customers.
pub fn power_residual(net: &Network, st: &PFState) -> f64 {
    net.customers
        .iter()
        .enumerate()
        .map(|(j, c)| (st.customer_v[j] * st.customer_i[j].conj() - c.demand[st.t]).norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodMetrics {
    pub t: usize,
    pub z_neg: f64,
    pub z_zero: f64,
    pub max_nsv_ratio: f64,
    pub max_zsv_ratio: f64,
    pub dt_seq: SequenceTriple,
    pub dt_currents: [Complex; 3],
    pub linearization_error: f64,
    pub worst_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    /// `Σ_t |I⁻_t| + |I⁰_t|` from the exact power flow.
    pub objective: f64,
    pub max_voltage_violation: f64,
    /// Lower-magnitude violations only, nodes and customer terminals.
    pub max_lower_vm_violation: f64,
    /// Transformer ampacity and SVC capacity violations.
    pub max_ampacity_violation: f64,
    /// Worst sequence voltage as a fraction of its limit; above 1 violates.
    pub max_nsv_ratio: f64,
    pub max_zsv_ratio: f64,
    /// `‖V_linear − V_exact‖∞` over nodes and customer terminals.
    pub max_linearization_error: f64,
    pub periods: Vec<PeriodMetrics>,
}

/// Replays a dispatch through the exact power flow and measures it.
pub fn validate_solution(net: &Network, sol: &DispatchSolution) -> Result<ValidationMetrics, PowerFlowError> {
    let topo = net.topology()?;
    let mut m = ValidationMetrics {
        objective: 0.0,
        max_voltage_violation: 0.0,
        max_lower_vm_violation: 0.0,
        max_ampacity_violation: 0.0,
        max_nsv_ratio: 0.0,
        max_zsv_ratio: 0.0,
        max_linearization_error: 0.0,
        periods: Vec::new(),
    };
    let nu_neg = net.limits.nu_neg * net.nominal_vm;
    let nu_zero = net.limits.nu_zero * net.nominal_vm;
    for t in 0..net.horizon.periods {
        let pd = sol.period(t).ok_or(PowerFlowError::MissingPeriod(t))?;
        let phases = sol.assignment_at(t).ok_or(PowerFlowError::MissingPeriod(t))?;
        let svc = pd.svc.as_ref().map(|s| s.currents);
        let st = solve_with_topology(net, &topo, phases, svc.as_ref(), t)?;
        let sl = &st.slacks;
        let lower = (-sl.node_vm_min).max(-sl.customer_vm_min).max(0.0);
        let upper = (-sl.node_vm_max).max(-sl.customer_vm_max).max(0.0);
        m.max_lower_vm_violation = m.max_lower_vm_violation.max(lower);
        m.max_voltage_violation = m.max_voltage_violation.max(lower).max(upper);
        let mut amp = (-sl.ampacity).max(0.0);
        if let (Some(spec), Some(s)) = (net.svc.as_ref(), pd.svc.as_ref()) {
            for pair in PhasePair::ALL {
                let k = pair.index();
                let limit = spec.current_limit(s.capacitive[k]);
                amp = amp.max(s.currents[k].norm() - limit);
            }
        }
        m.max_ampacity_violation = m.max_ampacity_violation.max(amp);
        let nsv = if nu_neg > 0.0 { st.max_nsv / nu_neg } else { 0.0 };
        let zsv = if nu_zero > 0.0 { st.max_zsv / nu_zero } else { 0.0 };
        m.max_nsv_ratio = m.max_nsv_ratio.max(nsv);
        m.max_zsv_ratio = m.max_zsv_ratio.max(zsv);
        let mut lin = 0.0_f64;
        for (a, b) in pd.node_v.iter().zip(&st.node_v) {
            for k in 0..3 {
                lin = lin.max((a[k] - b[k]).norm());
            }
        }
        for (a, b) in pd.customer_v.iter().zip(&st.customer_v) {
            lin = lin.max((a - b).norm());
        }
        m.max_linearization_error = m.max_linearization_error.max(lin);
        let (zn, zz) = (st.dt_seq.neg.norm(), st.dt_seq.zero.norm());
        m.objective += zn + zz;
        m.periods.push(PeriodMetrics {
            t,
            z_neg: zn,
            z_zero: zz,
            max_nsv_ratio: nsv,
            max_zsv_ratio: zsv,
            dt_seq: st.dt_seq,
            dt_currents: st.line_i[topo.dt_line],
            linearization_error: lin,
            worst_slack: sl.worst(),
        });
    }
    Ok(m)
}

/// Candidate SVC branch currents: signed magnitudes along each branch's
/// inductive direction (negative values are capacitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcGrid {
    pub levels: Vec<f64>,
}

impl SvcGrid {
    pub fn off() -> Self {
        SvcGrid { levels: vec![0.0] }
    }

    /// `n` evenly spaced levels covering the SVC's capability (n ≥ 2).
    pub fn uniform(net: &Network, n: usize) -> Self {
        let Some(s) = net.active_svc() else { return SvcGrid::off() };
        let (lo, hi) = (-s.current_limit(true), s.current_limit(false));
        let n = n.max(2);
        SvcGrid { levels: (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect() }
    }
}

/// Calls `f` on every phase assignment reachable under `strategy`, in
/// lexicographic order of the adjustable customers' phases (a < b < c).
pub fn for_each_assignment<F>(net: &Network, strategy: StrategyFlags, mut f: F) -> Result<(), PowerFlowError>
where
    F: FnMut(&[Phase]),
{
    let adj: Vec<usize> = if strategy.use_psd { net.adjustable().collect() } else { Vec::new() };
    if adj.len() > MAX_ENUMERATED {
        return Err(PowerFlowError::TooLarge(adj.len()));
    }
    let mut phases = net.initial_assignment();
    let total = 3usize.pow(adj.len() as u32);
    for code in 0..total {
        let mut r = code;
        for &j in adj.iter().rev() {
            phases[j] = Phase::from_index(r % 3);
            r /= 3;
        }
        f(&phases);
    }
    Ok(())
}

/// Exhaustive minimization of the window objective over phase assignments
/// and SVC grid points, using the exact power flow. Ties keep the first
/// assignment in lexicographic order.
pub fn enumerate_assignments(
    net: &Network,
    k: usize,
    strategy: StrategyFlags,
    grid: &SvcGrid,
) -> Result<(Vec<Phase>, f64), PowerFlowError> {
    let topo = net.topology()?;
    let window = net.horizon.subsets.get(k).cloned().ok_or(PowerFlowError::Window(k))?;
    let svc = if strategy.use_svc { net.active_svc() } else { None };
    let levels: &[f64] = if svc.is_some() { &grid.levels } else { &[0.0] };
    let mut combos: Vec<Option<[Complex; 3]>> = Vec::new();
    if svc.is_none() {
        combos.push(None);
    }
    let mut best: Option<(Vec<Phase>, f64)> = None;
    let mut failure: Option<PowerFlowError> = None;
    for_each_assignment(net, strategy, |phases| {
        if failure.is_some() {
            return;
        }
        let mut total = 0.0;
        for t in window.clone() {
            let v0 = net.horizon.root_voltage[t];
            let dirs = PhasePair::ALL.map(|pair| {
                let (p, q) = pair.phases();
                let beta = (v0[p.index()] - v0[q.index()]).arg();
                Complex::new(beta.sin(), -beta.cos())
            });
            let mut period_best = f64::INFINITY;
            let mut eval = |cur: Option<[Complex; 3]>| match solve_with_topology(net, &topo, phases, cur.as_ref(), t) {
                Ok(st) if st.slacks.feasible(1e-9) => period_best = period_best.min(st.unbalance()),
                Ok(_) | Err(PowerFlowError::Diverged { .. }) | Err(PowerFlowError::ZeroVoltage { .. }) => {}
                Err(e) => failure = Some(e),
            };
            if svc.is_some() {
                for &a in levels {
                    for &b in levels {
                        for &c in levels {
                            eval(Some([dirs[0] * a, dirs[1] * b, dirs[2] * c]));
                        }
                    }
                }
            } else {
                for cur in &combos {
                    eval(*cur);
                }
            }
            total += period_best;
        }
        if total.is_finite() && best.as_ref().map_or(true, |(_, b)| total < *b) {
            best = Some((phases.to_vec(), total));
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    best.ok_or(PowerFlowError::NoFeasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{balanced_network, balanced_voltage, coupled, FeederBuilder};
    use crate::netmodel::CustomerKind;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn zero_demand_gives_flat_profile() {
        let mut net = balanced_network(1);
        for cu in &mut net.customers {
            cu.demand = vec![c(0.0, 0.0)];
        }
        let st = solve_power_flow(&net, &net.initial_assignment(), None, 0).unwrap();
        let v0 = net.horizon.root_voltage[0];
        for v in &st.node_v {
            for k in 0..3 {
                assert_eq!(v[k], v0[k]);
            }
        }
        assert!(st.line_i.iter().flatten().all(|i| i.norm() == 0.0));
    }

    #[test]
    fn balanced_loads_give_symmetric_voltages() {
        let net = balanced_network(1);
        let st = solve_power_flow(&net, &net.initial_assignment(), None, 0).unwrap();
        for v in &st.node_v {
            assert!((v[0].norm() - v[1].norm()).abs() < 1e-12);
            assert!((v[0].norm() - v[2].norm()).abs() < 1e-12);
        }
        assert!(st.dt_seq.neg.norm() < 1e-12 && st.dt_seq.zero.norm() < 1e-12);
    }

    #[test]
    fn residuals_are_tiny() {
        let net = crate::fixtures::ieee13_like(2.5);
        let a = net.initial_assignment();
        for t in [3, 12, 19] {
            let st = solve_power_flow(&net, &a, None, t).unwrap();
            assert!(kcl_residual(&net, &a, &st).unwrap() <= 1e-10);
            assert!(ohm_residual(&net, &a, &st) <= 1e-10);
            assert!(power_residual(&net, &st) <= 1e-8);
        }
    }

    #[test]
    fn single_customer_scalar_fixed_point() {
        // One line and one service line of 0.01 + 0.01j each, no transformer drop.
        let z = c(0.01, 0.01);
        let mut b = FeederBuilder::new(vec![balanced_voltage(1.0)], coupled(c(0.0, 0.0), c(0.0, 0.0)), 10.0);
        let n1 = b.node("n1", 1, coupled(z, c(0.0, 0.0)));
        b.customer("c1", n1, CustomerKind::Fixed, Phase::A, z, vec![c(0.1, 0.0)], (0.5, 1.5));
        let net = b.build(1);
        let st = solve_power_flow(&net, &net.initial_assignment(), None, 0).unwrap();
        // Independent scalar iteration of V = 1 − 0.02(1 + j)·(0.1 / V*).
        let mut v = c(1.0, 0.0);
        for _ in 0..200 {
            v = c(1.0, 0.0) - c(0.02, 0.02) * (c(0.1, 0.0) / v.conj());
        }
        assert!((st.customer_v[0] - v).norm() < 1e-10, "{} vs {}", st.customer_v[0], v);
    }

    #[test]
    fn svc_phase_currents_recombine() {
        let pairs = [c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)];
        let ph = svc_phase_currents(&pairs);
        assert_eq!(ph[0], c(2.0, -1.0));
        let s: Complex = ph.iter().sum();
        assert!(s.norm() < 1e-15);
    }

    #[test]
    fn enumeration_without_choices_returns_initial() {
        let net = balanced_network(1);
        let s1 = StrategyFlags::from_number(1).unwrap();
        let (a, f) = enumerate_assignments(&net, 0, s1, &SvcGrid::off()).unwrap();
        assert_eq!(a, net.initial_assignment());
        assert!(f < 1e-12);
    }

    #[test]
    fn enumeration_tie_keeps_lowest_assignment() {
        // Two identical adjustable customers alone on a balanced feeder:
        // every assignment with all three phases covered ties.
        let mut b = FeederBuilder::new(vec![balanced_voltage(1.0)], coupled(c(0.004, 0.011), c(0.0, 0.0)), 5.0);
        let n1 = b.node("n1", 1, coupled(c(0.01, 0.005), c(0.0, 0.0)));
        b.customer("f", n1, CustomerKind::Fixed, Phase::A, c(0.005, 0.0), vec![c(0.1, 0.0)], (0.9, 1.1));
        for id in ["u", "v"] {
            b.customer(id, n1, CustomerKind::Adjustable, Phase::A, c(0.005, 0.0), vec![c(0.1, 0.0)], (0.9, 1.1));
        }
        let net = b.build(1);
        let s3 = StrategyFlags::from_number(3).unwrap();
        let (a, _) = enumerate_assignments(&net, 0, s3, &SvcGrid::off()).unwrap();
        assert_eq!(a, vec![Phase::A, Phase::B, Phase::C]);
    }
}
