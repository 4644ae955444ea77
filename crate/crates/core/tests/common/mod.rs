//! Helpers shared by the integration tests: seeded random feeders and a
//! fixed-assignment SOCP evaluator.

#![allow(dead_code)]

use phasebal::conesolver::{solve_with, Settings, Status};
use phasebal::fixtures::{balanced_voltage, coupled, transformer, FeederBuilder};
use phasebal::formulation::{to_cone_problem, MISOCPModel, VarKey};
use phasebal::netmodel::{CustomerKind, Network, Phase};
use phasebal::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub mod socp;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy)]
pub struct RandomSpec {
    pub nodes: usize,
    pub fixed: usize,
    pub adjustable: usize,
    pub periods: usize,
    /// SVC rating in pu, both modes.
    pub svc: Option<f64>,
    /// Scales every demand.
    pub load: f64,
    pub node_vm_min: f64,
    /// Scales every segment impedance.
    pub z_scale: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec { nodes: 2, fixed: 2, adjustable: 2, periods: 1, svc: None, load: 1.0, node_vm_min: 0.94, z_scale: 1.0 }
    }
}

/// Radial feeder with random segment impedances and random demands.
pub fn random_feeder(r: &mut ChaCha8Rng, spec: RandomSpec) -> Network {
    let (dt, amp) = transformer();
    let root = r.gen_range(0.98..1.04);
    let mut b = FeederBuilder::new(vec![balanced_voltage(root); spec.periods], dt, amp);
    b.node_limits(spec.node_vm_min, 1.1);
    let mut nodes = vec![1usize];
    for i in 0..spec.nodes {
        let parent = nodes[r.gen_range(0..nodes.len())];
        let len = r.gen_range(0.3..1.5) * spec.z_scale;
        let z = coupled(Complex::new(0.008, 0.004) * len, Complex::new(0.003, 0.0015) * len);
        nodes.push(b.node(&format!("n{i}"), parent, z));
    }
    let total = spec.fixed + spec.adjustable;
    for j in 0..total {
        let node = nodes[r.gen_range(1..nodes.len())];
        let phase = Phase::from_index(r.gen_range(0..3));
        let kind = if j < spec.fixed { CustomerKind::Fixed } else { CustomerKind::Adjustable };
        let demand = (0..spec.periods)
            .map(|_| Complex::new(r.gen_range(0.02..0.35), r.gen_range(0.0..0.1)) * spec.load)
            .collect();
        b.customer(&format!("c{j}"), node, kind, phase, Complex::new(0.01, 0.004), demand, (0.9, 1.1));
    }
    if let Some(s) = spec.svc {
        b.svc(s, s);
    }
    b.build(1)
}

/// Variable bounds of `model` with every phase selector fixed to `phases`.
pub fn fixed_assignment_problem(
    model: &MISOCPModel,
    phases: &[Phase],
) -> phasebal::conesolver::StandardConeProblem {
    let mut p = to_cone_problem(model);
    for (j, &ph) in phases.iter().enumerate() {
        for q in Phase::ALL {
            if let Some(v) = model.vars.get(&VarKey::Alpha { cust: j, phase: q }) {
                let x = if q == ph { 1.0 } else { 0.0 };
                p.lower[v] = x;
                p.upper[v] = x;
            }
        }
    }
    p
}

/// Optimal value of the fixed-assignment SOCP, `None` when infeasible.
pub fn fixed_assignment_value(model: &MISOCPModel, phases: &[Phase]) -> Option<f64> {
    let p = fixed_assignment_problem(model, phases);
    let s = solve_with(&p, &Settings::default()).expect("well-formed problem");
    match s.status {
        Status::Optimal => Some(s.objective),
        Status::Infeasible => None,
        other => panic!("fixed-assignment solve ended with {other:?}"),
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
