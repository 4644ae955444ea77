use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{FormulationError, MISOCPModel, Part, VarKey, INTEGRALITY_TOL};
use crate::netmodel::{Phase, PhasePair};
use crate::Complex;

/// Phase of every customer during one PSD window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowAssignment {
    pub window: usize,
    pub periods: Range<usize>,
    pub phases: Vec<Phase>,
}

/// SVC state of one period: branch currents in the order ab, bc, ca.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcDispatch {
    pub currents: [Complex; 3],
    pub magnitudes: [f64; 3],
    /// `true` for capacitive operation.
    pub capacitive: [bool; 3],
}

impl SvcDispatch {
    pub fn current(&self, pair: PhasePair) -> Complex {
        self.currents[pair.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDispatch {
    pub t: usize,
    pub svc: Option<SvcDispatch>,
    pub node_v: Vec<[Complex; 3]>,
    pub line_i: Vec<[Complex; 3]>,
    pub customer_i: Vec<Complex>,
    pub customer_v: Vec<Complex>,
    pub z_neg: f64,
    pub z_zero: f64,
}

impl PeriodDispatch {
    pub fn z(&self) -> f64 {
        self.z_neg + self.z_zero
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub windows: Vec<WindowAssignment>,
    pub periods: Vec<PeriodDispatch>,
    pub objective: f64,
}

impl DispatchSolution {
    pub fn assignment_at(&self, t: usize) -> Option<&[Phase]> {
        self.windows
            .iter()
            .find(|w| w.periods.contains(&t))
            .map(|w| w.phases.as_slice())
    }

    pub fn period(&self, t: usize) -> Option<&PeriodDispatch> {
        self.periods.iter().find(|p| p.t == t)
    }
}

/// Decodes a solution vector of `model`.
pub fn extract_solution(model: &MISOCPModel, x: &[f64]) -> Result<DispatchSolution, FormulationError> {
    let n = model.num_vars();
    if x.len() != n {
        return Err(FormulationError::Length { expected: n, got: x.len() });
    }
    let meta = &model.meta;
    let vars = &model.vars;
    let mut phases = meta.initial.clone();
    for (j, id) in meta.customer_ids.iter().enumerate() {
        let mut chosen = Vec::new();
        for phase in Phase::ALL {
            let Some(v) = vars.get(&VarKey::Alpha { cust: j, phase }) else { continue };
            let a = x[v];
            if (a - a.round()).abs() > INTEGRALITY_TOL {
                return Err(FormulationError::Fractional { customer: id.clone(), phase, value: a });
            }
            if a.round() == 1.0 {
                chosen.push(phase);
            }
        }
        let has_selector = vars.get(&VarKey::Alpha { cust: j, phase: Phase::A }).is_some();
        if has_selector {
            if chosen.len() != 1 {
                return Err(FormulationError::Assignment { customer: id.clone(), count: chosen.len() });
            }
            phases[j] = chosen[0];
        }
    }
    let get = |k: VarKey| vars.get(&k).map(|v| x[v]).unwrap_or(0.0);
    let cplx = |re: VarKey, im: VarKey| Complex::new(get(re), get(im));
    let mut periods = Vec::with_capacity(meta.periods.len());
    for t in meta.periods.clone() {
        let node_v = (0..meta.n_nodes)
            .map(|node| {
                Phase::ALL.map(|phase| {
                    cplx(
                        VarKey::NodeV { node, phase, t, part: Part::Re },
                        VarKey::NodeV { node, phase, t, part: Part::Im },
                    )
                })
            })
            .collect();
        let line_i = (0..meta.n_lines)
            .map(|line| {
                Phase::ALL.map(|phase| {
                    cplx(
                        VarKey::LineI { line, phase, t, part: Part::Re },
                        VarKey::LineI { line, phase, t, part: Part::Im },
                    )
                })
            })
            .collect();
        let nc = meta.customer_ids.len();
        let customer_i = (0..nc)
            .map(|cust| cplx(VarKey::CustI { cust, t, part: Part::Re }, VarKey::CustI { cust, t, part: Part::Im }))
            .collect();
        let customer_v = (0..nc)
            .map(|cust| cplx(VarKey::CustV { cust, t, part: Part::Re }, VarKey::CustV { cust, t, part: Part::Im }))
            .collect();
        let svc = if vars.get(&VarKey::SvcMag { pair: PhasePair::Ab, t }).is_some() {
            Some(SvcDispatch {
                currents: PhasePair::ALL.map(|pair| {
                    cplx(VarKey::SvcPairI { pair, t, part: Part::Re }, VarKey::SvcPairI { pair, t, part: Part::Im })
                }),
                magnitudes: PhasePair::ALL.map(|pair| get(VarKey::SvcMag { pair, t })),
                capacitive: PhasePair::ALL.map(|pair| get(VarKey::SvcMode { pair, t }) >= 0.5),
            })
        } else {
            None
        };
        periods.push(PeriodDispatch {
            t,
            svc,
            node_v,
            line_i,
            customer_i,
            customer_v,
            z_neg: get(VarKey::ZNeg { t }),
            z_zero: get(VarKey::ZZero { t }),
        });
    }
    Ok(DispatchSolution {
        windows: vec![WindowAssignment { window: meta.window, periods: meta.periods.clone(), phases }],
        periods,
        objective: model.objective_value(x),
    })
}

/// Concatenates per-window solutions in window order.
pub fn merge_windows(mut parts: Vec<DispatchSolution>) -> DispatchSolution {
    parts.sort_by_key(|p| p.windows.first().map(|w| w.window).unwrap_or(usize::MAX));
    let mut out = DispatchSolution { windows: Vec::new(), periods: Vec::new(), objective: 0.0 };
    for p in parts {
        out.windows.extend(p.windows);
        out.periods.extend(p.periods);
        out.objective += p.objective;
    }
    out.periods.sort_by_key(|p| p.t);
    out
}
