use std::collections::BTreeMap;

use super::{
    BinaryClass, ConeKind, FormulationError, LinExpr, MISOCPModel, ModelMeta, Part, RowKind,
    Sense, SocCone, StrategyFlags, SvcBranch, VarId, VarKey, VarSpace,
};
use crate::linearize::{bind_product, lower_vm_cut, PhaseFits, ProductBounds};
use crate::netmodel::{Network, Phase, PhasePair, SvcSpec, Topology};
use crate::seqcomp::{neg_seq_rows, zero_seq_rows};

/// Safety factor on the a-priori customer current bound.
const CURRENT_MARGIN: f64 = 1.1;
const CURRENT_FLOOR: f64 = 1e-3;

/// Shared, read-only inputs of the `add_*` builders.
pub struct BuildContext<'a> {
    pub net: &'a Network,
    pub topo: Topology,
    pub fits: &'a PhaseFits,
    pub strategy: StrategyFlags,
    /// Customers whose phase is a decision variable.
    pub switchable: Vec<bool>,
    /// Per-customer bound on each rectangular part of the current.
    pub current_cap: Vec<f64>,
    pub svc: Option<&'a SvcSpec>,
}

impl<'a> BuildContext<'a> {
    pub fn new(net: &'a Network, fits: &'a PhaseFits, strategy: StrategyFlags) -> Result<Self, FormulationError> {
        if strategy.use_svc && net.svc.is_none() {
            return Err(FormulationError::MissingSvc);
        }
        let topo = net.topology()?;
        let switchable = net
            .customers
            .iter()
            .map(|c| strategy.use_psd && c.is_adjustable())
            .collect();
        let current_cap = net
            .customers
            .iter()
            .map(|c| {
                let s = c.demand.iter().map(|s| s.norm()).fold(0.0, f64::max);
                (CURRENT_MARGIN * s / c.vm_min).max(CURRENT_FLOOR)
            })
            .collect();
        // A zero-capacity SVC contributes nothing; leave it out entirely.
        let svc = if strategy.use_svc { net.active_svc() } else { None };
        Ok(BuildContext { net, topo, fits, strategy, switchable, current_cap, svc })
    }
}

/// Builds window `k` of the horizon.
pub fn build_subproblem(
    net: &Network,
    k: usize,
    strategy: StrategyFlags,
    fits: &PhaseFits,
) -> Result<MISOCPModel, FormulationError> {
    let periods = net
        .horizon
        .subsets
        .get(k)
        .filter(|r| !r.is_empty())
        .cloned()
        .ok_or(FormulationError::EmptySubset(k))?;
    let ctx = BuildContext::new(net, fits, strategy)?;
    let mut m = MISOCPModel {
        vars: VarSpace::default(),
        rows: Vec::new(),
        cones: Vec::new(),
        binaries: Vec::new(),
        binary_class: Vec::new(),
        groups: Vec::new(),
        svc: Vec::new(),
        objective: Vec::new(),
        meta: ModelMeta {
            window: k,
            periods: periods.clone(),
            strategy,
            customer_ids: net.customers.iter().map(|c| c.id.clone()).collect(),
            initial: net.initial_assignment(),
            n_nodes: net.nodes.len(),
            n_lines: net.lines.len(),
            dt_line: ctx.topo.dt_line,
            svc_node: ctx.svc.map(|s| s.node),
            beta: BTreeMap::new(),
        },
    };
    // One selector block for the whole window.
    for (j, &sw) in ctx.switchable.iter().enumerate() {
        if !sw {
            continue;
        }
        let ids = Phase::ALL.map(|phase| m.binary(VarKey::Alpha { cust: j, phase }, BinaryClass::Phase));
        let mut e = LinExpr::constant(-1.0);
        for v in ids {
            e.push(v, 1.0);
        }
        m.row(e, Sense::Eq, RowKind::OnePhase);
        m.groups.push(ids.to_vec());
    }
    for t in periods {
        if ctx.svc.is_some() {
            add_svc(&mut m, &ctx, t);
        }
        add_feeder(&mut m, &ctx, t);
        add_limits(&mut m, &ctx, t);
        add_objective(&mut m, &ctx, t);
    }
    Ok(m)
}

fn product_rows(m: &mut MISOCPModel, x: VarId, y: VarId, z: VarId, b: ProductBounds, kind: RowKind) {
    for cut in bind_product(&b) {
        let e = LinExpr::constant(-cut.rhs).term(x, cut.cx).term(y, cut.cy).term(z, cut.cz);
        m.row(e, Sense::Le, kind);
    }
}

/// SVC branch currents, their mode-dependent direction and capacity, and the
/// delta-to-phase recombination at the SVC node.
pub fn add_svc(m: &mut MISOCPModel, ctx: &BuildContext<'_>, t: usize) {
    let Some(svc) = ctx.svc else { return };
    let v0 = ctx.net.horizon.root_voltage[t];
    let cap = svc.current_limit(true);
    let ind = svc.current_limit(false);
    let top = cap.max(ind);
    let mut pair_i = [[0usize; 2]; 3];
    for pair in PhasePair::ALL {
        let (p, q) = pair.phases();
        let beta = (v0[p.index()] - v0[q.index()]).arg();
        m.meta.beta.insert((t, pair), beta);
        let mag = m.vars.add(VarKey::SvcMag { pair, t }, 0.0, top);
        let prod = m.vars.add(VarKey::SvcProd { pair, t }, 0.0, top);
        let mode = m.binary(VarKey::SvcMode { pair, t }, BinaryClass::Mode);
        product_rows(m, mode, mag, prod, ProductBounds::new(0.0, top), RowKind::SvcProduct);
        // |I| ≤ ind + κ (cap − ind)
        m.row(
            LinExpr::constant(-ind).term(mag, 1.0).term(mode, -(cap - ind)),
            Sense::Le,
            RowKind::SvcCapacity,
        );
        // I = (|I| − 2κ|I|)·(sin β, −cos β): inductive (κ = 0) lags, capacitive leads.
        let re = m.vars.free(VarKey::SvcPairI { pair, t, part: Part::Re });
        let im = m.vars.free(VarKey::SvcPairI { pair, t, part: Part::Im });
        let (s, c) = beta.sin_cos();
        m.row(LinExpr::var(re).term(mag, -s).term(prod, 2.0 * s), Sense::Eq, RowKind::SvcCurrent);
        m.row(LinExpr::var(im).term(mag, c).term(prod, -2.0 * c), Sense::Eq, RowKind::SvcCurrent);
        pair_i[pair.index()] = [re, im];
        m.svc.push(SvcBranch { pair, t, mag, prod, mode, beta });
    }
    for phase in Phase::ALL {
        // Current drawn from phase φ: the branch leaving it minus the branch entering it.
        let (out, inn) = match phase {
            Phase::A => (PhasePair::Ab, PhasePair::Ca),
            Phase::B => (PhasePair::Bc, PhasePair::Ab),
            Phase::C => (PhasePair::Ca, PhasePair::Bc),
        };
        for (k, part) in Part::BOTH.into_iter().enumerate() {
            let v = m.vars.free(VarKey::SvcPhaseI { phase, t, part });
            m.row(
                LinExpr::var(v).term(pair_i[out.index()][k], -1.0).term(pair_i[inn.index()][k], 1.0),
                Sense::Eq,
                RowKind::SvcPhase,
            );
        }
    }
}

fn node_v(m: &MISOCPModel, node: usize, phase: Phase, t: usize, part: Part) -> VarId {
    m.vars.id(&VarKey::NodeV { node, phase, t, part })
}

fn line_i(m: &MISOCPModel, line: usize, phase: Phase, t: usize, part: Part) -> VarId {
    m.vars.id(&VarKey::LineI { line, phase, t, part })
}

/// Network variables, Ohm's law, service lines, phase selection, the
/// linearized power balance and nodal current balance.
pub fn add_feeder(m: &mut MISOCPModel, ctx: &BuildContext<'_>, t: usize) {
    let net = ctx.net;
    for node in 0..net.nodes.len() {
        for phase in Phase::ALL {
            for part in Part::BOTH {
                m.vars.free(VarKey::NodeV { node, phase, t, part });
            }
        }
    }
    for line in 0..net.lines.len() {
        for phase in Phase::ALL {
            for part in Part::BOTH {
                m.vars.free(VarKey::LineI { line, phase, t, part });
            }
        }
    }
    for (l, line) in net.lines.iter().enumerate() {
        for p in Phase::ALL {
            let mut re = LinExpr::var(node_v(m, line.from, p, t, Part::Re)).term(node_v(m, line.to, p, t, Part::Re), -1.0);
            let mut im = LinExpr::var(node_v(m, line.from, p, t, Part::Im)).term(node_v(m, line.to, p, t, Part::Im), -1.0);
            for q in Phase::ALL {
                let z = line.z[p.index()][q.index()];
                let (j, w) = (line_i(m, l, q, t, Part::Re), line_i(m, l, q, t, Part::Im));
                re.push(j, -z.re);
                re.push(w, z.im);
                im.push(w, -z.re);
                im.push(j, -z.im);
            }
            m.row(re, Sense::Eq, RowKind::Ohm);
            m.row(im, Sense::Eq, RowKind::Ohm);
        }
    }
    // Per-phase current each customer draws, by phase and part.
    let mut drawn: Vec<[[Option<VarId>; 2]; 3]> = vec![[[None; 2]; 3]; net.customers.len()];
    for (j, cust) in net.customers.iter().enumerate() {
        let cap = ctx.current_cap[j];
        let (lo, hi) = if ctx.switchable[j] { (-cap, cap) } else { (f64::NEG_INFINITY, f64::INFINITY) };
        let i = Part::BOTH.map(|part| m.vars.add(VarKey::CustI { cust: j, t, part }, lo, hi));
        let v = Part::BOTH.map(|part| m.vars.free(VarKey::CustV { cust: j, t, part }));
        let s = cust.demand[t];
        let (p_n, q_n) = (s.re, s.im);
        // Linearized 1/V* = A + jB.
        let mut a = LinExpr::new();
        let mut b = LinExpr::new();
        // Σ selected node voltage − V_j − z·I_j = 0.
        let mut svc_re = LinExpr::new();
        let mut svc_im = LinExpr::new();
        if !ctx.switchable[j] {
            let mu = cust.initial_phase;
            let f = ctx.fits.get(mu);
            a.push(v[0], f.kx);
            a.push(v[1], f.ky);
            a.constant += f.bx;
            b.push(v[0], f.hx);
            b.push(v[1], f.hy);
            b.constant += f.by;
            svc_re.push(node_v(m, cust.node, mu, t, Part::Re), 1.0);
            svc_im.push(node_v(m, cust.node, mu, t, Part::Im), 1.0);
            drawn[j][mu.index()] = [Some(i[0]), Some(i[1])];
        } else {
            let vm_node = net.nodes[cust.node].vm_max;
            let mut sum_i = [LinExpr::new(), LinExpr::new()];
            let mut sum_z = [LinExpr::new(), LinExpr::new()];
            for phase in Phase::ALL {
                let alpha = m.vars.id(&VarKey::Alpha { cust: j, phase });
                let f = ctx.fits.get(phase);
                let mut zz = [0usize; 2];
                for (k, part) in Part::BOTH.into_iter().enumerate() {
                    let ip = m.vars.free(VarKey::CustPhaseI { cust: j, phase, t, part });
                    product_rows(m, alpha, i[k], ip, ProductBounds::symmetric(cap), RowKind::PhaseSelect);
                    let u = m.vars.free(VarKey::CustPhaseU { cust: j, phase, t, part });
                    let vn = node_v(m, cust.node, phase, t, part);
                    product_rows(m, alpha, vn, u, ProductBounds::symmetric(vm_node), RowKind::TerminalSelect);
                    let z = m.vars.free(VarKey::CustPhaseZ { cust: j, phase, t, part });
                    product_rows(m, alpha, v[k], z, ProductBounds::symmetric(cust.vm_max), RowKind::TerminalSelect);
                    drawn[j][phase.index()][k] = Some(ip);
                    sum_i[k].push(ip, 1.0);
                    sum_z[k].push(z, 1.0);
                    zz[k] = z;
                    if k == 0 {
                        svc_re.push(u, 1.0);
                    } else {
                        svc_im.push(u, 1.0);
                    }
                }
                a.push(zz[0], f.kx);
                a.push(zz[1], f.ky);
                a.push(alpha, f.bx);
                b.push(zz[0], f.hx);
                b.push(zz[1], f.hy);
                b.push(alpha, f.by);
            }
            // Exact consequences of one-hot selection; they tighten the relaxation.
            for k in 0..2 {
                let mut e = std::mem::take(&mut sum_i[k]);
                e.push(i[k], -1.0);
                m.row(e, Sense::Eq, RowKind::ProductSum);
                let mut e = std::mem::take(&mut sum_z[k]);
                e.push(v[k], -1.0);
                m.row(e, Sense::Eq, RowKind::ProductSum);
            }
        }
        let zs = cust.service_z;
        svc_re.push(v[0], -1.0);
        svc_re.push(i[0], -zs.re);
        svc_re.push(i[1], zs.im);
        svc_im.push(v[1], -1.0);
        svc_im.push(i[1], -zs.re);
        svc_im.push(i[0], -zs.im);
        m.row(svc_re, Sense::Eq, RowKind::ServiceOhm);
        m.row(svc_im, Sense::Eq, RowKind::ServiceOhm);
        // I = (P − jQ)(A + jB) = (P·A + Q·B) + j(P·B − Q·A).
        let mut re = LinExpr::var(i[0]);
        re.add_scaled(&a, -p_n);
        re.add_scaled(&b, -q_n);
        let mut im = LinExpr::var(i[1]);
        im.add_scaled(&b, -p_n);
        im.add_scaled(&a, q_n);
        m.row(re, Sense::Eq, RowKind::PowerBalance);
        m.row(im, Sense::Eq, RowKind::PowerBalance);
    }
    let topo = &ctx.topo;
    for node in 0..net.nodes.len() {
        let Some(parent) = topo.parent_line[node] else { continue };
        for phase in Phase::ALL {
            for (k, part) in Part::BOTH.into_iter().enumerate() {
                let mut e = LinExpr::var(line_i(m, parent, phase, t, part));
                for &l in &topo.child_lines[node] {
                    e.push(line_i(m, l, phase, t, part), -1.0);
                }
                for &j in &topo.customers_at[node] {
                    if let Some(v) = drawn[j][phase.index()][k] {
                        e.push(v, -1.0);
                    }
                }
                if ctx.svc.map(|s| s.node) == Some(node) {
                    if let Some(v) = m.vars.get(&VarKey::SvcPhaseI { phase, t, part }) {
                        e.push(v, -1.0);
                    }
                }
                m.row(e, Sense::Eq, RowKind::Kcl);
            }
        }
    }
}

fn voltage_members(m: &MISOCPModel, node: usize, t: usize, rows: [[f64; 6]; 2]) -> Vec<LinExpr> {
    rows.iter()
        .map(|r| {
            let mut e = LinExpr::new();
            for (k, phase) in Phase::ALL.into_iter().enumerate() {
                e.push(node_v(m, node, phase, t, Part::Re), r[2 * k]);
                e.push(node_v(m, node, phase, t, Part::Im), r[2 * k + 1]);
            }
            e
        })
        .collect()
}

/// Root voltage, voltage magnitude bounds, transformer ampacity and voltage
/// unbalance limits.
pub fn add_limits(m: &mut MISOCPModel, ctx: &BuildContext<'_>, t: usize) {
    let net = ctx.net;
    let root = ctx.topo.root;
    let v0 = net.horizon.root_voltage[t];
    for phase in Phase::ALL {
        let v = v0[phase.index()];
        m.row(LinExpr::constant(-v.re).term(node_v(m, root, phase, t, Part::Re), 1.0), Sense::Eq, RowKind::RootVoltage);
        m.row(LinExpr::constant(-v.im).term(node_v(m, root, phase, t, Part::Im), 1.0), Sense::Eq, RowKind::RootVoltage);
    }
    let nu_neg = net.limits.nu_neg * net.nominal_vm;
    let nu_zero = net.limits.nu_zero * net.nominal_vm;
    for (i, node) in net.nodes.iter().enumerate() {
        if i == root {
            continue;
        }
        for phase in Phase::ALL {
            let (x, y) = (node_v(m, i, phase, t, Part::Re), node_v(m, i, phase, t, Part::Im));
            m.cones.push(SocCone {
                bound: LinExpr::constant(node.vm_max),
                members: vec![LinExpr::var(x), LinExpr::var(y)],
                kind: ConeKind::NodeVm,
            });
            let cut = lower_vm_cut(ctx.fits.region(phase), node.vm_min);
            m.row(LinExpr::constant(-cut.rhs).term(x, cut.cx).term(y, cut.cy), Sense::Ge, RowKind::LowerVm);
        }
        m.cones.push(SocCone {
            bound: LinExpr::constant(nu_neg),
            members: voltage_members(m, i, t, neg_seq_rows()),
            kind: ConeKind::NegSeqVoltage,
        });
        m.cones.push(SocCone {
            bound: LinExpr::constant(nu_zero),
            members: voltage_members(m, i, t, zero_seq_rows()),
            kind: ConeKind::ZeroSeqVoltage,
        });
    }
    for (j, cust) in net.customers.iter().enumerate() {
        let x = m.vars.id(&VarKey::CustV { cust: j, t, part: Part::Re });
        let y = m.vars.id(&VarKey::CustV { cust: j, t, part: Part::Im });
        m.cones.push(SocCone {
            bound: LinExpr::constant(cust.vm_max),
            members: vec![LinExpr::var(x), LinExpr::var(y)],
            kind: ConeKind::CustomerVm,
        });
        let mut e = LinExpr::constant(-cust.vm_min);
        if ctx.switchable[j] {
            for phase in Phase::ALL {
                let cut = lower_vm_cut(ctx.fits.region(phase), cust.vm_min);
                e.push(m.vars.id(&VarKey::CustPhaseZ { cust: j, phase, t, part: Part::Re }), cut.cx);
                e.push(m.vars.id(&VarKey::CustPhaseZ { cust: j, phase, t, part: Part::Im }), cut.cy);
            }
        } else {
            let cut = lower_vm_cut(ctx.fits.region(cust.initial_phase), cust.vm_min);
            e.push(x, cut.cx);
            e.push(y, cut.cy);
        }
        m.row(e, Sense::Ge, RowKind::LowerVm);
    }
    let dt = ctx.topo.dt_line;
    if let Some(amp) = net.lines[dt].ampacity {
        for phase in Phase::ALL {
            m.cones.push(SocCone {
                bound: LinExpr::constant(amp),
                members: vec![
                    LinExpr::var(line_i(m, dt, phase, t, Part::Re)),
                    LinExpr::var(line_i(m, dt, phase, t, Part::Im)),
                ],
                kind: ConeKind::Ampacity,
            });
        }
    }
}

/// Epigraph of the negative- and zero-sequence transformer currents.
pub fn add_objective(m: &mut MISOCPModel, ctx: &BuildContext<'_>, t: usize) {
    let dt = ctx.topo.dt_line;
    let members = |m: &MISOCPModel, rows: [[f64; 6]; 2]| -> Vec<LinExpr> {
        rows.iter()
            .map(|r| {
                let mut e = LinExpr::new();
                for (k, phase) in Phase::ALL.into_iter().enumerate() {
                    e.push(line_i(m, dt, phase, t, Part::Re), r[2 * k]);
                    e.push(line_i(m, dt, phase, t, Part::Im), r[2 * k + 1]);
                }
                e
            })
            .collect()
    };
    let zn = m.vars.free(VarKey::ZNeg { t });
    let zz = m.vars.free(VarKey::ZZero { t });
    let neg = members(m, neg_seq_rows());
    let zero = members(m, zero_seq_rows());
    m.cones.push(SocCone { bound: LinExpr::var(zn), members: neg, kind: ConeKind::NegSeqCurrent });
    m.cones.push(SocCone { bound: LinExpr::var(zz), members: zero, kind: ConeKind::ZeroSeqCurrent });
    m.objective.push((zn, 1.0));
    m.objective.push((zz, 1.0));
}
