//! JSON network document (SI units) and its per-unit conversion.
//!
//! Units at the document boundary: volts (phase-to-neutral, except the SVC
//! rating which is phase-to-phase), ohms, amperes, watts, vars and VA.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    validate, Base, Complex, Customer, CustomerKind, Horizon, Line, Network, NetworkError, Node,
    Phase, SvcSpec, UnbalanceLimits,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexDoc {
    pub re: f64,
    pub im: f64,
}

impl From<ComplexDoc> for Complex {
    fn from(c: ComplexDoc) -> Complex {
        Complex::new(c.re, c.im)
    }
}

impl From<Complex> for ComplexDoc {
    fn from(c: Complex) -> ComplexDoc {
        ComplexDoc { re: c.re, im: c.im }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseDoc {
    pub kva: f64,
    pub volts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: String,
    pub vmin: f64,
    pub vmax: f64,
    #[serde(default, skip_serializing_if = "is_false")]
    pub root: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub secondary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDoc {
    pub from: String,
    pub to: String,
    pub z: [[ComplexDoc; 3]; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ampacity: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomerKindDoc {
    Fixed,
    Adjustable,
    /// Balanced three-phase customer; ingested as three fixed single-phase
    /// customers on the same node, each carrying a third of the demand.
    ThreePhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandDoc {
    pub p: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerDoc {
    pub id: String,
    pub node: String,
    pub kind: CustomerKindDoc,
    #[serde(default = "default_phase")]
    pub initial_phase: Phase,
    pub service_z: ComplexDoc,
    pub demand: Vec<DemandDoc>,
    pub vmin: f64,
    pub vmax: f64,
}

fn default_phase() -> Phase {
    Phase::A
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcDoc {
    pub node: String,
    pub s_cap: f64,
    pub s_ind: f64,
    pub v_rated: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonDoc {
    #[serde(rename = "T")]
    pub t: usize,
    pub n_o: usize,
    pub root_voltage: Vec<[ComplexDoc; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitsDoc {
    #[serde(default = "default_nu_neg")]
    pub nu_neg: f64,
    #[serde(default = "default_nu_zero")]
    pub nu_zero: f64,
}

fn default_nu_neg() -> f64 {
    super::DEFAULT_NU_NEG
}

fn default_nu_zero() -> f64 {
    super::DEFAULT_NU_ZERO
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub base: BaseDoc,
    pub nodes: Vec<NodeDoc>,
    pub lines: Vec<LineDoc>,
    pub customers: Vec<CustomerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svc: Option<SvcDoc>,
    pub horizon: HorizonDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsDoc>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl NetworkDocument {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network document serializes")
    }
}

/// Parses, converts to per-unit and validates a network document.
pub fn load_network(document: &str) -> Result<Network, NetworkError> {
    let doc: NetworkDocument = serde_json::from_str(document)?;
    let base = Base::new(doc.base.kva, doc.base.volts)?;
    let net = to_per_unit(&doc, base)?;
    let report = validate(&net);
    if report.is_valid() {
        Ok(net)
    } else {
        Err(NetworkError::Invalid(report))
    }
}

pub fn load_network_file(path: impl AsRef<Path>) -> Result<Network, NetworkError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_network(&text)
}

/// Converts an SI document to a per-unit [`Network`] on the given bases.
///
/// Lines are re-oriented to point away from the root. Node references are
/// resolved by id; unresolved references, non-radial topologies and horizon
/// length mismatches are reported with the offending element.
pub fn to_per_unit(raw: &NetworkDocument, base: Base) -> Result<Network, NetworkError> {
    let base = Base::new(base.kva, base.volts)?;
    let (v_b, z_b, i_b, s_b) = (base.volts, base.ohms(), base.amps(), base.va());

    let mut index = HashMap::new();
    for (i, n) in raw.nodes.iter().enumerate() {
        if index.insert(n.id.as_str(), i).is_some() {
            return Err(NetworkError::Schema(format!("duplicate node id '{}'", n.id)));
        }
    }
    let lookup = |id: &str, what: &str| -> Result<usize, NetworkError> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| NetworkError::Schema(format!("{what} references unknown node '{id}'")))
    };

    let nodes: Vec<Node> = raw
        .nodes
        .iter()
        .map(|n| Node {
            id: n.id.clone(),
            vm_min: n.vmin / v_b,
            vm_max: n.vmax / v_b,
            is_root: n.root,
            is_secondary: n.secondary,
        })
        .collect();

    let roots: Vec<usize> = (0..nodes.len()).filter(|&i| nodes[i].is_root).collect();
    if roots.len() != 1 {
        return Err(NetworkError::Schema(format!(
            "expected exactly one root node, found {}",
            roots.len()
        )));
    }
    let root = roots[0];

    let mut lines = Vec::with_capacity(raw.lines.len());
    for (l, ld) in raw.lines.iter().enumerate() {
        let what = format!("line {l} ({} -> {})", ld.from, ld.to);
        let from = lookup(&ld.from, &what)?;
        let to = lookup(&ld.to, &what)?;
        let mut z = [[Complex::new(0.0, 0.0); 3]; 3];
        for (r, row) in ld.z.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                z[r][c] = Complex::from(*v) / z_b;
            }
        }
        lines.push(Line {
            from,
            to,
            z,
            ampacity: ld.ampacity.map(|a| a / i_b),
        });
    }
    orient_from_root(&nodes, &mut lines, root)?;

    let t = raw.horizon.t;
    if raw.horizon.root_voltage.len() != t {
        return Err(NetworkError::Horizon(format!(
            "root_voltage has {} periods but T = {t}",
            raw.horizon.root_voltage.len()
        )));
    }

    let mut customers = Vec::with_capacity(raw.customers.len());
    for cd in &raw.customers {
        let node = lookup(&cd.node, &format!("customer '{}'", cd.id))?;
        if cd.demand.len() != t {
            return Err(NetworkError::Horizon(format!(
                "customer '{}' has {} demand periods but T = {t}",
                cd.id,
                cd.demand.len()
            )));
        }
        let demand: Vec<Complex> = cd
            .demand
            .iter()
            .map(|d| Complex::new(d.p / s_b, d.q / s_b))
            .collect();
        let service_z = Complex::from(cd.service_z) / z_b;
        match cd.kind {
            CustomerKindDoc::ThreePhase => {
                for ph in Phase::ALL {
                    customers.push(Customer {
                        id: format!("{}.{ph}", cd.id),
                        node,
                        service_z,
                        kind: CustomerKind::Fixed,
                        initial_phase: ph,
                        demand: demand.iter().map(|s| s / 3.0).collect(),
                        vm_min: cd.vmin / v_b,
                        vm_max: cd.vmax / v_b,
                    });
                }
            }
            kind => customers.push(Customer {
                id: cd.id.clone(),
                node,
                service_z,
                kind: if kind == CustomerKindDoc::Adjustable {
                    CustomerKind::Adjustable
                } else {
                    CustomerKind::Fixed
                },
                initial_phase: cd.initial_phase,
                demand,
                vm_min: cd.vmin / v_b,
                vm_max: cd.vmax / v_b,
            }),
        }
    }

    let svc = match &raw.svc {
        Some(sd) => Some(SvcSpec {
            node: lookup(&sd.node, "svc")?,
            s_cap: sd.s_cap / s_b,
            s_ind: sd.s_ind / s_b,
            v_rated: sd.v_rated / v_b,
        }),
        None => None,
    };

    let root_voltage = raw
        .horizon
        .root_voltage
        .iter()
        .map(|per| {
            [
                Complex::from(per[0]) / v_b,
                Complex::from(per[1]) / v_b,
                Complex::from(per[2]) / v_b,
            ]
        })
        .collect();
    let horizon = Horizon::new(root_voltage, raw.horizon.n_o)?;

    let limits = raw
        .limits
        .map(|l| UnbalanceLimits {
            nu_neg: l.nu_neg,
            nu_zero: l.nu_zero,
        })
        .unwrap_or_default();

    Ok(Network {
        base,
        nodes,
        lines,
        customers,
        svc,
        horizon,
        limits,
        nominal_vm: 1.0,
    })
}

/// Inverse of [`to_per_unit`]: scales every quantity back to SI on `net.base`.
///
/// Three-phase customers come back as their three single-phase parts.
pub fn from_per_unit(net: &Network) -> NetworkDocument {
    let base = net.base;
    let (v_b, z_b, i_b, s_b) = (base.volts, base.ohms(), base.amps(), base.va());
    let nodes = net
        .nodes
        .iter()
        .map(|n| NodeDoc {
            id: n.id.clone(),
            vmin: n.vm_min * v_b,
            vmax: n.vm_max * v_b,
            root: n.is_root,
            secondary: n.is_secondary,
        })
        .collect();
    let lines = net
        .lines
        .iter()
        .map(|l| {
            let z = l.z.map(|row| row.map(|v| ComplexDoc::from(v * z_b)));
            LineDoc {
                from: net.nodes[l.from].id.clone(),
                to: net.nodes[l.to].id.clone(),
                z,
                ampacity: l.ampacity.map(|a| a * i_b),
            }
        })
        .collect();
    let customers = net
        .customers
        .iter()
        .map(|c| CustomerDoc {
            id: c.id.clone(),
            node: net.nodes[c.node].id.clone(),
            kind: match c.kind {
                CustomerKind::Fixed => CustomerKindDoc::Fixed,
                CustomerKind::Adjustable => CustomerKindDoc::Adjustable,
            },
            initial_phase: c.initial_phase,
            service_z: ComplexDoc::from(c.service_z * z_b),
            demand: c
                .demand
                .iter()
                .map(|s| DemandDoc {
                    p: s.re * s_b,
                    q: s.im * s_b,
                })
                .collect(),
            vmin: c.vm_min * v_b,
            vmax: c.vm_max * v_b,
        })
        .collect();
    let svc = net.svc.as_ref().map(|s| SvcDoc {
        node: net.nodes[s.node].id.clone(),
        s_cap: s.s_cap * s_b,
        s_ind: s.s_ind * s_b,
        v_rated: s.v_rated * v_b,
    });
    NetworkDocument {
        base: BaseDoc {
            kva: base.kva,
            volts: base.volts,
        },
        nodes,
        lines,
        customers,
        svc,
        horizon: HorizonDoc {
            t: net.horizon.periods,
            n_o: net.horizon.n_o,
            root_voltage: net
                .horizon
                .root_voltage
                .iter()
                .map(|per| per.map(|v| ComplexDoc::from(v * v_b)))
                .collect(),
        },
        limits: Some(LimitsDoc {
            nu_neg: net.limits.nu_neg,
            nu_zero: net.limits.nu_zero,
        }),
    }
}

fn orient_from_root(nodes: &[Node], lines: &mut [Line], root: usize) -> Result<(), NetworkError> {
    let n = nodes.len();
    if lines.len() + 1 != n {
        return Err(NetworkError::NonRadial(format!(
            "{} lines for {} nodes (a radial feeder needs {})",
            lines.len(),
            n,
            n.saturating_sub(1)
        )));
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (l, line) in lines.iter().enumerate() {
        adj[line.from].push(l);
        adj[line.to].push(l);
    }
    let mut seen = vec![false; n];
    let mut used = vec![false; lines.len()];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &l in &adj[u] {
            if used[l] {
                continue;
            }
            used[l] = true;
            let line = &mut lines[l];
            if line.to == u {
                std::mem::swap(&mut line.from, &mut line.to);
            }
            let v = line.to;
            if seen[v] {
                return Err(NetworkError::NonRadial(format!(
                    "cycle closes at node '{}'",
                    nodes[v].id
                )));
            }
            seen[v] = true;
            stack.push(v);
        }
    }
    if let Some(lost) = (0..n).find(|&i| !seen[i]) {
        return Err(NetworkError::NonRadial(format!(
            "node '{}' is not connected to the root",
            nodes[lost].id
        )));
    }
    Ok(())
}
