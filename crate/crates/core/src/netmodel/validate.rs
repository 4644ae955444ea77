use std::fmt;

use serde::{Deserialize, Serialize};

use super::Network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    VoltageBounds,
    RootNode,
    SecondaryNode,
    Topology,
    Impedance,
    CustomerNode,
    Demand,
    Svc,
    HorizonPartition,
    RootVoltage,
    Limits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn summary(&self) -> String {
        self.findings
            .iter()
            .map(|f| f.message.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    }

    fn push(&mut self, kind: FindingKind, message: impl Into<String>) {
        self.findings.push(Finding {
            kind,
            message: message.into(),
        });
    }
}

/// Lists every violated structural invariant of `net`. Never mutates.
pub fn validate(net: &Network) -> ValidationReport {
    let mut r = ValidationReport::default();
    let n = net.nodes.len();
    let t = net.horizon.periods;

    for node in &net.nodes {
        if !(node.vm_min > 0.0 && node.vm_min < node.vm_max) {
            r.push(
                FindingKind::VoltageBounds,
                format!(
                    "node '{}' voltage bounds [{}, {}] must satisfy 0 < min < max",
                    node.id, node.vm_min, node.vm_max
                ),
            );
        }
    }
    let roots = net.nodes.iter().filter(|n| n.is_root).count();
    if roots != 1 {
        r.push(FindingKind::RootNode, format!("expected exactly one root node, found {roots}"));
    }
    let secondaries = net.nodes.iter().filter(|n| n.is_secondary).count();
    if secondaries != 1 {
        r.push(
            FindingKind::SecondaryNode,
            format!("expected exactly one secondary node, found {secondaries}"),
        );
    }

    for (l, line) in net.lines.iter().enumerate() {
        let scale = line
            .z
            .iter()
            .flatten()
            .map(|v| v.norm())
            .fold(0.0_f64, f64::max)
            .max(1e-300);
        let asym = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .map(|(i, j)| (line.z[i][j] - line.z[j][i]).norm())
            .fold(0.0_f64, f64::max);
        if asym > 1e-12 * scale {
            r.push(FindingKind::Impedance, format!("line {l} impedance matrix is not symmetric"));
        }
    }

    let customer_nodes_ok = net.customers.iter().all(|c| c.node < n);
    if roots == 1 && secondaries == 1 && customer_nodes_ok {
        if let Err(e) = net.topology() {
            r.push(FindingKind::Topology, e.to_string());
        }
    }

    for c in &net.customers {
        if c.node >= n {
            r.push(
                FindingKind::CustomerNode,
                format!("customer '{}' is attached to unknown node #{}", c.id, c.node),
            );
        }
        if c.demand.len() != t {
            r.push(
                FindingKind::Demand,
                format!("customer '{}' has {} demand periods, horizon has {t}", c.id, c.demand.len()),
            );
        }
        if c.demand.iter().any(|s| !(s.re.is_finite() && s.im.is_finite())) {
            r.push(FindingKind::Demand, format!("customer '{}' has a non-finite demand", c.id));
        }
        if !(c.vm_min > 0.0 && c.vm_min < c.vm_max) {
            r.push(
                FindingKind::VoltageBounds,
                format!(
                    "customer '{}' voltage bounds [{}, {}] must satisfy 0 < min < max",
                    c.id, c.vm_min, c.vm_max
                ),
            );
        }
    }

    if let Some(svc) = &net.svc {
        if svc.node >= n || !net.nodes[svc.node].is_secondary {
            r.push(FindingKind::Svc, "SVC must sit on the transformer secondary node");
        }
        if !(svc.s_cap >= 0.0 && svc.s_ind >= 0.0) {
            r.push(FindingKind::Svc, "SVC capacities must be non-negative");
        }
        if !(svc.v_rated > 0.0) {
            r.push(FindingKind::Svc, "SVC rated voltage must be positive");
        }
    }

    let h = &net.horizon;
    let mut covered = vec![0usize; t];
    let mut contiguous = true;
    let mut expected_start = 0;
    for s in &h.subsets {
        if s.start != expected_start || s.is_empty() {
            contiguous = false;
        }
        expected_start = s.end;
        for p in s.clone() {
            if p < t {
                covered[p] += 1;
            } else {
                contiguous = false;
            }
        }
    }
    let sizes: Vec<usize> = h.subsets.iter().map(|s| s.len()).collect();
    let uneven = match (sizes.iter().min(), sizes.iter().max()) {
        (Some(lo), Some(hi)) => hi - lo > 1,
        _ => true,
    };
    if h.subsets.len() != h.n_o || !contiguous || uneven || covered.iter().any(|&k| k != 1) {
        r.push(
            FindingKind::HorizonPartition,
            format!(
                "horizon partition: {} window(s) do not split periods 1..{t} into {} even contiguous parts",
                h.subsets.len(),
                h.n_o
            ),
        );
    }
    if h.root_voltage.len() != t {
        r.push(
            FindingKind::RootVoltage,
            format!("root voltage given for {} periods, horizon has {t}", h.root_voltage.len()),
        );
    }
    if let Some(root) = net.root() {
        let node = &net.nodes[root];
        for (p, v) in h.root_voltage.iter().enumerate() {
            for (ph, vv) in v.iter().enumerate() {
                let m = vv.norm();
                if m < node.vm_min - 1e-12 || m > node.vm_max + 1e-12 {
                    r.push(
                        FindingKind::RootVoltage,
                        format!(
                            "root voltage magnitude {m:.4} in period {} phase {} outside [{}, {}]",
                            p + 1,
                            super::Phase::from_index(ph),
                            node.vm_min,
                            node.vm_max
                        ),
                    );
                }
            }
        }
    }
    if !(net.limits.nu_neg > 0.0 && net.limits.nu_zero > 0.0) {
        r.push(FindingKind::Limits, "unbalance limits must be positive");
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn valid_fixture_has_empty_report() {
        let net = fixtures::balanced_network(2);
        let report = validate(&net);
        assert!(report.is_valid(), "{}", report.summary());
    }

    #[test]
    fn unknown_customer_node_reported_once() {
        let mut net = fixtures::balanced_network(1);
        net.customers[1].node = 99;
        let report = validate(&net);
        assert_eq!(report.findings.len(), 1, "{}", report.summary());
        let f = &report.findings[0];
        assert_eq!(f.kind, FindingKind::CustomerNode);
        assert!(f.message.contains(&net.customers[1].id) && f.message.contains("99"));
    }

    #[test]
    fn broken_partition_reported() {
        let mut net = fixtures::balanced_network(4);
        net.horizon.subsets = vec![0..2, 3..4];
        net.horizon.n_o = 2;
        let report = validate(&net);
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == FindingKind::HorizonPartition && f.message.contains("horizon partition")));
    }

    #[test]
    fn validate_does_not_mutate() {
        let net = fixtures::balanced_network(2);
        let copy = net.clone();
        let _ = validate(&net);
        assert_eq!(net, copy);
    }
}
