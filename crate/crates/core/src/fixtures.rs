//! Synthetic feeders used by tests, benches and the CLI `fixtures` command.
//!
//! All fixtures share a 10 kVA / 230 V single-phase base, so
//! `Z_base = 5.29 Ω` and `I_base ≈ 43.5 A`.

use crate::netmodel::{
    from_per_unit, Base, ComplexDoc, Customer, CustomerKind, Horizon, Line, Network, Node,
    NetworkDocument, Phase, PhaseMatrix, SvcSpec, UnbalanceLimits,
};
use crate::Complex;

pub const BASE_KVA: f64 = 10.0;
pub const BASE_VOLTS: f64 = 230.0;

fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

/// Balanced positive-sequence set of magnitude `vm`.
pub fn balanced_voltage(vm: f64) -> [Complex; 3] {
    Phase::ALL.map(|p| Complex::from_polar(vm, p.nominal_angle()))
}

/// Balanced root voltage in volts, for hand-written SI documents.
pub fn balanced_root_si(volts: f64) -> [ComplexDoc; 3] {
    balanced_voltage(volts).map(ComplexDoc::from)
}

/// Symmetric line matrix with equal self and mutual terms.
pub fn coupled(z_self: Complex, z_mut: Complex) -> PhaseMatrix {
    let mut z = [[z_mut; 3]; 3];
    for (i, row) in z.iter_mut().enumerate() {
        row[i] = z_self;
    }
    z
}

/// Incremental per-unit network construction.
#[derive(Debug, Clone)]
pub struct FeederBuilder {
    nodes: Vec<Node>,
    lines: Vec<Line>,
    customers: Vec<Customer>,
    svc: Option<SvcSpec>,
    root_voltage: Vec<[Complex; 3]>,
    limits: UnbalanceLimits,
}

impl FeederBuilder {
    /// Starts with the root `x` and the transformer secondary `y`.
    pub fn new(root_voltage: Vec<[Complex; 3]>, dt_z: PhaseMatrix, dt_ampacity: f64) -> Self {
        let mut b = FeederBuilder {
            nodes: Vec::new(),
            lines: Vec::new(),
            customers: Vec::new(),
            svc: None,
            root_voltage,
            limits: UnbalanceLimits::default(),
        };
        b.nodes.push(Node { id: "x".into(), vm_min: 0.9, vm_max: 1.1, is_root: true, is_secondary: false });
        b.nodes.push(Node { id: "y".into(), vm_min: 0.9, vm_max: 1.1, is_root: false, is_secondary: true });
        b.lines.push(Line { from: 0, to: 1, z: dt_z, ampacity: Some(dt_ampacity) });
        b
    }

    pub fn periods(&self) -> usize {
        self.root_voltage.len()
    }

    pub fn node_limits(&mut self, vm_min: f64, vm_max: f64) -> &mut Self {
        for n in &mut self.nodes {
            n.vm_min = vm_min;
            n.vm_max = vm_max;
        }
        self
    }

    pub fn limits(&mut self, limits: UnbalanceLimits) -> &mut Self {
        self.limits = limits;
        self
    }

    pub fn rename_ends(&mut self, root: &str, secondary: &str) -> &mut Self {
        self.nodes[0].id = root.into();
        self.nodes[1].id = secondary.into();
        self
    }

    /// Adds a node fed from `parent` and returns its index.
    pub fn node(&mut self, id: &str, parent: usize, z: PhaseMatrix) -> usize {
        let (vm_min, vm_max) = (self.nodes[1].vm_min, self.nodes[1].vm_max);
        self.nodes.push(Node { id: id.into(), vm_min, vm_max, is_root: false, is_secondary: false });
        let k = self.nodes.len() - 1;
        self.lines.push(Line { from: parent, to: k, z, ampacity: None });
        k
    }

    #[allow(clippy::too_many_arguments)]
    pub fn customer(
        &mut self,
        id: &str,
        node: usize,
        kind: CustomerKind,
        phase: Phase,
        service_z: Complex,
        demand: Vec<Complex>,
        vm: (f64, f64),
    ) -> usize {
        assert_eq!(demand.len(), self.periods(), "demand length for customer {id}");
        self.customers.push(Customer {
            id: id.into(),
            node,
            service_z,
            kind,
            initial_phase: phase,
            demand,
            vm_min: vm.0,
            vm_max: vm.1,
        });
        self.customers.len() - 1
    }

    pub fn svc(&mut self, s_cap: f64, s_ind: f64) -> &mut Self {
        self.svc = Some(SvcSpec { node: 1, s_cap, s_ind, v_rated: 3f64.sqrt() });
        self
    }

    pub fn build(&self, n_o: usize) -> Network {
        let horizon = Horizon::new(self.root_voltage.clone(), n_o).expect("fixture horizon");
        Network {
            base: Base { kva: BASE_KVA, volts: BASE_VOLTS },
            nodes: self.nodes.clone(),
            lines: self.lines.clone(),
            customers: self.customers.clone(),
            svc: self.svc.clone(),
            horizon,
            limits: self.limits,
            nominal_vm: 1.0,
        }
    }
}

/// Typical distribution transformer: 4% series impedance, 145 A rating.
pub fn transformer() -> (PhaseMatrix, f64) {
    let z = coupled(c(0.004, 0.011), c(0.0, 0.0));
    (z, 145.0 / (BASE_KVA * 1000.0 / BASE_VOLTS))
}

/// Three equal fixed loads, one per phase, behind one short segment.
pub fn balanced_network(periods: usize) -> Network {
    let (dt, amp) = transformer();
    let mut b = FeederBuilder::new(vec![balanced_voltage(1.0); periods], dt, amp);
    b.node_limits(0.94, 1.1);
    let n1 = b.node("n1", 1, coupled(c(0.01, 0.005), c(0.003, 0.0015)));
    for (k, p) in Phase::ALL.into_iter().enumerate() {
        b.customer(
            &format!("c{}", k + 1),
            n1,
            CustomerKind::Fixed,
            p,
            c(0.005, 0.002),
            vec![c(0.2, 0.05); periods],
            (0.9, 1.1),
        );
    }
    b.build(1)
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

fn bump(h: f64, center: f64, width: f64) -> f64 {
    (-((h - center) / width).powi(2)).exp()
}

/// Residential load in kW for customer `j` at hour `h`: low overnight base,
/// a morning shoulder and an evening peak around 3 kW.
pub fn load_kw(j: usize, h: usize) -> f64 {
    let scale = 0.75 + 0.5 * frac(j as f64 * 0.618_034);
    let shift = 2.0 * frac(j as f64 * 0.371) - 1.0;
    let h = h as f64 + 0.5;
    scale * (0.45 + 0.8 * bump(h, 7.5 + 0.5 * shift, 1.5) + 2.1 * bump(h, 19.0 + shift, 2.2))
}

/// Clear-sky PV output in kW for a system of `kw` peak at hour `h`.
pub fn pv_kw(kw: f64, h: usize) -> f64 {
    let h = h as f64 + 0.5;
    if (6.0..18.0).contains(&h) {
        kw * (std::f64::consts::PI * (h - 6.0) / 12.0).sin().powf(1.3)
    } else {
        0.0
    }
}

/// Adjustable customers of [`ieee13_like`], 1-based.
pub const IEEE13_ADJUSTABLE: [usize; 5] = [3, 5, 9, 12, 17];
/// Customers of [`ieee13_like`] with rooftop PV, 1-based.
pub const IEEE13_PV: [usize; 5] = [2, 6, 9, 12, 15];

/// 13-node feeder shaped after the IEEE 13-bus layout, re-scaled to low
/// voltage, 17 single-phase customers, 24 hourly periods and a delta SVC at
/// the transformer secondary. `pv_kw` is the peak output of each PV system.
pub fn ieee13_like(pv_peak_kw: f64) -> Network {
    const T: usize = 24;
    let (dt, amp) = transformer();
    let mut b = FeederBuilder::new(vec![balanced_voltage(1.02); T], dt, amp);
    b.rename_ends("650", "632");
    b.node_limits(0.94, 1.1);
    let seg = |len: f64| coupled(c(0.008, 0.004) * len, c(0.003, 0.0015) * len);
    let n633 = b.node("633", 1, seg(1.0));
    let n634 = b.node("634", n633, seg(0.5));
    let n645 = b.node("645", 1, seg(1.0));
    let n646 = b.node("646", n645, seg(0.6));
    let n671 = b.node("671", 1, seg(2.0));
    let n680 = b.node("680", n671, seg(1.0));
    let n684 = b.node("684", n671, seg(0.6));
    let n611 = b.node("611", n684, seg(0.6));
    let n652 = b.node("652", n684, seg(1.6));
    let n692 = b.node("692", n671, seg(0.2));
    let n675 = b.node("675", n692, seg(1.0));
    use Phase::{A, B, C};
    let placement: [(usize, Phase); 17] = [
        (n633, A),
        (n633, B),
        (n634, A),
        (n634, C),
        (n645, A),
        (n646, B),
        (n646, A),
        (n671, C),
        (n680, A),
        (n680, B),
        (n684, C),
        (n611, A),
        (n611, B),
        (n652, A),
        (n692, C),
        (n675, B),
        (n675, C),
    ];
    let tan_phi = (0.95f64.acos()).tan();
    let s_base_kw = BASE_KVA;
    for (j0, &(node, phase)) in placement.iter().enumerate() {
        let j = j0 + 1;
        let pv = if IEEE13_PV.contains(&j) { pv_peak_kw } else { 0.0 };
        let demand = (0..T)
            .map(|h| {
                let load = load_kw(j, h);
                c((load - pv_kw(pv, h)) / s_base_kw, load * tan_phi / s_base_kw)
            })
            .collect();
        let kind = if IEEE13_ADJUSTABLE.contains(&j) { CustomerKind::Adjustable } else { CustomerKind::Fixed };
        b.customer(&format!("c{j}"), node, kind, phase, c(0.01, 0.004), demand, (0.9, 1.1));
    }
    b.svc(0.6, 0.6);
    b.build(1)
}

/// Short feeder whose far end hosts three large PV exporters, all initially
/// on phase a. The resulting zero-sequence voltage rise cannot be removed by
/// a delta-connected SVC, so SVC-only dispatch is infeasible while phase
/// switching restores feasibility.
pub fn high_pv() -> Network {
    let (dt, amp) = transformer();
    let mut b = FeederBuilder::new(vec![balanced_voltage(0.97); 2], dt, amp);
    b.node_limits(0.9, 1.1);
    let m = b.node("m", 1, coupled(c(0.01, 0.005), c(0.004, 0.002)));
    let f = b.node("f", m, coupled(c(0.04, 0.015), c(0.015, 0.006)));
    for (k, p) in Phase::ALL.into_iter().enumerate() {
        b.customer(
            &format!("load{}", k + 1),
            m,
            CustomerKind::Fixed,
            p,
            c(0.005, 0.002),
            vec![c(0.1, 0.03); 2],
            (0.9, 1.1),
        );
    }
    for k in 0..3 {
        b.customer(
            &format!("pv{}", k + 1),
            f,
            CustomerKind::Adjustable,
            Phase::A,
            c(0.005, 0.002),
            vec![c(-0.8, 0.0), c(-0.5, 0.0)],
            (0.9, 1.1),
        );
    }
    b.svc(0.3, 0.3);
    b.build(1)
}

/// Named fixtures shipped as JSON documents.
pub fn named(name: &str) -> Option<Network> {
    match name {
        "balanced" => Some(balanced_network(4)),
        "ieee13" => Some(ieee13_like(2.5)),
        "ieee13-pv3" => Some(ieee13_like(3.0)),
        "ieee13-pv3.5" => Some(ieee13_like(3.5)),
        "high-pv" => Some(high_pv()),
        _ => None,
    }
}

pub const NAMES: [&str; 5] = ["balanced", "ieee13", "ieee13-pv3", "ieee13-pv3.5", "high-pv"];

/// SI document of a named fixture.
pub fn document(name: &str) -> Option<NetworkDocument> {
    named(name).map(|n| from_per_unit(&n))
}
