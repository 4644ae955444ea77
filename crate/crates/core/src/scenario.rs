//! Whole-horizon runs and parameter sweeps.
//!
//! A run builds one subproblem per PSD window, solves the windows on a small
//! worker pool, stitches the per-window solutions together and replays the
//! result through the exact power flow.

use std::fs;
use std::io;
use std::ops::Range;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bnb::{solve_misocp, BnbError, BnbSettings, MipStatus};
use crate::formulation::{
    build_subproblem, extract_solution, merge_windows, DispatchSolution, FormulationError, StrategyFlags, SvcDispatch,
};
use crate::linearize::{LinearizeError, PhaseFits, RegionParams};
use crate::netmodel::{Network, NetworkError, Phase};
use crate::pforacle::{solve_power_flow, validate_solution, PowerFlowError, ValidationMetrics};
use crate::seqcomp::{decompose, PhaseTriple, SequenceTriple};
use crate::Complex;

/// Environment variable holding the number of window workers.
/// Objective scale below which deviations are measured absolutely.
pub const DEVIATION_FLOOR: f64 = 1e-6;

pub const WORKERS_ENV: &str = "PHASEBAL_WORKERS";

/// Margins added around the oracle operating range when calibrating.
const CALIBRATION_VM_MARGIN: f64 = 0.03;
const CALIBRATION_ANGLE_MARGIN_DEG: f64 = 1.5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("window {window} (periods {first}..={last}) is infeasible")]
    Infeasible { window: usize, first: usize, last: usize },
    #[error("window {window} hit the time limit without a feasible point")]
    TimeLimit { window: usize },
    #[error("window {window} stopped without a feasible point ({status})")]
    NoIncumbent { window: usize, status: MipStatus },
    #[error("the network has no SVC to resize")]
    NoSvc,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Formulation(#[from] FormulationError),
    #[error(transparent)]
    Linearize(#[from] LinearizeError),
    #[error(transparent)]
    Bnb(#[from] BnbError),
    #[error("validation failed: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("report output: {0}")]
    Io(#[from] io::Error),
    #[error("report encoding: {0}")]
    Csv(#[from] csv::Error),
}

impl ScenarioError {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, ScenarioError::Infeasible { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub network: Network,
    pub strategy: StrategyFlags,
    /// Overrides the network's window count.
    pub n_o: Option<usize>,
    /// Overrides both SVC ratings (pu).
    pub svc_capacity: Option<f64>,
    pub bnb: BnbSettings,
    pub region: RegionParams,
    /// Re-centre the region on an oracle pre-run before fitting.
    pub calibrate: bool,
    /// Window workers; `None` reads [`WORKERS_ENV`], then the core count.
    pub workers: Option<usize>,
}

impl ScenarioConfig {
    pub fn new(network: Network, strategy: StrategyFlags) -> Self {
        ScenarioConfig {
            network,
            strategy,
            n_o: None,
            svc_capacity: None,
            bnb: BnbSettings { keep_log: false, ..BnbSettings::default() },
            region: RegionParams::default(),
            calibrate: false,
            workers: None,
        }
    }

    /// The network after the window and SVC overrides.
    pub fn effective_network(&self) -> Result<Network, ScenarioError> {
        let mut net = self.network.clone();
        if let Some(n_o) = self.n_o {
            net = net.with_windows(n_o)?;
        }
        if let Some(s) = self.svc_capacity {
            if net.svc.is_none() {
                return Err(ScenarioError::NoSvc);
            }
            if !(s >= 0.0) || !s.is_finite() {
                return Err(ScenarioError::Config(format!("SVC capacity must be finite and nonnegative, got {s}")));
            }
            net = net.with_svc_capacity(s);
        }
        if self.strategy.use_svc && net.svc.is_none() {
            return Err(FormulationError::MissingSvc.into());
        }
        Ok(net)
    }

    fn worker_count(&self, jobs: usize) -> usize {
        let n = self.workers.or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok())).unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        });
        n.clamp(1, jobs.max(1))
    }
}

/// Fits a region around the exact power flow of the initial assignment with
/// the SVC idle, keeping the half-width no smaller than `base.half_width`.
pub fn calibrated_region(net: &Network, base: &RegionParams) -> Result<RegionParams, ScenarioError> {
    let assignment = net.initial_assignment();
    let mut vm = (f64::INFINITY, f64::NEG_INFINITY);
    let mut dev = [(f64::INFINITY, f64::NEG_INFINITY); 3];
    for t in 0..net.horizon.periods {
        let st = solve_power_flow(net, &assignment, None, t)?;
        let all = st.node_v.iter().flat_map(|v| v.iter().copied().enumerate());
        let cust = st.customer_v.iter().zip(&assignment).map(|(v, p)| (p.index(), *v));
        for (k, v) in all.chain(cust) {
            vm = (vm.0.min(v.norm()), vm.1.max(v.norm()));
            let d = (v * Complex::from_polar(1.0, -Phase::from_index(k).nominal_angle())).arg();
            dev[k] = (dev[k].0.min(d), dev[k].1.max(d));
        }
    }
    let margin = CALIBRATION_ANGLE_MARGIN_DEG.to_radians();
    let mut out = *base;
    out.vm_min = vm.0 - CALIBRATION_VM_MARGIN;
    out.vm_max = vm.1 + CALIBRATION_VM_MARGIN;
    let mut half = base.half_width;
    for (k, &(lo, hi)) in dev.iter().enumerate() {
        out.centers[k] = Phase::from_index(k).nominal_angle() + 0.5 * (lo + hi);
        half = half.max(0.5 * (hi - lo) + margin);
    }
    out.half_width = half;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodReport {
    pub t: usize,
    pub z_neg: f64,
    pub z_zero: f64,
    pub z: f64,
    /// Worst optimizer-side `|V⁻| / nominal` and `|V⁰| / nominal` over
    /// non-root nodes.
    pub max_nsv: f64,
    pub max_zsv: f64,
    pub dt_current: [Complex; 3],
    pub dt_seq: SequenceTriple,
    pub svc: Option<SvcDispatch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: usize,
    pub periods: Range<usize>,
    pub status: MipStatus,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub relaxations: usize,
    /// `(customer id, phase)` for every customer.
    pub assignment: Vec<(String, Phase)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub windows: Vec<f64>,
    pub validation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub strategy: u8,
    pub n_o: usize,
    pub svc_capacity: Option<f64>,
    pub status: MipStatus,
    /// Optimizer objective, `Σ_t z_t`.
    pub objective: f64,
    pub periods: Vec<PeriodReport>,
    pub windows: Vec<WindowReport>,
    pub validation: ValidationMetrics,
    pub region: RegionParams,
    pub solution: DispatchSolution,
    /// Wall-clock data; kept out of `report.json` so reports stay
    /// reproducible.
    #[serde(skip)]
    pub timings: Timings,
    /// Branch-and-bound node log per window, when requested.
    #[serde(skip)]
    pub node_logs: Vec<String>,
}

impl RunReport {
    /// Relative gap between the optimizer and the exact objective. Objectives
    /// below [`DEVIATION_FLOOR`] are compared on that absolute scale.
    pub fn objective_deviation(&self) -> f64 {
        (self.objective - self.validation.objective).abs() / self.validation.objective.abs().max(DEVIATION_FLOOR)
    }
}

struct WindowOutcome {
    report: WindowReport,
    log: String,
    solution: DispatchSolution,
    seconds: f64,
}

fn solve_window(
    net: &Network,
    k: usize,
    strategy: StrategyFlags,
    fits: &PhaseFits,
    settings: &BnbSettings,
) -> Result<WindowOutcome, ScenarioError> {
    let start = Instant::now();
    let model = build_subproblem(net, k, strategy, fits)?;
    let mip = solve_misocp(&model, settings)?;
    let periods = net.horizon.subsets[k].clone();
    match mip.status {
        MipStatus::Infeasible => {
            return Err(ScenarioError::Infeasible { window: k, first: periods.start, last: periods.end - 1 })
        }
        MipStatus::TimeLimit if !mip.has_incumbent() => return Err(ScenarioError::TimeLimit { window: k }),
        status if !mip.has_incumbent() => return Err(ScenarioError::NoIncumbent { window: k, status }),
        _ => {}
    }
    let solution = extract_solution(&model, &mip.x)?;
    let assignment = net.customers.iter().map(|c| c.id.clone()).zip(solution.windows[0].phases.iter().copied()).collect();
    Ok(WindowOutcome {
        report: WindowReport {
            window: k,
            periods,
            status: mip.status,
            objective: mip.objective,
            bound: mip.bound,
            gap: mip.gap,
            nodes: mip.nodes_explored,
            relaxations: mip.relaxations,
            assignment,
        },
        solution,
        log: mip.log_text(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn period_report(net: &Network, root: usize, dt_line: usize, p: &crate::formulation::PeriodDispatch) -> PeriodReport {
    let nominal = net.nominal_vm.max(1e-12);
    let (mut nsv, mut zsv) = (0.0_f64, 0.0_f64);
    for (i, v) in p.node_v.iter().enumerate() {
        if i == root {
            continue;
        }
        let s = decompose(&PhaseTriple::from_array(*v));
        nsv = nsv.max(s.neg.norm() / nominal);
        zsv = zsv.max(s.zero.norm() / nominal);
    }
    let dt = p.line_i[dt_line];
    PeriodReport {
        t: p.t,
        z_neg: p.z_neg,
        z_zero: p.z_zero,
        z: p.z(),
        max_nsv: nsv,
        max_zsv: zsv,
        dt_current: dt,
        dt_seq: decompose(&PhaseTriple::from_array(dt)),
        svc: p.svc.clone(),
    }
}

/// Solves every window of the configured scenario and validates the result.
///
/// Windows that stop at the time or node limit with an incumbent still yield
/// a report; its `status` is the worst window status.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    let start = Instant::now();
    let net = cfg.effective_network()?;
    let region = if cfg.calibrate { calibrated_region(&net, &cfg.region)? } else { cfg.region };
    let fits = PhaseFits::fit(&region)?;
    let jobs = net.horizon.subsets.len();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<WindowOutcome, ScenarioError>)>> = Mutex::new(Vec::with_capacity(jobs));
    std::thread::scope(|scope| {
        for _ in 0..cfg.worker_count(jobs) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                if k >= jobs {
                    break;
                }
                let r = solve_window(&net, k, cfg.strategy, &fits, &cfg.bnb);
                results.lock().unwrap_or_else(|e| e.into_inner()).push((k, r));
            });
        }
    });
    let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner());
    results.sort_by_key(|(k, _)| *k);
    let mut outcomes = Vec::with_capacity(jobs);
    for (_, r) in results {
        outcomes.push(r?);
    }

    let status = outcomes.iter().map(|o| o.report.status).fold(MipStatus::Optimal, |acc, s| match (acc, s) {
        (MipStatus::TimeLimit, _) | (_, MipStatus::TimeLimit) => MipStatus::TimeLimit,
        (MipStatus::GapLimit, _) | (_, MipStatus::GapLimit) => MipStatus::GapLimit,
        _ => acc,
    });
    let window_seconds = outcomes.iter().map(|o| o.seconds).collect();
    let windows: Vec<WindowReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let node_logs = if cfg.bnb.keep_log { outcomes.iter().map(|o| o.log.clone()).collect() } else { Vec::new() };
    let solution = merge_windows(outcomes.into_iter().map(|o| o.solution).collect());
    let topo = net.topology()?;
    let periods = solution.periods.iter().map(|p| period_report(&net, topo.root, topo.dt_line, p)).collect::<Vec<_>>();
    let objective = solution.objective;

    let v_start = Instant::now();
    let validation = validate_solution(&net, &solution)?;
    let validation_secs = v_start.elapsed().as_secs_f64();

    Ok(RunReport {
        strategy: cfg.strategy.number(),
        n_o: net.horizon.n_o,
        svc_capacity: cfg.svc_capacity,
        status,
        objective,
        periods,
        windows,
        validation,
        region,
        solution,
        timings: Timings { windows: window_seconds, validation: validation_secs, total: start.elapsed().as_secs_f64() },
        node_logs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoSweepRow {
    pub n_o: usize,
    /// 1-based inclusive period ranges, e.g. `1-12`.
    pub subsets: Vec<String>,
    pub status: String,
    pub objective: Option<f64>,
    pub oracle_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvcSweepRow {
    pub capacity: f64,
    pub status: String,
    pub objective: Option<f64>,
    /// Change in objective from the previous row.
    pub delta_f: Option<f64>,
    pub z: Vec<f64>,
}

fn status_text(r: &Result<RunReport, ScenarioError>) -> String {
    match r {
        Ok(rep) => rep.status.to_string(),
        Err(e) if e.is_infeasible() => "infeasible".into(),
        Err(e) => format!("error: {e}"),
    }
}

/// One run per window count.
pub fn sweep_no(cfg: &ScenarioConfig, values: &[usize]) -> Result<Vec<NoSweepRow>, ScenarioError> {
    let mut rows = Vec::with_capacity(values.len());
    for &n_o in values {
        let subsets = crate::netmodel::partition_periods(cfg.network.horizon.periods, n_o)?
            .iter()
            .map(|r| format!("{}-{}", r.start + 1, r.end))
            .collect();
        let run = run_scenario(&ScenarioConfig { n_o: Some(n_o), ..cfg.clone() });
        rows.push(NoSweepRow {
            n_o,
            subsets,
            status: status_text(&run),
            objective: run.as_ref().ok().map(|r| r.objective),
            oracle_objective: run.as_ref().ok().map(|r| r.validation.objective),
        });
    }
    Ok(rows)
}

/// One run per SVC capacity (pu, applied to both ratings).
pub fn sweep_svc(cfg: &ScenarioConfig, capacities: &[f64]) -> Result<Vec<SvcSweepRow>, ScenarioError> {
    if cfg.network.svc.is_none() {
        return Err(ScenarioError::NoSvc);
    }
    let mut rows: Vec<SvcSweepRow> = Vec::with_capacity(capacities.len());
    for &c in capacities {
        let run = run_scenario(&ScenarioConfig { svc_capacity: Some(c), ..cfg.clone() });
        let objective = run.as_ref().ok().map(|r| r.objective);
        let prev = rows.last().and_then(|r| r.objective);
        rows.push(SvcSweepRow {
            capacity: c,
            status: status_text(&run),
            objective,
            delta_f: objective.zip(prev).map(|(f, p)| f - p),
            z: run.as_ref().map(|r| r.periods.iter().map(|p| p.z).collect()).unwrap_or_default(),
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct PeriodCsv {
    t: usize,
    z_neg: f64,
    z_zero: f64,
    z: f64,
    max_nsv: f64,
    max_zsv: f64,
    oracle_z: Option<f64>,
    oracle_nsv_of_limit: Option<f64>,
    oracle_zsv_of_limit: Option<f64>,
    i_a: f64,
    i_b: f64,
    i_c: f64,
    i_pos: f64,
    i_neg: f64,
    i_zero: f64,
    svc_ab: Option<f64>,
    svc_bc: Option<f64>,
    svc_ca: Option<f64>,
}

#[derive(Serialize)]
struct WindowCsv<'a> {
    window: usize,
    first_period: usize,
    last_period: usize,
    status: String,
    objective: f64,
    bound: f64,
    gap: f64,
    nodes: usize,
    customer: &'a str,
    phase: Phase,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `report.json`, `periods.csv`, `windows.csv`, `timings.json` and
/// any node logs as `nodes_<window>.log`.
pub fn write_report(dir: &Path, report: &RunReport) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir)?;
    for (k, log) in report.node_logs.iter().enumerate() {
        fs::write(dir.join(format!("nodes_{}.log", k + 1)), log)?;
    }
    let json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    fs::write(dir.join("report.json"), json + "\n")?;
    let timings = serde_json::to_string_pretty(&report.timings).map_err(io::Error::other)?;
    fs::write(dir.join("timings.json"), timings + "\n")?;
    write_rows(
        &dir.join("periods.csv"),
        report.periods.iter().map(|p| {
            let o = report.validation.periods.iter().find(|m| m.t == p.t);
            let svc = |k: usize| p.svc.as_ref().map(|s| s.magnitudes[k]);
            PeriodCsv {
                t: p.t + 1,
                z_neg: p.z_neg,
                z_zero: p.z_zero,
                z: p.z,
                max_nsv: p.max_nsv,
                max_zsv: p.max_zsv,
                oracle_z: o.map(|m| m.z_neg + m.z_zero),
                oracle_nsv_of_limit: o.map(|m| m.max_nsv_ratio),
                oracle_zsv_of_limit: o.map(|m| m.max_zsv_ratio),
                i_a: p.dt_current[0].norm(),
                i_b: p.dt_current[1].norm(),
                i_c: p.dt_current[2].norm(),
                i_pos: p.dt_seq.pos.norm(),
                i_neg: p.dt_seq.neg.norm(),
                i_zero: p.dt_seq.zero.norm(),
                svc_ab: svc(0),
                svc_bc: svc(1),
                svc_ca: svc(2),
            }
        }),
    )?;
    write_rows(
        &dir.join("windows.csv"),
        report.windows.iter().flat_map(|w| {
            w.assignment.iter().map(move |(id, phase)| WindowCsv {
                window: w.window + 1,
                first_period: w.periods.start + 1,
                last_period: w.periods.end,
                status: w.status.to_string(),
                objective: w.objective,
                bound: w.bound,
                gap: w.gap,
                nodes: w.nodes,
                customer: id,
                phase: *phase,
            })
        }),
    )
}

pub fn write_no_sweep(path: &Path, rows: &[NoSweepRow]) -> Result<(), ScenarioError> {
    #[derive(Serialize)]
    struct Row<'a> {
        n_o: usize,
        subsets: String,
        status: &'a str,
        objective: Option<f64>,
        oracle_objective: Option<f64>,
    }
    write_rows(
        path,
        rows.iter().map(|r| Row {
            n_o: r.n_o,
            subsets: r.subsets.join(" "),
            status: &r.status,
            objective: r.objective,
            oracle_objective: r.oracle_objective,
        }),
    )
}

/// Wide table: one row per capacity with `z_1..z_T` columns.
pub fn write_svc_sweep(path: &Path, rows: &[SvcSweepRow]) -> Result<(), ScenarioError> {
    let periods = rows.iter().map(|r| r.z.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["capacity".to_string(), "status".into(), "objective".into(), "delta_f".into()];
    header.extend((1..=periods).map(|t| format!("z_{t}")));
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut rec = vec![r.capacity.to_string(), r.status.clone(), opt(r.objective), opt(r.delta_f)];
        rec.extend((0..periods).map(|t| opt(r.z.get(t).copied())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
