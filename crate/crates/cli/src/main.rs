use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use phasebal::bnb::{BnbSettings, MipStatus, DEFAULT_GAP_TOL, DEFAULT_NODE_LIMIT};
use phasebal::conesolver::Settings;
use phasebal::formulation::StrategyFlags;
use phasebal::linearize::RegionParams;
use phasebal::netmodel::{load_network_file, Network};
use phasebal::pforacle::validate_solution;
use phasebal::scenario::{
    run_scenario, sweep_no, sweep_svc, write_no_sweep, write_report, write_svc_sweep, RunReport, ScenarioConfig,
    ScenarioError, WORKERS_ENV,
};

const EXIT_INFEASIBLE: u8 = 2;
const EXIT_TIME_LIMIT: u8 = 3;
const EXIT_INPUT: u8 = 4;

/// Optimal PSD and SVC dispatch for current-unbalance mitigation.
#[derive(Parser)]
#[command(name = "phasebal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its reports.
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of PSD operating windows (default: the network's own).
        #[arg(long = "no", value_name = "K")]
        n_o: Option<usize>,
        /// SVC capacity in pu, applied to both ratings.
        #[arg(long = "svc-cap", value_name = "S")]
        svc_cap: Option<f64>,
        /// Write the branch-and-bound node log of every window.
        #[arg(long)]
        node_log: bool,
    },
    /// Objective for several window counts.
    SweepNo {
        #[command(flatten)]
        common: Common,
        /// Window counts to try.
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 6])]
        values: Vec<usize>,
    },
    /// Objective for several SVC capacities.
    SweepSvc {
        #[command(flatten)]
        common: Common,
        /// Capacities in pu.
        #[arg(long, value_delimiter = ',', required = true)]
        capacities: Vec<f64>,
        #[arg(long = "no", value_name = "K")]
        n_o: Option<usize>,
    },
    /// Replay a saved report through the exact power flow.
    Validate {
        /// Network JSON file.
        #[arg(long)]
        network: PathBuf,
        /// `report.json` written by `run`.
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the built-in fixture networks as JSON.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// 1 = no devices, 2 = SVC only, 3 = PSDs only, 4 = both.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=4))]
    strategy: u8,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Half-width of the linearization angle window, degrees.
    #[arg(long = "delta-deg", default_value_t = 3.0)]
    delta_deg: f64,
    /// Lower magnitude of the linearization region, pu.
    #[arg(long, default_value_t = 0.9)]
    region_vm_min: f64,
    /// Upper magnitude of the linearization region, pu.
    #[arg(long, default_value_t = 1.1)]
    region_vm_max: f64,
    /// Re-centre the linearization region on an exact power-flow pre-run.
    #[arg(long)]
    calibrate: bool,
    /// Relative optimality gap.
    #[arg(long, default_value_t = DEFAULT_GAP_TOL)]
    gap_tol: f64,
    /// Node limit per window.
    #[arg(long, default_value_t = DEFAULT_NODE_LIMIT)]
    node_limit: usize,
    /// Wall-clock limit per window, seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Interior-point feasibility and gap tolerance.
    #[arg(long, default_value_t = phasebal::conesolver::DEFAULT_TOL)]
    cone_tol: f64,
    /// Window workers.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

/// Error wrapper carrying the process exit code.
#[derive(Debug)]
struct Exit(u8, anyhow::Error);

fn input<E: Into<anyhow::Error>>(e: E) -> Exit {
    Exit(EXIT_INPUT, e.into())
}

fn classify(e: ScenarioError) -> Exit {
    let code = match &e {
        ScenarioError::Infeasible { .. } => EXIT_INFEASIBLE,
        ScenarioError::TimeLimit { .. } => EXIT_TIME_LIMIT,
        ScenarioError::NoSvc
        | ScenarioError::Config(_)
        | ScenarioError::Network(_)
        | ScenarioError::Formulation(phasebal::formulation::FormulationError::MissingSvc) => EXIT_INPUT,
        _ => 1,
    };
    Exit(code, e.into())
}

fn load(path: &Path) -> Result<Network, Exit> {
    load_network_file(path).with_context(|| format!("loading {}", path.display())).map_err(input)
}

impl Common {
    fn config(&self) -> Result<ScenarioConfig, Exit> {
        let net = load(&self.network)?;
        let strategy = StrategyFlags::from_number(self.strategy).expect("range-checked by clap");
        let mut cfg = ScenarioConfig::new(net, strategy);
        if !(self.gap_tol >= 0.0) || !(self.cone_tol > 0.0) || !(self.delta_deg > 0.0) {
            return Err(input(anyhow::anyhow!("tolerances and --delta-deg must be positive")));
        }
        cfg.bnb = BnbSettings {
            gap_tol: self.gap_tol,
            node_limit: self.node_limit,
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            cone: Settings { tol: self.cone_tol, ..Settings::default() },
            keep_log: false,
        };
        cfg.region = RegionParams {
            vm_min: self.region_vm_min,
            vm_max: self.region_vm_max,
            half_width: self.delta_deg.to_radians(),
            ..RegionParams::default()
        };
        cfg.calibrate = self.calibrate;
        cfg.workers = self.workers;
        Ok(cfg)
    }
}

fn summarize(r: &RunReport) {
    println!("status: {}", r.status);
    println!("objective F: {:.9}", r.objective);
    println!("exact F: {:.9} (deviation {:.3}%)", r.validation.objective, 100.0 * r.objective_deviation());
    println!(
        "NSV at {:.1}% of limit, ZSV at {:.1}% of limit, linearization error {:.3e} pu",
        100.0 * r.validation.max_nsv_ratio,
        100.0 * r.validation.max_zsv_ratio,
        r.validation.max_linearization_error
    );
    println!(
        "violations: voltage {:.3e}  lower-vm {:.3e}  ampacity {:.3e}",
        r.validation.max_voltage_violation, r.validation.max_lower_vm_violation, r.validation.max_ampacity_violation
    );
    for (w, secs) in r.windows.iter().zip(&r.timings.windows) {
        let phases: String = w.assignment.iter().map(|(_, p)| p.to_string()).collect::<Vec<_>>().join(",");
        println!(
            "window {} periods {}-{}: {} F={:.6} gap={:.1e} nodes={} {:.2}s [{}]",
            w.window + 1,
            w.periods.start + 1,
            w.periods.end,
            w.status,
            w.objective,
            w.gap,
            w.nodes,
            secs,
            phases
        );
    }
}

fn run(cli: Cli) -> Result<(), Exit> {
    match cli.command {
        Command::Run { common, n_o, svc_cap, node_log } => {
            let mut cfg = common.config()?;
            cfg.n_o = n_o;
            cfg.svc_capacity = svc_cap;
            cfg.bnb.keep_log = node_log;
            let report = run_scenario(&cfg).map_err(classify)?;
            write_report(&common.out, &report).map_err(classify)?;
            summarize(&report);
            if report.status == MipStatus::TimeLimit {
                return Err(Exit(EXIT_TIME_LIMIT, anyhow::anyhow!("time limit reached; best incumbent reported")));
            }
            Ok(())
        }
        Command::SweepNo { common, values } => {
            let cfg = common.config()?;
            if values.contains(&0) {
                return Err(input(anyhow::anyhow!("window counts must be positive")));
            }
            let rows = sweep_no(&cfg, &values).map_err(classify)?;
            std::fs::create_dir_all(&common.out).map_err(|e| Exit(1, e.into()))?;
            write_no_sweep(&common.out.join("sweep_no.csv"), &rows).map_err(classify)?;
            for r in &rows {
                let f = r.objective.map(|f| format!("{f:.9}")).unwrap_or_else(|| "-".into());
                println!("N_o={} [{}] {} F={}", r.n_o, r.subsets.join(" "), r.status, f);
            }
            Ok(())
        }
        Command::SweepSvc { common, capacities, n_o } => {
            let mut cfg = common.config()?;
            cfg.n_o = n_o;
            let rows = sweep_svc(&cfg, &capacities).map_err(classify)?;
            std::fs::create_dir_all(&common.out).map_err(|e| Exit(1, e.into()))?;
            write_svc_sweep(&common.out.join("sweep_svc.csv"), &rows).map_err(classify)?;
            for r in &rows {
                let f = r.objective.map(|f| format!("{f:.9}")).unwrap_or_else(|| "-".into());
                let d = r.delta_f.map(|d| format!("{d:+.9}")).unwrap_or_else(|| "-".into());
                println!("S={} {} F={} dF={}", r.capacity, r.status, f, d);
            }
            Ok(())
        }
        Command::Validate { network, report } => {
            let net = load(&network)?;
            let text = std::fs::read_to_string(&report)
                .with_context(|| format!("reading {}", report.display()))
                .map_err(input)?;
            let rep: RunReport = serde_json::from_str(&text).context("parsing report").map_err(input)?;
            let m = validate_solution(&net, &rep.solution).map_err(|e| Exit(1, e.into()))?;
            println!("{}", serde_json::to_string_pretty(&m).map_err(|e| Exit(1, e.into()))?);
            Ok(())
        }
        Command::Fixtures { out } => {
            std::fs::create_dir_all(&out).map_err(|e| Exit(1, e.into()))?;
            for name in phasebal::fixtures::NAMES {
                let doc = phasebal::fixtures::document(name).expect("every listed fixture exists");
                let path = out.join(format!("{name}.json"));
                std::fs::write(&path, doc.to_json() + "\n").map_err(|e| Exit(1, e.into()))?;
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Exit(code, e)) => {
            if code == EXIT_INFEASIBLE {
                eprintln!("infeasible: {e:#}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
