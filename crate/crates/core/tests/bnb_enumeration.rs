mod common;

use common::{fixed_assignment_value, random_feeder, rel_diff, rng, RandomSpec};
use phasebal::bnb::{solve_misocp, BnbSettings, MipStatus, NodeAction};
use phasebal::conesolver::{solve_with, Settings, Status};
use phasebal::formulation::{build_subproblem, to_cone_problem, StrategyFlags};
use phasebal::linearize::{PhaseFits, RegionParams};
use phasebal::pforacle::for_each_assignment;

fn fits() -> PhaseFits {
    PhaseFits::fit(&RegionParams::default()).unwrap()
}

fn str3() -> StrategyFlags {
    StrategyFlags::from_number(3).unwrap()
}

fn enumerated_best(net: &phasebal::Network, strategy: StrategyFlags) -> Option<f64> {
    let model = build_subproblem(net, 0, strategy, &fits()).unwrap();
    let mut best: Option<f64> = None;
    for_each_assignment(net, strategy, |phases| {
        if let Some(v) = fixed_assignment_value(&model, phases) {
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    })
    .unwrap();
    best
}

#[test]
fn one_adjustable_customer_matches_three_choices() {
    let mut r = rng(11);
    let net = random_feeder(&mut r, RandomSpec { adjustable: 1, fixed: 3, ..Default::default() });
    let model = build_subproblem(&net, 0, str3(), &fits()).unwrap();
    let sol = solve_misocp(&model, &BnbSettings::default()).unwrap();
    let oracle = enumerated_best(&net, str3()).unwrap();
    assert_eq!(sol.status, MipStatus::Optimal);
    assert!(rel_diff(sol.objective, oracle) <= 1e-6, "bnb {} vs enumeration {}", sol.objective, oracle);
}

#[test]
fn three_adjustable_customers_match_enumeration() {
    for seed in 0..3 {
        let mut r = rng(100 + seed);
        let net = random_feeder(&mut r, RandomSpec { adjustable: 3, fixed: 2, nodes: 3, ..Default::default() });
        let model = build_subproblem(&net, 0, str3(), &fits()).unwrap();
        let sol = solve_misocp(&model, &BnbSettings::default()).unwrap();
        let oracle = enumerated_best(&net, str3()).unwrap();
        assert_eq!(sol.status, MipStatus::Optimal, "seed {seed}");
        assert!(rel_diff(sol.objective, oracle) <= 1e-6, "seed {seed}: bnb {} vs {}", sol.objective, oracle);
        assert_eq!(sol.monotonicity_violations, 0);
    }
}

/// Every 0/1 pattern of at most six binaries, each solved as an SOCP.
#[test]
fn certificate_agrees_with_binary_enumeration() {
    let mut r = rng(7);
    let net = random_feeder(&mut r, RandomSpec { adjustable: 1, fixed: 3, svc: Some(0.2), ..Default::default() });
    let strategy = StrategyFlags::from_number(4).unwrap();
    let model = build_subproblem(&net, 0, strategy, &fits()).unwrap();
    let nb = model.binaries.len();
    assert!(nb <= 6, "{nb} binaries");
    let sol = solve_misocp(&model, &BnbSettings::default()).unwrap();
    assert_eq!(sol.status, MipStatus::Optimal);

    let base = to_cone_problem(&model);
    let mut best = f64::INFINITY;
    for code in 0..(1u32 << nb) {
        let mut p = base.clone();
        for (k, &v) in model.binaries.iter().enumerate() {
            let x = f64::from((code >> k) & 1);
            p.lower[v] = x;
            p.upper[v] = x;
        }
        let s = solve_with(&p, &Settings::default()).unwrap();
        if s.status == Status::Optimal {
            best = best.min(s.objective);
        }
    }
    assert!(rel_diff(sol.objective, best) <= 1e-6, "bnb {} vs enumeration {}", sol.objective, best);
}

#[test]
fn node_log_shows_no_unsafe_pruning() {
    let mut r = rng(21);
    let net = random_feeder(&mut r, RandomSpec { adjustable: 3, fixed: 1, nodes: 2, ..Default::default() });
    let model = build_subproblem(&net, 0, str3(), &fits()).unwrap();
    let settings = BnbSettings::default();
    let sol = solve_misocp(&model, &settings).unwrap();
    assert!(!sol.log.is_empty());
    for e in &sol.log {
        if e.action == NodeAction::PrunedBound {
            let scale = e.incumbent.abs().max(1.0);
            assert!(e.bound >= e.incumbent - settings.gap_tol * scale, "node {} pruned below threshold", e.node);
        }
    }
    // Closed nodes never beat the final incumbent by more than the gap.
    let tol = settings.gap_tol * sol.objective.abs().max(1.0);
    for e in &sol.log {
        if matches!(e.action, NodeAction::PrunedBound) {
            assert!(e.bound >= sol.objective - tol);
        }
    }
    assert_eq!(sol.log.iter().filter(|e| e.parent.is_none()).count(), 1);
    assert_eq!(sol.log_text().lines().count(), sol.log.len());
}

#[test]
fn fully_fixed_model_takes_one_solve() {
    let mut r = rng(3);
    let net = random_feeder(&mut r, RandomSpec::default());
    let model = build_subproblem(&net, 0, StrategyFlags::from_number(1).unwrap(), &fits()).unwrap();
    let sol = solve_misocp(&model, &BnbSettings::default()).unwrap();
    assert_eq!(sol.status, MipStatus::Optimal);
    assert_eq!(sol.nodes_explored, 1);
    assert_eq!(sol.gap, 0.0);
}
