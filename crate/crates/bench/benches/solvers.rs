use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use phasebal::bnb::{solve_misocp, BnbSettings};
use phasebal::conesolver::{solve_with, Settings};
use phasebal::fixtures::{high_pv, ieee13_like};
use phasebal::formulation::{build_subproblem, to_cone_problem, StrategyFlags};
use phasebal::linearize::{PhaseFits, RegionParams};
use phasebal::pforacle::solve_power_flow;
use phasebal_bench::cone_chain;

fn cone(c: &mut Criterion) {
    let mut g = c.benchmark_group("cone_chain");
    for k in [10, 50, 200] {
        let p = cone_chain(k);
        g.bench_with_input(BenchmarkId::from_parameter(k), &p, |b, p| {
            b.iter(|| solve_with(p, &Settings::default()).unwrap())
        });
    }
    g.finish();
}

fn feeder(c: &mut Criterion) {
    let net = ieee13_like(2.5);
    let fits = PhaseFits::fit(&RegionParams::default()).unwrap();
    let str4 = StrategyFlags::from_number(4).unwrap();
    let phases = net.initial_assignment();
    c.bench_function("power_flow_ieee13_noon", |b| b.iter(|| solve_power_flow(&net, &phases, None, 12).unwrap()));
    c.bench_function("build_ieee13_str4", |b| b.iter(|| build_subproblem(&net, 0, str4, &fits).unwrap()));
    let one = net.with_windows(24).unwrap();
    let root = to_cone_problem(&build_subproblem(&one, 12, str4, &fits).unwrap());
    c.bench_function("relaxation_ieee13_str4_one_period", |b| {
        b.iter(|| solve_with(&root, &Settings::default()).unwrap())
    });
    let hp = high_pv();
    let model = build_subproblem(&hp, 0, str4, &fits).unwrap();
    let mut g = c.benchmark_group("bnb");
    g.sample_size(10);
    g.bench_function("high_pv_str4", |b| b.iter(|| solve_misocp(&model, &BnbSettings::default()).unwrap()));
    g.finish();
}

criterion_group!(benches, cone, feeder);
criterion_main!(benches);
