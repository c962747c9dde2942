use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ucmcf::config::{FlowName, RunConfig};
use ucmcf::grid_curve::{make_curve, InitDescriptor};
use ucmcf::par::{self, Execution};
use ucmcf::runner::run;
use ucmcf::stationary::{analyze, is_simple};
use ucmcf::tension::solve_normalized_tension;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn curve(desc: &str, n: usize) -> ucmcf::GridCurve {
    make_curve(&desc.parse::<InitDescriptor>().unwrap(), n, 2).unwrap()
}

fn batch_runs(c: &mut Criterion) {
    let cfgs: Vec<RunConfig> = (2..10)
        .map(|j| {
            let mut cfg = RunConfig::new(FlowName::Normalized, &format!("perturbed:0.05,{j}"), 0.05);
            cfg.n = 128;
            cfg
        })
        .collect();
    let mut g = c.benchmark_group("normalized_runs_x8");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, &cfgs, |cfg| run(cfg).unwrap().steps))
        });
    }
    g.finish();
}

fn batch_tension(c: &mut Criterion) {
    let curves: Vec<_> = (1..33).map(|j| curve(&format!("perturbed:0.1,{}", 2 + j % 7), 512)).collect();
    let mut g = c.benchmark_group("tension_solves_x32");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| par::map(exec, &curves, |c| solve_normalized_tension(c).unwrap().mean))
        });
    }
    g.finish();
}

fn simplicity(c: &mut Criterion) {
    let cv = curve("perturbed:0.2,5", 2048);
    let mut g = c.benchmark_group("is_simple_n2048");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| is_simple(&cv, exec)));
    }
    g.finish();
    let w = curve("circle@1", 1024);
    let mut g = c.benchmark_group("stationary_analyze_n1024");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| analyze(&w, exec).unwrap().residual));
    }
    g.finish();
}

criterion_group!(benches, batch_runs, batch_tension, simplicity);
criterion_main!(benches);
