use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use ionqec::bench::{mean_fidelity, sweep_and_fit, SweepConfig};
use ionqec::crystal_modes::{solve_modes, CrystalConfig};
use ionqec::pulse_synth::{integer_search, ClassProblem, SearchConfig, TargetUnitary};
use ionqec::qec_protocol::{CodeKind, Protocol};
use ionqec::quantum_engine::random_pure_target;
use ionqec::rng::substream;
use ionqec::spin_coupling::PulseSolution;
use ionqec_bench::default_coupling;

fn modes(c: &mut Criterion) {
    let cfg = CrystalConfig::default();
    c.bench_function("solve_modes", |b| b.iter(|| solve_modes(black_box(&cfg)).unwrap()));
}

fn synthesis(c: &mut Criterion) {
    let q = default_coupling();
    let sol = PulseSolution::published_spokes();
    c.bench_function("solution_phases", |b| b.iter(|| q.solution_phases(black_box(&sol))));

    let target = TargetUnitary::spokes();
    let problem = ClassProblem::new(&q, &target).unwrap();
    let n = problem.repair_integers(&sol.areas, sol.ratio, 3);
    c.bench_function("class_cost", |b| {
        b.iter(|| problem.cost(black_box(&sol.areas), black_box(sol.ratio), &n))
    });

    let cfg = SearchConfig {
        bound: 1,
        classes: 8,
        ..Default::default()
    };
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    g.bench_function("truncated_bound1", |b| b.iter(|| integer_search(&target, &q, &cfg).unwrap()));
    g.finish();
}

fn protocol(c: &mut Criterion) {
    let mut g = c.benchmark_group("protocol");
    for kind in [CodeKind::FiveRC, CodeKind::FiveQC] {
        let p = Protocol::standard(kind).unwrap();
        g.bench_function(format!("run_{kind}"), |b| {
            let mut rng = substream(1, &[]);
            b.iter(|| {
                let psi = random_pure_target(&mut rng);
                p.run(&psi, 0.1, 0.005, &mut rng).unwrap()
            })
        });
    }
    let p = Protocol::standard(CodeKind::FiveRC).unwrap();
    g.sample_size(10);
    g.bench_function("mean_fidelity_5rc_50", |b| b.iter(|| mean_fidelity(&p, 0.005, 0.1, 50, 1).unwrap()));
    g.finish();
}

fn sweep(c: &mut Criterion) {
    let mut cfg = SweepConfig::new(CodeKind::FiveRC);
    cfg.samples = 4;
    cfg.time_grid = ionqec::bench::log_grid(1e-2, 1.0, 5);
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("tiny_5rc", |b| b.iter(|| sweep_and_fit(&cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, modes, synthesis, protocol, sweep);
criterion_main!(benches);
