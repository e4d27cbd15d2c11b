use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use driftnav::eval::{run_benchmark, BenchConfig, PreparedScenario};
use driftnav::exec::Execution;
use driftnav::mdp::StateVector;
use driftnav::ppo::{ActorCritic, TrainConfig, Trainer};
use driftnav::scene::load_scenario;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn ppo_update(c: &mut Criterion) {
    let config = TrainConfig {
        n_envs: 8,
        rollout_horizon: 128,
        epochs: 2,
        total_steps: 1_000_000,
        ..Default::default()
    };
    let mut group = c.benchmark_group("ppo_update");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter_batched(
                || Trainer::new(config.clone()).unwrap(),
                |mut t| t.update(exec).unwrap(),
                criterion::BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn benchmark_sweep(c: &mut Criterion) {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/scene2.toml");
    let scenes = vec![PreparedScenario::new(load_scenario(path).unwrap())];
    let policy = ActorCritic::new(StateVector::width(2), &[16, 16], 0);
    let config = BenchConfig {
        ranges: vec![50.0],
        seeds: 4,
        ..Default::default()
    };
    let mut group = c.benchmark_group("benchmark_sweep");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_benchmark(&scenes, &policy, &config, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, ppo_update, benchmark_sweep);
criterion_main!(benches);
