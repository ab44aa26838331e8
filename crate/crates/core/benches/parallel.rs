use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use ssdnet::dilemmas::{EnvConfig, GridMap};
use ssdnet::learn::{rollout, train, PolicyKind, PolicySpec, RolloutContext, ShapingMode, TrainConfig};
use ssdnet::metrics::{segment_stages, stage_aggregate, EpisodeLog, LogField, StageStat};
use ssdnet::rng::stream;
use ssdnet::topology::{random_connected, Network};
use ssdnet::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn context(exec: Exec) -> RolloutContext {
    let mut env = EnvConfig::harvest();
    env.episode_len = 250;
    RolloutContext {
        map: Arc::new(GridMap::builtin("harvest-small").unwrap()),
        env: Arc::new(env),
        n_agents: 5,
        shaping: ShapingMode::Disabled,
        seed: 1,
        workers: 8,
        exec,
    }
}

fn bench_rollout(c: &mut Criterion) {
    let mut g = c.benchmark_group("rollout_8_episodes");
    g.sample_size(10);
    for (name, exec) in MODES {
        let ctx = context(exec);
        let policies: Vec<_> = (0..5)
            .map(|i| PolicySpec::for_kind(PolicyKind::ActorCritic).build(ctx.obs_dim(), 8, 1, i).unwrap())
            .collect();
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| rollout(&ctx, &policies, 0..8, true).unwrap()));
    }
    g.finish();
}

fn bench_train(c: &mut Criterion) {
    let mut g = c.benchmark_group("actor_critic_train_16_episodes");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| train(context(exec), TrainConfig::new(PolicySpec::actor_critic(), 250 * 16)).unwrap())
        });
    }
    g.finish();
}

fn bench_structure(c: &mut Criterion) {
    let mut rng = stream(3, "bench-graphs", 0);
    let graphs: Vec<_> = (0..256).map(|_| random_connected(rng.random_range(8..=24), 0.3, &mut rng)).collect();
    let mut g = c.benchmark_group("structural_profiles_256_graphs");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec.map(graphs.clone(), |t| Network::new(t).unwrap()))
        });
    }
    g.finish();
}

fn bench_stages(c: &mut Criterion) {
    let mut rng = stream(4, "bench-logs", 0);
    let mut logs = Vec::new();
    for seed in 0..5 {
        for ep in 0..20_000 {
            let mut log = EpisodeLog::new(seed, ep, 5);
            for a in &mut log.agents {
                a.fire_count = rng.random_range(0..50);
            }
            logs.push(log);
        }
    }
    let windows = segment_stages(20_000 * 1000, 200_000, 12_000_000).unwrap();
    let mut g = c.benchmark_group("stage_aggregate_100k_logs");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| stage_aggregate(&logs, 1000, &windows, LogField::FireCount, StageStat::MeanSummed, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_rollout, bench_train, bench_structure, bench_stages);
criterion_main!(benches);
