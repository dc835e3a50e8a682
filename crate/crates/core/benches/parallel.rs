use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use coactivity::par::Execution;
use coactivity::posteriors::{localize, LocalizeOptions};
use coactivity::rjmcmc::Inference;
use coactivity::sim::{generate, RunSpec, ScenarioConfig};
use coactivity::summarize::{select_keyframes, KeyframeOptions};

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn scenario() -> ScenarioConfig {
    ScenarioConfig {
        n_actors: 6,
        n_turns: 4,
        seed: 1,
        ..ScenarioConfig::default()
    }
}

fn run_spec(cfg: &ScenarioConfig) -> RunSpec {
    let mut run = RunSpec::for_scenario(cfg);
    run.sampler.n_iters = 1500;
    run.sampler.burn_in = 300;
    run.sampler.grid_points = 150;
    run
}

fn bench_chains(c: &mut Criterion) {
    let cfg = scenario();
    let ds = generate(&cfg).unwrap();
    let data = ds.gps_only();
    let run = run_spec(&cfg);
    let seeds = [1, 2, 3, 4];
    let mut g = c.benchmark_group("chains");
    g.sample_size(10);
    for (name, ex) in MODES {
        let inf = Inference::new(
            &data,
            &run.types,
            &run.overlap,
            &run.params,
            &run.hyper,
            run.sampler.clone(),
            ex,
        )
        .unwrap();
        g.bench_with_input(BenchmarkId::new("run_many", name), &seeds, |b, s| {
            b.iter(|| inf.run_many(s).unwrap())
        });
    }
    g.finish();
}

fn bench_posteriors(c: &mut Criterion) {
    let cfg = scenario();
    let ds = generate(&cfg).unwrap();
    let data = ds.gps_only();
    let run = run_spec(&cfg);
    let inf = Inference::new(
        &data,
        &run.types,
        &run.overlap,
        &run.params,
        &run.hyper,
        run.sampler.clone(),
        Execution::Sequential,
    )
    .unwrap();
    let chains = inf.run_many(&[7, 8]).unwrap();

    let mut g = c.benchmark_group("posteriors");
    g.sample_size(10);
    for (name, ex) in MODES {
        let opts = LocalizeOptions {
            thin: 1,
            execution: ex,
            ..LocalizeOptions::default()
        };
        g.bench_function(BenchmarkId::new("localize", name), |b| {
            b.iter(|| {
                inf.actors
                    .iter()
                    .map(|&a| localize(&chains, &inf.posteriors, a, &opts).unwrap())
                    .collect::<Vec<_>>()
            })
        });
        let kf = KeyframeOptions {
            k: 10,
            execution: ex,
            ..KeyframeOptions::default()
        };
        g.bench_function(BenchmarkId::new("keyframes", name), |b| {
            b.iter(|| select_keyframes(&ds.data.frames, &chains, &kf).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_chains, bench_posteriors);
criterion_main!(benches);
