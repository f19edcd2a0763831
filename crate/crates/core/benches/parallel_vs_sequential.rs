//! Multi-seed training through `par::map` against a plain loop.
//!
//! Build with `--no-default-features` to see `par::map` fall back to the
//! sequential path; the two lines should then match.

use criterion::{criterion_group, criterion_main, Criterion};
use ompath::expcli::{run_experiment, ExperimentConfig};
use ompath::{oracle, par, SystemSpec};

fn configs(dir: &std::path::Path) -> Vec<ExperimentConfig> {
    let base = ExperimentConfig::preset("linear_0to2").unwrap();
    (0..4)
        .map(|seed| {
            let mut c = base.clone();
            c.training.seed = seed;
            c.training.episodes = 40;
            c.training.window = [20, 40];
            c.output.dir = dir.join(format!("seed_{seed}"));
            c
        })
        .collect()
}

fn seeds(c: &mut Criterion) {
    let tmp = tempfile::tempdir().unwrap();
    let cfgs = configs(tmp.path());
    let mut g = c.benchmark_group("four_seeds");
    g.sample_size(10);
    let label = if par::is_parallel() { "par_map" } else { "par_map_fallback" };
    g.bench_function(label, |b| b.iter(|| par::map(&cfgs, |c| run_experiment(c).unwrap())));
    g.bench_function("sequential", |b| {
        b.iter(|| cfgs.iter().map(|c| run_experiment(c).unwrap()).collect::<Vec<_>>())
    });
    g.finish();
}

fn minimality(c: &mut Criterion) {
    let spec = SystemSpec::linear_potential(0.0, 2.0, 1.0, 200, 10.0).unwrap();
    let label = if par::is_parallel() { "minimality_par" } else { "minimality_seq" };
    c.bench_function(label, |b| b.iter(|| oracle::minimality_check(&spec, 2000, 7).unwrap()));
}

criterion_group!(benches, seeds, minimality);
criterion_main!(benches);
