//! Sequential vs parallel ensemble evaluation and analysis step on the
//! Darcy level-set problem.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eki_core::eki::analysis_step;
use eki_core::harness::{controls_from, initial_ensemble, Experiment, ExperimentConfig};
use eki_core::Exec;

fn experiment() -> Experiment {
    let mut c = ExperimentConfig::from_toml_str(
        "[problem]\nmodel = \"darcy\"\nn_cells = 32\n\
         [parameterization]\nkind = \"level-set\"\nhierarchy = \"noncentered\"\n\
         [eki]\nn_ensemble = 64\n",
    )
    .unwrap();
    c.resolve().unwrap();
    Experiment::build(&c).unwrap()
}

fn bench(c: &mut Criterion) {
    let exp = experiment();
    let seed = exp.seeds.initialization(0);
    let ens = initial_ensemble(&exp, seed, Exec::Sequential).unwrap();
    let outputs = ens.evaluate(&exp.model, Exec::Sequential).unwrap();
    let mut g = c.benchmark_group("ensemble");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let name = format!("{exec:?}").to_lowercase();
        g.bench_function(BenchmarkId::new("evaluate", &name), |b| {
            b.iter(|| ens.evaluate(&exp.model, exec).unwrap())
        });
        let controls = controls_from(&exp.config, seed, exec);
        g.bench_function(BenchmarkId::new("analysis", &name), |b| {
            b.iter(|| analysis_step(&ens, &outputs, &exp.obs, &controls, 0).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
