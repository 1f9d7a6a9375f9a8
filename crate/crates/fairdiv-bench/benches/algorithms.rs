//! Criterion benchmarks: each allocation algorithm on seeded instances of
//! its own class, plus the shared seeding phase.  Instances are generated
//! once outside the measured closure; the measured work is the full run
//! from seed allocation to verified completion.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use fairdiv_core::framework::{seed_allocation, RunError, RunOutcome};
use fairdiv_core::generator::{generate, GenSpec, Model};
use fairdiv_core::{run_cxxra, run_pqrax, run_sqrt2_pq, run_sqrt2_ra, Instance};

type Runner = fn(&Instance) -> Result<RunOutcome, RunError>;

fn instances(model: Model, count: u64) -> Vec<Instance> {
    (0..count)
        .map(|k| {
            generate(&GenSpec {
                num_agents: 6,
                num_goods: 14,
                model,
                value_range: (1, 9),
                p: None,
                q: None,
                seed: 1000 + k,
            })
            .expect("feasible spec")
        })
        .collect()
}

fn bench_algorithms(c: &mut Criterion) {
    let cases: [(&str, Model, Runner); 4] = [
        ("cxxra", Model::AdditiveInfty1, run_cxxra),
        ("sqrt2-ra", Model::RestrictedAny, run_sqrt2_ra),
        ("sqrt2-pq", Model::AdditiveInfty1, run_sqrt2_pq),
        ("pqrax", Model::RestrictedP2, run_pqrax),
    ];
    let mut group = c.benchmark_group("algorithms");
    for (name, model, run) in cases {
        let pool = instances(model, 20);
        let mut next = 0usize;
        group.bench_function(name, |b| {
            b.iter_batched(
                || {
                    let instance = pool[next % pool.len()].clone();
                    next += 1;
                    instance
                },
                |instance| run(&instance).expect("run succeeds"),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn bench_seeding(c: &mut Criterion) {
    let pool = instances(Model::AdditiveInfty1, 20);
    let mut next = 0usize;
    c.bench_function("seed-allocation", |b| {
        b.iter_batched(
            || {
                let instance = pool[next % pool.len()].clone();
                next += 1;
                instance
            },
            |instance| seed_allocation(&instance),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_algorithms, bench_seeding);
criterion_main!(benches);
