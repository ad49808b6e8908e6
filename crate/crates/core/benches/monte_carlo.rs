use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vrjp::beta::{sample, NuParams};
use vrjp::graph::wired_lattice_box;
use vrjp::harness::replicate;
use vrjp::schrodinger::GreenBundle;

fn replicas(c: &mut Criterion) {
    let (_, wired) = wired_lattice_box(2, 6, 1.0).unwrap();
    let params = NuParams::wired_marginal(&wired).unwrap();
    let mut group = c.benchmark_group("replicate_green");
    group.sample_size(10);
    // 1 is the sequential path, 0 the global rayon pool
    for parallelism in [1usize, 0] {
        group.bench_with_input(BenchmarkId::from_parameter(parallelism), &parallelism, |b, &p| {
            b.iter(|| {
                replicate(256, 3, "bench", p, |_, rng| {
                    let beta = sample(&params, rng)?.beta;
                    let bundle = GreenBundle::new(&wired, &beta, 1.0)?;
                    Ok(bundle.psi[0])
                })
                .unwrap()
            })
        });
    }
    group.finish();
}

fn kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("kernels");
    for (dim, radius) in [(2, 10), (3, 4)] {
        let (_, wired) = wired_lattice_box(dim, radius, 1.0).unwrap();
        let params = NuParams::wired_marginal(&wired).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let label = format!("d{dim}r{radius}");
        group.bench_function(BenchmarkId::new("sample", &label), |b| {
            b.iter(|| sample(black_box(&params), &mut rng).unwrap())
        });
        let beta = sample(&params, &mut rng).unwrap().beta;
        group.bench_function(BenchmarkId::new("green_bundle", &label), |b| {
            b.iter(|| GreenBundle::new(black_box(&wired), black_box(&beta), 1.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, replicas, kernels);
criterion_main!(benches);
