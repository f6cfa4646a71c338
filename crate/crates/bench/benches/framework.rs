use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use pimlite_bench::{context, context_with, histogram_input, random_bytes, random_words};
use pimlite_core::apps::{run_histogram, run_vecadd_with};
use pimlite_core::ReductionPolicy;

const CORES: usize = 8;

fn scatter_gather(c: &mut Criterion) {
    let mut group = c.benchmark_group("scatter_gather");
    for type_size in [4usize, 12, 40] {
        let len = 20_000;
        let data = random_bytes(len * type_size, 1);
        group.throughput(Throughput::Bytes(data.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(type_size), &data, |b, data| {
            b.iter(|| {
                let mut pim = context(CORES);
                pim.scatter("a", data, len, type_size).unwrap();
                pim.gather("a").unwrap()
            })
        });
    }
    group.finish();
}

fn vecadd(c: &mut Criterion) {
    let mut group = c.benchmark_group("vecadd");
    let n = 10_000 * CORES;
    let a = random_words(n, 2);
    let b = random_words(n, 3);
    group.throughput(Throughput::Elements(n as u64));
    for (name, lazy) in [("lazy", true), ("eager", false)] {
        group.bench_function(name, |bench| {
            bench.iter(|| run_vecadd_with(&mut context(CORES), &a, &b, lazy).unwrap())
        });
    }
    group.finish();
}

fn histogram_variants(c: &mut Criterion) {
    let mut group = c.benchmark_group("histogram");
    let data = histogram_input(10_000 * CORES, 4);
    group.throughput(Throughput::Elements(data.len() as u64));
    for bins in [256, 1024, 4096] {
        for policy in [ReductionPolicy::Shared, ReductionPolicy::Private] {
            group.bench_with_input(
                BenchmarkId::new(policy.to_string(), bins),
                &bins,
                |b, &bins| {
                    b.iter(|| run_histogram(&mut context_with(CORES, policy), &data, bins).unwrap())
                },
            );
        }
    }
    group.finish();
}

criterion_group!(benches, scatter_gather, vecadd, histogram_variants);
criterion_main!(benches);
