use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use fstack_bench::bayer_frame;
use fstack_core::raw::{demosaic, pack_planes};

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("demosaic");
    for size in [256, 1024] {
        let frame = bayer_frame(size);
        group.throughput(Throughput::Elements((size * size) as u64));
        group.bench_with_input(BenchmarkId::new("malvar", size), &frame, |b, f| b.iter(|| demosaic(f)));
        group.bench_with_input(BenchmarkId::new("pack_planes", size), &frame, |b, f| {
            b.iter(|| pack_planes(f))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
