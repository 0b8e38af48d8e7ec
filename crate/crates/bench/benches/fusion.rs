use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fstack_bench::focus_stack;
use fstack_core::fuse::{fuse, Burst};
use fstack_core::{FusionConfig, FusionMethod};

fn bench(c: &mut Criterion) {
    let burst = Burst::new(focus_stack(512, 8)).unwrap();
    let mut group = c.benchmark_group("fusion_512x512x8");
    group.sample_size(10);
    for method in [
        FusionMethod::PixelContrast,
        FusionMethod::PixelVariance,
        FusionMethod::Laplacian,
        FusionMethod::Wavelet,
    ] {
        let cfg = FusionConfig {
            method,
            ..FusionConfig::default()
        };
        group.bench_function(BenchmarkId::from_parameter(format!("{method:?}")), |b| {
            b.iter(|| fuse(&burst, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
