use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

use microloc::cones::DirectionCap;
use microloc::grid::{forward_transform, GridField, GridSpec};
use microloc::psido::{quantize, Multiplier, Symbol};
use microloc::pullback::kernel_point;
use microloc::seminorm::{cone_seminorm, shell_profile, BumpCutoff};

fn gaussian(spec: GridSpec) -> GridField {
    GridField::from_fn(spec, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::new((-r2).exp(), 0.0)
    })
    .unwrap()
}

fn bench_transform(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_transform");
    for (dim, n) in [(1usize, 1024usize), (2, 256)] {
        let spec = GridSpec::new(dim, n, 16.0).unwrap();
        let u = gaussian(spec);
        group.bench_with_input(BenchmarkId::new("dim", dim), &u, |b, u| {
            b.iter(|| criterion::black_box(forward_transform(u)));
        });
    }
    group.finish();
}

fn bench_seminorm(c: &mut Criterion) {
    let spec = GridSpec::new(2, 256, 8.0).unwrap();
    let u = gaussian(spec);
    let phi = BumpCutoff::new(vec![0.0, 0.0], 1.0, 2.0).unwrap();
    let cap = DirectionCap::new(vec![1.0, 0.0], 0.5).unwrap();
    c.bench_function("cone_seminorm_2d_256", |b| {
        b.iter(|| criterion::black_box(cone_seminorm(&u, 0.5, &phi, &cap, 1.0)));
    });
    c.bench_function("shell_profile_2d_256", |b| {
        b.iter(|| criterion::black_box(shell_profile(&u, &phi, &cap).unwrap()));
    });
}

fn bench_quantize(c: &mut Criterion) {
    let spec = GridSpec::new(2, 256, 8.0).unwrap();
    let u = gaussian(spec);
    let a = Symbol::multiplier(-1.0, Multiplier::BracketPower(-1.0));
    c.bench_function("quantize_multiplier_2d_256", |b| {
        b.iter(|| criterion::black_box(quantize(&a, &u).unwrap()));
    });
}

fn bench_kernel_point(c: &mut Criterion) {
    c.bench_function("appendix_kernel_point", |b| {
        b.iter(|| criterion::black_box(kernel_point(1, 2.0, &[1.5]).unwrap()));
    });
}

criterion_group!(
    benches,
    bench_transform,
    bench_seminorm,
    bench_quantize,
    bench_kernel_point
);
criterion_main!(benches);
