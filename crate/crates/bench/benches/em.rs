use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use convtrace::em::{extract_ct, run_em, EmConfig};
use convtrace::synth::{
    default_tconv_kernel, gen_noise_image, gen_smoothed_noise_image, transpose_conv_upsample,
};

// Fixed iteration count so timings compare across sizes.
fn fixed_iters(alpha: usize) -> EmConfig {
    EmConfig {
        tol: f64::MIN_POSITIVE,
        max_iters: 10,
        ..EmConfig::with_alpha(alpha)
    }
}

fn bench_run_em(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_em");
    let img = gen_smoothed_noise_image(1, 128, 128);
    for alpha in 1..=3 {
        group.bench_with_input(BenchmarkId::new("alpha", alpha), &alpha, |b, &a| {
            let cfg = fixed_iters(a);
            b.iter(|| run_em(black_box(&img.g), &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_scaling(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_em_pixels");
    let cfg = fixed_iters(1);
    for side in [64usize, 128, 256] {
        let img = gen_smoothed_noise_image(2, side, side);
        group.throughput(Throughput::Elements((side * side) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(side), &img, |b, img| {
            b.iter(|| run_em(black_box(&img.r), &cfg).unwrap())
        });
    }
    group.finish();
}

fn bench_extract(c: &mut Criterion) {
    let fake = transpose_conv_upsample(&gen_noise_image(3, 64, 64), &default_tconv_kernel());
    let cfg = EmConfig::default();
    c.bench_function("extract_ct 128x128 tconv", |b| {
        b.iter(|| extract_ct(black_box(&fake), &cfg).unwrap())
    });
}

criterion_group!(benches, bench_run_em, bench_scaling, bench_extract);
criterion_main!(benches);
