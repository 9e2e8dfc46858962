use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use stencil_roofline::analysis::{analyze, sweep};
use stencil_roofline::hwdb::builtin_a100;
use stencil_roofline::kernel::{fuse, Kernel};
use stencil_roofline::simulator::{equivalence_check, Grid};
use stencil_roofline::{AnalysisRequest, DataType, SchemeKind, Sparsity, Unit};

fn bench_fuse(c: &mut Criterion) {
    let mut group = c.benchmark_group("fuse");
    for (d, r, t) in [(2usize, 1u32, 7u32), (2, 3, 8), (3, 1, 7), (3, 2, 4)] {
        let kernel = Kernel::boxed(d, r).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("box-{d}d{r}r-t{t}")),
            &t,
            |b, &t| b.iter(|| fuse(black_box(&kernel), t).unwrap()),
        );
    }
    group.finish();
}

fn request(dtype: DataType, units: &[Unit]) -> AnalysisRequest {
    AnalysisRequest::new(
        Kernel::boxed(2, 1).unwrap(),
        dtype,
        SchemeKind::Flattening,
        Some(Sparsity::FIFTEEN_32NDS),
        builtin_a100(),
        units,
    )
    .unwrap()
}

fn bench_analyze(c: &mut Criterion) {
    let req = request(DataType::Float, &[Unit::Tensor, Unit::SparseTensor]);
    c.bench_function("analyze/box-2d1r-t7-float", |b| {
        b.iter(|| analyze(black_box(&req), 7).unwrap())
    });
    let req = request(DataType::Double, &[Unit::Tensor]);
    c.bench_function("sweep/box-2d1r-t1..16-double", |b| {
        b.iter(|| sweep(black_box(&req), 1, 16).unwrap())
    });
}

fn bench_equivalence(c: &mut Criterion) {
    let mut group = c.benchmark_group("equivalence");
    group.sample_size(20);
    for (d, extent, t) in [(2usize, 64usize, 4u32), (3, 16, 2)] {
        let kernel = Kernel::boxed(d, 1).unwrap();
        let grid = Grid::from_fn(vec![extent; d], DataType::Double, |i| (i % 17) as f64).unwrap();
        group.bench_function(format!("box-{d}d1r-{extent}^{d}-t{t}"), |b| {
            b.iter(|| equivalence_check(black_box(&grid), &kernel, t, 1e-10).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_fuse, bench_analyze, bench_equivalence);
criterion_main!(benches);
