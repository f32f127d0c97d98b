use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spvlad::{
    sp_vlad_encode, vlad_encode, Codebook, DescriptorSet, NormalizationScheme, PyramidSpec,
    RegionBox,
};

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn image(rng: &mut ChaCha8Rng, regions: usize, dim: usize) -> (DescriptorSet, Array2<f64>) {
    let boxes = (0..regions)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..600.0), rng.random_range(0.0..440.0));
            RegionBox::new(x, y, 40.0, 40.0)
        })
        .collect();
    let x = uniform(rng, regions, dim);
    let set = DescriptorSet::new("bench", 640, 480, boxes, x.mapv(|v| v as f32)).unwrap();
    (set, x)
}

fn encoders(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cb = Codebook::new(uniform(&mut rng, 16, 256)).unwrap();
    let scheme = NormalizationScheme::default();
    let spec = PyramidSpec::default();

    let mut group = c.benchmark_group("encode_k16_d256");
    for regions in [100, 1000] {
        let (set, x) = image(&mut rng, regions, 256);
        group.throughput(Throughput::Elements(regions as u64));
        group.bench_with_input(BenchmarkId::new("vlad", regions), &x, |b, x| {
            b.iter(|| vlad_encode(black_box(x.view()), &cb).unwrap().normalized(&scheme))
        });
        group.bench_with_input(BenchmarkId::new("sp_vlad", regions), &set, |b, set| {
            b.iter(|| sp_vlad_encode(black_box(set), x.view(), &cb, &spec, &scheme).unwrap())
        });
    }
    group.finish();
}

fn assignment(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cb = Codebook::new(uniform(&mut rng, 16, 256)).unwrap();
    let x = uniform(&mut rng, 1000, 256);
    c.bench_function("assign_nearest_1000x256_k16", |b| {
        b.iter(|| {
            x.rows()
                .into_iter()
                .map(|r| cb.assign_nearest(r).unwrap())
                .sum::<usize>()
        })
    });
}

criterion_group!(benches, encoders, assignment);
criterion_main!(benches);
