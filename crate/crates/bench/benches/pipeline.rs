use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use transvqa::aggregation::AggregatorModel;
use transvqa::evaluation::{krcc, srocc};
use transvqa::inference::score_sequence;
use transvqa::model::{BackboneConfig, PatchQualityModel};
use transvqa::video_io::{extract_patch, Plane};
use transvqa::{ChromaFormat, Lineage, PatchGeometry, Role, TileStride, VideoSequence};

fn video(w: usize, h: usize, t: usize, seed: u64) -> VideoSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planes = (0..t)
        .map(|_| Plane::new(w, h, (0..w * h).map(|_| rng.random_range(0..256)).collect()))
        .collect();
    VideoSequence::from_luma(Lineage::child(format!("v{seed}"), Role::Reference, "s"), planes, 8, ChromaFormat::C420)
        .unwrap()
}

fn correlation(c: &mut Criterion) {
    let mut g = c.benchmark_group("correlation");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [100usize, 1000] {
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        g.bench_with_input(BenchmarkId::new("srocc", n), &n, |bench, _| bench.iter(|| srocc(black_box(&a), black_box(&b))));
        g.bench_with_input(BenchmarkId::new("krcc", n), &n, |bench, _| bench.iter(|| krcc(black_box(&a), black_box(&b))));
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let mut g = c.benchmark_group("forward");
    for geometry in [PatchGeometry::new(4, 32, 32), PatchGeometry::new(12, 64, 64)] {
        let model = PatchQualityModel::new(BackboneConfig::toy(geometry, 8), 3);
        let (r, d) = (video(geometry.width, geometry.height, geometry.frames, 1), video(geometry.width, geometry.height, geometry.frames, 2));
        let rp = extract_patch(&r, geometry, 0, 0, 0).unwrap();
        let dp = extract_patch(&d, geometry, 0, 0, 0).unwrap();
        let id = format!("{}x{}x{}", geometry.frames, geometry.height, geometry.width);
        g.bench_function(id, |bench| bench.iter(|| model.forward(black_box(&rp), black_box(&dp)).unwrap()));
    }
    g.finish();
}

fn tiling(c: &mut Criterion) {
    let geometry = PatchGeometry::new(4, 32, 32);
    let model = PatchQualityModel::new(BackboneConfig::toy(geometry, 8), 3);
    let (r, d) = (video(128, 128, 8, 1), video(128, 128, 8, 2));
    let mut g = c.benchmark_group("score_sequence");
    g.sample_size(20);
    for (name, stride) in [("tiles", TileStride::of(geometry)), ("half-overlap", TileStride { spatial: 16, temporal: 2 })] {
        g.bench_function(name, |bench| {
            bench.iter(|| score_sequence(&r, &d, &model, &AggregatorModel::Mean, stride).unwrap().sequence_score)
        });
    }
    g.finish();
}

criterion_group!(benches, correlation, forward, tiling);
criterion_main!(benches);
