use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use orbit_sot_core::{
    aggregate_heatmap, consensus_region, crop_resample, generate, standard_suite, track_sequence, BoundingBox, Mask,
    OracleBackend, OracleNoise, PipelineConfig,
};

fn heatmap_consensus(c: &mut Criterion) {
    let (w, h) = (320, 240);
    let masks: Vec<Mask> = (0..20)
        .map(|i| {
            let o = (i % 5) as f64;
            Mask::from_box(w, h, &BoundingBox::new(100.0 + o, 80.0 + o, 12.0, 9.0).unwrap())
        })
        .collect();
    c.bench_function("heatmap_consensus_20x320x240", |b| {
        b.iter(|| {
            let heat = aggregate_heatmap(w, h, black_box(&masks)).unwrap();
            consensus_region(&heat).unwrap()
        })
    });
}

fn crop(c: &mut Criterion) {
    let scene = generate(&standard_suite(0)[0]).unwrap();
    let frame = &scene.video.frames[0];
    let cfg = PipelineConfig::default();
    let object = scene.init_box();
    c.bench_function("crop_resample_tiny", |b| b.iter(|| crop_resample(frame, black_box(&object), &cfg).unwrap()));
}

fn oracle_sequence(c: &mut Criterion) {
    let scene = generate(&standard_suite(0)[0]).unwrap();
    let truth = Arc::new(scene.truth.clone());
    let cfg = PipelineConfig::default();
    let mut group = c.benchmark_group("oracle_sequence");
    group.sample_size(20);
    group.bench_function("60_frames", |b| {
        b.iter(|| {
            let mut oracle = OracleBackend::new(truth.clone(), OracleNoise::default());
            track_sequence(&scene.video, &scene.init_box(), &cfg, &mut oracle).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, heatmap_consensus, crop, oracle_sequence);
criterion_main!(benches);
