use std::hint::black_box;

use classtrack_core::{fusion, generate, make_corruption_suite, run_experiment, ScenarioConfig, Tracker, TrackerConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn fuse_frame(c: &mut Criterion) {
    let sc = generate(&ScenarioConfig {
        num_frames: 1,
        proposals_per_frame: 10,
        ..Default::default()
    })
    .unwrap();
    let cfg = fusion::FusionConfig::default();
    c.bench_function("measure_frame_10_proposals", |b| {
        b.iter(|| fusion::measure_frame(black_box(&sc.frames[0]), &cfg).unwrap())
    });
}

fn track_sequence(c: &mut Criterion) {
    let sc = generate(&ScenarioConfig {
        num_frames: 100,
        walk_sigma: 2.0,
        ..Default::default()
    })
    .unwrap();
    c.bench_function("track_100_frames", |b| {
        b.iter(|| {
            let mut t = Tracker::new(TrackerConfig::default()).unwrap();
            t.run(black_box(&sc.frames)).unwrap()
        })
    });
}

fn corruption_suite(c: &mut Criterion) {
    let suite = make_corruption_suite(&ScenarioConfig::default(), 20).unwrap();
    let cfg = TrackerConfig::default();
    c.bench_function("corruption_suite_20", |b| b.iter(|| run_experiment(black_box(&suite), &cfg).unwrap()));
}

criterion_group!(benches, fuse_frame, track_sequence, corruption_suite);
criterion_main!(benches);
