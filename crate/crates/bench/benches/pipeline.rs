use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stepwise_core::association::{extract_associations, AssociationConfig};
use stepwise_core::bda::bda;
use stepwise_core::fixtures::{random_association_world, sandwich_fsm, step_trace_fixture, translating_square_video, SandwichCase};
use stepwise_core::frames::MemoryFrames;
use stepwise_core::fsm::{compile, simulate};
use stepwise_core::labeling::{propagate_labels, LabelProject, PropagationParams};
use stepwise_core::segmentation::{interaction_signal, segment_trace, smooth_signal};
use stepwise_core::SegmentationConfig;

fn segmentation(c: &mut Criterion) {
    let fx = step_trace_fixture(0);
    let signal = interaction_signal(&fx.trace).unwrap();
    c.bench_function("smooth_1500_frames_w21", |b| b.iter(|| smooth_signal(black_box(&signal), 21).unwrap()));
    let config = SegmentationConfig::default();
    c.bench_function("segment_trace_1500_frames", |b| b.iter(|| segment_trace(black_box(&fx.trace), &config).unwrap()));
    let detected = segment_trace(&fx.trace, &config).unwrap().segments;
    c.bench_function("bda_6x6", |b| b.iter(|| bda(black_box(&detected), black_box(&fx.manual))));
}

fn association(c: &mut Criterion) {
    let fx = step_trace_fixture(0);
    let segments = segment_trace(&fx.trace, &SegmentationConfig::default()).unwrap().segments;
    let config = AssociationConfig::default();
    c.bench_function("associate_step_trace", |b| {
        b.iter(|| extract_associations(black_box(&fx.trace), &segments, &config, None).unwrap())
    });
    let world = random_association_world(3);
    c.bench_function("associate_random_world", |b| {
        b.iter(|| extract_associations(black_box(&world.trace), &world.segments, &config, None).unwrap())
    });
}

fn fsm(c: &mut Criterion) {
    let pkg = compile(&sandwich_fsm()).unwrap();
    let trace = SandwichCase::TomatoOnBread.trace();
    c.bench_function("simulate_sandwich_case2", |b| b.iter(|| simulate(&pkg, black_box(&trace)).unwrap()));
}

fn propagation(c: &mut Criterion) {
    let (frames, truth) = translating_square_video(16, 2, 5);
    let frames = MemoryFrames::from_vec(frames);
    let project = LabelProject::new("sq", "sq.mp4", 16, &["square"])
        .relabel_keyframe(0, vec![truth[0].clone().with_label("square")])
        .unwrap();
    let params = PropagationParams::default();
    c.bench_function("propagate_16_frames", |b| {
        b.iter(|| propagate_labels(black_box(&project), 0, 15, &frames, &params).unwrap())
    });
}

criterion_group!(benches, segmentation, association, fsm, propagation);
criterion_main!(benches);
