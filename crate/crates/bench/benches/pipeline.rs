use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use funcground::lifting::{accumulate_votes, consensus, LiftingContext};
use funcground::pipeline::{Backends, Pipeline, PipelineConfig, SceneContext};
use funcground::sampler::all_schedules;
use funcground::synth::{generate, OracleChat, OracleSegmenter, SynthScene, SynthSpec};
use funcground::{BinaryMask, LiftingConfig, PointIndex, Rle, SamplingConfig};

fn scene(frames: usize) -> SynthScene {
    let mut spec = SynthSpec::random(3);
    spec.n_frames = frames;
    generate(&spec).expect("generated scene")
}

fn pipeline(s: &SynthScene, cfg: &PipelineConfig) -> Pipeline {
    let scripts = vec![Arc::clone(&s.script)];
    let backends = Backends::new(Arc::new(OracleChat::new(scripts.clone())), Arc::new(OracleSegmenter::new(scripts)));
    Pipeline::new(cfg.clone(), backends).expect("valid config")
}

fn sampling(c: &mut Criterion) {
    let cfg = SamplingConfig::default();
    c.bench_function("schedules/L=6400,N=64,K=4", |b| b.iter(|| all_schedules(black_box(6400), &cfg).unwrap()));
}

fn kd_tree(c: &mut Criterion) {
    let s = scene(16);
    let cloud = &s.scene.cloud;
    let index = PointIndex::new(cloud);
    let eps = 2.0 * index.median_spacing();
    let queries: Vec<_> = (0..cloud.len() as u32).step_by(7).map(|i| cloud.point(i)).collect();

    let mut g = c.benchmark_group("kd_tree");
    g.bench_function(format!("build/{}", cloud.len()), |b| b.iter(|| PointIndex::new(black_box(cloud))));
    g.bench_function(format!("associate/{}", queries.len()), |b| {
        b.iter(|| queries.iter().filter_map(|&q| index.associate(q, eps)).count())
    });
    g.finish();
}

fn voting(c: &mut Criterion) {
    let s = scene(64);
    let mut cfg = PipelineConfig::default();
    cfg.sampling.frames_per_iteration = 16;
    let p = pipeline(&s, &cfg);
    let ctx = SceneContext::new(Arc::clone(&s.scene), &cfg);
    let masks = p.run_query(&ctx, &s.scene.queries[0]).result.verified_masks;
    let lift = LiftingContext::new(&s.scene, &LiftingConfig::default());
    let lcfg = LiftingConfig::default();

    let mut g = c.benchmark_group("voting");
    g.bench_function(format!("accumulate/{}_masks", masks.len()), |b| {
        b.iter(|| accumulate_votes(&s.scene, black_box(&masks), &lift, &lcfg).unwrap())
    });
    let heat = accumulate_votes(&s.scene, &masks, &lift, &lcfg).unwrap();
    g.bench_function("consensus", |b| b.iter(|| consensus(black_box(&heat), 0.7)));
    g.finish();

    c.bench_function("query/oracle_N=16", |b| b.iter(|| p.run_query(&ctx, black_box(&s.scene.queries[0]))));
}

fn rle(c: &mut Criterion) {
    let mask = BinaryMask::from_fn(640, 480, |x, y| {
        let (dx, dy) = (x as f64 - 320.0, y as f64 - 240.0);
        dx * dx / 4.0 + dy * dy < 120.0 * 120.0
    });
    let r = Rle::encode(&mask);
    let s = r.to_coco_string();

    let mut g = c.benchmark_group("rle/640x480");
    g.bench_function("encode", |b| b.iter(|| Rle::encode(black_box(&mask))));
    g.bench_function("decode", |b| b.iter(|| r.decode().unwrap()));
    g.bench_function("to_coco_string", |b| b.iter(|| r.to_coco_string()));
    g.bench_function("from_coco_string", |b| {
        b.iter_batched(|| s.clone(), |s| Rle::from_coco_string(&s, 640, 480).unwrap(), BatchSize::SmallInput)
    });
    g.finish();
}

criterion_group!(benches, sampling, kd_tree, voting, rle);
criterion_main!(benches);
