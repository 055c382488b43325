use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stacklab_core::model::{encode_segments, frame_segments, simulate_physics, ModelConfig, Nets, ObjectSet};
use stacklab_core::world::{generate_pair, render_frame, sample_block, settle, GenConfig, Scene, WorldCfg};

fn bench_settle(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let world = WorldCfg::default();
    let scenes: Vec<Scene> = (0..64)
        .map(|_| {
            let blocks = (0..5)
                .map(|_| {
                    let mut b = sample_block(&mut rng, &world);
                    b.y = rng.random_range(0.5..7.0);
                    b
                })
                .collect();
            Scene { blocks, world }
        })
        .collect();
    c.bench_function("settle 5-block scene", |bench| {
        let mut i = 0;
        bench.iter(|| {
            let s = settle(&scenes[i % scenes.len()]);
            i += 1;
            s
        });
    });
}

fn bench_render(c: &mut Criterion) {
    let pair = generate_pair(5, 0, &GenConfig::default());
    c.bench_function("render 64x64 frame", |bench| {
        bench.iter(|| render_frame(&pair.scene1));
    });
}

fn bench_encode(c: &mut Criterion) {
    let (params, nets) = Nets::build::<f32>(&ModelConfig::default(), 9);
    let pair = generate_pair(5, 1, &GenConfig::default());
    let segs = frame_segments::<f32>(&pair.frame0);
    c.bench_function("encode segments (one pair)", |bench| {
        bench.iter(|| encode_segments(&params, &nets, &segs));
    });
}

fn bench_physics(c: &mut Criterion) {
    let (params, nets) = Nets::build::<f32>(&ModelConfig::default(), 9);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let objs = ObjectSet::from_rows(256, (0..5 * 256).map(|_| rng.random_range(-1.0..1.0)).collect());
    c.bench_function("physics step (5 objects)", |bench| {
        bench.iter(|| simulate_physics(&params, &nets, &objs));
    });
}

criterion_group!(benches, bench_settle, bench_render, bench_encode, bench_physics);
criterion_main!(benches);
