//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured numbers (run with `--nocapture` to see them).
//!
//! Heavy artifacts (the desk-scale training run, the stacking evaluation,
//! the embedder, and the max-height runs) are built once and cached under
//! `target/acceptance_cache`; delete that directory to rebuild everything
//! from scratch. Criteria that assert runtime budgets read the wall time
//! recorded by the original (uncached) run.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use stacklab_core::eval::{
    run_baseline, EvalReport, KindReport, MatchThresholds, ModelKind, StackingParams,
};
use stacklab_core::model::{
    composite_tape, encode_segments, encode_segments_tape, frame_segments, load_model,
    render_objects_tape, segments_input, simulate_physics, simulate_physics_tape, ModelConfig,
    Nets, ObjectSet,
};
use stacklab_core::nn::check::max_rel_err;
use stacklab_core::nn::kernels::{ConvCfg, ConvTCfg};
use stacklab_core::nn::{GradStore, NodeId, ParamId, ParamSet, Tape, Tensor};
use stacklab_core::plan::{plan_max_height, train_embedder, ActionSampler, CemConfig, Embedder};
use stacklab_core::train::{train, FeatureLossNet, TrainConfig};
use stacklab_core::world::{
    clamp_to_world, count_pairs, generate_dataset, render_frame, sample_block, settle, GenConfig,
    Scene, WorldCfg,
};

const TRAIN_PAIRS: u64 = 5_000;
const TRAIN_EPOCHS: usize = 30;
const TRAIN_SEED: u64 = 1234;
const SUITE_SIZE: usize = 50;
const SUITE_SEED: u64 = 2026;
const EVAL_SEED: u64 = 7;
const WORKERS: usize = 2;

fn cache_dir() -> PathBuf {
    let mut dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    dir.pop();
    dir.pop();
    dir.join("target").join("acceptance_cache")
}

/// FNV-1a over the checkpoint bytes; derived results cached on disk carry it
/// so they go stale when the model is retrained.
fn checkpoint_fingerprint() -> String {
    let bytes = std::fs::read(cache_dir().join("run").join("model.ckpt")).expect("checkpoint");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

// ---------------------------------------------------------------------------
// shared artifacts
// ---------------------------------------------------------------------------

struct TrainedModel {
    params: ParamSet<f32>,
    nets: Nets,
    holdout_mse0: f64,
    epoch_totals: Vec<f64>,
    elapsed_secs: f64,
}

fn trained() -> &'static TrainedModel {
    static CELL: OnceLock<TrainedModel> = OnceLock::new();
    CELL.get_or_init(|| {
        let cache = cache_dir();
        let data = cache.join("data");
        let run = cache.join("run");
        let ckpt = run.join("model.ckpt");
        let summary_path = run.join("acceptance_summary.json");

        if !(ckpt.exists() && summary_path.exists()) {
            if count_pairs(&data).unwrap_or(0) != TRAIN_PAIRS {
                eprintln!("[acceptance] generating {TRAIN_PAIRS} training pairs...");
                generate_dataset(TRAIN_PAIRS, TRAIN_SEED, &GenConfig::default(), &data, WORKERS)
                    .expect("dataset generation");
            }
            let cfg = TrainConfig {
                dataset: data,
                out_dir: run.clone(),
                epochs: TRAIN_EPOCHS,
                batch_size: 16,
                learning_rate: 1e-3,
                seed: TRAIN_SEED,
                l2_weight: 1.0,
                feat_weight: 0.1,
                holdout_frac: 0.05,
                checkpoint_every: 5,
                workers: WORKERS,
                feat_channels: vec![16, 32, 64],
                model: ModelConfig::default(),
            };
            eprintln!("[acceptance] training desk-scale model ({TRAIN_PAIRS} pairs, {TRAIN_EPOCHS} epochs)...");
            let outcome = train(&cfg).expect("training run");
            let elapsed = outcome.elapsed_secs;
            let summary = serde_json::json!({
                "elapsed_secs": elapsed,
                "holdout_mse0": outcome.holdout_mse0,
                "holdout_mse1": outcome.holdout_mse1,
                "epoch_totals": outcome.epoch_totals,
                "steps": outcome.steps,
            });
            std::fs::write(&summary_path, serde_json::to_vec_pretty(&summary).unwrap())
                .expect("summary write");
            eprintln!("[acceptance] training done in {elapsed:.0}s");
        } else {
            eprintln!("[acceptance] reusing cached training run at {}", run.display());
        }

        let summary: serde_json::Value =
            serde_json::from_slice(&std::fs::read(&summary_path).unwrap()).unwrap();
        let (params, nets) = load_model::<f32>(&ckpt).expect("checkpoint loads");
        TrainedModel {
            params,
            nets,
            holdout_mse0: summary["holdout_mse0"].as_f64().unwrap(),
            epoch_totals: summary["epoch_totals"]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_f64().unwrap())
                .collect(),
            elapsed_secs: summary["elapsed_secs"].as_f64().unwrap(),
        }
    })
}

fn goal_suite() -> &'static Vec<stacklab_core::eval::GoalCase> {
    static CELL: OnceLock<Vec<stacklab_core::eval::GoalCase>> = OnceLock::new();
    CELL.get_or_init(|| generate_goal_suite_cached())
}

fn generate_goal_suite_cached() -> Vec<stacklab_core::eval::GoalCase> {
    stacklab_core::eval::generate_goal_suite(SUITE_SIZE, SUITE_SEED)
}

struct StackingArtifacts {
    report: EvalReport,
    elapsed_secs: f64,
}

fn stacking() -> &'static StackingArtifacts {
    static CELL: OnceLock<StackingArtifacts> = OnceLock::new();
    CELL.get_or_init(|| {
        let path = cache_dir().join("stacking_report.json");
        let model = trained();
        let fingerprint = checkpoint_fingerprint();
        if path.exists() {
            let v: serde_json::Value =
                serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
            if v["checkpoint"].as_str() == Some(fingerprint.as_str()) {
                eprintln!("[acceptance] reusing cached stacking report");
                return StackingArtifacts {
                    report: serde_json::from_value(v["report"].clone()).unwrap(),
                    elapsed_secs: v["elapsed_secs"].as_f64().unwrap(),
                };
            }
            eprintln!("[acceptance] cached stacking report is stale; rerunning");
        }
        let goals = goal_suite();
        let thresholds = MatchThresholds::default();
        let sweep = MatchThresholds::sweep();
        let sp = StackingParams {
            cem: CemConfig::default(),
            seed: EVAL_SEED,
            workers: WORKERS,
            learned: Some((&model.params, &model.nets)),
            embedder: None,
        };
        let mut report = EvalReport {
            seed: EVAL_SEED,
            cem: sp.cem,
            thresholds,
            sweep: sweep.clone(),
            kinds: Default::default(),
        };
        let t0 = Instant::now();
        for kind in [
            ModelKind::Full,
            ModelKind::NoPhysics,
            ModelKind::OraclePixels,
            ModelKind::OracleObjects,
        ] {
            eprintln!("[acceptance] stacking eval: {}", kind.token());
            let kr = run_baseline(kind, goals, &sp, &thresholds, &sweep).expect("baseline run");
            eprintln!("[acceptance]   {} accuracy {:.1}%", kind.token(), kr.accuracy);
            report.kinds.insert(kind.token().to_string(), kr);
        }
        let elapsed = t0.elapsed().as_secs_f64();
        let body = serde_json::json!({ "elapsed_secs": elapsed, "checkpoint": fingerprint, "report": report });
        std::fs::create_dir_all(cache_dir()).unwrap();
        std::fs::write(&path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
        StackingArtifacts {
            report,
            elapsed_secs: elapsed,
        }
    })
}

struct EmbedderArtifacts {
    #[allow(dead_code)]
    embedder: Embedder<f32>,
    val_median_l2: f64,
    embedder_accuracy: f64,
}

fn embedder_artifacts() -> &'static EmbedderArtifacts {
    static CELL: OnceLock<EmbedderArtifacts> = OnceLock::new();
    CELL.get_or_init(|| {
        let cache = cache_dir();
        let ckpt = cache.join("embedder.ckpt");
        let report_path = cache.join("embedder_report.json");
        let model = trained();
        let fingerprint = checkpoint_fingerprint();
        if ckpt.exists() && report_path.exists() {
            let v: serde_json::Value =
                serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
            if v["checkpoint"].as_str() == Some(fingerprint.as_str()) {
                eprintln!("[acceptance] reusing cached embedder");
                return EmbedderArtifacts {
                    embedder: Embedder::load(&ckpt).unwrap(),
                    val_median_l2: v["val_median_l2"].as_f64().unwrap(),
                    embedder_accuracy: v["embedder_accuracy"].as_f64().unwrap(),
                };
            }
            eprintln!("[acceptance] cached embedder is stale; refitting");
        }
        eprintln!("[acceptance] fitting embedder (10k actions)...");
        let (embedder, report) =
            train_embedder(&model.params, &model.nets, 10_000, EVAL_SEED, 30, WORKERS)
                .expect("embedder training");
        eprintln!(
            "[acceptance] embedder val median L2 {:.4} (q95 {:.4})",
            report.val_median_l2, report.val_q95_l2
        );

        eprintln!("[acceptance] planning the suite with the embedder fast path...");
        let goals = goal_suite();
        let sp = StackingParams {
            cem: CemConfig::default(),
            seed: EVAL_SEED,
            workers: WORKERS,
            learned: Some((&model.params, &model.nets)),
            embedder: Some(&embedder),
        };
        let kr = run_baseline(
            ModelKind::Full,
            goals,
            &sp,
            &MatchThresholds::default(),
            &MatchThresholds::sweep(),
        )
        .expect("embedder-substituted run");
        eprintln!("[acceptance] embedder-substituted accuracy {:.1}%", kr.accuracy);

        embedder.save(&ckpt).unwrap();
        let body = serde_json::json!({
            "checkpoint": fingerprint,
            "val_median_l2": report.val_median_l2,
            "val_mean_l2": report.val_mean_l2,
            "val_q95_l2": report.val_q95_l2,
            "embedder_accuracy": kr.accuracy,
        });
        std::fs::write(&report_path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
        EmbedderArtifacts {
            embedder,
            val_median_l2: report.val_median_l2,
            embedder_accuracy: kr.accuracy,
        }
    })
}

// ---------------------------------------------------------------------------
// finite-difference scaffolding (forward passes only)
// ---------------------------------------------------------------------------

/// Central differences over a deterministic sample of tensor entries.
fn fd_sampled(
    params: &mut ParamSet<f64>,
    id: ParamId,
    step: f64,
    indices: &[usize],
    mut loss: impl FnMut(&ParamSet<f64>) -> f64,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let orig = params.get(id).data()[i];
        params.get_mut(id).data_mut()[i] = orig + step;
        let up = loss(params);
        params.get_mut(id).data_mut()[i] = orig - step;
        let down = loss(params);
        params.get_mut(id).data_mut()[i] = orig;
        out.push((up - down) / (2.0 * step));
    }
    out
}

fn sample_indices(numel: usize, cap: usize, seed: u64) -> Vec<usize> {
    if numel <= cap {
        return (0..numel).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = (0..cap).map(|_| rng.random_range(0..numel)).collect();
    picked.sort();
    picked.dedup();
    picked
}

/// Checks every parameter of a graph against sampled finite differences.
/// Entries near a rectifier kink pick up O(step) bias at the default step;
/// borderline entries are re-measured at a finer step before judging.
fn check_graph(
    params: &mut ParamSet<f64>,
    tol: f64,
    cap: usize,
    build: impl Fn(&mut Tape<'_, f64>) -> NodeId,
) -> f64 {
    let grads: GradStore<f64> = {
        let mut tape = Tape::new(params);
        let loss = build(&mut tape);
        tape.backward(loss).unwrap()
    };
    let mut worst = 0.0f64;
    for id in 0..params.len() {
        let idx = sample_indices(params.get(id).numel(), cap, 0xfd + id as u64);
        let eval = |p: &ParamSet<f64>| -> f64 {
            let mut tape = Tape::new(p);
            let loss = build(&mut tape);
            tape.value(loss)[0]
        };
        let fd = fd_sampled(params, id, 1e-5, &idx, eval);
        for (slot, &i) in idx.iter().enumerate() {
            let analytic = grads.get(id)[i];
            let mut err = rel_err(analytic, fd[slot]);
            if err >= tol / 2.0 {
                let refined = fd_sampled(params, id, 1e-6, &[i], eval)[0];
                err = err.min(rel_err(analytic, refined));
            }
            if err >= tol {
                // An entry sitting on a rectifier kink has no two-sided
                // derivative; the analytic gradient must then match one of
                // the one-sided differences.
                let h = 1e-6;
                let orig = params.get(id).data()[i];
                let mid = eval(params);
                params.get_mut(id).data_mut()[i] = orig + h;
                let up = eval(params);
                params.get_mut(id).data_mut()[i] = orig - h;
                let down = eval(params);
                params.get_mut(id).data_mut()[i] = orig;
                let fwd = (up - mid) / h;
                let bwd = (mid - down) / h;
                let one_sided = rel_err(analytic, fwd).min(rel_err(analytic, bwd));
                let kinked = rel_err(fwd, bwd) > tol;
                assert!(
                    kinked && one_sided < tol.max(1e-4 * 10.0),
                    "param `{}` entry {i}: central rel err {err}, one-sided {one_sided}",
                    params.name(id)
                );
                continue;
            }
            worst = worst.max(err);
        }
    }
    worst
}

fn rel_err(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(fd.abs()).max(1e-6);
    (analytic - fd).abs() / denom
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------------------
// criterion 1: gradient correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_layer = 0.0f64;

    // conv2d, stride-2 encoder geometry
    {
        let mut params = ParamSet::new();
        params.add("x", Tensor::new(vec![1, 2, 6, 6], rand_vec(&mut rng, 72)).unwrap());
        params.add("w", Tensor::new(vec![3, 2, 4, 4], rand_vec(&mut rng, 96)).unwrap());
        params.add("b", Tensor::new(vec![3], rand_vec(&mut rng, 3)).unwrap());
        let err = check_graph(&mut params, 1e-4, 64, |tape| {
            let (x, w, b) = (tape.param(0), tape.param(1), tape.param(2));
            let y = tape.conv2d(x, w, b, ConvCfg { kernel: 4, stride: 2, pad: 1 }).unwrap();
            let y = tape.leaky_relu(y, 0.1);
            tape.sum_all(y)
        });
        worst_layer = worst_layer.max(err);
    }
    // transposed conv, both decoder geometries
    for (k, pad, out_pad) in [(5usize, 2usize, 1usize), (6, 2, 0)] {
        let mut params = ParamSet::new();
        params.add("x", Tensor::new(vec![1, 2, 3, 3], rand_vec(&mut rng, 18)).unwrap());
        params.add("w", Tensor::new(vec![2, 3, k, k], rand_vec(&mut rng, 6 * k * k)).unwrap());
        params.add("b", Tensor::new(vec![3], rand_vec(&mut rng, 3)).unwrap());
        let err = check_graph(&mut params, 1e-4, 64, |tape| {
            let (x, w, b) = (tape.param(0), tape.param(1), tape.param(2));
            let y = tape
                .conv2d_t(x, w, b, ConvTCfg { kernel: k, stride: 2, pad, out_pad })
                .unwrap();
            let y = tape.sigmoid(y);
            tape.sum_all(y)
        });
        worst_layer = worst_layer.max(err);
    }
    // linear + pair ops + mse
    {
        let mut params = ParamSet::new();
        params.add("x", Tensor::new(vec![4, 3], rand_vec(&mut rng, 12)).unwrap());
        params.add("w", Tensor::new(vec![5, 6], rand_vec(&mut rng, 30)).unwrap());
        params.add("b", Tensor::new(vec![5], rand_vec(&mut rng, 5)).unwrap());
        let target = Tensor::new(vec![4, 5], rand_vec(&mut rng, 20)).unwrap();
        let err = check_graph(&mut params, 1e-4, 64, move |tape| {
            let (x, w, b) = (tape.param(0), tape.param(1), tape.param(2));
            let pairs = tape.pair_concat(x).unwrap(); // [12, 6]
            let h = tape.linear(pairs, w, b).unwrap(); // [12, 5]
            let h = tape.leaky_relu(h, 0.1);
            let sums = tape.pair_sum_rows(h, 4).unwrap(); // [4, 5]
            tape.mse(sums, &target).unwrap()
        });
        worst_layer = worst_layer.max(err);
    }
    // composite
    {
        let mut params = ParamSet::new();
        params.add("imgs", Tensor::new(vec![3, 2, 4, 4], rand_vec(&mut rng, 96)).unwrap());
        params.add("heats", Tensor::new(vec![3, 1, 4, 4], rand_vec(&mut rng, 48)).unwrap());
        let target = Tensor::new(vec![2, 4, 4], rand_vec(&mut rng, 32)).unwrap();
        let err = check_graph(&mut params, 1e-4, 64, move |tape| {
            let (i, h) = (tape.param(0), tape.param(1));
            let out = tape.composite(i, h).unwrap();
            tape.mse(out, &target).unwrap()
        });
        worst_layer = worst_layer.max(err);
    }

    // end-to-end miniature: perception -> physics -> render -> composite ->
    // pixel + feature losses
    let cfg = ModelConfig::miniature();
    let (mut params, nets) = Nets::build::<f64>(&cfg, 101);
    let featnet = FeatureLossNet::build(&mut params, &[2, 4], 101);
    let segs: Vec<Vec<f64>> = (0..2).map(|_| rand_vec(&mut rng, 3 * 64)).collect();
    let i0 = Tensor::new(vec![3, 8, 8], rand_vec(&mut rng, 192)).unwrap();
    let i1 = Tensor::new(vec![3, 8, 8], rand_vec(&mut rng, 192)).unwrap();
    // Feature-loss targets are constants of the loss; computing them inside
    // the closure would make finite differences see the target shift when a
    // frozen extractor weight is perturbed.
    let target_maps = featnet.features(&params, i0.data(), 8, 0.1);
    let worst_e2e = {
        let segs = segs.clone();
        check_graph(&mut params, 1e-3, 48, move |tape| {
            let input = segments_input(tape, 8, &segs);
            let objs = encode_segments_tape(tape, &nets, input).unwrap();
            let objs_bar = simulate_physics_tape(tape, &nets, objs).unwrap();
            let (im0, h0) = render_objects_tape(tape, &nets, objs).unwrap();
            let (im1, h1) = render_objects_tape(tape, &nets, objs_bar).unwrap();
            let p0 = composite_tape(tape, im0, h0).unwrap();
            let p1 = composite_tape(tape, im1, h1).unwrap();
            let l0 = tape.mse(p0, &i0).unwrap();
            let l1 = tape.mse(p1, &i1).unwrap();
            // feature term on the reconstruction
            let maps = &target_maps;
            let fmap = {
                let pm = {
                    let mut nodes = Vec::new();
                    let mut cur = tape.reshape(p0, vec![1, 3, 8, 8]).unwrap();
                    for layer in &featnet.convs {
                        let (w, b) = (tape.param(layer.w), tape.param(layer.b));
                        cur = tape
                            .conv2d(cur, w, b, ConvCfg { kernel: 4, stride: 2, pad: 1 })
                            .unwrap();
                        cur = tape.leaky_relu(cur, 0.1);
                        nodes.push(cur);
                    }
                    nodes
                };
                let mut losses = Vec::new();
                for (node, target) in pm.iter().zip(maps.iter()) {
                    let shape = tape.shape(*node).to_vec();
                    let t = Tensor::new(shape, target.clone()).unwrap();
                    losses.push(tape.mse(*node, &t).unwrap());
                }
                tape.add_scalars(&losses).unwrap()
            };
            let fmap = tape.scale(fmap, 0.1);
            tape.add_scalars(&[l0, l1, fmap]).unwrap()
        })
    };

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 1 must finish in under a minute, took {elapsed:.1}s");
    println!(
        "criterion 1 PASS: layer FD rel err < 1e-4 (worst {worst_layer:.2e}), end-to-end miniature < 1e-3 (worst {worst_e2e:.2e}), {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// criterion 2: physics-equation oracle
// ---------------------------------------------------------------------------

fn naive_linear(x: &[f64], w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let (dout, din) = (w.shape()[0], w.shape()[1]);
    let mut y = vec![0.0; dout];
    for o in 0..dout {
        let mut acc = b.data()[o];
        for i in 0..din {
            acc += w.data()[o * din + i] * x[i];
        }
        y[o] = acc;
    }
    y
}

fn naive_mlp(params: &ParamSet<f64>, mlp: &stacklab_core::model::Mlp, x: &[f64], slope: f64) -> Vec<f64> {
    let mut cur = x.to_vec();
    let last = mlp.layers.len() - 1;
    for (i, layer) in mlp.layers.iter().enumerate() {
        cur = naive_linear(&cur, params.get(layer.w), params.get(layer.b));
        if i != last {
            for v in cur.iter_mut() {
                if *v < 0.0 {
                    *v *= slope;
                }
            }
        }
    }
    cur
}

#[test]
fn criterion_2_physics_equation_oracle() {
    let t0 = Instant::now();
    let (params, nets) = Nets::build::<f64>(&ModelConfig::default(), 202);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for n in [0usize, 1, 2, 5, 8] {
        let objs = ObjectSet::from_rows(256, rand_vec(&mut rng, n * 256));
        let got = simulate_physics(&params, &nets, &objs);
        assert_eq!(got.len(), n);
        // explicit double-loop evaluation of the update equation
        for k in 0..n {
            let mut want = naive_mlp(&params, &nets.physics.trans, objs.vec(k), 0.1);
            for j in 0..n {
                if j == k {
                    continue;
                }
                let mut pair = objs.vec(k).to_vec();
                pair.extend_from_slice(objs.vec(j));
                let term = naive_mlp(&params, &nets.physics.interact, &pair, 0.1);
                for i in 0..256 {
                    want[i] += term[i];
                }
            }
            for i in 0..256 {
                want[i] += objs.vec(k)[i];
                let err = (got.vec(k)[i] - want[i]).abs();
                assert!(err < 1e-10, "n={n} k={k} i={i} err={err}");
                worst = worst.max(err);
            }
        }
        // bit-exact permutation equivariance
        if n >= 2 {
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let mut permuted = ObjectSet::empty(256);
            for &k in &perm {
                permuted.push(objs.vec(k));
            }
            let got_p = simulate_physics(&params, &nets, &permuted);
            for (pos, &k) in perm.iter().enumerate() {
                let a: Vec<u64> = got_p.vec(pos).iter().map(|v| v.to_bits()).collect();
                let b: Vec<u64> = got.vec(k).iter().map(|v| v.to_bits()).collect();
                assert_eq!(a, b, "n={n} row {k} not bit-exact under permutation");
            }
        }
    }
    println!(
        "criterion 2 PASS: double-loop oracle matched within 1e-10 (worst {worst:.2e}) and permutations are bit-exact, {:.1}s",
        t0.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// criterion 3: compositing
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_compositing() {
    let t0 = Instant::now();
    let (params, nets) = Nets::build::<f64>(&ModelConfig::default(), 303);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let hw = 64 * 64;

    // N = 1: composite equals the object's image bit-exactly
    let objs = ObjectSet::from_rows(256, rand_vec(&mut rng, 256));
    let (images, heats) = stacklab_core::model::render_objects(&params, &nets, &objs);
    let out = stacklab_core::model::composite(&params, &nets, &images, &heats, 1);
    let a: Vec<u64> = out.iter().map(|v| v.to_bits()).collect();
    let b: Vec<u64> = images.iter().map(|v| v.to_bits()).collect();
    assert_eq!(a, b, "single-object composite must be that image bit-exactly");

    // weights sum to 1 and joint permutation invariance, random sets
    for n in [2usize, 3, 5] {
        let images = rand_vec(&mut rng, n * 3 * hw);
        let heats = rand_vec(&mut rng, n * hw);
        let weights = stacklab_core::model::composite_weights(&heats, n, hw);
        for p in 0..hw {
            let s: f64 = (0..n).map(|k| weights[k * hw + p]).sum();
            assert!((s - 1.0).abs() < 1e-6, "weights sum {s} at pixel {p}");
        }
        let out = stacklab_core::model::composite(&params, &nets, &images, &heats, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(1);
        let mut pi = Vec::new();
        let mut ph = Vec::new();
        for &k in &perm {
            pi.extend_from_slice(&images[k * 3 * hw..(k + 1) * 3 * hw]);
            ph.extend_from_slice(&heats[k * hw..(k + 1) * hw]);
        }
        let out_p = stacklab_core::model::composite(&params, &nets, &pi, &ph, n);
        for i in 0..out.len() {
            assert!((out[i] - out_p[i]).abs() < 1e-6, "permutation moved pixel {i}");
        }
    }
    println!(
        "criterion 3 PASS: weights sum to 1 within 1e-6, N=1 bit-exact, permutation-invariant within 1e-6, {:.1}s",
        t0.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// criterion 4: simulator properties
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_simulator_properties() {
    let t0 = Instant::now();
    let world = WorldCfg::default();
    let scenes = 10_000u64;
    for seed in 0..scenes {
        let mut rng = ChaCha8Rng::seed_from_u64(0x40_0000 + seed);
        let n = rng.random_range(0..7);
        // physically valid random starts: arbitrary heights, no interpenetration
        let mut blocks: Vec<stacklab_core::Block> = Vec::new();
        for _ in 0..n {
            let mut b = sample_block(&mut rng, &world);
            for _ in 0..50 {
                b.y = rng.random_range(world.platform_top..world.height - b.height());
                if blocks.iter().all(|o| !o.intersects(&b)) {
                    break;
                }
            }
            if blocks.iter().all(|o| !o.intersects(&b)) {
                blocks.push(b);
            }
        }
        let scene = Scene { blocks, world };
        let settled = settle(&scene);
        assert!(!settled.has_overlap(), "overlap at seed {seed}");
        assert_eq!(settled, settle(&settled), "not idempotent at seed {seed}");
        for (b_in, b_out) in scene.blocks.iter().zip(&settled.blocks) {
            let clamped = clamp_to_world(b_in, &world);
            assert!(
                b_out.y <= clamped.y + 1e-9,
                "block raised at seed {seed}: {} -> {}",
                clamped.y,
                b_out.y
            );
        }
        // raster masks stay pairwise exclusive by construction; every settled
        // block must still be visible
        if seed % 50 == 0 {
            let frame = render_frame(&settled);
            for (i, seg) in frame.segments.iter().enumerate() {
                assert!(seg.iter().any(|&m| m), "block {i} invisible at seed {seed}");
            }
        }
    }

    // dataset determinism: byte-identical regeneration
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    generate_dataset(40, 4242, &GenConfig::default(), &a, 1).unwrap();
    generate_dataset(40, 4242, &GenConfig::default(), &b, 2).unwrap();
    for i in 0..40u64 {
        for name in ["frame0.png", "frame1.png", "meta.json"] {
            let fa = std::fs::read(stacklab_core::world::pair_dir(&a, i).join(name)).unwrap();
            let fb = std::fs::read(stacklab_core::world::pair_dir(&b, i).join(name)).unwrap();
            assert_eq!(fa, fb, "pair {i} {name} differs");
        }
    }

    let elapsed = t0.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "criterion 4 must finish in under 5 minutes, took {elapsed:.1}s");
    println!(
        "criterion 4 PASS: idempotence (exact), gravity monotonicity, no-overlap on {scenes} scenes; dataset regeneration byte-identical, {elapsed:.1}s"
    );
}

// ---------------------------------------------------------------------------
// criterion 5: training sanity
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_training_sanity() {
    let model = trained();
    assert!(
        model.elapsed_secs < 4.0 * 3600.0,
        "desk-scale training took {:.0}s, over the 4h budget",
        model.elapsed_secs
    );
    assert!(
        model.holdout_mse0 <= 0.01,
        "held-out reconstruction MSE {} exceeds 0.01",
        model.holdout_mse0
    );
    assert!(model.epoch_totals.len() >= 5);
    for i in 0..4 {
        assert!(
            model.epoch_totals[i + 1] < model.epoch_totals[i],
            "epoch-averaged loss not strictly decreasing over the first 5 epochs: {:?}",
            &model.epoch_totals[..5]
        );
    }
    println!(
        "criterion 5 PASS: {TRAIN_PAIRS} pairs x {TRAIN_EPOCHS} epochs in {:.0}s (< 4h), held-out reconstruction MSE {:.5} <= 0.01, first-5-epoch losses strictly decreasing",
        model.elapsed_secs, model.holdout_mse0
    );
}

/// Companion checks to criterion 5 that need the trained model: a random
/// initialization must score worse than the trained one, and predicting the
/// settled frame from its own segments must beat predicting it from the
/// observed frame through physics.
#[test]
fn trained_model_orders_against_baselines() {
    let model = trained();
    let pairs: Vec<stacklab_core::train::PairTensors<f32>> = (0..50)
        .map(|i| {
            stacklab_core::train::PairTensors::from_pair(
                &stacklab_core::world::generate_pair(0xe7a1, i, &GenConfig::default()),
                64,
            )
        })
        .collect();
    let (trained_mse0, trained_mse1) =
        stacklab_core::train::holdout_mse(&model.params, &model.nets, &pairs, WORKERS);
    let (rand_params, rand_nets) = Nets::build::<f32>(&ModelConfig::default(), 0xdead);
    let (rand_mse0, _) = stacklab_core::train::holdout_mse(&rand_params, &rand_nets, &pairs, WORKERS);
    assert!(
        rand_mse0 > trained_mse0,
        "random init ({rand_mse0:.4}) must score worse than trained ({trained_mse0:.4})"
    );

    let raw: Vec<stacklab_core::TrainingPair> = (0..50)
        .map(|i| stacklab_core::world::generate_pair(0xe7a1, i, &GenConfig::default()))
        .collect();
    let (direct, through) = stacklab_core::eval::reconstruction_vs_prediction(
        &model.params,
        &model.nets,
        &raw,
        WORKERS,
    );
    assert!(
        direct <= through + 1e-4,
        "encoding the settled frame directly ({direct:.5}) should not lose to the physics route ({through:.5})"
    );
    println!(
        "trained-model orderings: random-init mse {rand_mse0:.4} > trained {trained_mse0:.4}; direct settled-frame mse {direct:.5} <= through-physics {through:.5} (prediction mse1 {trained_mse1:.5})"
    );
}

/// Dense-grid version of the planner's score landscape: for a single-cube
/// goal, the same cube scored over a grid of release poses must attain its
/// minimum in the goal's column, height-invariant.
#[test]
fn trained_grid_minimum_sits_in_the_goal_column() {
    let model = trained();
    let world = WorldCfg::default();
    let goal_scene = Scene::with_blocks(vec![stacklab_core::Block::new(
        stacklab_core::BlockShape::Cube,
        4.25,
        world.platform_top,
        stacklab_core::Orientation::Deg0,
        0.4,
    )]);
    let goal_frame = render_frame(&goal_scene);
    let goals = encode_segments(
        &model.params,
        &model.nets,
        &frame_segments::<f32>(&goal_frame),
    );
    let scorer = stacklab_core::plan::LearnedScorer::new(&model.params, &model.nets, goals);

    let mut actions = Vec::new();
    for xi in 0..50 {
        for hi in 0..20 {
            actions.push(stacklab_core::plan::Action {
                shape: stacklab_core::BlockShape::Cube,
                x: 0.5 + 7.0 * xi as f64 / 49.0,
                drop_h: world.platform_top + 6.0 * hi as f64 / 19.0,
                orientation: stacklab_core::Orientation::Deg0,
                hue: 0.4,
            });
        }
    }
    use stacklab_core::plan::ActionScorer;
    let scores = scorer.score_batch(&actions, &Scene::empty(), &[0]);
    let best = scores
        .iter()
        .min_by(|a, b| a.distance.total_cmp(&b.distance))
        .unwrap();
    assert!(
        (best.action.x - 4.25).abs() < 0.5,
        "grid minimum at x={:.2}, expected near the goal column 4.25",
        best.action.x
    );
    println!(
        "grid minimum: x={:.2} drop_h={:.2} (goal column 4.25), distance {:.3}",
        best.action.x, best.action.drop_h, best.distance
    );
}

// ---------------------------------------------------------------------------
// criterion 6: stacking ordering
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_stacking_ordering() {
    let art = stacking();
    assert!(
        art.elapsed_secs < 2.0 * 3600.0,
        "stacking eval took {:.0}s, over the 2h budget",
        art.elapsed_secs
    );
    let k = |kind: ModelKind| -> &KindReport { &art.report.kinds[kind.token()] };
    let full = k(ModelKind::Full);
    let nophys = k(ModelKind::NoPhysics);
    let pixels = k(ModelKind::OraclePixels);
    let objects = k(ModelKind::OracleObjects);

    assert!(
        nophys.accuracy <= 10.0,
        "no-physics accuracy {:.1}% above the 10% band",
        nophys.accuracy
    );
    assert!(
        full.accuracy >= 50.0,
        "full-model accuracy {:.1}% below the 50% band",
        full.accuracy
    );
    assert!(
        objects.accuracy >= 90.0,
        "oracle-objects accuracy {:.1}% below the 90% band",
        objects.accuracy
    );
    assert!(full.accuracy > nophys.accuracy);
    assert!(objects.accuracy >= full.accuracy);
    for (i, thr) in art.report.sweep.iter().enumerate() {
        assert!(
            full.sweep_accuracy[i] > nophys.sweep_accuracy[i],
            "ordering full>no-physics broken at sweep {thr:?}"
        );
        assert!(
            objects.sweep_accuracy[i] >= full.sweep_accuracy[i],
            "ordering oracle-objects>=full broken at sweep {thr:?}"
        );
    }
    println!(
        "criterion 6 PASS: accuracy over {SUITE_SIZE} goals: no-physics {:.1}% <= 10, full {:.1}% >= 50, oracle-objects {:.1}% >= 90 (oracle-pixels {:.1}%); ordering holds at every sweep point; {:.0}s (< 2h)",
        nophys.accuracy, full.accuracy, objects.accuracy, pixels.accuracy, art.elapsed_secs
    );
}

// ---------------------------------------------------------------------------
// criterion 7: physics-awareness heatmap property
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_physics_awareness() {
    let art = stacking();
    let full = &art.report.kinds[ModelKind::Full.token()];
    let nophys = &art.report.kinds[ModelKind::NoPhysics.token()];

    let take = 10usize;
    let mut full_mass = 0.0;
    let mut nophys_mass = 0.0;
    for i in 0..take {
        let f = full.goals[i].first_step.expect("learned kinds record first-step stats");
        let n = nophys.goals[i].first_step.expect("learned kinds record first-step stats");
        full_mass += f.above_ground_elite_mass;
        nophys_mass += n.above_ground_elite_mass;
        assert!(
            f.first_action_ground,
            "full model's first action matched an elevated goal on goal {i}"
        );
    }
    full_mass /= take as f64;
    nophys_mass /= take as f64;
    assert!(
        full_mass < nophys_mass,
        "above-ground elite mass: full {full_mass:.3} must be strictly below no-physics {nophys_mass:.3}"
    );
    println!(
        "criterion 7 PASS: over {take} multi-level goals, above-ground first-step elite mass {full_mass:.3} (full) < {nophys_mass:.3} (no-physics); every full-model first action matched a ground-level goal"
    );
}

// ---------------------------------------------------------------------------
// criterion 8: embedder fidelity
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_embedder_fidelity() {
    let model = trained();
    let art = embedder_artifacts();

    // median pairwise distance between distinct goal-object vectors
    let goals = goal_suite();
    let mut vectors: Vec<Vec<f32>> = Vec::new();
    for g in goals {
        let objs = encode_segments(&model.params, &model.nets, &frame_segments::<f32>(&g.frame));
        for k in 0..objs.len() {
            vectors.push(objs.vec(k).to_vec());
        }
    }
    let mut dists = Vec::new();
    for i in 0..vectors.len() {
        for j in i + 1..vectors.len() {
            dists.push(stacklab_core::model::l2_distance(&vectors[i], &vectors[j]));
        }
    }
    dists.sort_by(f64::total_cmp);
    let median_pairwise = dists[dists.len() / 2];

    assert!(
        art.val_median_l2 <= 0.10 * median_pairwise,
        "embedder median L2 {:.4} above 10% of median inter-object distance {:.4}",
        art.val_median_l2,
        median_pairwise
    );

    let full_acc = stacking().report.kinds[ModelKind::Full.token()].accuracy;
    let delta = (full_acc - art.embedder_accuracy).abs();
    assert!(
        delta <= 10.0,
        "embedder substitution moved suite accuracy by {delta:.1} points ({full_acc:.1}% -> {:.1}%)",
        art.embedder_accuracy
    );
    println!(
        "criterion 8 PASS: embedder median L2 {:.4} <= 10% of median inter-object distance {:.4}; substitution moved accuracy {:.1}% -> {:.1}% (|delta| {delta:.1} <= 10)",
        art.val_median_l2, median_pairwise, full_acc, art.embedder_accuracy
    );
}

// ---------------------------------------------------------------------------
// criterion 9: max-height task
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_max_height() {
    let path = cache_dir().join("maxheight.json");
    let model = trained();
    let fingerprint = checkpoint_fingerprint();
    let cached: Option<Vec<f64>> = if path.exists() {
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
        if v["checkpoint"].as_str() == Some(fingerprint.as_str()) {
            eprintln!("[acceptance] reusing cached max-height runs");
            Some(serde_json::from_value(v["heights"].clone()).unwrap())
        } else {
            eprintln!("[acceptance] cached max-height runs are stale; rerunning");
            None
        }
    } else {
        None
    };
    let heights: Vec<f64> = if let Some(h) = cached {
        h
    } else {
        let world = WorldCfg::default();
        let sampler = ActionSampler::cubes_only(world);
        let cem = CemConfig { iterations: 3, samples: 300, elite_frac: 0.10 };
        let heights: Vec<f64> = (0..10)
            .map(|run| {
                let trace = plan_max_height(
                    &model.params,
                    &model.nets,
                    3,
                    &sampler,
                    &cem,
                    0x9a9 + run,
                    WORKERS,
                );
                let h = trace.built.max_top() - world.platform_top;
                eprintln!("[acceptance] max-height run {run}: ground-truth height {h:.2}");
                h
            })
            .collect();
        std::fs::create_dir_all(cache_dir()).unwrap();
        let body = serde_json::json!({ "checkpoint": fingerprint, "heights": heights });
        std::fs::write(&path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
        heights
    };
    let successes = heights.iter().filter(|&&h| h >= 2.0).count();
    assert!(
        successes >= 8,
        "only {successes}/10 runs reached a 2-unit tower: {heights:?}"
    );
    println!(
        "criterion 9 PASS: {successes}/10 seeded budget-3 cube runs reached ground-truth height >= 2 units ({heights:?})"
    );
}
