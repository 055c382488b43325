//! Single entry point wiring dataset generation, training, planning, and
//! evaluation. Every run writes a manifest of its resolved configuration so
//! results can be reproduced from the same build. All randomness flows from
//! one root seed, split per component with the splitmix hash the core crate
//! documents.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stacklab_core::eval::{
    generate_goal_suite, prediction_eval, read_goal_frame, read_goal_suite, run_baseline,
    write_goal_suite, EvalReport, MatchThresholds, ModelKind, StackingParams,
};
use stacklab_core::model::{load_model, verify_canonical, ModelMeta};
use stacklab_core::nn::DType;
use stacklab_core::plan::{
    plan_and_execute, plan_max_height, train_embedder, ActionSampler, CemConfig, Embedder,
    LearnedScorer, write_score_heatmap,
};
use stacklab_core::train::{load_stored_pairs, train, FeatureLossNet, TrainConfig};
use stacklab_core::world::{generate_dataset, GenConfig, WorldCfg};

#[derive(Parser)]
#[command(
    name = "stacklab",
    version,
    about = "Learned object-centric prediction and planning in a 2-D block world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a training-pair dataset or a goal-tower suite.
    GenData(GenDataArgs),
    /// Jointly train perception, physics, and rendering from a dataset.
    Train(TrainArgs),
    /// Plan and execute a build for a goal observation.
    Plan(PlanArgs),
    /// Evaluate planner variants on a goal suite.
    EvalStacking(EvalStackingArgs),
    /// Evaluate reconstruction/prediction quality on held-out pairs.
    EvalPrediction(EvalPredictionArgs),
    /// Fit the action-to-object embedder against a trained encoder.
    TrainEmbedder(TrainEmbedderArgs),
    /// Write per-step sample-score heatmaps for a goal.
    VizScores(VizScoresArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DataKind {
    Pairs,
    Goals,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    count: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "pairs")]
    kind: DataKind,
    /// Maximum pre-settled blocks per pair.
    #[arg(long, default_value_t = 4)]
    pre_max: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config file's worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlanMode {
    Match,
    MaxHeight,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Ablation {
    None,
    NoPhysics,
}

#[derive(Args)]
struct PlanArgs {
    /// Goal directory holding goal.png and segments/ (match mode).
    #[arg(long)]
    goal: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "match")]
    mode: PlanMode,
    #[arg(long, value_enum, default_value = "none")]
    ablation: Ablation,
    #[arg(long, default_value_t = 5)]
    cem_iters: usize,
    #[arg(long, default_value_t = 1000)]
    cem_samples: usize,
    #[arg(long, default_value_t = 0.10)]
    elite_frac: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Steps for max-height mode.
    #[arg(long, default_value_t = 3)]
    budget: usize,
    /// Embedder checkpoint for the fast scoring path.
    #[arg(long)]
    embedder: Option<PathBuf>,
    /// Weight of the auxiliary pixel score terms (0 disables them).
    #[arg(long, default_value_t = 0.0)]
    aux_pixel_weight: f64,
    #[arg(long, default_value = "plan-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EvalStackingArgs {
    #[arg(long)]
    suite: PathBuf,
    /// Comma-separated planner variants.
    #[arg(long, default_value = "o2p2,no-physics,oracle-pixels,oracle-objects")]
    models: String,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    embedder: Option<PathBuf>,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    cem_iters: usize,
    #[arg(long, default_value_t = 1000)]
    cem_samples: usize,
    #[arg(long, default_value_t = 0.10)]
    elite_frac: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EvalPredictionArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    panels: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct TrainEmbedderArgs {
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 20000)]
    count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value = "embedder.ckpt")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct VizScoresArgs {
    #[arg(long)]
    goal: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "none")]
    ablation: Ablation,
    #[arg(long, default_value_t = 5)]
    cem_iters: usize,
    #[arg(long, default_value_t = 1000)]
    cem_samples: usize,
    #[arg(long, default_value_t = 0.10)]
    elite_frac: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "viz-out")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

/// A configuration problem: reported with the offending field, exit code 1.
fn config_err(field: &str, detail: impl std::fmt::Display) -> anyhow::Error {
    anyhow::anyhow!("invalid config: {field}: {detail}")
}

fn require<T>(value: Option<T>, field: &str) -> anyhow::Result<T> {
    value.ok_or_else(|| config_err(field, "missing required value"))
}

fn write_manifest(dir: &std::path::Path, body: serde_json::Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "config": body,
    });
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn load_f32_model(
    path: &std::path::Path,
) -> anyhow::Result<(stacklab_core::ParamSet<f32>, stacklab_core::Nets, ModelMeta)> {
    let meta = stacklab_core::model::load_model_meta(path)
        .map_err(|e| config_err("checkpoint", e))?;
    if meta.dtype != format!("{:?}", DType::F32) {
        return Err(config_err("checkpoint", format!("expected F32 payload, found {}", meta.dtype)));
    }
    if let Err(e) = verify_canonical(&meta) {
        eprintln!("note: {e}");
    }
    let (params, nets) = load_model::<f32>(path).map_err(|e| config_err("checkpoint", e))?;
    Ok((params, nets, meta))
}

fn cem_of(iters: usize, samples: usize, elite_frac: f64) -> anyhow::Result<CemConfig> {
    if !(0.0..=1.0).contains(&elite_frac) || elite_frac <= 0.0 {
        return Err(config_err("elite-frac", "must be in (0, 1]"));
    }
    if iters == 0 || samples == 0 {
        return Err(config_err("cem-iters/cem-samples", "must be positive"));
    }
    Ok(CemConfig { iterations: iters, samples, elite_frac })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(args) => {
            write_manifest(
                &args.out,
                serde_json::json!({
                    "command": "gen-data",
                    "count": args.count,
                    "seed": args.seed,
                    "kind": match args.kind { DataKind::Pairs => "pairs", DataKind::Goals => "goals" },
                    "pre_max": args.pre_max,
                    "workers": args.workers,
                }),
            )?;
            match args.kind {
                DataKind::Pairs => {
                    let cfg = GenConfig { max_pre: args.pre_max };
                    generate_dataset(args.count, args.seed, &cfg, &args.out, args.workers)?;
                    println!("wrote {} pairs to {}", args.count, args.out.display());
                }
                DataKind::Goals => {
                    let goals = generate_goal_suite(args.count as usize, args.seed);
                    write_goal_suite(&args.out, &goals, args.seed)?;
                    println!("wrote {} goals to {}", goals.len(), args.out.display());
                }
            }
            Ok(())
        }

        Command::Train(args) => {
            let config_path = require(args.config, "config")?;
            let mut cfg = TrainConfig::from_file(&config_path)
                .map_err(|e| config_err("config", e))?;
            if let Some(w) = args.workers {
                cfg.workers = w;
            }
            write_manifest(
                &cfg.out_dir.clone(),
                serde_json::json!({ "command": "train", "train": &cfg }),
            )?;
            let outcome = train(&cfg)?;
            println!(
                "trained {} steps; holdout mse0 {:.5}, mse1 {:.5}; checkpoint {}",
                outcome.steps,
                outcome.holdout_mse0,
                outcome.holdout_mse1,
                outcome.checkpoint.display()
            );
            Ok(())
        }

        Command::Plan(args) => {
            let checkpoint = require(args.checkpoint, "checkpoint")?;
            let cem = cem_of(args.cem_iters, args.cem_samples, args.elite_frac)?;
            let (params, nets, _) = load_f32_model(&checkpoint)?;
            let embedder = match &args.embedder {
                Some(path) => {
                    Some(Embedder::<f32>::load(path).map_err(|e| config_err("embedder", e))?)
                }
                None => None,
            };
            std::fs::create_dir_all(&args.out)?;
            write_manifest(
                &args.out,
                serde_json::json!({
                    "command": "plan",
                    "goal": args.goal,
                    "checkpoint": checkpoint,
                    "mode": match args.mode { PlanMode::Match => "match", PlanMode::MaxHeight => "max-height" },
                    "ablation": matches!(args.ablation, Ablation::NoPhysics),
                    "cem": cem,
                    "seed": args.seed,
                    "budget": args.budget,
                    "embedder": args.embedder,
                    "workers": args.workers,
                }),
            )?;

            let world = WorldCfg::default();
            let sampler = ActionSampler::all_shapes(world);
            let trace = match args.mode {
                PlanMode::Match => {
                    let goal_dir = require(args.goal, "goal")?;
                    let frame = read_goal_frame(&goal_dir)?;
                    let mut scorer = LearnedScorer::from_goal_frame(&params, &nets, &frame);
                    scorer.use_physics = args.ablation == Ablation::None;
                    scorer.embedder = embedder.as_ref();
                    scorer.aux_pixel_weight = args.aux_pixel_weight;
                    scorer.workers = args.workers;
                    plan_and_execute(&scorer, &sampler, &cem, args.seed, true)
                }
                PlanMode::MaxHeight => {
                    let sampler = ActionSampler::cubes_only(world);
                    plan_max_height(&params, &nets, args.budget, &sampler, &cem, args.seed, args.workers)
                }
            };

            for (i, step) in trace.steps.iter().enumerate() {
                write_score_heatmap(args.out.join(format!("scores_step{i}.png")), &step.samples, &world)?;
            }
            let actions = serde_json::json!({
                "actions": trace.actions,
                "built": trace.built.blocks,
                "distances": trace.steps.iter().map(|s| s.chosen.distance).collect::<Vec<_>>(),
            });
            std::fs::write(args.out.join("actions.json"), serde_json::to_vec_pretty(&actions)?)?;
            println!(
                "executed {} actions; final height {:.2}; wrote {}",
                trace.actions.len(),
                trace.built.max_top() - world.platform_top,
                args.out.join("actions.json").display()
            );
            Ok(())
        }

        Command::EvalStacking(args) => {
            let cem = cem_of(args.cem_iters, args.cem_samples, args.elite_frac)?;
            let kinds: Vec<ModelKind> = args
                .models
                .split(',')
                .map(|s| s.trim().parse().map_err(|e: String| config_err("models", e)))
                .collect::<Result<_, _>>()?;
            let goals = read_goal_suite(&args.suite)?;
            if goals.is_empty() {
                return Err(config_err("suite", "no goals found"));
            }

            let needs_ckpt = kinds.iter().any(|k| k.needs_checkpoint());
            let loaded = match (&args.checkpoint, needs_ckpt) {
                (Some(path), _) => Some(load_f32_model(path)?),
                (None, true) => return Err(config_err("checkpoint", "missing required value")),
                (None, false) => None,
            };
            let embedder = match &args.embedder {
                Some(path) => {
                    Some(Embedder::<f32>::load(path).map_err(|e| config_err("embedder", e))?)
                }
                None => None,
            };

            let thresholds = MatchThresholds::default();
            let sweep = MatchThresholds::sweep();
            let sp = StackingParams {
                cem,
                seed: args.seed,
                workers: args.workers,
                learned: loaded.as_ref().map(|(p, n, _)| (p, n)),
                embedder: embedder.as_ref(),
            };

            let mut report = EvalReport {
                seed: args.seed,
                cem,
                thresholds,
                sweep: sweep.clone(),
                kinds: Default::default(),
            };
            println!("accuracy over {} goals:", goals.len());
            for kind in kinds {
                let kr = run_baseline(kind, &goals, &sp, &thresholds, &sweep)?;
                println!("  {:>14}: {:5.1}%", kind.token(), kr.accuracy);
                report.kinds.insert(kind.token().to_string(), kr);
            }
            if let Some(dir) = args.out.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(&args.out, serde_json::to_vec_pretty(&report)?)?;
            println!("wrote {}", args.out.display());
            Ok(())
        }

        Command::EvalPrediction(args) => {
            let checkpoint = require(args.checkpoint, "checkpoint")?;
            let (params, nets, _) = load_f32_model(&checkpoint)?;
            let featnet = FeatureLossNet::attach(&params);
            let pairs = load_stored_pairs::<f32>(&args.data, nets.config.resolution)?;
            if pairs.is_empty() {
                return Err(config_err("data", "no pairs found"));
            }
            write_manifest(
                &args.out,
                serde_json::json!({
                    "command": "eval-prediction",
                    "checkpoint": checkpoint,
                    "data": args.data,
                    "panels": args.panels,
                    "workers": args.workers,
                }),
            )?;
            let report = prediction_eval(
                &params,
                &nets,
                featnet.as_ref(),
                &pairs,
                Some(&args.out),
                args.panels,
                args.workers,
            )?;
            std::fs::write(args.out.join("prediction.json"), serde_json::to_vec_pretty(&report)?)?;
            println!(
                "{} pairs: reconstruction mse {:.5}, prediction mse {:.5} -> {}",
                report.pairs,
                report.mse0,
                report.mse1,
                args.out.join("prediction.json").display()
            );
            Ok(())
        }

        Command::TrainEmbedder(args) => {
            let checkpoint = require(args.checkpoint, "checkpoint")?;
            let (params, nets, _) = load_f32_model(&checkpoint)?;
            let (embedder, report) =
                train_embedder(&params, &nets, args.count, args.seed, args.epochs, args.workers)?;
            embedder.save(&args.out)?;
            if let Some(dir) = args.out.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            let manifest = serde_json::json!({
                "version": env!("CARGO_PKG_VERSION"),
                "config": {
                    "command": "train-embedder",
                    "checkpoint": checkpoint,
                    "count": args.count,
                    "seed": args.seed,
                    "epochs": args.epochs,
                },
                "report": report,
            });
            std::fs::write(
                args.out.with_extension("manifest.json"),
                serde_json::to_vec_pretty(&manifest)?,
            )?;
            println!(
                "embedder fit on {} actions; val median L2 {:.4} -> {}",
                report.train_count,
                report.val_median_l2,
                args.out.display()
            );
            Ok(())
        }

        Command::VizScores(args) => {
            let checkpoint = require(args.checkpoint, "checkpoint")?;
            let goal_dir = require(args.goal, "goal")?;
            let cem = cem_of(args.cem_iters, args.cem_samples, args.elite_frac)?;
            let (params, nets, _) = load_f32_model(&checkpoint)?;
            let frame = read_goal_frame(&goal_dir)?;
            write_manifest(
                &args.out,
                serde_json::json!({
                    "command": "viz-scores",
                    "goal": goal_dir,
                    "checkpoint": checkpoint,
                    "ablation": matches!(args.ablation, Ablation::NoPhysics),
                    "cem": cem,
                    "seed": args.seed,
                    "workers": args.workers,
                }),
            )?;
            let world = WorldCfg::default();
            let sampler = ActionSampler::all_shapes(world);
            let mut scorer = LearnedScorer::from_goal_frame(&params, &nets, &frame);
            scorer.use_physics = args.ablation == Ablation::None;
            scorer.workers = args.workers;
            let trace = plan_and_execute(&scorer, &sampler, &cem, args.seed, true);
            for (i, step) in trace.steps.iter().enumerate() {
                write_score_heatmap(args.out.join(format!("scores_step{i}.png")), &step.samples, &world)?;
            }
            println!("wrote {} heatmaps to {}", trace.steps.len(), args.out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
