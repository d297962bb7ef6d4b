//! `semsum`: synthetic data, splits, training, evaluation and summary export.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use semsum_core::experiment::{table_csv, ExperimentReport};
use semsum_core::trainer::write_training_log;
use semsum_core::{
    build_summary, evaluate_run, load_checkpoint, load_dataset, make_splits, peek_scalar,
    run_experiment, save_checkpoint, save_dataset, synth_generate, DatasetBundle, KnapsackValue,
    ModelState, Protocol, Scalar, ScoreMode, SplitFile, SplitSpec, SynthConfig, TableRow,
};

use config::{Precision, Preset, RunConfig};

const OUT_ENV: &str = "SEMSUM_OUT";

#[derive(Parser)]
#[command(name = "semsum", version, about = "Semantic-guided unsupervised video summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic feature dataset.
    Synth(SynthArgs),
    /// Write seeded 80/20 train/test splits for a dataset.
    MakeSplits(SplitArgs),
    /// Train one model per split and write checkpoints, logs and reports.
    Train(TrainArgs),
    /// Evaluate a checkpoint without training.
    Eval(EvalArgs),
    /// Export one video's summary mask and frame scores.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct OutDir {
    /// Output directory; overrides SEMSUM_OUT and the config file.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    videos: usize,
    /// Sampled frames per video.
    #[arg(long, default_value_t = 60)]
    frames: usize,
    #[arg(long, default_value_t = 1024)]
    d_v: usize,
    #[arg(long, default_value_t = 512)]
    d_s: usize,
    #[arg(long, default_value_t = 10)]
    segments: usize,
    #[arg(long, default_value_t = 15)]
    users: usize,
    #[arg(long, default_value = "mean-user")]
    protocol_hint: Protocol,
    /// File name, resolved against the output directory.
    #[arg(long, default_value = "synthetic.h5")]
    output: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, default_value = "splits.json")]
    output: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Clone, Copy, ValueEnum)]
enum FssaMode {
    Fused,
    CosineOnly,
    RecurrentOnly,
}

impl From<FssaMode> for ScoreMode {
    fn from(m: FssaMode) -> Self {
        match m {
            FssaMode::Fused => ScoreMode::Fused,
            FssaMode::CosineOnly => ScoreMode::CosineOnly,
            FssaMode::RecurrentOnly => ScoreMode::RecurrentOnly,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ValueRule {
    Mean,
    MeanTimesLength,
}

impl From<ValueRule> for KnapsackValue {
    fn from(v: ValueRule) -> Self {
        match v {
            ValueRule::Mean => KnapsackValue::Mean,
            ValueRule::MeanTimesLength => KnapsackValue::MeanTimesLength,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    protocol: Option<Protocol>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    splits: Option<PathBuf>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, value_enum)]
    fssa_mode: Option<FssaMode>,
    #[arg(long)]
    multimodal: Option<bool>,
    #[arg(long)]
    transformer_generator: Option<bool>,
    #[arg(long)]
    budget_ratio: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "mean-user")]
    protocol: Protocol,
    /// Split file; without it every video in the dataset is evaluated.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// Which run of the split file supplies the test videos.
    #[arg(long, default_value_t = 0)]
    run: usize,
    #[arg(long, default_value_t = 0.15)]
    budget_ratio: f64,
    #[arg(long, value_enum, default_value = "mean")]
    knapsack_value: ValueRule,
    #[arg(long, default_value = "eval_report.json")]
    output: PathBuf,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    video_id: String,
    #[arg(long, default_value_t = 0.15)]
    budget_ratio: f64,
    #[arg(long, value_enum, default_value = "mean")]
    knapsack_value: ValueRule,
    #[command(flatten)]
    out: OutDir,
}

/// Error carrying its process exit code.
struct Failure {
    code: u8,
    message: String,
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

impl From<semsum_core::Error> for Failure {
    fn from(e: semsum_core::Error) -> Self {
        use semsum_core::Error::*;
        let code = match e {
            Divergence { .. } | NonFinite(_) => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::MakeSplits(a) => splits(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Summarize(a) => summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// Flag, then `SEMSUM_OUT`, then the config value, then the working directory.
fn output_dir(flag: &OutDir, configured: Option<&Path>) -> PathBuf {
    flag.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| configured.map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn prepare(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| usage(format!("cannot create output directory {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| usage(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    write_text(path, &(text + "\n"))
}

fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(usage(format!("{what} {} does not exist", path.display())))
    }
}

fn open_dataset(path: &Path, protocol: Protocol) -> CmdResult<DatasetBundle> {
    require_file(path, "dataset")?;
    Ok(load_dataset(path, protocol)?)
}

fn synth(a: SynthArgs) -> CmdResult {
    let cfg = SynthConfig {
        n_users: a.users,
        protocol_hint: a.protocol_hint,
        ..SynthConfig::new(a.seed, a.videos, a.frames, a.d_v, a.d_s, a.segments)
    };
    let bundle = synth_generate(&cfg)?;
    let dir = output_dir(&a.out, None);
    prepare(&dir)?;
    let path = dir.join(&a.output);
    save_dataset(&bundle, &path)?;
    let frames: usize = bundle.records.iter().map(|r| r.len()).sum();
    let shots: usize = bundle.records.iter().map(|r| r.change_points.len()).sum();
    let salient = bundle
        .records
        .iter()
        .flat_map(|r| r.gt_score.iter().flatten())
        .filter(|&&s| s >= 0.5)
        .count();
    println!("{}", path.display());
    println!(
        "videos={} sampled_frames={} d_v={} d_s={} shots={} salient_fraction={:.3}",
        bundle.records.len(),
        frames,
        bundle.d_v,
        bundle.d_s,
        shots,
        salient as f64 / frames as f64
    );
    Ok(())
}

fn splits(a: SplitArgs) -> CmdResult {
    let bundle = open_dataset(&a.dataset, Protocol::MeanUser)?;
    let specs = make_splits(&bundle, a.seed, a.runs)?;
    let dir = output_dir(&a.out, None);
    prepare(&dir)?;
    let path = dir.join(&a.output);
    SplitFile::from_splits(a.seed, &specs).save(&path)?;
    println!("{}", path.display());
    Ok(())
}

fn train(a: TrainArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => {
            require_file(p, "config")?;
            RunConfig::load(p).map_err(usage)?
        }
        None => RunConfig::default(),
    };
    macro_rules! set {
        ($($flag:expr => $slot:expr),* $(,)?) => {
            $(if let Some(v) = $flag { $slot = Some(v.into()); })*
        };
    }
    set! {
        a.dataset => cfg.dataset,
        a.protocol => cfg.protocol,
        a.seed => cfg.seed,
        a.runs => cfg.runs,
        a.epochs => cfg.train.epochs,
        a.splits => cfg.splits,
        a.precision => cfg.precision,
        a.preset => cfg.model.preset,
        a.fssa_mode => cfg.model.fssa_mode,
        a.multimodal => cfg.model.multimodal,
        a.transformer_generator => cfg.model.transformer_generator,
        a.budget_ratio => cfg.train.budget_ratio,
    }
    let dataset = cfg.dataset.clone().ok_or_else(|| usage("dataset: required (config key or --dataset)"))?;
    let protocol = cfg.protocol.unwrap_or(Protocol::MeanUser);
    let bundle = open_dataset(&dataset, protocol)?;
    let run = cfg
        .resolve(bundle.d_v, bundle.d_s, output_dir(&a.out, cfg.output_dir.as_deref()))
        .map_err(|e| usage(format!("invalid config: {e}")))?;
    let split_specs = match &run.splits {
        Some(p) => {
            require_file(p, "split file")?;
            let file = SplitFile::load(p)?;
            let specs = file.to_splits();
            if specs.len() < run.runs {
                return Err(usage(format!(
                    "runs: split file has {} runs, {} requested",
                    specs.len(),
                    run.runs
                )));
            }
            specs.into_iter().take(run.runs).collect()
        }
        None => make_splits(&bundle, run.train.seed, run.runs)?,
    };
    prepare(&run.output_dir)?;
    SplitFile::from_splits(run.train.seed, &split_specs).save(run.output_dir.join("splits.json"))?;
    let report = match run.precision {
        Precision::F32 => train_runs::<f32>(&bundle, &split_specs, &run)?,
        Precision::F64 => train_runs::<f64>(&bundle, &split_specs, &run)?,
    };
    report.save_json(run.output_dir.join("report.json"))?;
    let row = TableRow::from_report(report.label.clone(), &report.report);
    write_text(&run.output_dir.join("report.csv"), &table_csv(&[row])?)?;
    println!(
        "{} {} grand_mean_f1={:.4} runs={}",
        report.label,
        report.report.protocol,
        report.report.grand_mean,
        report.report.runs.len()
    );
    Ok(())
}

fn train_runs<S: Scalar>(
    bundle: &DatasetBundle,
    splits: &[SplitSpec],
    run: &config::Resolved,
) -> CmdResult<ExperimentReport> {
    let dir = &run.output_dir;
    let mut io_error = None;
    let exp = run_experiment::<S>(bundle, splits, &run.model, &run.train, |k, outcome| {
        let run_dir = dir.join(format!("run_{k}"));
        let written = prepare(&run_dir)
            .and_then(|_| save_checkpoint(&outcome.best, run_dir.join("checkpoint.ckpt")).map_err(Failure::from))
            .and_then(|_| write_training_log(run_dir.join("train_log.jsonl"), &outcome.log).map_err(Failure::from))
            .and_then(|_| write_json(&run_dir.join("report.json"), &outcome.report));
        eprintln!(
            "run {k}: best epoch {} f1 {:.4}",
            outcome.best_epoch, outcome.best_f1
        );
        written.map_err(|f| {
            let msg = f.message.clone();
            io_error = Some(f);
            semsum_core::Error::InvalidArgument(msg)
        })
    });
    match (exp, io_error) {
        (_, Some(f)) => Err(f),
        (Ok(exp), None) => Ok(exp.report),
        (Err(e), None) => Err(e.into()),
    }
}

fn checkpoint_scalar(path: &Path) -> CmdResult<Precision> {
    require_file(path, "checkpoint")?;
    match peek_scalar(path)?.as_str() {
        "f32" => Ok(Precision::F32),
        "f64" => Ok(Precision::F64),
        other => Err(usage(format!("checkpoint has unsupported scalar `{other}`"))),
    }
}

fn eval(a: EvalArgs) -> CmdResult {
    let precision = checkpoint_scalar(&a.checkpoint)?;
    let bundle = open_dataset(&a.dataset, a.protocol)?;
    let split = match &a.splits {
        Some(p) => {
            require_file(p, "split file")?;
            let specs = SplitFile::load(p)?.to_splits();
            specs
                .get(a.run)
                .cloned()
                .ok_or_else(|| usage(format!("run: split file has no run {}", a.run)))?
        }
        None => SplitSpec {
            seed: 0,
            train_ids: vec![],
            test_ids: bundle.ids(),
        },
    };
    let report = match precision {
        Precision::F32 => {
            let state: ModelState<f32> = load_checkpoint(&a.checkpoint)?;
            evaluate_run(&state.model, &bundle, &split, a.protocol, a.budget_ratio, a.knapsack_value.into())?
        }
        Precision::F64 => {
            let state: ModelState<f64> = load_checkpoint(&a.checkpoint)?;
            evaluate_run(&state.model, &bundle, &split, a.protocol, a.budget_ratio, a.knapsack_value.into())?
        }
    };
    let dir = output_dir(&a.out, None);
    prepare(&dir)?;
    let path = dir.join(&a.output);
    write_json(&path, &report)?;
    println!("{} {} f1={:.4}", path.display(), report.protocol, report.aggregate);
    Ok(())
}

#[derive(Serialize)]
struct ScoreHistogram {
    scores: Vec<f64>,
    gt_scores: Option<Vec<f64>>,
}

fn summarize(a: SummarizeArgs) -> CmdResult {
    let precision = checkpoint_scalar(&a.checkpoint)?;
    let bundle = open_dataset(&a.dataset, Protocol::MeanUser)?;
    let record = bundle
        .get(&a.video_id)
        .ok_or_else(|| usage(format!("video_id: `{}` is not in the dataset", a.video_id)))?;
    let value = a.knapsack_value.into();
    let (mask, scores) = match precision {
        Precision::F32 => {
            let state: ModelState<f32> = load_checkpoint(&a.checkpoint)?;
            let s = state.model.score(record)?;
            (build_summary(record, &s, a.budget_ratio, value)?, s.export(&a.video_id).scores)
        }
        Precision::F64 => {
            let state: ModelState<f64> = load_checkpoint(&a.checkpoint)?;
            let s = state.model.score(record)?;
            (build_summary(record, &s, a.budget_ratio, value)?, s.export(&a.video_id).scores)
        }
    };
    let dir = output_dir(&a.out, None);
    prepare(&dir)?;
    let mask_path = dir.join(format!("{}_summary.json", a.video_id));
    let score_path = dir.join(format!("{}_scores.json", a.video_id));
    write_json(&mask_path, &mask.export(&a.video_id))?;
    let histogram = ScoreHistogram {
        scores,
        gt_scores: record.gt_score.as_ref().map(|g| g.iter().map(|&v| v as f64).collect()),
    };
    write_json(&score_path, &histogram)?;
    println!("{}", mask_path.display());
    println!("{}", score_path.display());
    println!(
        "selected_frames={} of {} shots={:?}",
        mask.selected_frames(),
        record.n_frames,
        mask.selected_shots
    );
    Ok(())
}
