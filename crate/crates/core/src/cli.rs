//! Command-line front end. Every command writes a `resolved_config.json`
//! snapshot next to its outputs; reports are JSON or CSV.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::align::{align_trajectory, AlignMode};
use crate::demos::{
    ingest, load, load_dataset, save, save_dataset, synth_generate, Dataset, DatasetMetadata, FrameOfReference,
    IngestMode, PerceptionBundle, SynthTaskSpec, TaskKind, Trajectory,
};
use crate::rollout::{check_model, evaluate, RolloutOptions, RolloutTaskSpec};
use crate::vnpolicy::{evaluate_mse, load_model, save_model, train_with, PolicyConfig};

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";
pub const THREADS_ENV: &str = "AINA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "aina", version, about = "Human-to-robot point-policy pipeline")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
    /// Worker threads (default: available parallelism). Results do not
    /// depend on it. Overridden by AINA_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    fn filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FrameArg {
    RobotBase,
    #[value(alias = "world_gravity_aligned")]
    World,
}

impl From<FrameArg> for FrameOfReference {
    fn from(f: FrameArg) -> Self {
        match f {
            FrameArg::RobotBase => FrameOfReference::RobotBase,
            FrameArg::World => FrameOfReference::WorldGravityAligned,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset: one in-scene and count−1 wild demos.
    Synth {
        #[arg(long, value_parser = parse_task)]
        task: TaskKind,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        count: u64,
        #[arg(long)]
        out: PathBuf,
        /// Generator settings as JSON (defaults to the desk-scale spec).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a trajectory from a perception bundle directory.
    Ingest {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_parser = parse_ingest_mode)]
        mode: IngestMode,
        #[arg(long, value_enum)]
        frame: FrameArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align wild trajectories to an in-scene one; writes an aligned
    /// dataset and `alignment.csv`.
    Align {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        wild_dir: PathBuf,
        #[arg(long, value_parser = parse_align_mode, default_value = "pivoted")]
        mode: AlignMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a policy on an aligned dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Policy configuration JSON (defaults to the desk-scale config).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean-squared prediction error of a model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-loop rollouts of a model in the kinematic simulator.
    Rollout {
        #[arg(long)]
        model: PathBuf,
        /// Task name (desk defaults) or a task spec JSON file.
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
        episodes: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

fn parse_ingest_mode(s: &str) -> Result<IngestMode, String> {
    s.parse()
}

fn parse_align_mode(s: &str) -> Result<AlignMode, String> {
    s.parse()
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new()
        .filter_level(cli.log_level.filter())
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn thread_count(cli: &Cli) -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => match cli.threads {
            Some(0) => Err(CliError::usage("--threads must be positive")),
            t => Ok(t),
        },
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::usage(e.to_string()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Synth {
            task,
            count,
            out,
            config,
        } => cmd_synth(*task, *count as usize, seed, out, config.as_deref()),
        Command::Ingest {
            bundle,
            mode,
            frame,
            out,
        } => cmd_ingest(bundle, *mode, (*frame).into(), out),
        Command::Align {
            scene,
            wild_dir,
            mode,
            out,
        } => cmd_align(scene, wild_dir, *mode, seed, out),
        Command::Train { data, config, out } => cmd_train(data, config.as_deref(), out),
        Command::Eval { model, data, out } => cmd_eval(model, data, out.as_deref()),
        Command::Rollout {
            model,
            task,
            episodes,
            out,
        } => cmd_rollout(model, task, *episodes as usize, seed, out.as_deref()),
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::from)?;
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Directory that holds `out` when `out` names a file.
fn out_dir(out: &Path) -> PathBuf {
    match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn snapshot(dir: &Path, value: serde_json::Value) -> CliResult<()> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join(RESOLVED_CONFIG_FILE), &value)
}

fn cmd_synth(task: TaskKind, count: usize, seed: u64, out: &Path, config: Option<&Path>) -> CliResult<()> {
    let spec = match config {
        Some(p) => {
            let s: SynthTaskSpec = read_config(p)?;
            if s.task != task {
                return Err(CliError::usage(format!(
                    "--task {} disagrees with config task {}",
                    task.name(),
                    s.task.name()
                )));
            }
            s
        }
        None => SynthTaskSpec::desk(task),
    };
    let dataset = synth_generate(&spec, count, seed)?;
    let manifest = save_dataset(&dataset, out)?;
    snapshot(out, json!({ "command": "synth", "seed": seed, "count": count, "spec": spec }))?;
    log::info!("wrote {} ({} wild demonstrations)", manifest.display(), dataset.in_the_wild.len());
    Ok(())
}

fn cmd_ingest(bundle: &Path, mode: IngestMode, frame: FrameOfReference, out: &Path) -> CliResult<()> {
    let b = PerceptionBundle::load(bundle)?;
    let t = ingest(&b, mode, frame)?;
    std::fs::create_dir_all(out_dir(out))?;
    save(&t, out)?;
    snapshot(
        &out_dir(out),
        json!({ "command": "ingest", "bundle": bundle, "mode": mode, "frame": frame }),
    )?;
    log::info!("ingested {} frames, {} points", t.len(), t.n_points());
    Ok(())
}

#[derive(Debug, Serialize)]
struct AlignRow {
    trajectory: String,
    delta_o_x: f64,
    delta_o_y: f64,
    delta_o_z: f64,
    theta_z: f64,
}

/// Trajectory files directly under `dir`, sorted by name.
fn trajectory_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "aina"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_align(scene_path: &Path, wild_dir: &Path, mode: AlignMode, seed: u64, out: &Path) -> CliResult<()> {
    let scene = load(scene_path)?;
    let files = trajectory_files(wild_dir)?;
    let mut aligned = Vec::with_capacity(files.len());
    let mut rows = Vec::with_capacity(files.len());
    for f in &files {
        let wild = load(f)?;
        let r = align_trajectory(&wild, &scene, mode).map_err(|e| CliError {
            code: 1,
            message: format!("{}: {e}", f.display()),
        })?;
        rows.push(AlignRow {
            trajectory: f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            delta_o_x: r.delta_o.x,
            delta_o_y: r.delta_o.y,
            delta_o_z: r.delta_o.z,
            theta_z: r.theta_z,
        });
        aligned.push(r.aligned);
    }
    let dataset = Dataset {
        n_points: scene.n_points(),
        in_scene: scene,
        in_the_wild: aligned,
        metadata: DatasetMetadata {
            seed,
            generator_version: concat!("aina-align/", env!("CARGO_PKG_VERSION")).to_string(),
            task: None,
            ground_truth: Vec::new(),
        },
    };
    save_dataset(&dataset, out)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(out.join("alignment.csv"))?;
    w.write_record(["trajectory", "delta_o_x", "delta_o_y", "delta_o_z", "theta_z"])?;
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    snapshot(
        out,
        json!({ "command": "align", "scene": scene_path, "wild_dir": wild_dir, "mode": mode }),
    )?;
    log::info!("aligned {} trajectories", rows.len());
    Ok(())
}

fn load_training_set(data: &Path) -> CliResult<Vec<Trajectory>> {
    Ok(load_dataset(data)?.trajectories().cloned().collect())
}

fn cmd_train(data: &Path, config: Option<&Path>, out: &Path) -> CliResult<()> {
    let config = match config {
        Some(p) => read_config::<PolicyConfig>(p)?,
        None => PolicyConfig::desk(),
    };
    config.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let trajectories = load_training_set(data)?;
    std::fs::create_dir_all(out)?;
    snapshot(out, json!({ "command": "train", "data": data, "policy": config.resolved() }))?;
    let every = (config.epochs / 20).max(1);
    let (model, log) = train_with(&trajectories, &config, |epoch, loss| {
        if epoch % every == 0 || epoch + 1 == config.epochs {
            log::info!("epoch {epoch} loss {loss:.6e}");
        }
    })?;
    save_model(&model, out.join("model.ainm"))?;
    write_json(&out.join("training_log.json"), &log)?;
    Ok(())
}

fn cmd_eval(model_path: &Path, data: &Path, out: Option<&Path>) -> CliResult<()> {
    let model = load_model(model_path)?;
    let trajectories = load_training_set(data)?;
    let mse = evaluate_mse(&model, &trajectories)?;
    let report = json!({ "model": model_path, "data": data, "trajectories": trajectories.len(), "mse": mse });
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(dir) = out {
        snapshot(dir, json!({ "command": "eval", "model": model_path, "data": data }))?;
        write_json(&dir.join("eval_report.json"), &report)?;
    }
    Ok(())
}

fn cmd_rollout(model_path: &Path, task: &str, episodes: usize, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let spec = match task.parse::<TaskKind>() {
        Ok(kind) => RolloutTaskSpec::desk(kind),
        Err(_) => {
            let spec: RolloutTaskSpec = read_config(Path::new(task))?;
            spec.check().map_err(|e| CliError::usage(e.to_string()))?;
            spec
        }
    };
    let model = load_model(model_path)?;
    check_model(&model, &spec)?;
    let opts = RolloutOptions {
        trace_dir: out.map(|d| d.join("traces")),
        ..RolloutOptions::default()
    };
    let report = evaluate(&model, &spec, episodes, seed, &opts)?;
    println!("success rate {:.3} ({} episodes)", report.success_rate, report.episodes);
    if let Some(dir) = out {
        snapshot(
            dir,
            json!({ "command": "rollout", "model": model_path, "seed": seed, "episodes": episodes, "task": spec }),
        )?;
        write_json(&dir.join("rollout_report.json"), &report)?;
    }
    Ok(())
}
