//! `driftnav` command-line tool.
//!
//! Exit codes: 0 success, 1 invalid input (scenario, config, log schema or
//! usage), 2 runtime failure, 3 file-system error.

mod manifest;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftnav::eval::{
    emit_report, read_trajectory_csv, report_for, run_benchmark, run_episode, write_trajectory_csv, Arm, BenchConfig,
    Driver, EvalError, Metric, PreparedScenario,
};
use driftnav::exec::{set_worker_limit, Execution};
use driftnav::mdp::EvalConfig;
use driftnav::ppo::{load_checkpoint, save_checkpoint, write_metrics, PpoError, TrainConfig, Trainer};
use driftnav::scene::{load_scenario, load_scenario_dir, SceneError};

use manifest::RunManifest;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "DRIFTNAV_OUT";

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn invalid(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError {
            code: 3,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. } => CliError {
                code: 3,
                message: e.to_string(),
            },
            _ => CliError::invalid(e.to_string()),
        }
    }
}

impl From<PpoError> for CliError {
    fn from(e: PpoError) -> Self {
        match e {
            PpoError::Config(_) | PpoError::ShapeMismatch { .. } | PpoError::Checkpoint(_) => {
                CliError::invalid(e.to_string())
            }
            PpoError::Io(_) => CliError {
                code: 3,
                message: e.to_string(),
            },
            PpoError::NonFiniteLoss { .. } => CliError::runtime(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError {
                code: 3,
                message: e.to_string(),
            },
            EvalError::Format { .. } | EvalError::LengthMismatch { .. } | EvalError::Empty => {
                CliError::invalid(e.to_string())
            }
            EvalError::Setup(_) => CliError::runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "driftnav",
    version,
    about = "Drift-aware navigation: train, benchmark and replay"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scenario file utilities.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Train a waypoint policy with PPO.
    Train(TrainArgs),
    /// Run every arm over a directory of scenarios.
    Bench(BenchArgs),
    /// Run one arm on one scenario and log its trajectory.
    Run(RunArgs),
    /// Summarise a trajectory log step by step.
    Replay(ReplayArgs),
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Load and validate scenario files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Output directory [default: $DRIFTNAV_OUT/<command>, else runs/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

impl Common {
    fn out_dir(&self, command: &str) -> Result<PathBuf, CliError> {
        let dir = match &self.out {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("runs"))
                .join(command),
        };
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn execution(&self) -> Execution {
        match self.jobs {
            Some(1) => Execution::Sequential,
            Some(n) => {
                set_worker_limit(n);
                Execution::Parallel
            }
            None => Execution::Parallel,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// TOML training config; omitted keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from this checkpoint. Its config is the base unless --config is given.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_envs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Pin the feature centroid to one side (curriculum).
    #[arg(long)]
    one_sided: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "scenarios")]
    scenarios: PathBuf,
    /// LIDAR ranges, metres.
    #[arg(long, value_delimiter = ',', default_values_t = [45.0, 50.0, 55.0])]
    ranges: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// learned, learned+f, vanilla or vanilla+f.
    #[arg(long, default_value = "vanilla")]
    arm: String,
    /// Required for the learned arms.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LIDAR range override, metres.
    #[arg(long)]
    range: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Scenario(ScenarioCommand::Validate { paths }) => cmd_scenario_validate(&paths),
        Command::Train(args) => cmd_train(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Run(args) => cmd_run(&args),
        Command::Replay(args) => cmd_replay(&args.log),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}

/// Every file is checked; the worst exit code wins (IO over validation).
fn cmd_scenario_validate(paths: &[PathBuf]) -> Result<(), CliError> {
    let mut worst: Option<CliError> = None;
    for path in paths {
        match load_scenario(path) {
            Ok(s) => println!(
                "{}: ok ({}, {} m, {} feature regions, {} vehicles)",
                path.display(),
                s.name,
                s.road.length,
                s.features.len(),
                s.traffic.len()
            ),
            Err(e) => {
                let e = CliError::from(e);
                eprintln!("{}: {e}", path.display());
                if worst.as_ref().is_none_or(|w| e.code > w.code) {
                    worst = Some(e);
                }
            }
        }
    }
    match worst {
        None => Ok(()),
        Some(e) => Err(CliError {
            code: e.code,
            message: "validation failed".into(),
        }),
    }
}

fn load_policy(path: &Path) -> Result<driftnav::ppo::PolicyCheckpoint, CliError> {
    load_checkpoint(path).map_err(|e| {
        let e = CliError::from(e);
        CliError {
            code: e.code,
            message: format!("{}: {}", path.display(), e.message),
        }
    })
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut config = match (&args.config, &args.resume) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            TrainConfig::from_toml(&text).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?
        }
        (None, Some(ckpt)) => load_policy(ckpt)?.config,
        (None, None) => TrainConfig::default(),
    };
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.total_steps {
        config.total_steps = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.gamma {
        config.gamma = v;
    }
    if let Some(v) = args.n_envs {
        config.n_envs = v;
    }
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if args.one_sided {
        config.sampler.y_c_norm = Some(1.0);
    }
    config.validate()?;
    Ok(config)
}

fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let config = train_config(args)?;
    let exec = args.common.execution();
    let mut trainer = match &args.resume {
        Some(path) => Trainer::resume(load_policy(path)?, config.clone())?,
        None => Trainer::new(config.clone())?,
    };
    let out = args.common.out_dir("train")?;
    let mut manifest = RunManifest::new("train", Some(config.seed), &config)?;
    if let Some(path) = &args.config {
        manifest.input("config", path)?;
    }
    if let Some(path) = &args.resume {
        manifest.input("resume", path)?;
    }

    let start = trainer.steps();
    let mut rows = Vec::new();
    while !trainer.is_finished() {
        let row = trainer.update(exec)?;
        if row.update % 10 == 0 || trainer.is_finished() {
            eprintln!(
                "update {:>5}  steps {:>8}  reward {:>8.3}  entropy {:.3}",
                row.update, row.step, row.mean_reward, row.entropy
            );
        }
        rows.push(row);
    }

    let ckpt_path = out.join("policy.ckpt");
    save_checkpoint(&ckpt_path, &trainer.checkpoint())?;
    let metrics_path = out.join("metrics.csv");
    let f = File::create(&metrics_path).map_err(|e| CliError::io(&metrics_path, e))?;
    write_metrics(BufWriter::new(f), &rows)?;
    manifest.output("checkpoint", &ckpt_path)?;
    manifest.output("metrics", &metrics_path)?;
    manifest.write(&out)?;
    println!(
        "trained {} steps ({} -> {}); checkpoint {} sha256 {}",
        trainer.steps() - start,
        start,
        trainer.steps(),
        ckpt_path.display(),
        manifest.outputs["checkpoint"].sha256
    );
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.seeds == 0 {
        return Err(CliError::invalid("--seeds must be at least 1"));
    }
    if args.ranges.is_empty() || args.ranges.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::invalid("--ranges must be positive"));
    }
    // Fail on a bad checkpoint before any simulation starts.
    let ckpt = load_policy(&args.checkpoint)?;
    let scenarios = load_scenario_dir(&args.scenarios)?;
    if scenarios.is_empty() {
        return Err(CliError::invalid(format!(
            "no *.toml scenarios in {}",
            args.scenarios.display()
        )));
    }
    let exec = args.common.execution();
    let out = args.common.out_dir("bench")?;
    let config = BenchConfig {
        ranges: args.ranges.clone(),
        seeds: args.seeds,
        base_seed: args.base_seed,
        ..Default::default()
    };
    let mut manifest = RunManifest::new("bench", Some(config.base_seed), &config)?;
    manifest.input("checkpoint", &args.checkpoint)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&args.scenarios)
        .map_err(|e| CliError::io(&args.scenarios, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    for p in &paths {
        manifest.input(&format!("scenario:{}", p.display()), p)?;
    }

    let prepared: Vec<PreparedScenario> = scenarios.into_iter().map(PreparedScenario::new).collect();
    let run = run_benchmark(&prepared, &ckpt.policy, &config, exec);
    for c in &run.table.cells {
        if c.collisions + c.breaches > 0 {
            eprintln!(
                "{} {} range {}: {} collisions, {} breaches of {} runs",
                c.scenario,
                c.arm.label(),
                c.lidar_range,
                c.collisions,
                c.breaches,
                c.seeds
            );
        }
    }
    let files = emit_report(&out, &run, &config, Some(&args.checkpoint))?;
    for (name, path) in ["table", "summary", "runs"].iter().zip(&files) {
        manifest.output(name, path)?;
    }
    manifest.write(&out)?;

    println!(
        "{:<10} {:>6} {:<10} {:>14} {:>8}",
        "scenario", "range", "arm", "average_drift", "goals"
    );
    for c in &run.table.cells {
        let mean = c.stat(Metric::AverageDrift).mean;
        println!(
            "{:<10} {:>6} {:<10} {:>14} {:>5}/{}",
            c.scenario,
            c.lidar_range,
            c.arm.label(),
            mean.map_or("NA".to_string(), |m| format!("{m:.4}")),
            c.goals,
            c.seeds
        );
    }
    for imp in run
        .table
        .improvements()
        .iter()
        .filter(|i| i.metric == Metric::AverageDrift)
    {
        println!(
            "improvement {} range {} {} vs {}: {}",
            imp.scenario,
            imp.lidar_range,
            imp.arm.label(),
            imp.baseline.label(),
            imp.factor.map_or("NA".to_string(), |f| format!("{f:.2}x"))
        );
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let arm: Arm = args.arm.parse().map_err(CliError::invalid)?;
    let ckpt = match (&args.checkpoint, arm.is_learned()) {
        (Some(path), _) => Some(load_policy(path)?),
        (None, true) => return Err(CliError::invalid(format!("arm `{arm}` needs --checkpoint"))),
        (None, false) => None,
    };
    let mut scenario = load_scenario(&args.scenario)?;
    if let Some(r) = args.range {
        if !(r > 0.0) {
            return Err(CliError::invalid("--range must be positive"));
        }
        scenario.lidar_range = r;
    }
    let out = args.common.out_dir("run")?;
    let eval = EvalConfig::default();
    let config = BenchConfig::default();
    let prepared = PreparedScenario::new(scenario);
    let driver = match &ckpt {
        Some(c) if arm.is_learned() => Driver::Policy(&c.policy, config.planner),
        _ => Driver::Vanilla,
    };
    let env = run_episode(&prepared, driver, arm.filtering(), &eval, args.seed);
    let report = report_for(&env, arm, args.seed);

    let traj_path = out.join("trajectory.csv");
    let f = File::create(&traj_path).map_err(|e| CliError::io(&traj_path, e))?;
    write_trajectory_csv(BufWriter::new(f), env.trajectory(), env.status()).map_err(|e| CliError::io(&traj_path, e))?;
    let report_path = out.join("report.json");
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::runtime(e.to_string()))?;
    std::fs::write(&report_path, json + "\n").map_err(|e| CliError::io(&report_path, e))?;

    let mut manifest = RunManifest::new(
        "run",
        Some(args.seed),
        &serde_json::json!({ "arm": arm, "lidar_range": prepared.scenario.lidar_range, "eval": eval, "planner": config.planner }),
    )?;
    manifest.input("scenario", &args.scenario)?;
    if let Some(path) = &args.checkpoint {
        manifest.input("checkpoint", path)?;
    }
    manifest.output("trajectory", &traj_path)?;
    manifest.output("report", &report_path)?;
    manifest.write(&out)?;

    let status = format!("{:?}", report.status).to_lowercase();
    match report.metrics {
        Some(m) => println!(
            "{} {}: {status} after {:.1} s, average drift {:.4} m, final drift {:.4} m, rotational offset {:.5} rad",
            report.scenario, arm, report.duration, m.average_drift, m.final_drift, m.rotational_offset
        ),
        None => println!(
            "{} {}: {status} after {:.1} s, no drift metrics",
            report.scenario, arm, report.duration
        ),
    }
    println!("trajectory written to {}", traj_path.display());
    Ok(())
}

fn cmd_replay(path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim().is_empty() {
        println!("{}: empty log, nothing to replay", path.display());
        return Ok(());
    }
    let log =
        read_trajectory_csv(text.as_bytes()).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    if log.rows.is_empty() {
        println!("{}: empty log, nothing to replay", path.display());
        return Ok(());
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let io = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(
        w,
        "{:>5} {:>8} {:>9} {:>9} {:>10} {:>10}  event",
        "scan", "t", "x", "y", "drift", "yaw_err"
    )
    .map_err(io)?;
    let mut scan = 0;
    for (row, event) in log.rows.iter().zip(&log.events) {
        if !row.scan && event.is_empty() {
            continue;
        }
        let drift = ((row.est.x - row.gt.x).powi(2) + (row.est.y - row.gt.y).powi(2)).sqrt();
        let yaw = driftnav::scene::wrap_angle(row.est.yaw - row.gt.yaw).abs();
        let label = if row.scan {
            scan += 1;
            (scan - 1).to_string()
        } else {
            "-".to_string()
        };
        writeln!(
            w,
            "{label:>5} {:>8.2} {:>9.3} {:>9.3} {drift:>10.4} {yaw:>10.5}  {event}",
            row.t, row.gt.x, row.gt.y
        )
        .map_err(io)?;
    }
    match log.drift() {
        Ok(m) => writeln!(
            w,
            "{scan} scans: average drift {:.4} m, final drift {:.4} m, rotational offset {:.5} rad",
            m.average_drift, m.final_drift, m.rotational_offset
        )
        .map_err(io)?,
        Err(_) => writeln!(w, "no scan rows; drift undefined").map_err(io)?,
    }
    Ok(())
}
