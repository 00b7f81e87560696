use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bimanual_harness::agents::{BackendChoice, RemoteModelConfig};
use bimanual_harness::runner::{self, RunConfig, DEFAULT_EPISODES};
use bimanual_harness::scoring::DEFAULT_SIGMA;
use bimanual_harness::simulator::SimConfig;
use bimanual_harness::tasks::TaskRegistry;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bimanual", about = "Evaluate planning agents on simulated dual-arm tasks", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a batch of episodes and write logs plus a summary.
    Run(RunArgs),
    /// Run the oracle on every task and check that each one is solvable.
    Verify(VerifyArgs),
    /// Re-run a log directory from its recordings and compare scores.
    Replay(ReplayArgs),
    /// Re-aggregate the logs of an output directory.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Oracle,
    Random,
    Replay,
    Remote,
}

#[derive(Args)]
struct Common {
    /// Comma-separated task ids. Defaults to every task.
    #[arg(long, value_delimiter = ',')]
    tasks: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Alternative task catalog (TOML).
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Save rendered observations as PNG files under OUT/images.
    #[arg(long)]
    save_images: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "oracle")]
    backend: Backend,
    /// Seed for the random baseline.
    #[arg(long, default_value_t = 0)]
    random_seed: u64,
    /// Directory with recordings, for the replay backend.
    #[arg(long)]
    recordings: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable that holds the API key.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long)]
    max_retries: Option<u32>,
    #[arg(long)]
    max_in_flight: Option<usize>,
    /// TOML file with remote model settings.
    #[arg(long)]
    remote_config: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Minimum success rate per task, in percent.
    #[arg(long, default_value_t = 95.0)]
    min_sr: f64,
}

#[derive(Args)]
struct ReplayArgs {
    /// Directory containing episode logs.
    dir: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of an earlier run.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    registry: Option<PathBuf>,
}

fn registry(path: &Option<PathBuf>) -> Result<TaskRegistry, String> {
    match path {
        Some(p) => TaskRegistry::load(p).map_err(|e| e.to_string()),
        None => Ok(TaskRegistry::builtin().clone()),
    }
}

fn base_config(c: &Common, backend: BackendChoice) -> RunConfig {
    RunConfig {
        tasks: c.tasks.clone(),
        episodes: c.episodes,
        seed_base: c.seed_base,
        backend,
        sigma: c.sigma,
        parallel: c.parallel,
        out_dir: c.out.clone(),
        save_images: c.save_images,
        sim: SimConfig::default(),
        ..RunConfig::default()
    }
}

fn remote_config(a: &RunArgs) -> Result<RemoteModelConfig, String> {
    let mut cfg = match &a.remote_config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => RemoteModelConfig::default(),
    };
    if let Some(v) = &a.endpoint {
        cfg.endpoint = v.clone();
    }
    if let Some(v) = &a.model {
        cfg.model = v.clone();
    }
    if let Some(v) = &a.api_key_env {
        cfg.api_key_env = v.clone();
    }
    if let Some(v) = a.timeout_secs {
        cfg.timeout_secs = v;
    }
    if let Some(v) = a.max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = a.max_in_flight {
        cfg.max_in_flight = v;
    }
    Ok(cfg)
}

fn cmd_run(a: RunArgs) -> Result<ExitCode, String> {
    let reg = registry(&a.common.registry)?;
    let backend = match a.backend {
        Backend::Oracle => BackendChoice::Oracle,
        Backend::Random => BackendChoice::Random { seed: a.random_seed },
        Backend::Replay => BackendChoice::Replay {
            dir: a.recordings.clone().ok_or("--recordings is required with --backend replay")?,
        },
        Backend::Remote => BackendChoice::remote(remote_config(&a)?),
    };
    let cfg = base_config(&a.common, backend);
    let outcome = runner::run_batch(&cfg, &reg).map_err(|e| e.to_string())?;
    print!("{}", outcome.summary.to_text());
    eprintln!("ran {} episodes, resumed {}", outcome.ran, outcome.resumed);
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, String> {
    let reg = registry(&a.common.registry)?;
    let cfg = base_config(&a.common, BackendChoice::Oracle);
    let start = Instant::now();
    let outcome = runner::run_batch(&cfg, &reg).map_err(|e| e.to_string())?;
    let verdicts = runner::verify_summary(&outcome.summary, a.min_sr);
    let mut all = true;
    for (task, ok, value) in &verdicts {
        all &= ok;
        println!("{:<5} {task:<40} {value:>7.2}", if *ok { "ok" } else { "FAIL" });
    }
    println!("{} tasks, {:.1}s", verdicts.len(), start.elapsed().as_secs_f64());
    Ok(if all { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_replay(a: ReplayArgs) -> Result<ExitCode, String> {
    let reg = registry(&a.registry)?;
    let checks = runner::replay_dir(&a.dir, &reg, &SimConfig::default(), &bimanual_harness::render::default_views())
        .map_err(|e| e.to_string())?;
    let mut bad = 0;
    for c in &checks {
        if !c.matches() {
            bad += 1;
            println!("mismatch {} seed {}: score {} -> {}", c.task_id, c.seed, c.stored_score, c.replay_score);
        }
    }
    println!("{} episodes replayed, {} mismatched", checks.len(), bad);
    Ok(if bad == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_report(a: ReportArgs) -> Result<ExitCode, String> {
    let reg = registry(&a.registry)?;
    let summary = runner::report(&a.out, &reg).map_err(|e| e.to_string())?;
    print!("{}", summary.to_text());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Replay(a) => cmd_replay(a),
        Cmd::Report(a) => cmd_report(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
