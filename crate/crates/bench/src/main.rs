use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use staxray_bench::experiment::{load_records, persist, replay, run_experiment, ExperimentError, ExperimentSpec};
use staxray_bench::generator::{generate_scene, GenerateError, GeneratorConfig};
use staxray_bench::metrics::report;
use staxray_core::simulator::Environment;

/// Benchmarks for mechanical search on shelves with stacked objects.
#[derive(Debug, Parser)]
#[command(name = "staxray", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write random scenes as JSON files.
    Generate {
        /// Number of occluders.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Only keep scenes whose target is fully hidden.
        #[arg(long)]
        occluded: bool,
        /// Generator settings (JSON); `n` and the occlusion flag are
        /// overridden by the command line.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec and write per-trial files and tables.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Defaults to the spec's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the CSV tables of a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Rerun one stored trial and compare it with its trace.
    Replay {
        /// A trial directory or its summary.json.
        #[arg(long)]
        trial: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Budget(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Budget(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Budget(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Spec(_) | ExperimentError::Json(_) => Failure::Config(e.to_string()),
            ExperimentError::Generation { source: GenerateError::Budget(_), .. } => Failure::Budget(e.to_string()),
            ExperimentError::Generation { .. } => Failure::Config(e.to_string()),
            ExperimentError::Io { .. } => Failure::Internal(e.to_string()),
        }
    }
}

fn seed_override() -> Result<Option<u64>, Failure> {
    match std::env::var("STAXRAY_SEED") {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| Failure::Config(format!("STAXRAY_SEED={s:?} is not an integer"))),
        Err(_) => Ok(None),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn internal(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Internal(format!("{}: {e}", path.display()))
}

fn generate(n: usize, count: usize, seed: u64, occluded: bool, config: Option<PathBuf>, out: PathBuf) -> Result<(), Failure> {
    let base: GeneratorConfig = match config {
        Some(p) => read_json(&p)?,
        None => GeneratorConfig::default(),
    };
    let cfg = GeneratorConfig { n, require_occluded: occluded, ..base };
    cfg.validate().map_err(|e| Failure::Config(e.to_string()))?;
    let seed = seed_override()?.unwrap_or(seed);
    let env = Environment::default_shelf();
    std::fs::create_dir_all(&out).map_err(internal(&out))?;
    for i in 0..count {
        let scene_seed = staxray_bench::experiment::derive_seed(seed, &[2, n as u64, i as u64]);
        let scene = generate_scene(&cfg, &env.renderer, scene_seed).map_err(|e| match e {
            GenerateError::Budget(_) => Failure::Budget(format!("scene {i} (seed {scene_seed}): {e}")),
            GenerateError::Config(_) => Failure::Config(e.to_string()),
        })?;
        let path = out.join(format!("scene_{i:03}.json"));
        scene.save(&path).map_err(|e| Failure::Internal(format!("{}: {e}", path.display())))?;
    }
    println!("wrote {count} scenes to {}", out.display());
    Ok(())
}

fn run(spec_path: PathBuf, out: Option<PathBuf>, workers: Option<usize>) -> Result<(), Failure> {
    let mut spec: ExperimentSpec = read_json(&spec_path)?;
    if let Some(seed) = seed_override()? {
        spec.seed = seed;
    }
    let out = out
        .or_else(|| spec.output.clone())
        .ok_or_else(|| Failure::Config("no output directory: pass --out or set `output` in the spec".into()))?;
    spec.validate()?;
    let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let env = Environment::default_shelf();
    let records = run_experiment(&spec, &env, workers)?;
    persist(&out, &spec, &records)?;
    let tables = report(&records, spec.failure_steps).map_err(|e| Failure::Internal(e.to_string()))?;
    tables.write(&out).map_err(internal(&out))?;
    for r in records.iter().filter(|r| r.error.is_some()) {
        eprintln!("{} N={} trial {}: {}", r.label, r.setup.n, r.setup.trial, r.error.as_deref().unwrap_or_default());
    }
    print!("{}", tables.table1);
    Ok(())
}

fn report_cmd(dir: PathBuf) -> Result<(), Failure> {
    let records = load_records(&dir)?;
    let rule = match read_json::<ExperimentSpec>(&dir.join("spec.json")) {
        Ok(spec) => spec.failure_steps,
        Err(_) => Default::default(),
    };
    let tables = report(&records, rule).map_err(|e| Failure::Internal(e.to_string()))?;
    tables.write(&dir).map_err(internal(&dir))?;
    print!("{}", tables.table1);
    Ok(())
}

fn replay_cmd(trial: PathBuf) -> Result<(), Failure> {
    let env = Environment::default_shelf();
    let r = replay(&trial, &env)?;
    println!(
        "{} N={} trial {}: success={} steps={} terminal={:?}",
        r.record.label, r.record.setup.n, r.record.setup.trial, r.record.success, r.record.steps, r.record.terminal
    );
    if r.matches {
        println!("replay matches the stored trace");
        Ok(())
    } else {
        Err(Failure::Internal("replay differs from the stored trace".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { n, count, seed, occluded, config, out } => generate(n, count, seed, occluded, config, out),
        Command::Run { spec, out, workers } => run(spec, out, workers),
        Command::Report { input } => report_cmd(input),
        Command::Replay { trial } => replay_cmd(trial),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
