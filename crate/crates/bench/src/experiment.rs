//! Batches of episodes over policies, ablations and occluder counts.
//!
//! Every trial gets its own scene seed (shared by all policies, so that
//! policies are compared on identical scenes) and its own episode seed.
//! Trials run on a bounded worker pool; results are merged in
//! (policy, N, trial) order whatever order they finish in.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use staxray_core::occupancy::AspectRatio;
use staxray_core::policies::{AblationMode, PolicySpec};
use staxray_core::scene::to_canonical_json;
use staxray_core::simulator::{run_episode, EpisodeConfig, EpisodeRecord, Environment, TerminalReason};
use staxray_core::SceneState;

use crate::generator::{generate_scene, GenerateError, GeneratorConfig};

/// Scene seeds tried per trial before the trial is recorded as a
/// generation failure.
pub const GENERATION_ATTEMPTS: u64 = 8;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("trial {trial} at N = {n}: {source}")]
    Generation { n: usize, trial: usize, source: GenerateError },
    #[error("i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Step cap per episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonRule {
    /// Twice the number of occluders.
    TwiceN,
    Fixed(usize),
}

impl HorizonRule {
    pub fn horizon(self, n: usize) -> usize {
        match self {
            HorizonRule::TwiceN => 2 * n,
            HorizonRule::Fixed(h) => h,
        }
    }
}

/// How unsuccessful trials enter the step statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureSteps {
    /// Failures count as the horizon.
    #[default]
    Horizon,
    /// Failures count with the steps they actually took.
    Recorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub policy: PolicySpec,
    #[serde(default)]
    pub ablation: AblationMode,
}

impl PolicyEntry {
    pub fn new(policy: PolicySpec, ablation: AblationMode) -> Self {
        PolicyEntry { policy, ablation }
    }

    pub fn label(&self) -> String {
        let p = self.policy.label();
        match self.ablation {
            AblationMode::Full => p,
            AblationMode::Dar | AblationMode::DarDestacked if self.policy == PolicySpec::Darss => self.ablation.label().into(),
            a => format!("{p} {}", a.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub name: String,
    pub policies: Vec<PolicyEntry>,
    /// Occluder counts.
    pub n: Vec<usize>,
    pub trials: usize,
    pub visibility_threshold: f64,
    pub horizon: HorizonRule,
    pub target_ratio: AspectRatio,
    pub seed: u64,
    pub failure_steps: FailureSteps,
    /// Size ranges and budget; `n` and the target ratio are set per cell.
    pub generator: GeneratorConfig,
    /// Where `run` writes its outputs unless told otherwise.
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            name: "experiment".into(),
            policies: vec![PolicyEntry::new(PolicySpec::Darss, AblationMode::Full)],
            n: vec![6, 8, 10, 12, 14, 16],
            trials: 50,
            visibility_threshold: 0.8,
            horizon: HorizonRule::TwiceN,
            target_ratio: AspectRatio::OneToOne,
            seed: 0,
            failure_steps: FailureSteps::Horizon,
            generator: GeneratorConfig::default(),
            output: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.trials == 0 {
            return Err(ExperimentError::Spec("trials must be at least 1".into()));
        }
        if self.policies.is_empty() || self.n.is_empty() {
            return Err(ExperimentError::Spec("need at least one policy and one N".into()));
        }
        if !(self.visibility_threshold > 0.0 && self.visibility_threshold <= 1.0) {
            return Err(ExperimentError::Spec(format!("visibility threshold {} outside (0, 1]", self.visibility_threshold)));
        }
        for e in &self.policies {
            e.policy.build().map_err(|err| ExperimentError::Spec(format!("{}: {err}", e.label())))?;
        }
        self.generator.validate().map_err(|e| ExperimentError::Spec(e.to_string()))
    }

    pub fn generator_for(&self, n: usize) -> GeneratorConfig {
        GeneratorConfig { n, target_ratio: self.target_ratio, ..self.generator }
    }

    /// Seed for scene generation attempt `attempt` of `trial` at `n`.
    pub fn scene_seed(&self, n: usize, trial: usize, attempt: u64) -> u64 {
        derive_seed(self.seed, &[0, n as u64, trial as u64, attempt])
    }

    pub fn episode_seed(&self, policy: usize, n: usize, trial: usize) -> u64 {
        derive_seed(self.seed, &[1, policy as u64, n as u64, trial as u64])
    }
}

/// Mixes `parts` into `master` through the ChaCha key schedule.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    for (i, p) in parts.iter().take(3).enumerate() {
        key[8 * (i + 1)..8 * (i + 2)].copy_from_slice(&p.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(parts.get(3).copied().unwrap_or(0));
    rng.next_u64()
}

/// Everything needed to rerun one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub policy: PolicySpec,
    pub episode: EpisodeConfig,
    pub n: usize,
    pub trial: usize,
    pub scene_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub label: String,
    pub setup: TrialSetup,
    pub success: bool,
    pub steps: usize,
    /// `None` when the trial never ran an episode to completion.
    pub terminal: Option<TerminalReason>,
    /// Why the trial failed without an episode result.
    pub error: Option<String>,
    /// Wall-clock seconds of every executed action.
    pub action_seconds: Vec<f64>,
    #[serde(skip)]
    pub episode: Option<EpisodeRecord>,
    #[serde(skip)]
    pub scene: Option<SceneState>,
}

impl TrialRecord {
    pub fn horizon(&self) -> usize {
        self.setup.episode.horizon
    }

    /// Steps as entered into the quartile statistics.
    pub fn counted_steps(&self, rule: FailureSteps) -> usize {
        match (self.success, rule) {
            (false, FailureSteps::Horizon) => self.horizon(),
            _ => self.steps,
        }
    }
}

/// Runs one trial. Panics and policy errors become failed records.
pub fn run_trial(env: &Environment, setup: &TrialSetup, scene: &SceneState, label: &str) -> TrialRecord {
    let mut record = TrialRecord {
        label: label.to_string(),
        setup: setup.clone(),
        success: false,
        steps: 0,
        terminal: None,
        error: None,
        action_seconds: Vec::new(),
        episode: None,
        scene: Some(scene.clone()),
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut policy = setup.policy.build().map_err(|e| e.to_string())?;
        run_episode(scene, policy.as_mut(), &setup.episode, env).map_err(|e| e.to_string())
    }));
    match outcome {
        Ok(Ok(ep)) => {
            record.success = ep.success;
            record.steps = ep.steps;
            record.terminal = Some(ep.terminal);
            record.action_seconds = ep.trace.iter().map(|s| s.wallclock_s).collect();
            record.episode = Some(ep);
        }
        Ok(Err(msg)) => record.error = Some(msg),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            record.error = Some(format!("panic: {msg}"));
        }
    }
    record
}

/// The scene for `trial` at `n`, trying fresh seeds when the generator
/// runs out of budget.
pub fn trial_scene(spec: &ExperimentSpec, env: &Environment, n: usize, trial: usize) -> Result<(u64, SceneState), ExperimentError> {
    let cfg = spec.generator_for(n);
    let mut last = None;
    for attempt in 0..GENERATION_ATTEMPTS {
        let seed = spec.scene_seed(n, trial, attempt);
        match generate_scene(&cfg, &env.renderer, seed) {
            Ok(s) => return Ok((seed, s)),
            Err(e @ GenerateError::Budget(_)) => last = Some(e),
            Err(e) => return Err(ExperimentError::Generation { n, trial, source: e }),
        }
    }
    Err(ExperimentError::Generation { n, trial, source: last.expect("at least one attempt") })
}

/// All trial records in (policy, N, trial) order.
pub fn run_experiment(spec: &ExperimentSpec, env: &Environment, workers: usize) -> Result<Vec<TrialRecord>, ExperimentError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExperimentError::Spec(format!("worker pool: {e}")))?;
    pool.install(|| {
        let cells: Vec<(usize, usize)> = spec.n.iter().flat_map(|&n| (0..spec.trials).map(move |t| (n, t))).collect();
        let scenes: Vec<Result<(u64, SceneState), String>> = cells
            .par_iter()
            .map(|&(n, t)| trial_scene(spec, env, n, t).map_err(|e| e.to_string()))
            .collect();
        let jobs: Vec<(usize, usize)> = (0..spec.policies.len()).flat_map(|p| (0..cells.len()).map(move |c| (p, c))).collect();
        Ok(jobs
            .par_iter()
            .map(|&(p, c)| {
                let entry = &spec.policies[p];
                let (n, trial) = cells[c];
                let episode = EpisodeConfig {
                    visibility_threshold: spec.visibility_threshold,
                    horizon: spec.horizon.horizon(n),
                    seed: spec.episode_seed(p, n, trial),
                    target_ratio: spec.target_ratio,
                    ablation: entry.ablation,
                    ..EpisodeConfig::new(0, 0)
                };
                match &scenes[c] {
                    Ok((scene_seed, scene)) => {
                        let setup = TrialSetup { policy: entry.policy, episode, n, trial, scene_seed: *scene_seed };
                        run_trial(env, &setup, scene, &entry.label())
                    }
                    Err(msg) => TrialRecord {
                        label: entry.label(),
                        setup: TrialSetup { policy: entry.policy, episode, n, trial, scene_seed: spec.scene_seed(n, trial, 0) },
                        success: false,
                        steps: 0,
                        terminal: None,
                        error: Some(format!("GENERATION_FAILED: {msg}")),
                        action_seconds: Vec::new(),
                        episode: None,
                        scene: None,
                    },
                }
            })
            .collect())
    })
}

/// Directory of one trial below an output directory.
pub fn trial_dir(out: &Path, r: &TrialRecord) -> PathBuf {
    let slug: String = r.label.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect();
    out.join("trials").join(slug).join(format!("n{:02}", r.setup.n)).join(format!("trial{:03}", r.setup.trial))
}

/// Writes `scene.json`, `trace.jsonl` and `summary.json` for every trial and
/// `records.json` for the batch.
pub fn persist(out: &Path, spec: &ExperimentSpec, records: &[TrialRecord]) -> Result<(), ExperimentError> {
    for r in records {
        let dir = trial_dir(out, r);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        if let Some(scene) = &r.scene {
            let p = dir.join("scene.json");
            fs::write(&p, scene.to_json()).map_err(io_err(&p))?;
        }
        if let Some(ep) = &r.episode {
            let p = dir.join("trace.jsonl");
            fs::write(&p, ep.to_trace_lines(true)).map_err(io_err(&p))?;
        }
        let p = dir.join("summary.json");
        fs::write(&p, to_canonical_json(r)).map_err(io_err(&p))?;
    }
    let p = out.join("spec.json");
    fs::write(&p, to_canonical_json(spec)).map_err(io_err(&p))?;
    let p = out.join("records.json");
    fs::write(&p, to_canonical_json(records)).map_err(io_err(&p))?;
    Ok(())
}

pub fn load_records(dir: &Path) -> Result<Vec<TrialRecord>, ExperimentError> {
    let p = dir.join("records.json");
    let text = fs::read_to_string(&p).map_err(io_err(&p))?;
    Ok(serde_json::from_str(&text)?)
}

/// Outcome of rerunning a persisted trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub record: TrialRecord,
    /// Stored and replayed traces agree, timing aside.
    pub matches: bool,
}

/// Reruns the trial stored in `dir` (or the directory holding the given
/// `summary.json`) and compares it with the stored trace.
pub fn replay(path: &Path, env: &Environment) -> Result<Replay, ExperimentError> {
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    let p = dir.join("summary.json");
    let stored: TrialRecord = serde_json::from_str(&fs::read_to_string(&p).map_err(io_err(&p))?)?;
    let p = dir.join("scene.json");
    let scene = SceneState::load(&p).map_err(|e| ExperimentError::Spec(format!("{}: {e}", p.display())))?;
    let record = run_trial(env, &stored.setup, &scene, &stored.label);
    let p = dir.join("trace.jsonl");
    let matches = match (fs::read_to_string(&p), &record.episode) {
        (Ok(text), Some(ep)) => strip_timing(&text) == strip_timing(&ep.to_trace_lines(false)),
        (Err(_), None) => stored.error.is_some() && record.error.is_some(),
        _ => false,
    };
    Ok(Replay { matches: matches && record.success == stored.success && record.steps == stored.steps, record })
}

/// Parsed trace lines with every `wallclock_s` set to zero.
pub fn strip_timing(trace: &str) -> Vec<serde_json::Value> {
    trace
        .lines()
        .map(|line| {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap_or(serde_json::Value::Null);
            if let Some(w) = v.get_mut("wallclock_s") {
                *w = serde_json::json!(0.0);
            }
            v
        })
        .collect()
}
