//! Quasi-static shelf simulator and the episode loop.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{check_feasible, gen_all, Action, ActionConfig, ActionKind, Infeasible};
use crate::observer::{Observation, Renderer, Reprojection};
use crate::occupancy::{AnalyticOccupancy, AspectRatio, CandidateGrid, CandidateTable, OccupancyDistribution};
use crate::policies::{ablation_filter, destack_preprocess, AblationMode, Policy, StepContext};
use crate::scene::{validate_scene, SceneState, Supporter, ValidationReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error("infeasible: {0}")]
    Infeasible(#[from] Infeasible),
    #[error("result fails validation: {0}")]
    Invalid(ValidationReport),
}

/// Executes `action`, re-checking feasibility first. The input is never
/// modified.
pub fn apply(state: &SceneState, action: &Action, cfg: &ActionConfig) -> Result<SceneState, ApplyError> {
    check_feasible(state, action, cfg)?;
    let mut next = state.clone();
    let subject = *state.object(action.subject).expect("checked");
    match action.kind {
        ActionKind::Push => {
            let dx = action.place.x - subject.pose.x;
            for id in action.moved(state) {
                let o = *state.object(id).expect("stack member");
                let mut p = o.pose;
                p.x = if id == action.subject { action.place.x } else { o.pose.x + dx };
                next.set_pose(id, p).expect("exists");
            }
        }
        ActionKind::Rearrange | ActionKind::Destack => {
            next.set_pose(action.subject, action.place).expect("exists");
            next.stacks.set_parent(action.subject, Supporter::Shelf);
        }
        ActionKind::Stack => {
            let s = action.supporter.expect("checked");
            next.set_pose(action.subject, action.place).expect("exists");
            next.stacks.set_parent(action.subject, Supporter::Object(s));
        }
    }
    let report = validate_scene(&next);
    if !report.is_ok() {
        return Err(ApplyError::Invalid(report));
    }
    Ok(next)
}

/// Predicted visible mask of the objects moved by `action`, z-buffered
/// against the current observation with every other object left in place.
pub fn hypothesize_mask(renderer: &Renderer, state: &SceneState, obs: &Observation, action: &Action) -> Reprojection {
    let moved = action.moved(state);
    renderer.reproject(obs, &moved, &action.placements(state))
}

/// Camera, shelf and occupancy engine shared by every episode.
#[derive(Debug, Clone)]
pub struct Environment {
    pub renderer: Renderer,
    pub occupancy: AnalyticOccupancy,
}

impl Environment {
    pub fn new(renderer: Renderer, grid: CandidateGrid, target_width: f64) -> Self {
        let occupancy = AnalyticOccupancy::new(renderer.clone(), grid, target_width);
        Environment { renderer, occupancy }
    }

    /// Default camera and shelf with a 0.06 m target footprint.
    pub fn default_shelf() -> Self {
        let shelf = crate::scene::ShelfSpec::default();
        let renderer = Renderer::new(crate::observer::CameraSpec::default_for(&shelf), shelf).expect("default camera is valid");
        Environment::new(renderer, CandidateGrid::default(), 0.06)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Success once this fraction of the target is visible.
    pub visibility_threshold: f64,
    pub horizon: usize,
    pub actions: ActionConfig,
    pub seed: u64,
    pub target_ratio: AspectRatio,
    pub ablation: AblationMode,
}

impl EpisodeConfig {
    pub fn new(horizon: usize, seed: u64) -> Self {
        EpisodeConfig {
            visibility_threshold: 0.8,
            horizon,
            actions: ActionConfig::default(),
            seed,
            target_ratio: AspectRatio::OneToOne,
            ablation: AblationMode::Full,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TerminalReason {
    TargetRevealed,
    Horizon,
    NoFeasibleAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: Action,
    /// Policy score of the executed action.
    pub score: f64,
    /// Target visibility before the action.
    pub v_t: f64,
    /// Scores of every ranked action, best first, for policies that
    /// report them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_scores: Option<Vec<f64>>,
    /// Actions offered to the policy.
    pub candidates: usize,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub policy: String,
    pub success: bool,
    pub steps: usize,
    pub terminal: TerminalReason,
    pub initial_visibility: f64,
    pub final_visibility: f64,
    pub trace: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn mean_seconds_per_action(&self) -> Option<f64> {
        (!self.trace.is_empty()).then(|| self.trace.iter().map(|s| s.wallclock_s).sum::<f64>() / self.trace.len() as f64)
    }

    /// One JSON object per step followed by a summary line. Timing is
    /// zeroed when `timing` is false so traces can be compared byte for
    /// byte.
    pub fn to_trace_lines(&self, timing: bool) -> String {
        let mut out = String::new();
        for s in &self.trace {
            let mut s = s.clone();
            if !timing {
                s.wallclock_s = 0.0;
            }
            out.push_str(&serde_json::to_string(&s).expect("serializable"));
            out.push('\n');
        }
        let summary = serde_json::json!({
            "summary": {
                "policy": self.policy,
                "success": self.success,
                "steps": self.steps,
                "terminal": self.terminal,
                "initial_visibility": self.initial_visibility,
                "final_visibility": self.final_visibility,
            }
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpisodeError {
    #[error("initial scene has no target")]
    NoTarget,
    #[error("initial scene invalid: {0}")]
    InvalidScene(ValidationReport),
    #[error("policy returned no actions at step {step} although {available} were feasible")]
    EmptyRanking { step: usize, available: usize },
    #[error("policy failed at step {step}: {message}")]
    Policy { step: usize, message: String },
    #[error("occupancy: {0}")]
    Occupancy(String),
}

/// Runs one episode. The ablation's scene preprocessing, if any, is
/// applied to `initial` first and is not counted as steps.
pub fn run_episode(
    initial: &SceneState,
    policy: &mut dyn Policy,
    cfg: &EpisodeConfig,
    env: &Environment,
) -> Result<EpisodeRecord, EpisodeError> {
    if initial.target().is_none() {
        return Err(EpisodeError::NoTarget);
    }
    let report = validate_scene(initial);
    if !report.is_ok() {
        return Err(EpisodeError::InvalidScene(report));
    }
    let mut state = if cfg.ablation == AblationMode::DarDestacked {
        destack_preprocess(initial, &env.renderer, &cfg.actions)
    } else {
        initial.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = OccupancyDistribution::new();
    let mut trace = Vec::new();
    let mut initial_visibility = None;
    policy.reset();
    let needs = policy.occupancy_needs(cfg.target_ratio);
    let name = policy.name();
    loop {
        let obs = env.renderer.render(&state);
        let v = obs.target_visibility();
        initial_visibility.get_or_insert(v);
        let finish = |terminal: TerminalReason, trace: Vec<StepRecord>| EpisodeRecord {
            policy: name.clone(),
            success: terminal == TerminalReason::TargetRevealed,
            steps: trace.len(),
            terminal,
            initial_visibility: initial_visibility.unwrap_or(v),
            final_visibility: v,
            trace,
        };
        if v >= cfg.visibility_threshold {
            return Ok(finish(TerminalReason::TargetRevealed, trace));
        }
        if trace.len() >= cfg.horizon {
            return Ok(finish(TerminalReason::Horizon, trace));
        }
        let started = Instant::now();
        let visible = |id| obs.is_visible(id);
        let actions = ablation_filter(gen_all(&state, &visible, &cfg.actions), cfg.ablation);
        if actions.is_empty() {
            return Ok(finish(TerminalReason::NoFeasibleAction, trace));
        }
        let mut tables: [Option<CandidateTable>; 3] = [None, None, None];
        let mut current: [Option<Vec<f64>>; 3] = [None, None, None];
        for ratio in AspectRatio::ALL {
            let j = ratio.index();
            if !needs.ratios[j] {
                continue;
            }
            if needs.tables {
                let table = env.occupancy.table(&obs, ratio);
                current[j] = Some(if ratio == cfg.target_ratio && v > 0.0 {
                    obs.target_column_histogram()
                } else {
                    table.distribution().to_vec()
                });
                tables[j] = Some(table);
            } else {
                current[j] = Some(env.occupancy.compute(&obs, ratio, cfg.target_ratio));
            }
        }
        history.observe(current).map_err(|e| EpisodeError::Occupancy(e.to_string()))?;
        let ctx = StepContext {
            env,
            state: &state,
            obs: &obs,
            occupancy: &history,
            tables: &tables,
            target_ratio: cfg.target_ratio,
            actions_cfg: &cfg.actions,
            ablation: cfg.ablation,
            step: trace.len(),
            steps_left: cfg.horizon - trace.len(),
            visibility_threshold: cfg.visibility_threshold,
        };
        let step = trace.len();
        let ranked = policy
            .rank(&ctx, &actions, &mut rng)
            .map_err(|e| EpisodeError::Policy { step, message: e.to_string() })?;
        if ranked.is_empty() {
            return Err(EpisodeError::EmptyRanking { step, available: actions.len() });
        }
        let sigma_scores = policy.traces_scores().then(|| ranked.iter().map(|s| s.score).collect());
        let mut executed = None;
        for s in &ranked {
            if let Ok(next) = apply(&state, &s.action, &cfg.actions) {
                executed = Some((s.action, s.score, next));
                break;
            }
        }
        let wallclock_s = started.elapsed().as_secs_f64();
        let Some((action, score, next)) = executed else {
            return Ok(finish(TerminalReason::NoFeasibleAction, trace));
        };
        trace.push(StepRecord { t: step, action, score, v_t: v, sigma_scores, candidates: actions.len(), wallclock_s });
        state = next;
    }
}

#[cfg(test)]
mod tests;
