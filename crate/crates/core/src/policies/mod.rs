//! Decision policies and the ablation variants.
//!
//! Every policy turns the current observation into a ranked action list;
//! the episode loop executes the first entry that is still feasible.

mod baseline;
mod darss;
mod mcts;
mod oracle;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::{gen_destacks, Action, ActionConfig, ActionKind};
use crate::observer::{Observation, Renderer};
use crate::occupancy::{AspectRatio, CandidateTable, OccupancyDistribution};
use crate::scene::SceneState;
use crate::simulator::{apply, Environment};

pub use baseline::{baseline_scores, Baseline};
pub use darss::{darss_scores, moved_columns, Darss};
pub use mcts::{run_rollouts, MctsConfig, Mctsss, RolloutModel};
pub use oracle::{oracle_actions, oracle_plan, target_visibility, Oracle, OracleConfig, OraclePlan};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("policy needs the occupancy distribution for ratio {0}")]
    MissingDistribution(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// One ranked entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub action: Action,
    pub score: f64,
}

/// Which occupancy distributions the episode loop must compute per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OccupancyNeeds {
    pub ratios: [bool; 3],
    /// Also keep the per-candidate tables for incremental updates.
    pub tables: bool,
}

/// Everything a policy may look at when ranking.
pub struct StepContext<'a> {
    pub env: &'a Environment,
    /// Ground truth. Only the oracle reads object poses it cannot see;
    /// the other policies use it for the geometry of visible objects.
    pub state: &'a SceneState,
    pub obs: &'a Observation,
    pub occupancy: &'a OccupancyDistribution,
    pub tables: &'a [Option<CandidateTable>; 3],
    pub target_ratio: AspectRatio,
    pub actions_cfg: &'a ActionConfig,
    pub ablation: AblationMode,
    pub step: usize,
    pub steps_left: usize,
    pub visibility_threshold: f64,
}

pub trait Policy: Send {
    fn name(&self) -> String;

    fn occupancy_needs(&self, target_ratio: AspectRatio) -> OccupancyNeeds;

    /// Ranked actions, best first. Only an empty `actions` may produce an
    /// empty ranking.
    fn rank(&mut self, ctx: &StepContext, actions: &[Action], rng: &mut ChaCha8Rng) -> Result<Vec<Scored>, PolicyError>;

    /// Called at the start of every episode.
    fn reset(&mut self) {}

    /// Whether per-step traces should carry the full score list.
    fn traces_scores(&self) -> bool {
        false
    }
}

/// Sorts by descending score. Ties keep the canonical action order, which
/// `actions` is expected to be in already.
pub fn rank_by_scores(actions: &[Action], scores: &[f64]) -> Vec<Scored> {
    let mut out: Vec<Scored> = actions.iter().zip(scores).map(|(a, s)| Scored { action: *a, score: *s }).collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.action.canonical_cmp(&b.action)));
    out
}

/// Policies selectable from experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicySpec {
    Darss,
    Mctsss {
        #[serde(default = "default_kmax")]
        k_max: usize,
        #[serde(default = "default_rollouts")]
        rollouts: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
    Baseline,
    Oracle,
}

fn default_kmax() -> usize {
    MctsConfig::default().k_max
}
fn default_rollouts() -> usize {
    MctsConfig::default().rollouts
}
fn default_gamma() -> f64 {
    MctsConfig::default().gamma
}

impl PolicySpec {
    pub fn build(&self) -> Result<Box<dyn Policy>, PolicyError> {
        Ok(match *self {
            PolicySpec::Darss => Box::new(Darss),
            PolicySpec::Mctsss { k_max, rollouts, gamma } => Box::new(Mctsss::new(MctsConfig { k_max, rollouts, gamma })?),
            PolicySpec::Baseline => Box::new(Baseline),
            PolicySpec::Oracle => Box::new(Oracle::new(OracleConfig::default())),
        })
    }

    pub fn label(&self) -> String {
        match *self {
            PolicySpec::Darss => "DARSS".into(),
            PolicySpec::Mctsss { k_max, rollouts, .. } => format!("MCTSSS({k_max},{rollouts})"),
            PolicySpec::Baseline => "Baseline".into(),
            PolicySpec::Oracle => "Oracle".into(),
        }
    }
}

/// Action-set restrictions used to measure what stacking buys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AblationMode {
    #[default]
    Full,
    NoStack,
    NoDestack,
    /// Pushes and rearrangements only.
    Dar,
    /// As `Dar`, on a scene whose stacks were flattened beforehand.
    #[serde(rename = "DAR_DESTACKED_PREPROCESS")]
    DarDestacked,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] =
        [AblationMode::Full, AblationMode::NoStack, AblationMode::NoDestack, AblationMode::Dar, AblationMode::DarDestacked];

    pub fn allows(self, kind: ActionKind) -> bool {
        match self {
            AblationMode::Full => true,
            AblationMode::NoStack => kind != ActionKind::Stack,
            AblationMode::NoDestack => kind != ActionKind::Destack,
            AblationMode::Dar | AblationMode::DarDestacked => matches!(kind, ActionKind::Push | ActionKind::Rearrange),
        }
    }

    /// Name suffix used in reports, e.g. `DARSS-stack`.
    pub fn label(self) -> &'static str {
        match self {
            AblationMode::Full => "",
            AblationMode::NoStack => "-stack",
            AblationMode::NoDestack => "-destack",
            AblationMode::Dar => "DAR",
            AblationMode::DarDestacked => "DAR(destacked)",
        }
    }
}

pub fn ablation_filter(actions: Vec<Action>, mode: AblationMode) -> Vec<Action> {
    if mode == AblationMode::Full {
        return actions;
    }
    actions.into_iter().filter(|a| mode.allows(a.kind)).collect()
}

/// Flattens stacks before an episode: repeatedly executes the first
/// feasible destack (in canonical order, every object eligible) until no
/// stack is left or no stacked object fits on the floor.
pub fn destack_preprocess(initial: &SceneState, _renderer: &Renderer, cfg: &ActionConfig) -> SceneState {
    let mut state = initial.clone();
    let all = |_| true;
    loop {
        let mut progressed = false;
        for a in gen_destacks(&state, &all, cfg) {
            if let Ok(next) = apply(&state, &a, cfg) {
                state = next;
                progressed = true;
                break;
            }
        }
        if !progressed {
            return state;
        }
    }
}

#[cfg(test)]
mod tests;
