//! Monte Carlo search over predicted depth images.
//!
//! Rollouts are independent: each picks a root action uniformly, samples
//! one of three outcomes (target revealed, back wall revealed, another
//! object revealed), and continues from the predicted image until the
//! target is revealed or the depth limit is reached. A reveal at depth `d`
//! credits `gamma^d` to the rollout's root action.
//!
//! Rollouts advance level by level. Nodes reached by several rollouts are
//! expanded once, and expansions within a level run in parallel. Each
//! rollout draws from its own RNG stream, so results do not depend on the
//! order in which work is scheduled.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::actions::{gen_all, Action, ActionConfig};
use crate::observer::reconstruct::reconstruct_scene;
use crate::observer::{Observation, Outcome, PixelRect};
use crate::occupancy::{
    column_indicator, encode_history, outcome_probabilities, AspectRatio, CandidateTable, OutcomeProbabilities,
};
use crate::scene::SceneState;
use crate::simulator::Environment;

use super::{ablation_filter, moved_columns, rank_by_scores, AblationMode, OccupancyNeeds, Policy, PolicyError, Scored, StepContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MctsConfig {
    pub k_max: usize,
    pub rollouts: usize,
    pub gamma: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig { k_max: 2, rollouts: 500, gamma: 0.9 }
    }
}

impl MctsConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.k_max == 0 {
            return Err(PolicyError::Config("k_max must be at least 1".into()));
        }
        if self.rollouts == 0 {
            return Err(PolicyError::Config("at least one rollout is required".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(PolicyError::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        Ok(())
    }
}

/// What the rollout engine needs to know about tree nodes.
pub trait RolloutModel: Sync {
    type Node: Send + Sync;

    fn num_actions(&self, node: &Self::Node) -> usize;

    fn probabilities(&self, node: &Self::Node, action: usize) -> OutcomeProbabilities;

    /// Child reached by `action` with a non-reveal `outcome`, at `depth`.
    /// `None` when the prediction is impossible; such branches earn nothing.
    fn expand(&self, node: &Self::Node, action: usize, outcome: Outcome, depth: usize) -> Option<Self::Node>;
}

struct Rollout {
    rng: ChaCha8Rng,
    root_action: usize,
    node: usize,
    reward: f64,
    active: bool,
}

/// Summed rollout rewards per root action.
pub fn run_rollouts<M: RolloutModel>(model: &M, root: M::Node, cfg: &MctsConfig, seed: u64) -> Vec<f64> {
    let n_root = model.num_actions(&root);
    let mut scores = vec![0.0; n_root];
    if n_root == 0 {
        return scores;
    }
    let mut nodes = vec![Some(root)];
    let mut probs: HashMap<(usize, usize), OutcomeProbabilities> = HashMap::new();
    let mut rollouts: Vec<Rollout> = (0..cfg.rollouts)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Rollout { rng, root_action: 0, node: 0, reward: 0.0, active: true }
        })
        .collect();
    for depth in 1..=cfg.k_max {
        // child key -> rollouts waiting for it
        let mut pending: BTreeMap<(usize, usize, bool), Vec<usize>> = BTreeMap::new();
        for (i, r) in rollouts.iter_mut().enumerate() {
            if !r.active {
                continue;
            }
            let node = nodes[r.node].as_ref().expect("active rollouts sit on live nodes");
            let n = model.num_actions(node);
            if n == 0 {
                r.active = false;
                continue;
            }
            let a = r.rng.random_range(0..n);
            if depth == 1 {
                r.root_action = a;
            }
            let p = *probs.entry((r.node, a)).or_insert_with(|| model.probabilities(node, a));
            let u: f64 = r.rng.random();
            if u < p.target {
                r.reward = cfg.gamma.powi(depth as i32);
                r.active = false;
            } else if depth == cfg.k_max {
                r.active = false;
            } else {
                let halfway = u >= p.target + p.back_wall;
                pending.entry((r.node, a, halfway)).or_default().push(i);
            }
        }
        if pending.is_empty() {
            break;
        }
        let keys: Vec<(usize, usize, bool)> = pending.keys().copied().collect();
        let children: Vec<Option<M::Node>> = keys
            .par_iter()
            .map(|&(parent, a, halfway)| {
                let outcome = if halfway { Outcome::Halfway } else { Outcome::BackWall };
                model.expand(nodes[parent].as_ref().expect("live parent"), a, outcome, depth)
            })
            .collect();
        for (key, child) in keys.iter().zip(children) {
            let alive = child.is_some();
            nodes.push(child);
            let idx = nodes.len() - 1;
            for &i in &pending[key] {
                rollouts[i].node = idx;
                rollouts[i].active = alive;
            }
        }
    }
    for r in &rollouts {
        scores[r.root_action] += r.reward;
    }
    scores
}

/// Tree node: a (predicted) image with its action set and the occupancy
/// history along the branch.
pub struct ImageNode {
    obs: Observation,
    scene: SceneState,
    actions: Vec<Action>,
    history: [Vec<f64>; 3],
    /// Pixels that may differ from the root image.
    changed: PixelRect,
}

struct ImageModel<'a> {
    env: &'a Environment,
    actions_cfg: &'a ActionConfig,
    ablation: AblationMode,
    tables: [&'a CandidateTable; 3],
    target_ratio: AspectRatio,
}

/// Labels for phantom objects in predicted images, one per depth.
const PHANTOM_BASE: u32 = 1 << 30;

impl RolloutModel for ImageModel<'_> {
    type Node = ImageNode;

    fn num_actions(&self, node: &ImageNode) -> usize {
        node.actions.len()
    }

    fn probabilities(&self, node: &ImageNode, action: usize) -> OutcomeProbabilities {
        let a = &node.actions[action];
        let w = node.obs.width();
        let covered = match moved_columns(&node.obs, &a.moved(&node.scene)) {
            Some((l, r)) => column_indicator(w, l, r),
            None => vec![false; w],
        };
        let [h0, h1, h2] = &node.history;
        outcome_probabilities([h0, h1, h2], &covered, self.target_ratio)
    }

    fn expand(&self, node: &ImageNode, action: usize, outcome: Outcome, depth: usize) -> Option<ImageNode> {
        let a = &node.actions[action];
        let moved = a.moved(&node.scene);
        let placements = a.placements(&node.scene);
        let phantom = PHANTOM_BASE + depth as u32;
        let pred = self.env.renderer.predict_depth_after(&node.obs, &moved, &placements, outcome, phantom).ok()?;
        let changed = node.changed.union(&pred.changed);
        let obs = pred.obs;
        let mut history: [Vec<f64>; 3] = Default::default();
        for ratio in AspectRatio::ALL {
            let j = ratio.index();
            let current = if ratio == self.target_ratio && obs.target_visibility() > 0.0 {
                obs.target_column_histogram()
            } else {
                self.tables[j].updated(&self.env.occupancy, &obs, &changed)
            };
            history[j] = encode_history(&current, Some(&node.history[j])).ok()?;
        }
        let scene = reconstruct_scene(&self.env.renderer, &obs);
        let visible = |id| obs.is_visible(id);
        let actions = ablation_filter(gen_all(&scene, &visible, self.actions_cfg), self.ablation);
        Some(ImageNode { obs, scene, actions, history, changed })
    }
}

#[derive(Debug, Clone)]
pub struct Mctsss {
    cfg: MctsConfig,
}

impl Mctsss {
    pub fn new(cfg: MctsConfig) -> Result<Self, PolicyError> {
        cfg.validate()?;
        Ok(Mctsss { cfg })
    }

    pub fn config(&self) -> &MctsConfig {
        &self.cfg
    }
}

impl Policy for Mctsss {
    fn name(&self) -> String {
        format!("MCTSSS({},{})", self.cfg.k_max, self.cfg.rollouts)
    }

    fn occupancy_needs(&self, _: AspectRatio) -> OccupancyNeeds {
        OccupancyNeeds { ratios: [true; 3], tables: true }
    }

    fn rank(&mut self, ctx: &StepContext, actions: &[Action], rng: &mut ChaCha8Rng) -> Result<Vec<Scored>, PolicyError> {
        let table = |r: AspectRatio| ctx.tables[r.index()].as_ref().ok_or(PolicyError::MissingDistribution(r.label()));
        let hist = |r: AspectRatio| {
            ctx.occupancy.history(r).map(<[f64]>::to_vec).ok_or(PolicyError::MissingDistribution(r.label()))
        };
        let [r0, r1, r2] = AspectRatio::ALL;
        let model = ImageModel {
            env: ctx.env,
            actions_cfg: ctx.actions_cfg,
            ablation: ctx.ablation,
            tables: [table(r0)?, table(r1)?, table(r2)?],
            target_ratio: ctx.target_ratio,
        };
        let root = ImageNode {
            obs: ctx.obs.clone(),
            scene: ctx.state.clone(),
            actions: actions.to_vec(),
            history: [hist(r0)?, hist(r1)?, hist(r2)?],
            changed: PixelRect::default(),
        };
        let scores = run_rollouts(&model, root, &self.cfg, rng.next_u64());
        Ok(rank_by_scores(actions, &scores))
    }
}
