//! Full-information planner: breadth-first search over true scene states.
//!
//! States are memoized on a coarse key (x snapped to the bin grid, y to the
//! front/middle/back third, plus the stack tree), so "optimal" means optimal
//! up to that quantization. When a level grows past the configured width,
//! only the states that expose the most target pixels are kept.

use std::collections::HashSet;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::{gen_all, Action, ActionConfig};
use crate::observer::{Renderer, Solid};
use crate::occupancy::AspectRatio;
use crate::scene::{ObjectId, SceneState, Supporter};
use crate::simulator::apply;

use super::{ablation_filter, AblationMode, OccupancyNeeds, Policy, PolicyError, Scored, StepContext};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Most states kept per search level.
    pub beam: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { beam: 400 }
    }
}

/// Every action the generator allows when all objects count as visible.
pub fn oracle_actions(state: &SceneState, cfg: &ActionConfig, ablation: AblationMode) -> Vec<Action> {
    let all = |_| true;
    ablation_filter(gen_all(state, &all, cfg), ablation)
}

/// Fraction of the target's silhouette that a full render would show.
/// Agrees with `Renderer::render(state).target_visibility()` but only
/// traces the target's own pixels.
pub fn target_visibility(renderer: &Renderer, state: &SceneState) -> f64 {
    if state.target().is_none() {
        return 0.0;
    }
    let occ = target_occlusion(renderer, state);
    if occ.silhouette == 0 {
        return 0.0;
    }
    (occ.visible as f64 / occ.silhouette as f64).min(1.0)
}

struct Occlusion {
    silhouette: usize,
    visible: usize,
    /// Objects in front of at least one target pixel.
    occluders: Vec<ObjectId>,
}

fn target_occlusion(renderer: &Renderer, state: &SceneState) -> Occlusion {
    let target = state.target().expect("caller checked");
    let solid = Solid::of(target);
    let rect = renderer.pixel_rect(&solid.aabb());
    let t_pos = state.objects().iter().position(|o| o.id == target.id).expect("target is listed");
    // (solid, id, wins ties) for objects whose image rect overlaps the target's
    let others: Vec<(Solid, ObjectId, bool)> = state
        .objects()
        .iter()
        .enumerate()
        .filter(|(_, o)| o.id != target.id)
        .filter_map(|(i, o)| {
            let s = Solid::of(o);
            renderer.pixel_rect(&s.aabb()).intersects(&rect).then_some((s, o.id, i < t_pos))
        })
        .collect();
    let bg = renderer.background();
    let w = renderer.width();
    let rays = renderer.rays();
    let mut out = Occlusion { silhouette: 0, visible: 0, occluders: Vec::new() };
    for row in rect.row0..rect.row1 {
        for col in rect.col0..rect.col1 {
            let Some(t) = rays.hit(&solid, col, row) else { continue };
            if t >= bg[row * w + col] {
                continue;
            }
            out.silhouette += 1;
            let mut hidden = false;
            for (s, id, earlier) in &others {
                if let Some(t2) = rays.hit(s, col, row) {
                    if t2 < t || (*earlier && t2 == t) {
                        hidden = true;
                        if !out.occluders.contains(id) {
                            out.occluders.push(*id);
                        }
                    }
                }
            }
            if !hidden {
                out.visible += 1;
            }
        }
    }
    out.occluders.sort_unstable();
    out
}

type StateKey = Vec<(ObjectId, i64, u8, Supporter)>;

fn state_key(state: &SceneState, bins: usize) -> StateKey {
    let shelf = state.shelf;
    let bw = shelf.width / bins as f64;
    let third = shelf.depth / 3.0;
    let mut key: StateKey = state
        .objects()
        .iter()
        .map(|o| {
            let xb = ((o.pose.x + shelf.half_width()) / bw).floor() as i64;
            let yb = ((o.pose.y + shelf.half_depth()) / third).floor().clamp(0.0, 2.0) as u8;
            (o.id, xb, yb, state.stacks.parent(o.id).unwrap_or(Supporter::Shelf))
        })
        .collect();
    key.sort_unstable_by_key(|k| k.0);
    key
}

/// Result of a search.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePlan {
    pub actions: Vec<Action>,
    /// False when some level was cut to the beam width.
    pub exhaustive: bool,
}

struct Frontier {
    state: SceneState,
    path: Vec<Action>,
    visibility: f64,
    occluders: usize,
}

/// Shortest action sequence (up to `max_depth`) after which the target is
/// at least `threshold` visible. `None` if no sequence was found.
pub fn oracle_plan(
    renderer: &Renderer,
    start: &SceneState,
    threshold: f64,
    max_depth: usize,
    actions_cfg: &ActionConfig,
    ablation: AblationMode,
    cfg: &OracleConfig,
) -> Option<OraclePlan> {
    start.target()?;
    if target_visibility(renderer, start) >= threshold {
        return Some(OraclePlan { actions: Vec::new(), exhaustive: true });
    }
    let mut seen: HashSet<StateKey> = HashSet::new();
    seen.insert(state_key(start, actions_cfg.bins));
    let mut frontier = vec![Frontier { state: start.clone(), path: Vec::new(), visibility: 0.0, occluders: 0 }];
    let mut exhaustive = true;
    for depth in 1..=max_depth {
        let mut next = Vec::new();
        for node in &frontier {
            let actions = oracle_actions(&node.state, actions_cfg, ablation);
            let occluders = target_occlusion(renderer, &node.state).occluders;
            // Only moving an occluder can raise visibility, so the reveal
            // check runs over those first.
            let (revealing, rest): (Vec<&Action>, Vec<&Action>) =
                actions.iter().partition(|a| a.moved(&node.state).iter().any(|id| occluders.contains(id)));
            let mut children = Vec::new();
            for a in revealing {
                let Ok(s) = apply(&node.state, a, actions_cfg) else { continue };
                let occ = target_occlusion(renderer, &s);
                let v = if occ.silhouette == 0 { 0.0 } else { occ.visible as f64 / occ.silhouette as f64 };
                if v >= threshold {
                    let mut path = node.path.clone();
                    path.push(*a);
                    return Some(OraclePlan { actions: path, exhaustive });
                }
                children.push((a, s, v, occ.occluders.len()));
            }
            if depth == max_depth {
                continue;
            }
            for a in rest {
                let Ok(s) = apply(&node.state, a, actions_cfg) else { continue };
                // a placement may still hide more of the target
                let occ = target_occlusion(renderer, &s);
                let v = if occ.silhouette == 0 { 0.0 } else { occ.visible as f64 / occ.silhouette as f64 };
                children.push((a, s, v, occ.occluders.len()));
            }
            for (a, s, v, n_occ) in children {
                if seen.insert(state_key(&s, actions_cfg.bins)) {
                    let mut path = node.path.clone();
                    path.push(*a);
                    next.push(Frontier { state: s, path, visibility: v, occluders: n_occ });
                }
            }
        }
        if next.is_empty() {
            return None;
        }
        if next.len() > cfg.beam {
            exhaustive = false;
            // stable: ties keep generation order
            next.sort_by(|a, b| b.visibility.total_cmp(&a.visibility).then(a.occluders.cmp(&b.occluders)));
            next.truncate(cfg.beam);
        }
        frontier = next;
    }
    None
}

/// Plans once per episode and replays the plan; replans whenever the scene
/// is not the one the plan expects.
#[derive(Debug, Clone)]
pub struct Oracle {
    cfg: OracleConfig,
    plan: Vec<Action>,
    expected: Option<SceneState>,
}

impl Oracle {
    pub fn new(cfg: OracleConfig) -> Self {
        Oracle { cfg, plan: Vec::new(), expected: None }
    }
}

impl Policy for Oracle {
    fn name(&self) -> String {
        "Oracle".into()
    }

    fn occupancy_needs(&self, _: AspectRatio) -> OccupancyNeeds {
        OccupancyNeeds::default()
    }

    fn reset(&mut self) {
        self.plan.clear();
        self.expected = None;
    }

    fn rank(&mut self, ctx: &StepContext, actions: &[Action], _rng: &mut ChaCha8Rng) -> Result<Vec<Scored>, PolicyError> {
        let on_plan = self.expected.as_ref() == Some(ctx.state) && !self.plan.is_empty();
        if !on_plan {
            let renderer = &ctx.env.renderer;
            self.plan = oracle_plan(
                renderer,
                ctx.state,
                ctx.visibility_threshold,
                ctx.steps_left,
                ctx.actions_cfg,
                ctx.ablation,
                &self.cfg,
            )
            .map(|p| p.actions)
            .unwrap_or_default();
        }
        let mut out = Vec::with_capacity(actions.len() + 1);
        if !self.plan.is_empty() {
            let next = self.plan.remove(0);
            self.expected = apply(ctx.state, &next, ctx.actions_cfg).ok();
            out.push(Scored { action: next, score: 1.0 });
        } else {
            self.expected = None;
            // No plan: greedily maximize visibility one step ahead.
            let mut scored: Vec<Scored> = actions
                .iter()
                .map(|a| {
                    let v = apply(ctx.state, a, ctx.actions_cfg).map_or(-1.0, |s| target_visibility(&ctx.env.renderer, &s));
                    Scored { action: *a, score: v - 1.0 }
                })
                .collect();
            scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.action.canonical_cmp(&b.action)));
            return Ok(scored);
        }
        let first = out[0].action;
        out.extend(actions.iter().filter(|a| !a.same_as(&first)).map(|a| Scored { action: *a, score: 0.0 }));
        Ok(out)
    }
}
