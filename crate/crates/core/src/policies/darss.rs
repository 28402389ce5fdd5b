//! Greedy ranking by reduction of support.

use rand_chacha::ChaCha8Rng;

use crate::actions::Action;
use crate::observer::{Observation, Renderer};
use crate::occupancy::{reduction_of_support, support, AspectRatio};
use crate::scene::{ObjectId, SceneState};
use crate::simulator::hypothesize_mask;

use super::{rank_by_scores, OccupancyNeeds, Policy, PolicyError, Scored, StepContext};

/// Union of the visible column extents of `ids`, if any is visible.
pub fn moved_columns(obs: &Observation, ids: &[ObjectId]) -> Option<(usize, usize)> {
    ids.iter()
        .filter_map(|id| obs.object_column_extent(*id).ok())
        .reduce(|(l0, r0), (l1, r1)| (l0.min(l1), r0.max(r1)))
}

fn support_over(dist: &[f64], cols: Option<(usize, usize)>) -> f64 {
    match cols {
        Some((l, r)) => support(dist, l, r.min(dist.len().saturating_sub(1))).unwrap_or(0.0),
        None => 0.0,
    }
}

/// Scores are snapped to this fraction of the total mass, so that supports
/// which agree up to rounding tie exactly whatever the scale of the
/// distribution.
const RESOLUTION: f64 = 1.0 / (1u64 << 32) as f64;

/// Support under the moved objects now minus support under their predicted
/// mask after the action. A move that ends fully hidden has zero support
/// afterwards.
pub fn darss_scores(renderer: &Renderer, state: &SceneState, obs: &Observation, dist: &[f64], actions: &[Action]) -> Vec<f64> {
    let unit = dist.iter().sum::<f64>() * RESOLUTION;
    actions
        .iter()
        .map(|a| {
            let before = support_over(dist, moved_columns(obs, &a.moved(state)));
            let after = support_over(dist, hypothesize_mask(renderer, state, obs, a).columns);
            let d = reduction_of_support(before, after);
            if unit > 0.0 {
                (d / unit).round() * unit
            } else {
                d
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Darss;

impl Policy for Darss {
    fn name(&self) -> String {
        "DARSS".into()
    }

    fn occupancy_needs(&self, target_ratio: AspectRatio) -> OccupancyNeeds {
        let mut ratios = [false; 3];
        ratios[target_ratio.index()] = true;
        OccupancyNeeds { ratios, tables: false }
    }

    fn rank(&mut self, ctx: &StepContext, actions: &[Action], _rng: &mut ChaCha8Rng) -> Result<Vec<Scored>, PolicyError> {
        let dist = ctx.occupancy.history(ctx.target_ratio).ok_or(PolicyError::MissingDistribution(ctx.target_ratio.label()))?;
        let scores = darss_scores(&ctx.env.renderer, ctx.state, ctx.obs, dist, actions);
        Ok(rank_by_scores(actions, &scores))
    }

    fn traces_scores(&self) -> bool {
        true
    }
}
