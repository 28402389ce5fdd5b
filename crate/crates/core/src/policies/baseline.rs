//! Mask-overlap baseline: prefer moving large objects to where they hide
//! little of anything else.

use rand_chacha::ChaCha8Rng;

use crate::actions::Action;
use crate::observer::{Observation, Renderer};
use crate::occupancy::AspectRatio;
use crate::scene::SceneState;
use crate::simulator::hypothesize_mask;

use super::{rank_by_scores, OccupancyNeeds, Policy, PolicyError, Scored, StepContext};

/// `area(M_i) - area(M̂_i ∩ ∪_{j≠i} M_j)`, where `M_i` covers every object
/// the action moves.
pub fn baseline_scores(renderer: &Renderer, state: &SceneState, obs: &Observation, actions: &[Action]) -> Vec<f64> {
    actions
        .iter()
        .map(|a| {
            let area: usize = a.moved(state).iter().map(|id| obs.mask_area(*id)).sum();
            let hyp = hypothesize_mask(renderer, state, obs, a);
            area as f64 - hyp.overlap_others as f64
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Baseline;

impl Policy for Baseline {
    fn name(&self) -> String {
        "Baseline".into()
    }

    fn occupancy_needs(&self, _: AspectRatio) -> OccupancyNeeds {
        OccupancyNeeds::default()
    }

    fn rank(&mut self, ctx: &StepContext, actions: &[Action], _rng: &mut ChaCha8Rng) -> Result<Vec<Scored>, PolicyError> {
        Ok(rank_by_scores(actions, &baseline_scores(&ctx.env.renderer, ctx.state, ctx.obs, actions)))
    }
}
