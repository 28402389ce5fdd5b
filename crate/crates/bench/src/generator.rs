//! Random cluttered shelves with a hidden target.
//!
//! The target is placed on the floor first, then a "guard" occluder directly
//! in front of it, then the remaining occluders anywhere on the floor or on
//! top of existing stacks. Every placement sample counts against one
//! attempt budget; a finished scene in which the target still shows is
//! discarded and generation restarts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use staxray_core::geometry::TOL;
use staxray_core::occupancy::AspectRatio;
use staxray_core::scene::validate_scene;
use staxray_core::{ObjectInstance, ObjectShape, Pose, Renderer, SceneState, ShelfSpec, Supporter};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("no valid scene within {0} placement attempts")]
    Budget(usize),
}

/// Uniform range `[lo, hi]`.
pub type Range = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Number of occluders.
    pub n: usize,
    pub shelf: ShelfSpec,
    pub cuboid_x: Range,
    pub cuboid_y: Range,
    pub cuboid_z: Range,
    pub cylinder_fraction: f64,
    pub cylinder_r: Range,
    pub cylinder_h: Range,
    /// Chance that an occluder is stacked on an existing stack top.
    pub stack_probability: f64,
    /// Heights of stacked objects.
    pub stacked_h: Range,
    /// Width of the guard placed in front of the target.
    pub guard_width: Range,
    pub target_width: f64,
    pub target_ratio: AspectRatio,
    pub require_occluded: bool,
    pub budget: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 6,
            shelf: ShelfSpec::default(),
            cuboid_x: [0.04, 0.12],
            cuboid_y: [0.04, 0.10],
            cuboid_z: [0.08, 0.22],
            cylinder_fraction: 0.3,
            cylinder_r: [0.02, 0.045],
            cylinder_h: [0.08, 0.22],
            stack_probability: 0.25,
            stacked_h: [0.04, 0.10],
            guard_width: [0.08, 0.12],
            target_width: 0.06,
            target_ratio: AspectRatio::OneToOne,
            require_occluded: true,
            budget: 10_000,
        }
    }
}

impl GeneratorConfig {
    pub fn with_n(n: usize) -> Self {
        GeneratorConfig { n, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let ranges = [
            ("cuboid_x", self.cuboid_x),
            ("cuboid_y", self.cuboid_y),
            ("cuboid_z", self.cuboid_z),
            ("cylinder_r", self.cylinder_r),
            ("cylinder_h", self.cylinder_h),
            ("stacked_h", self.stacked_h),
            ("guard_width", self.guard_width),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo > 0.0 && lo <= hi) {
                return Err(GenerateError::Config(format!("{name}: need 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        for (name, p) in [("cylinder_fraction", self.cylinder_fraction), ("stack_probability", self.stack_probability)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(GenerateError::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if !self.shelf.is_valid() || self.target_width <= 0.0 || self.budget == 0 {
            return Err(GenerateError::Config("shelf, target width and budget must be positive".into()));
        }
        Ok(())
    }

    pub fn target_shape(&self) -> ObjectShape {
        self.target_ratio.target_shape(self.target_width)
    }
}

fn sample(rng: &mut ChaCha8Rng, [lo, hi]: Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

struct Budget {
    left: usize,
    total: usize,
}

impl Budget {
    fn take(&mut self) -> Result<(), GenerateError> {
        if self.left == 0 {
            return Err(GenerateError::Budget(self.total));
        }
        self.left -= 1;
        Ok(())
    }
}

/// One scene; identical for identical `(cfg, seed)`. The target has id 0
/// and the occluders ids `1..=n`.
pub fn generate_scene(cfg: &GeneratorConfig, renderer: &Renderer, seed: u64) -> Result<SceneState, GenerateError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut budget = Budget { left: cfg.budget, total: cfg.budget };
    loop {
        let Some(scene) = try_scene(cfg, &mut rng, &mut budget)? else { continue };
        if !cfg.require_occluded || renderer.render(&scene).target_visibility() == 0.0 {
            return Ok(scene);
        }
    }
}

/// `Ok(None)` when this attempt got stuck and should restart.
fn try_scene(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, budget: &mut Budget) -> Result<Option<SceneState>, GenerateError> {
    let shelf = cfg.shelf;
    let (hw, hd) = (shelf.half_width(), shelf.half_depth());
    let mut scene = SceneState::new(shelf);

    budget.take()?;
    let tshape = cfg.target_shape();
    let (thx, thy) = tshape.half_extents();
    let tx = rng.random_range(-hw + thx + TOL..hw - thx - TOL);
    // leave room in front for the guard
    let ty = rng.random_range(-hd + thy + TOL..(hd - 2.0 * thy - 0.04).max(-hd + thy + 2.0 * TOL));
    scene.insert(ObjectInstance::target(0, tshape, Pose::new(tx, ty, 0.0)), Supporter::Shelf);

    let mut next_id = 1;
    if cfg.n > 0 && cfg.require_occluded {
        let mut placed = false;
        for _ in 0..20 {
            budget.take()?;
            let gw = sample(rng, cfg.guard_width);
            let gd = sample(rng, cfg.cuboid_y);
            let gh = (tshape.height() + sample(rng, [0.03, 0.10])).min(shelf.height - TOL);
            let gap = sample(rng, [0.002, 0.03]);
            let gx = (tx + sample(rng, [-0.015, 0.015])).clamp(-hw + gw / 2.0 + TOL, hw - gw / 2.0 - TOL);
            let gy = ty + thy + gap + gd / 2.0;
            if gy + gd / 2.0 > hd - TOL {
                continue;
            }
            let mut trial = scene.clone();
            trial.insert(ObjectInstance::new(next_id, ObjectShape::cuboid(gw, gd, gh), Pose::new(gx, gy, 0.0)), Supporter::Shelf);
            if validate_scene(&trial).is_ok() {
                scene = trial;
                next_id += 1;
                placed = true;
                break;
            }
        }
        if !placed {
            return Ok(None);
        }
    }

    let mut stuck = 0;
    while (next_id as usize) <= cfg.n {
        budget.take()?;
        if stuck > 200 {
            return Ok(None);
        }
        let mut trial = scene.clone();
        let candidate = if rng.random_bool(cfg.stack_probability) {
            stacked_candidate(cfg, rng, &scene, next_id)
        } else {
            Some(floor_candidate(cfg, rng, next_id))
        };
        let Some((object, supporter)) = candidate else {
            stuck += 1;
            continue;
        };
        trial.insert(object, supporter);
        if validate_scene(&trial).is_ok() {
            scene = trial;
            next_id += 1;
            stuck = 0;
        } else {
            stuck += 1;
        }
    }
    Ok(Some(scene))
}

fn floor_candidate(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, id: u32) -> (ObjectInstance, Supporter) {
    let shape = if rng.random_bool(cfg.cylinder_fraction) {
        ObjectShape::cylinder(sample(rng, cfg.cylinder_r), sample(rng, cfg.cylinder_h))
    } else {
        ObjectShape::cuboid(sample(rng, cfg.cuboid_x), sample(rng, cfg.cuboid_y), sample(rng, cfg.cuboid_z))
    };
    let (hx, hy) = shape.half_extents();
    let (hw, hd) = (cfg.shelf.half_width(), cfg.shelf.half_depth());
    let x = rng.random_range(-hw + hx + TOL..hw - hx - TOL);
    let y = rng.random_range(-hd + hy + TOL..hd - hy - TOL);
    (ObjectInstance::new(id, shape, Pose::new(x, y, 0.0)), Supporter::Shelf)
}

/// A smaller object centered on a random stack top, or `None` if no top
/// can take one.
fn stacked_candidate(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng, scene: &SceneState, id: u32) -> Option<(ObjectInstance, Supporter)> {
    let tops: Vec<&ObjectInstance> =
        scene.objects().iter().filter(|o| !o.is_target && !scene.stacks.has_child(o.id)).collect();
    if tops.is_empty() {
        return None;
    }
    let below = *tops[rng.random_range(0..tops.len())];
    let (bhx, bhy) = below.shape.half_extents();
    let h = sample(rng, cfg.stacked_h);
    if below.top() + h > cfg.shelf.height - TOL {
        return None;
    }
    let min_half = bhx.min(bhy);
    let shape = match below.shape {
        ObjectShape::Cylinder { .. } => {
            let r = sample(rng, [cfg.cylinder_r[0].min(min_half), min_half]);
            ObjectShape::cylinder(r, h)
        }
        ObjectShape::Cuboid { .. } if rng.random_bool(cfg.cylinder_fraction) => {
            let r = sample(rng, [cfg.cylinder_r[0].min(min_half), min_half]);
            ObjectShape::cylinder(r, h)
        }
        ObjectShape::Cuboid { .. } => {
            let ex = sample(rng, [(0.5 * bhx).max(0.02).min(2.0 * bhx), 2.0 * bhx]);
            let ey = sample(rng, [(0.5 * bhy).max(0.02).min(2.0 * bhy), 2.0 * bhy]);
            ObjectShape::cuboid(ex, ey, h)
        }
    };
    Some((ObjectInstance::new(id, shape, Pose::new(below.pose.x, below.pose.y, below.top())), Supporter::Object(below.id)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use staxray_core::CameraSpec;

    fn renderer() -> Renderer {
        let shelf = ShelfSpec::default();
        Renderer::new(CameraSpec::default_for(&shelf), shelf).unwrap()
    }

    #[test]
    fn occluded_scenes_hide_the_target() {
        let r = renderer();
        for seed in 0..10 {
            let s = generate_scene(&GeneratorConfig::with_n(6), &r, seed).unwrap();
            assert!(validate_scene(&s).is_ok());
            assert_eq!(s.occluder_count(), 6);
            assert_eq!(r.render(&s).target_visibility(), 0.0);
        }
    }

    #[test]
    fn same_seed_same_scene_file() {
        let r = renderer();
        let cfg = GeneratorConfig::with_n(8);
        assert_eq!(generate_scene(&cfg, &r, 7).unwrap().to_json(), generate_scene(&cfg, &r, 7).unwrap().to_json());
    }

    #[test]
    fn bad_ranges_are_rejected() {
        let cfg = GeneratorConfig { cuboid_x: [0.2, 0.1], ..Default::default() };
        assert!(matches!(generate_scene(&cfg, &renderer(), 0), Err(GenerateError::Config(_))));
    }

    #[test]
    fn exhausted_budget_is_reported() {
        let cfg = GeneratorConfig { n: 200, budget: 500, ..Default::default() };
        assert_eq!(generate_scene(&cfg, &renderer(), 0), Err(GenerateError::Budget(500)));
    }

    #[test]
    fn taller_targets_stay_hidden() {
        let r = renderer();
        for ratio in AspectRatio::ALL {
            let cfg = GeneratorConfig { target_ratio: ratio, ..GeneratorConfig::with_n(6) };
            let s = generate_scene(&cfg, &r, 3).unwrap();
            assert_eq!(r.render(&s).target_visibility(), 0.0, "{ratio:?}");
        }
    }
}
