//! Random scene builders shared by unit, property and integration tests.

use rand::Rng;

use crate::actions::ActionConfig;
use crate::geometry::TOL;
use crate::observer::Renderer;
use crate::occupancy::AspectRatio;
use crate::policies::{oracle_actions, target_visibility, AblationMode};
use crate::scene::{validate_scene, ObjectInstance, ObjectShape, Pose, SceneState, ShelfSpec, Supporter};
use crate::simulator::apply;

/// Rejection-samples `n` objects (cuboids and cylinders, some stacked) plus
/// an optional floor target. The result always validates.
pub fn random_scene<R: Rng>(rng: &mut R, n: usize, with_target: bool) -> SceneState {
    let shelf = ShelfSpec::default();
    let mut scene = SceneState::new(shelf);
    let mut next_id = 0;
    if with_target {
        let pose = floor_pose(rng, &shelf, 0.03, 0.03);
        let t = ObjectInstance::target(next_id, ObjectShape::cuboid(0.06, 0.06, 0.06), pose);
        scene.insert(t, Supporter::Shelf);
        next_id += 1;
    }
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n && attempts < 2000 {
        attempts += 1;
        let stack_on = if rng.random_bool(0.3) {
            let tops: Vec<_> = scene
                .objects()
                .iter()
                .filter(|o| !o.is_target && !scene.stacks.has_child(o.id))
                .map(|o| o.id)
                .collect();
            if tops.is_empty() {
                None
            } else {
                Some(tops[rng.random_range(0..tops.len())])
            }
        } else {
            None
        };
        let mut trial = scene.clone();
        match stack_on {
            Some(base) => {
                let below = *scene.object(base).unwrap();
                let (bhx, bhy) = below.shape.half_extents();
                let min_half = bhx.min(bhy);
                if min_half < 0.022 {
                    continue;
                }
                let shape = if rng.random_bool(0.5) {
                    ObjectShape::cuboid(
                        rng.random_range(0.04..=2.0 * bhx.min(0.06)),
                        rng.random_range(0.04..=2.0 * bhy.min(0.06)),
                        rng.random_range(0.04..0.12),
                    )
                } else {
                    ObjectShape::cylinder(rng.random_range(0.02..=min_half), rng.random_range(0.04..0.12))
                };
                let pose = Pose::new(below.pose.x, below.pose.y, below.top());
                let o = ObjectInstance::new(next_id, shape, pose);
                trial.insert(o, Supporter::Object(base));
            }
            None => {
                let shape = if rng.random_bool(0.6) {
                    ObjectShape::cuboid(
                        rng.random_range(0.04..0.14),
                        rng.random_range(0.04..0.14),
                        rng.random_range(0.05..0.25),
                    )
                } else {
                    ObjectShape::cylinder(rng.random_range(0.02..0.06), rng.random_range(0.05..0.25))
                };
                let (hx, hy) = shape.half_extents();
                let pose = floor_pose(rng, &shelf, hx, hy);
                trial.insert(ObjectInstance::new(next_id, shape, pose), Supporter::Shelf);
            }
        }
        if validate_scene(&trial).is_ok() {
            scene = trial;
            next_id += 1;
            placed += 1;
        }
    }
    scene
}

fn floor_pose<R: Rng>(rng: &mut R, shelf: &ShelfSpec, hx: f64, hy: f64) -> Pose {
    let x = rng.random_range(-shelf.half_width() + hx + TOL..shelf.half_width() - hx - TOL);
    let y = rng.random_range(-shelf.half_depth() + hy + TOL..shelf.half_depth() - hy - TOL);
    Pose::new(x, y, 0.0)
}

/// Target hidden behind the middle of three flush stacks that span the
/// shelf width. Without stack manipulation no action exists at all.
/// `k` varies the target position and the stack tops.
pub fn behind_stack_fixture(k: usize) -> SceneState {
    let shelf = ShelfSpec::default();
    let w = shelf.width / 3.0;
    let kf = k as f64;
    let tx = -0.06 + 0.012 * (kf % 10.0);
    let mut scene = SceneState::new(shelf);
    let target = ObjectInstance::target(0, ObjectShape::cuboid(0.06, 0.06, 0.06), Pose::new(tx, -0.15, 0.0));
    scene.insert(target, Supporter::Shelf);
    let base_h = 0.03;
    for i in 0..3u32 {
        let cx = -shelf.half_width() + w * (i as f64 + 0.5);
        // bases touch each other and the side walls
        let base = ObjectInstance::new(1 + 2 * i, ObjectShape::cuboid(w - 2.0 * TOL, 0.1, base_h), Pose::new(cx, 0.05, 0.0));
        scene.insert(base, Supporter::Shelf);
        let top_h = 0.14 + 0.005 * ((kf + i as f64) % 5.0);
        let top = ObjectInstance::new(2 + 2 * i, ObjectShape::cuboid(0.2, 0.08, top_h), Pose::new(cx, 0.05, base_h));
        scene.insert(top, Supporter::Object(1 + 2 * i));
    }
    scene
}

/// Reference occupancy: render a target alone at every grid pose and compare
/// its depth with the rendered scene pixel by pixel. A surface counts as
/// occluded only when the scene is nearer by more than the tolerance, so
/// coincident faces count as visible.
pub fn brute_force_occupancy(renderer: &Renderer, s: &SceneState, ratio: AspectRatio, target_width: f64, res: f64) -> Vec<f64> {
    let shape = ratio.target_shape(target_width);
    let (hx, hy) = shape.half_extents();
    let shelf = s.shelf;
    let scene_depth = renderer.render(s);
    let mut hist = vec![0.0; renderer.width()];
    let nx = ((shelf.width - 2.0 * hx) / res + 1e-9).floor() as i64;
    let ny = ((shelf.depth - 2.0 * hy) / res + 1e-9).floor() as i64;
    for j in 0..=ny {
        for i in 0..=nx {
            let x = -shelf.half_width() + hx + i as f64 * res;
            let y = -shelf.half_depth() + hy + j as f64 * res;
            let t = ObjectInstance::target(0, shape, Pose::new(x, y, 0.0));
            let alone = renderer.render(&SceneState::from_parts(shelf, vec![t], &[]));
            let pixels = alone.mask_pixels(0);
            let hidden = pixels.iter().filter(|&&p| scene_depth.depth()[p] < alone.depth()[p] - 1e-6).count();
            if !pixels.is_empty() && hidden as f64 >= 0.99 * pixels.len() as f64 {
                for p in pixels {
                    hist[p % renderer.width()] += 1.0;
                }
            }
        }
    }
    hist
}

/// Small hand-built scenes (one to three occluders, no target) used to
/// compare occupancy against [`brute_force_occupancy`].
pub fn occupancy_fixtures() -> Vec<SceneState> {
    let cuboid = |id, ex, ey, ez, x, y| ObjectInstance::new(id, ObjectShape::cuboid(ex, ey, ez), Pose::new(x, y, 0.0));
    let scene = |objects| SceneState::from_parts(ShelfSpec::default(), objects, &[]);
    vec![
        scene(vec![cuboid(1, 0.14, 0.05, 0.12, 0.0, 0.1)]),
        scene(vec![cuboid(1, 0.2, 0.05, 0.3, -0.1, 0.15), cuboid(2, 0.08, 0.08, 0.1, 0.2, -0.05)]),
        scene(vec![
            cuboid(1, 0.12, 0.04, 0.2, -0.2, 0.18),
            ObjectInstance::new(2, ObjectShape::cylinder(0.05, 0.15), Pose::new(0.05, 0.1, 0.0)),
            cuboid(3, 0.1, 0.1, 0.08, 0.25, 0.0),
        ]),
    ]
}

/// Minimum number of actions after which the target is at least `v`
/// visible, by plain depth-first enumeration of every action sequence up to
/// `max_depth`, without memoization or pruning.
pub fn exhaustive_plan_length(renderer: &Renderer, s: &SceneState, v: f64, max_depth: usize, cfg: &ActionConfig) -> Option<usize> {
    fn reach(renderer: &Renderer, s: &SceneState, v: f64, depth: usize, cfg: &ActionConfig) -> bool {
        if target_visibility(renderer, s) >= v {
            return true;
        }
        depth > 0
            && oracle_actions(s, cfg, AblationMode::Full)
                .iter()
                .filter_map(|a| apply(s, a, cfg).ok())
                .any(|next| reach(renderer, &next, v, depth - 1, cfg))
    }
    (0..=max_depth).find(|d| reach(renderer, s, v, *d, cfg))
}

/// Scenes with at most four objects whose target is less than `v` visible:
/// two hand-built scenes that need two actions, then random ones.
pub fn small_oracle_fixtures(renderer: &Renderer, v: f64, count: usize) -> Vec<SceneState> {
    let target = |x, y| ObjectInstance::target(0, ObjectShape::cuboid(0.06, 0.06, 0.06), Pose::new(x, y, 0.0));
    let wall = |id, y| ObjectInstance::new(id, ObjectShape::cuboid(0.2, 0.05, 0.12), Pose::new(0.0, y, 0.0));
    let cube = ObjectInstance::new(2, ObjectShape::cuboid(0.1, 0.1, 0.1), Pose::new(0.25, 0.12, 0.0));
    let shelf = ShelfSpec::default();
    let mut out = vec![
        SceneState::from_parts(shelf, vec![target(0.0, -0.2), wall(1, -0.1), wall(2, 0.1)], &[]),
        SceneState::from_parts(shelf, vec![target(0.25, -0.2), wall(1, -0.05), cube, wall(3, 0.15)], &[]),
    ];
    let mut seed = 0u64;
    while out.len() < count {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let s = random_scene(&mut rng, 1 + (seed % 3) as usize, true);
        if target_visibility(renderer, &s) < v {
            out.push(s);
        }
        seed += 1;
    }
    out
}
