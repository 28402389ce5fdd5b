//! Coarse object geometry recovered from a depth image and its masks.
//!
//! Every masked pixel is back-projected to a 3D point; each object becomes
//! the axis-aligned box around its points. Hidden back faces are filled in
//! by assuming the object is at least as deep as it is wide. Objects whose
//! lowest point floats above the floor are assigned to the object directly
//! beneath them, if any.

use std::collections::BTreeMap;

use crate::geometry::Footprint;
use crate::scene::{ObjectId, ObjectInstance, ObjectShape, Pose, SceneState, Supporter};

use super::{Observation, Renderer, NO_OBJECT};

/// Box estimate of one visible object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedObject {
    pub id: ObjectId,
    pub footprint: Footprint,
    pub bottom: f64,
    pub top: f64,
}

/// Objects lower than this above the floor are treated as resting on it.
const FLOOR_SNAP: f64 = 0.01;

/// One box per visible object, sorted by id.
pub fn estimate_objects(renderer: &Renderer, obs: &Observation) -> Vec<EstimatedObject> {
    let cam = renderer.camera();
    let shelf = renderer.shelf();
    let w = obs.width();
    // [xmin, xmax, ymin, ymax, zmin, zmax]
    let mut boxes: BTreeMap<ObjectId, [f64; 6]> = BTreeMap::new();
    for (p, &l) in obs.labels().iter().enumerate() {
        if l == NO_OBJECT {
            continue;
        }
        let q = cam.unproject(p % w, p / w, obs.depth()[p]);
        let b = boxes.entry(l).or_insert([q[0], q[0], q[1], q[1], q[2], q[2]]);
        b[0] = b[0].min(q[0]);
        b[1] = b[1].max(q[0]);
        b[2] = b[2].min(q[1]);
        b[3] = b[3].max(q[1]);
        b[4] = b[4].min(q[2]);
        b[5] = b[5].max(q[2]);
    }
    let (hw, hd) = (shelf.half_width(), shelf.half_depth());
    boxes
        .into_iter()
        .map(|(id, b)| {
            let x0 = b[0].max(-hw);
            let x1 = b[1].min(hw).max(x0 + 1e-3);
            let width = x1 - x0;
            let y1 = b[3].min(hd);
            let y0 = b[2].min(y1 - width).max(-hd);
            let y1 = y1.max(y0 + 1e-3);
            let footprint = Footprint::Rect { cx: 0.5 * (x0 + x1), cy: 0.5 * (y0 + y1), hx: 0.5 * (x1 - x0), hy: 0.5 * (y1 - y0) };
            let bottom = if b[4] < FLOOR_SNAP { 0.0 } else { b[4] };
            let top = b[5].min(shelf.height).max(bottom + 1e-3);
            EstimatedObject { id, footprint, bottom, top }
        })
        .collect()
}

/// Scene of cuboids built from [`estimate_objects`]. Floating boxes are
/// placed on the highest estimated object below them whose footprint
/// overlaps theirs, and on the floor otherwise. The target, if visible, is
/// kept as a target cuboid. The result is not guaranteed to validate.
pub fn reconstruct_scene(renderer: &Renderer, obs: &Observation) -> SceneState {
    let mut est = estimate_objects(renderer, obs);
    est.sort_by(|a, b| a.bottom.total_cmp(&b.bottom).then(a.id.cmp(&b.id)));
    let mut scene = SceneState::new(*renderer.shelf());
    let mut placed: Vec<(ObjectId, Footprint, f64)> = Vec::new();
    let target = obs.target();
    for e in est {
        let (hx, hy) = e.footprint.half_extents();
        let (cx, cy) = e.footprint.center();
        let mut supporter = Supporter::Shelf;
        let mut z = 0.0;
        if e.bottom > 0.0 {
            let below = placed
                .iter()
                .filter(|(id, f, top)| {
                    *top <= e.bottom + FLOOR_SNAP && f.intersects(&e.footprint, 0.0) && !scene.stacks.has_child(*id)
                })
                .max_by(|a, b| a.2.total_cmp(&b.2));
            if let Some(&(id, _, top)) = below {
                supporter = Supporter::Object(id);
                z = top;
            }
        }
        let height = (e.top - z).max(1e-3);
        let shape = ObjectShape::cuboid(2.0 * hx, 2.0 * hy, height);
        let object = ObjectInstance { id: e.id, shape, pose: Pose::new(cx, cy, z), is_target: Some(e.id) == target };
        placed.push((e.id, e.footprint, z + height));
        scene.insert(object, supporter);
    }
    scene
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observer::CameraSpec;
    use crate::scene::ShelfSpec;

    fn renderer() -> Renderer {
        let shelf = ShelfSpec::default();
        Renderer::new(CameraSpec::default_for(&shelf), shelf).unwrap()
    }

    #[test]
    fn lone_box_is_recovered_closely() {
        let r = renderer();
        let o = ObjectInstance::new(4, ObjectShape::cuboid(0.1, 0.1, 0.12), Pose::new(0.05, 0.0, 0.0));
        let s = SceneState::from_parts(ShelfSpec::default(), vec![o], &[]);
        let est = estimate_objects(&r, &r.render(&s));
        assert_eq!(est.len(), 1);
        let [x0, x1, y0, y1] = est[0].footprint.bounds();
        assert!((x0 - 0.0).abs() < 0.005 && (x1 - 0.1).abs() < 0.005, "{x0} {x1}");
        assert!((y1 - 0.05).abs() < 0.005 && (y0 + 0.05).abs() < 0.01, "{y0} {y1}");
        assert_eq!(est[0].bottom, 0.0);
        assert!((est[0].top - 0.12).abs() < 0.005);
    }

    #[test]
    fn stacked_box_gets_a_supporter() {
        let r = renderer();
        let base = ObjectInstance::new(1, ObjectShape::cuboid(0.12, 0.12, 0.1), Pose::new(0.0, 0.0, 0.0));
        let top = ObjectInstance::new(2, ObjectShape::cuboid(0.06, 0.06, 0.06), Pose::new(0.0, 0.0, 0.1));
        let s = SceneState::from_parts(ShelfSpec::default(), vec![base, top], &[(2, 1)]);
        let scene = reconstruct_scene(&r, &r.render(&s));
        assert_eq!(scene.parent(2), Ok(Supporter::Object(1)));
        assert_eq!(scene.parent(1), Ok(Supporter::Shelf));
    }
}
