//! Discrete actions: pushes along x, suction rearrangements, stacking and
//! destacking.
//!
//! Suction moves are four straight motions: lift by a small clearance, pull
//! out of the shelf along +y, translate outside the shelf, slide back in along
//! -y and lower. The tool is a vertical column above the grasp point, so
//! both the object and the column sweep through the shelf on the way out
//! and on the way in. Those swept boxes are the feasibility test used both
//! here and when an action is executed.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{intervals_overlap, Aabb, TOL};
use crate::scene::{ObjectId, ObjectInstance, ObjectShape, Pose, SceneState, Supporter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Push,
    Rearrange,
    Destack,
    Stack,
}

impl ActionKind {
    pub fn name(self) -> &'static str {
        match self {
            ActionKind::Push => "push",
            ActionKind::Rearrange => "rearrange",
            ActionKind::Destack => "destack",
            ActionKind::Stack => "stack",
        }
    }
}

/// One executable action with its final subject pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    pub subject: ObjectId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporter: Option<ObjectId>,
    /// Ordering key within (kind, subject): push direction (0 = -x, 1 = +x),
    /// bin index, or supporter id.
    pub slot: u32,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    /// Pose of the subject after the action.
    #[serde(rename = "place_pose")]
    pub place: Pose,
}

impl Action {
    /// Push of the stack based at `subject` by `dx` along x.
    pub fn push(state: &SceneState, subject: ObjectId, dx: f64) -> Result<Action, Infeasible> {
        let o = state.object(subject).map_err(|_| Infeasible::UnknownObject(subject))?;
        Ok(Action {
            kind: ActionKind::Push,
            subject,
            supporter: None,
            slot: u32::from(dx > 0.0),
            dx,
            dy: 0.0,
            dz: 0.0,
            place: Pose::new(o.pose.x + dx, o.pose.y, o.pose.z),
        })
    }

    fn suction(kind: ActionKind, from: &ObjectInstance, supporter: Option<ObjectId>, slot: u32, place: Pose) -> Action {
        Action {
            kind,
            subject: from.id,
            supporter,
            slot,
            dx: place.x - from.pose.x,
            dy: place.y - from.pose.y,
            dz: place.z - from.pose.z,
            place,
        }
    }

    /// Ids that move with this action: the whole stack for a push, otherwise
    /// the subject alone.
    pub fn moved(&self, state: &SceneState) -> Vec<ObjectId> {
        match self.kind {
            ActionKind::Push => state.stack_from(self.subject).unwrap_or_else(|_| vec![self.subject]),
            _ => vec![self.subject],
        }
    }

    /// The moved objects at their post-action poses.
    pub fn placements(&self, state: &SceneState) -> Vec<ObjectInstance> {
        let Ok(subject) = state.object(self.subject) else { return Vec::new() };
        let (dx, dy, dz) = (self.place.x - subject.pose.x, self.place.y - subject.pose.y, self.place.z - subject.pose.z);
        self.moved(state)
            .into_iter()
            .filter_map(|id| state.object(id).ok())
            .map(|o| {
                let mut o = *o;
                o.pose = if o.id == self.subject { self.place } else { Pose::new(o.pose.x + dx, o.pose.y + dy, o.pose.z + dz) };
                o
            })
            .collect()
    }

    /// Canonical order: kind, subject, slot, then placement for stability.
    pub fn canonical_cmp(&self, other: &Action) -> Ordering {
        self.kind
            .cmp(&other.kind)
            .then(self.subject.cmp(&other.subject))
            .then(self.slot.cmp(&other.slot))
            .then(self.place.x.total_cmp(&other.place.x))
            .then(self.place.y.total_cmp(&other.place.y))
            .then(self.place.z.total_cmp(&other.place.z))
    }

    /// Same kind, subject, supporter and placement within 1e-6 m.
    pub fn same_as(&self, other: &Action) -> bool {
        self.kind == other.kind
            && self.subject == other.subject
            && self.supporter == other.supporter
            && self.place.approx_eq(&other.place, 1e-6)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("actions always serialize")
    }
}

/// Why an action cannot be executed.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Infeasible {
    #[error("unknown object {0}")]
    UnknownObject(ObjectId),
    #[error("object {0} is the target")]
    TargetSubject(ObjectId),
    #[error("object {0} does not rest on the shelf floor")]
    NotOnFloor(ObjectId),
    #[error("object {0} supports another object")]
    HasChild(ObjectId),
    #[error("object {0} is not stacked")]
    NotStacked(ObjectId),
    #[error("supporter {0} is not valid for stacking")]
    BadSupporter(ObjectId),
    #[error("containment violated: {subject} on {supporter}")]
    ContainmentViolated { subject: ObjectId, supporter: ObjectId },
    #[error("stack area non-increasing violated: {subject} on {supporter}")]
    AreaIncreases { subject: ObjectId, supporter: ObjectId },
    #[error("object {0} would not fit under the ceiling")]
    TooTall(ObjectId),
    #[error("placement of {0} outside shelf bounds")]
    OutOfBounds(ObjectId),
    #[error("swept path of {subject} collides with {obstacle}")]
    Collision { subject: ObjectId, obstacle: ObjectId },
    #[error("push of {subject} by {dx} exceeds the free distance {free}")]
    PushTooFar { subject: ObjectId, dx: f64, free: f64 },
    #[error("action on {0} does not move anything")]
    NoMotion(ObjectId),
    #[error("pose of {0} does not match the action kind")]
    BadPlacement(ObjectId),
}

/// Generator and feasibility parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionConfig {
    /// Number of equal-width bins along the shelf x axis.
    pub bins: usize,
    /// Standoff from the back wall for suction placements.
    pub wall_clearance: f64,
    /// Radius of the vertical tool column.
    pub tool_radius: f64,
    /// Height objects are lifted before moving.
    pub lift: f64,
    /// Pushes shorter than this are dropped.
    pub min_push: f64,
    /// Slack left between objects in contact.
    pub contact_gap: f64,
}

impl Default for ActionConfig {
    fn default() -> Self {
        ActionConfig { bins: 10, wall_clearance: 0.005, tool_radius: 0.02, lift: 0.005, min_push: 1e-3, contact_gap: 1e-5 }
    }
}

impl ActionConfig {
    pub fn bin_center(&self, width: f64, b: usize) -> f64 {
        -width / 2.0 + (b as f64 + 0.5) * width / self.bins as f64
    }
}

/// Upper bound on the action count for `n` movable objects.
pub fn action_bound(n: usize, bins: usize) -> usize {
    (2 + bins) * n + n * n
}

/// All actions for `state`, deduplicated and canonically ordered. Only
/// objects for which `visible` holds are eligible subjects or supporters;
/// for pushes, it is enough that one object of the stack is visible.
pub fn gen_all(state: &SceneState, visible: &dyn Fn(ObjectId) -> bool, cfg: &ActionConfig) -> Vec<Action> {
    let mut out = gen_pushes(state, visible, cfg);
    out.extend(gen_rearrangements(state, visible, cfg));
    out.extend(gen_destacks(state, visible, cfg));
    out.extend(gen_stacks(state, visible, cfg));
    canonicalize(out)
}

/// Sorts canonically and drops near-duplicates.
pub fn canonicalize(mut actions: Vec<Action>) -> Vec<Action> {
    actions.sort_by(|a, b| a.canonical_cmp(b));
    let mut out: Vec<Action> = Vec::with_capacity(actions.len());
    for a in actions {
        if !out.iter().rev().take_while(|b| b.kind == a.kind && b.subject == a.subject).any(|b| b.same_as(&a)) {
            out.push(a);
        }
    }
    out
}

fn carries_target(state: &SceneState, base: ObjectId) -> bool {
    state
        .stack_from(base)
        .map(|ids| ids.iter().any(|id| state.object(*id).is_ok_and(|o| o.is_target)))
        .unwrap_or(true)
}

pub fn gen_pushes(state: &SceneState, visible: &dyn Fn(ObjectId) -> bool, cfg: &ActionConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for o in state.objects() {
        if state.stacks.parent(o.id) != Some(Supporter::Shelf) || carries_target(state, o.id) {
            continue;
        }
        let chain = state.stack_from(o.id).expect("object exists");
        if !chain.iter().any(|id| visible(*id)) {
            continue;
        }
        for sign in [-1.0, 1.0] {
            let free = free_push(state, &chain, sign) - cfg.contact_gap;
            if free >= cfg.min_push {
                out.push(Action::push(state, o.id, sign * free).expect("object exists"));
            }
        }
    }
    out
}

/// Distance the stack `chain` can slide along `sign` before touching a wall
/// or an object whose height range overlaps one of its members.
pub fn free_push(state: &SceneState, chain: &[ObjectId], sign: f64) -> f64 {
    let hw = state.shelf.half_width();
    let mut free = f64::INFINITY;
    for id in chain {
        let m = state.object(*id).expect("chain ids exist");
        let [x0, x1, _, _] = m.footprint().bounds();
        free = free.min(if sign > 0.0 { hw - x1 } else { x0 + hw });
        for o in state.objects() {
            if chain.contains(&o.id) || !intervals_overlap(m.pose.z, m.top(), o.pose.z, o.top(), TOL) {
                continue;
            }
            if let Some(d) = m.footprint().sweep_x(&o.footprint(), sign) {
                free = free.min(d);
            }
        }
    }
    free.max(0.0)
}

pub fn gen_rearrangements(state: &SceneState, visible: &dyn Fn(ObjectId) -> bool, cfg: &ActionConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for o in state.objects() {
        if o.is_target
            || !visible(o.id)
            || state.stacks.parent(o.id) != Some(Supporter::Shelf)
            || state.stacks.has_child(o.id)
            || !liftable(state, o, cfg)
            || pull_out_blocker(state, o, cfg).is_some()
        {
            continue;
        }
        out.extend(floor_placements(state, o, ActionKind::Rearrange, cfg));
    }
    out
}

pub fn gen_destacks(state: &SceneState, visible: &dyn Fn(ObjectId) -> bool, cfg: &ActionConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for o in state.objects() {
        if o.is_target
            || !visible(o.id)
            || !matches!(state.stacks.parent(o.id), Some(Supporter::Object(_)))
            || state.stacks.has_child(o.id)
            || !liftable(state, o, cfg)
            || pull_out_blocker(state, o, cfg).is_some()
        {
            continue;
        }
        out.extend(floor_placements(state, o, ActionKind::Destack, cfg));
    }
    out
}

pub fn gen_stacks(state: &SceneState, visible: &dyn Fn(ObjectId) -> bool, cfg: &ActionConfig) -> Vec<Action> {
    let mut out = Vec::new();
    for o in state.objects() {
        if o.is_target
            || !visible(o.id)
            || state.stacks.has_child(o.id)
            || !liftable(state, o, cfg)
            || pull_out_blocker(state, o, cfg).is_some()
        {
            continue;
        }
        for p in state.objects() {
            if p.id == o.id || p.is_target || !visible(p.id) || state.stacks.has_child(p.id) {
                continue;
            }
            let place = Pose::new(p.pose.x, p.pose.y, p.top());
            if stack_conditions(o, p).is_err() || place.z + o.shape.height() + cfg.lift > state.shelf.height + TOL {
                continue;
            }
            if slide_in_blocker(state, o, place, cfg).is_none() {
                out.push(Action::suction(ActionKind::Stack, o, Some(p.id), p.id, place));
            }
        }
    }
    out
}

fn stack_conditions(subject: &ObjectInstance, supporter: &ObjectInstance) -> Result<(), Infeasible> {
    let placed = subject.shape.footprint_at(supporter.pose.x, supporter.pose.y);
    if !supporter.footprint().contains(&placed, TOL) {
        return Err(Infeasible::ContainmentViolated { subject: subject.id, supporter: supporter.id });
    }
    if subject.shape.footprint_area() > supporter.shape.footprint_area() + TOL * TOL {
        return Err(Infeasible::AreaIncreases { subject: subject.id, supporter: supporter.id });
    }
    Ok(())
}

/// One placement per bin: bin-center x (clamped into the shelf) and the
/// deepest y the slide-in motion can reach.
fn floor_placements(state: &SceneState, o: &ObjectInstance, kind: ActionKind, cfg: &ActionConfig) -> Vec<Action> {
    let mut out = Vec::new();
    let (hx, _) = o.shape.half_extents();
    let hw = state.shelf.half_width();
    for b in 0..cfg.bins {
        let x = cfg.bin_center(state.shelf.width, b).clamp(-hw + hx, hw - hx);
        let Some(y) = deepest_y(state, o, x, cfg) else { continue };
        let place = Pose::new(x, y, 0.0);
        if place.approx_eq(&o.pose, 1e-6) {
            continue;
        }
        if slide_in_blocker(state, o, place, cfg).is_none() {
            out.push(Action::suction(kind, o, None, b as u32, place));
        }
    }
    out
}

/// Deepest y for `o` placed on the floor at `x`, or `None` when even the
/// front of the shelf is blocked.
fn deepest_y(state: &SceneState, o: &ObjectInstance, x: f64, cfg: &ActionConfig) -> Option<f64> {
    let (hx, hy) = o.shape.half_extents();
    let h = o.shape.height();
    let r = cfg.tool_radius;
    let hd = state.shelf.half_depth();
    let mut y = -hd + hy + cfg.wall_clearance;
    for other in state.objects() {
        if other.id == o.id {
            continue;
        }
        let b = other.aabb();
        let body = intervals_overlap(x - hx, x + hx, b.min[0], b.max[0], TOL)
            && intervals_overlap(cfg.lift, cfg.lift + h, b.min[2], b.max[2], TOL);
        if body {
            y = y.max(b.max[1] + hy + cfg.contact_gap);
        }
        let tool = intervals_overlap(x - r, x + r, b.min[0], b.max[0], TOL)
            && intervals_overlap(cfg.lift + h, state.shelf.height, b.min[2], b.max[2], TOL);
        if tool {
            y = y.max(b.max[1] + r + cfg.contact_gap);
        }
    }
    (y + hy <= hd + TOL).then_some(y)
}

/// Boxes swept by the object and the tool column when the object moves
/// along y between `y` and the front of the shelf with its base at `z`.
fn swept_boxes(state: &SceneState, shape: &ObjectShape, x: f64, y: f64, z: f64, cfg: &ActionConfig) -> [Aabb; 2] {
    let (hx, hy) = shape.half_extents();
    let r = cfg.tool_radius;
    let front = state.shelf.half_depth() + 1.0;
    let lifted = z + cfg.lift;
    let top = lifted + shape.height();
    [
        Aabb::new([x - hx, y - hy, lifted], [x + hx, front, top]),
        Aabb::new([x - r, y - r, top], [x + r, front, state.shelf.height.max(top)]),
    ]
}

fn first_blocker(state: &SceneState, subject: ObjectId, boxes: &[Aabb; 2]) -> Option<ObjectId> {
    state
        .objects()
        .iter()
        .filter(|o| o.id != subject)
        .find(|o| {
            let b = o.aabb();
            boxes.iter().any(|s| s.intersects(&b, TOL))
        })
        .map(|o| o.id)
}

/// Whether `o` can be raised by the lift height where it stands.
fn liftable(state: &SceneState, o: &ObjectInstance, cfg: &ActionConfig) -> bool {
    o.pose.z + o.shape.height() + cfg.lift <= state.shelf.height + TOL
}

/// Obstacle in the way of lifting `o` and pulling it out of the shelf.
pub fn pull_out_blocker(state: &SceneState, o: &ObjectInstance, cfg: &ActionConfig) -> Option<ObjectId> {
    let boxes = swept_boxes(state, &o.shape, o.pose.x, o.pose.y, o.pose.z, cfg);
    first_blocker(state, o.id, &boxes)
}

/// Obstacle in the way of sliding `o` in to `place`.
pub fn slide_in_blocker(state: &SceneState, o: &ObjectInstance, place: Pose, cfg: &ActionConfig) -> Option<ObjectId> {
    let boxes = swept_boxes(state, &o.shape, place.x, place.y, place.z, cfg);
    first_blocker(state, o.id, &boxes)
}

/// Full feasibility re-check of `action` in `state`.
pub fn check_feasible(state: &SceneState, action: &Action, cfg: &ActionConfig) -> Result<(), Infeasible> {
    let id = action.subject;
    let o = *state.object(id).map_err(|_| Infeasible::UnknownObject(id))?;
    if o.is_target {
        return Err(Infeasible::TargetSubject(id));
    }
    let parent = state.stacks.parent(id).unwrap_or(Supporter::Shelf);
    let shelf = &state.shelf;
    let (hx, hy) = o.shape.half_extents();
    let in_bounds = |p: Pose| {
        p.x - hx >= -shelf.half_width() - TOL
            && p.x + hx <= shelf.half_width() + TOL
            && p.y - hy >= -shelf.half_depth() - TOL
            && p.y + hy <= shelf.half_depth() + TOL
            && p.z + o.shape.height() <= shelf.height + TOL
    };
    match action.kind {
        ActionKind::Push => {
            if parent != Supporter::Shelf {
                return Err(Infeasible::NotOnFloor(id));
            }
            if carries_target(state, id) {
                return Err(Infeasible::TargetSubject(id));
            }
            let dx = action.place.x - o.pose.x;
            if action.place.y != o.pose.y || action.place.z != o.pose.z {
                return Err(Infeasible::BadPlacement(id));
            }
            if dx == 0.0 {
                return Err(Infeasible::NoMotion(id));
            }
            let chain = state.stack_from(id).expect("subject exists");
            let free = free_push(state, &chain, dx.signum());
            if dx.abs() > free + 1e-12 {
                return Err(Infeasible::PushTooFar { subject: id, dx, free });
            }
            Ok(())
        }
        kind => {
            if state.stacks.has_child(id) {
                return Err(Infeasible::HasChild(id));
            }
            match kind {
                ActionKind::Rearrange if parent != Supporter::Shelf => return Err(Infeasible::NotOnFloor(id)),
                ActionKind::Destack if parent == Supporter::Shelf => return Err(Infeasible::NotStacked(id)),
                _ => {}
            }
            if action.place.approx_eq(&o.pose, 1e-9) {
                return Err(Infeasible::NoMotion(id));
            }
            let expected_z = match (kind, action.supporter) {
                (ActionKind::Stack, Some(s)) => {
                    let p = state.object(s).map_err(|_| Infeasible::BadSupporter(s))?;
                    if s == id || p.is_target || state.stacks.has_child(s) {
                        return Err(Infeasible::BadSupporter(s));
                    }
                    stack_conditions(&o, p)?;
                    if (action.place.x - p.pose.x).abs() > TOL || (action.place.y - p.pose.y).abs() > TOL {
                        return Err(Infeasible::BadPlacement(id));
                    }
                    p.top()
                }
                (ActionKind::Stack, None) => return Err(Infeasible::BadPlacement(id)),
                _ => 0.0,
            };
            if (action.place.z - expected_z).abs() > TOL {
                return Err(Infeasible::BadPlacement(id));
            }
            if !in_bounds(action.place) {
                return Err(Infeasible::OutOfBounds(id));
            }
            if action.place.z + o.shape.height() + cfg.lift > shelf.height + TOL || !liftable(state, &o, cfg) {
                return Err(Infeasible::TooTall(id));
            }
            if let Some(b) = pull_out_blocker(state, &o, cfg) {
                return Err(Infeasible::Collision { subject: id, obstacle: b });
            }
            if let Some(b) = slide_in_blocker(state, &o, action.place, cfg) {
                return Err(Infeasible::Collision { subject: id, obstacle: b });
            }
            Ok(())
        }
    }
}
