//! Geometric world model: shelf, upright objects and the stack tree.

mod file;
mod validate;

pub use file::{format_f64, to_canonical_json, SceneFile, SceneFileError};
pub use validate::{validate_scene, ValidationReport, Violation};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Footprint};

pub type ObjectId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("unknown object id {0}")]
    UnknownObject(ObjectId),
    #[error("invalid shelf dimensions {0:?}")]
    InvalidShelf([f64; 3]),
}

/// Shelf interior. The origin sits at the center of the shelf floor with y
/// pointing toward the opening and z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShelfSpec {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
}

impl ShelfSpec {
    pub fn new(width: f64, height: f64, depth: f64) -> Result<Self, SceneError> {
        let shelf = ShelfSpec { width, height, depth };
        if shelf.is_valid() {
            Ok(shelf)
        } else {
            Err(SceneError::InvalidShelf([width, height, depth]))
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.width, self.height, self.depth].iter().all(|v| v.is_finite() && *v > 0.0)
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn half_depth(&self) -> f64 {
        self.depth / 2.0
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::new(
            [-self.half_width(), -self.half_depth(), 0.0],
            [self.half_width(), self.half_depth(), self.height],
        )
    }
}

impl Default for ShelfSpec {
    fn default() -> Self {
        ShelfSpec { width: 0.80, height: 0.50, depth: 0.50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ObjectShape {
    Cuboid { extent_x: f64, extent_y: f64, extent_z: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl ObjectShape {
    pub fn cuboid(extent_x: f64, extent_y: f64, extent_z: f64) -> Self {
        ObjectShape::Cuboid { extent_x, extent_y, extent_z }
    }

    pub fn cylinder(radius: f64, height: f64) -> Self {
        ObjectShape::Cylinder { radius, height }
    }

    pub fn height(&self) -> f64 {
        match *self {
            ObjectShape::Cuboid { extent_z, .. } => extent_z,
            ObjectShape::Cylinder { height, .. } => height,
        }
    }

    /// Half extents of the footprint bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        match *self {
            ObjectShape::Cuboid { extent_x, extent_y, .. } => (extent_x / 2.0, extent_y / 2.0),
            ObjectShape::Cylinder { radius, .. } => (radius, radius),
        }
    }

    pub fn footprint_area(&self) -> f64 {
        self.footprint_at(0.0, 0.0).area()
    }

    pub fn footprint_at(&self, x: f64, y: f64) -> Footprint {
        match *self {
            ObjectShape::Cuboid { extent_x, extent_y, .. } => Footprint::Rect {
                cx: x,
                cy: y,
                hx: extent_x / 2.0,
                hy: extent_y / 2.0,
            },
            ObjectShape::Cylinder { radius, .. } => Footprint::Circle { cx: x, cy: y, r: radius },
        }
    }

    pub fn is_valid(&self) -> bool {
        let dims: &[f64] = match self {
            ObjectShape::Cuboid { extent_x, extent_y, extent_z } => &[*extent_x, *extent_y, *extent_z],
            ObjectShape::Cylinder { radius, height } => &[*radius, *height],
        };
        dims.iter().all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Position of an object: footprint center in x/y and bottom face height in z.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Pose {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Pose { x, y, z }
    }

    pub fn approx_eq(&self, other: &Pose, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol && (self.y - other.y).abs() <= tol && (self.z - other.z).abs() <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub shape: ObjectShape,
    pub pose: Pose,
    pub is_target: bool,
}

impl ObjectInstance {
    pub fn new(id: ObjectId, shape: ObjectShape, pose: Pose) -> Self {
        ObjectInstance { id, shape, pose, is_target: false }
    }

    pub fn target(id: ObjectId, shape: ObjectShape, pose: Pose) -> Self {
        ObjectInstance { id, shape, pose, is_target: true }
    }

    pub fn footprint(&self) -> Footprint {
        self.shape.footprint_at(self.pose.x, self.pose.y)
    }

    pub fn top(&self) -> f64 {
        self.pose.z + self.shape.height()
    }

    pub fn aabb(&self) -> Aabb {
        let (hx, hy) = self.shape.half_extents();
        Aabb::new(
            [self.pose.x - hx, self.pose.y - hy, self.pose.z],
            [self.pose.x + hx, self.pose.y + hy, self.top()],
        )
    }
}

/// What holds an object up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Supporter {
    Shelf,
    Object(ObjectId),
}

/// Support relations. Every object has exactly one supporter; a valid scene
/// has at most one child per object, so stacks are chains.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct StackTree {
    parent: BTreeMap<ObjectId, Supporter>,
    children: BTreeMap<Supporter, BTreeSet<ObjectId>>,
}

impl StackTree {
    pub fn new() -> Self {
        StackTree::default()
    }

    /// Sets the supporter of `child`, detaching it from any previous one.
    pub fn set_parent(&mut self, child: ObjectId, parent: Supporter) {
        if let Some(old) = self.parent.insert(child, parent) {
            if let Some(set) = self.children.get_mut(&old) {
                set.remove(&child);
                if set.is_empty() {
                    self.children.remove(&old);
                }
            }
        }
        self.children.entry(parent).or_default().insert(child);
    }

    pub fn remove(&mut self, id: ObjectId) {
        if let Some(old) = self.parent.remove(&id) {
            if let Some(set) = self.children.get_mut(&old) {
                set.remove(&id);
                if set.is_empty() {
                    self.children.remove(&old);
                }
            }
        }
    }

    pub fn parent(&self, id: ObjectId) -> Option<Supporter> {
        self.parent.get(&id).copied()
    }

    pub fn children(&self, supporter: Supporter) -> impl Iterator<Item = ObjectId> + '_ {
        self.children.get(&supporter).into_iter().flat_map(|s| s.iter().copied())
    }

    /// The (first) object resting directly on `id`.
    pub fn child(&self, id: ObjectId) -> Option<ObjectId> {
        self.children(Supporter::Object(id)).next()
    }

    pub fn has_child(&self, id: ObjectId) -> bool {
        self.child(id).is_some()
    }

    pub fn parents(&self) -> impl Iterator<Item = (ObjectId, Supporter)> + '_ {
        self.parent.iter().map(|(c, p)| (*c, *p))
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }
}

/// Full ground-truth world state.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub shelf: ShelfSpec,
    objects: Vec<ObjectInstance>,
    pub stacks: StackTree,
}

impl SceneState {
    pub fn new(shelf: ShelfSpec) -> Self {
        SceneState { shelf, objects: Vec::new(), stacks: StackTree::new() }
    }

    /// Builds a scene from objects and `(child, supporter)` pairs. Objects not
    /// listed in `support` rest on the shelf.
    pub fn from_parts(
        shelf: ShelfSpec,
        objects: Vec<ObjectInstance>,
        support: &[(ObjectId, ObjectId)],
    ) -> Self {
        let mut scene = SceneState::new(shelf);
        for o in objects {
            scene.insert(o, Supporter::Shelf);
        }
        for &(child, parent) in support {
            scene.stacks.set_parent(child, Supporter::Object(parent));
        }
        scene
    }

    /// Adds an object; ids are kept sorted. An existing object with the same
    /// id is replaced.
    pub fn insert(&mut self, object: ObjectInstance, supporter: Supporter) {
        match self.objects.binary_search_by_key(&object.id, |o| o.id) {
            Ok(i) => self.objects[i] = object,
            Err(i) => self.objects.insert(i, object),
        }
        self.stacks.set_parent(object.id, supporter);
    }

    pub fn remove(&mut self, id: ObjectId) -> Option<ObjectInstance> {
        let i = self.objects.binary_search_by_key(&id, |o| o.id).ok()?;
        self.stacks.remove(id);
        Some(self.objects.remove(i))
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn object(&self, id: ObjectId) -> Result<&ObjectInstance, SceneError> {
        self.objects
            .binary_search_by_key(&id, |o| o.id)
            .map(|i| &self.objects[i])
            .map_err(|_| SceneError::UnknownObject(id))
    }

    pub(crate) fn object_mut(&mut self, id: ObjectId) -> Result<&mut ObjectInstance, SceneError> {
        match self.objects.binary_search_by_key(&id, |o| o.id) {
            Ok(i) => Ok(&mut self.objects[i]),
            Err(_) => Err(SceneError::UnknownObject(id)),
        }
    }

    pub fn contains(&self, id: ObjectId) -> bool {
        self.objects.binary_search_by_key(&id, |o| o.id).is_ok()
    }

    pub fn target(&self) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.is_target)
    }

    /// Number of non-target objects.
    pub fn occluder_count(&self) -> usize {
        self.objects.iter().filter(|o| !o.is_target).count()
    }

    pub fn next_free_id(&self) -> ObjectId {
        self.objects.last().map_or(0, |o| o.id + 1)
    }

    pub fn parent(&self, id: ObjectId) -> Result<Supporter, SceneError> {
        self.object(id)?;
        Ok(self.stacks.parent(id).unwrap_or(Supporter::Shelf))
    }

    /// Topmost object of the stack that contains `id`.
    pub fn stack_top(&self, id: ObjectId) -> Result<ObjectId, SceneError> {
        self.object(id)?;
        let mut current = id;
        let mut steps = 0;
        while let Some(next) = self.stacks.child(current) {
            current = next;
            steps += 1;
            if steps > self.objects.len() {
                break;
            }
        }
        Ok(current)
    }

    /// Bottom object of the stack containing `id`.
    pub fn stack_base(&self, id: ObjectId) -> Result<ObjectId, SceneError> {
        self.object(id)?;
        let mut current = id;
        let mut steps = 0;
        while let Some(Supporter::Object(p)) = self.stacks.parent(current) {
            current = p;
            steps += 1;
            if steps > self.objects.len() {
                break;
            }
        }
        Ok(current)
    }

    /// Objects resting (directly or transitively) on `id`, bottom to top,
    /// starting with `id` itself.
    pub fn stack_from(&self, id: ObjectId) -> Result<Vec<ObjectId>, SceneError> {
        self.object(id)?;
        let mut chain = vec![id];
        let mut current = id;
        while let Some(next) = self.stacks.child(current) {
            if chain.contains(&next) {
                break;
            }
            chain.push(next);
            current = next;
        }
        Ok(chain)
    }

    /// Height of the surface an object placed on `supporter` would rest on.
    pub fn support_height(&self, supporter: Supporter) -> Result<f64, SceneError> {
        match supporter {
            Supporter::Shelf => Ok(0.0),
            Supporter::Object(id) => Ok(self.object(id)?.top()),
        }
    }

    pub fn is_stacked(&self, id: ObjectId) -> bool {
        matches!(self.stacks.parent(id), Some(Supporter::Object(_))) || self.stacks.has_child(id)
    }

    pub fn set_pose(&mut self, id: ObjectId, pose: Pose) -> Result<(), SceneError> {
        self.object_mut(id)?.pose = pose;
        Ok(())
    }
}
