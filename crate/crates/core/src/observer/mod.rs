//! Software depth renderer with per-object segmentation.
//!
//! Every pixel casts one ray through its center; objects are intersected
//! analytically (slab test for cuboids, circle/slab for cylinders) and the
//! nearest hit wins. Pixels not covered by an object show the shelf
//! interior: back wall, floor, ceiling or side walls.

mod camera;
pub mod pgm;
pub mod reconstruct;

pub use camera::{CameraError, CameraSpec};

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Aabb;
use crate::scene::{ObjectId, ObjectInstance, ObjectShape, SceneState, ShelfSpec};

/// Label of pixels that show the shelf itself.
pub const NO_OBJECT: u32 = u32::MAX;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserveError {
    #[error("object {0} has no visible pixels")]
    Occluded(ObjectId),
    #[error("moved objects have no visible pixels")]
    EmptyMask,
    #[error("placement of object {0} projects outside the image")]
    OutsideImage(ObjectId),
}

/// Half-open pixel rectangle `[col0, col1) x [row0, row1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelRect {
    pub col0: usize,
    pub col1: usize,
    pub row0: usize,
    pub row1: usize,
}

impl PixelRect {
    pub fn is_empty(&self) -> bool {
        self.col0 >= self.col1 || self.row0 >= self.row1
    }

    pub fn area(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.col1 - self.col0) * (self.row1 - self.row0)
        }
    }

    pub fn union(&self, other: &PixelRect) -> PixelRect {
        if self.is_empty() {
            return *other;
        }
        if other.is_empty() {
            return *self;
        }
        PixelRect {
            col0: self.col0.min(other.col0),
            col1: self.col1.max(other.col1),
            row0: self.row0.min(other.row0),
            row1: self.row1.max(other.row1),
        }
    }

    pub fn intersects(&self, other: &PixelRect) -> bool {
        !self.is_empty()
            && !other.is_empty()
            && self.col0 < other.col1
            && other.col0 < self.col1
            && self.row0 < other.row1
            && other.row0 < self.row1
    }
}

/// Summary of one object's visible mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskStats {
    pub area: usize,
    pub col_min: usize,
    pub col_max: usize,
    pub row_min: usize,
    pub row_max: usize,
}

impl MaskStats {
    pub fn rect(&self) -> PixelRect {
        PixelRect { col0: self.col_min, col1: self.col_max + 1, row0: self.row_min, row1: self.row_max + 1 }
    }
}

/// Boolean image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }
}

/// Rendered view of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    labels: Vec<u32>,
    stats: BTreeMap<ObjectId, MaskStats>,
    target: Option<ObjectId>,
    target_visibility: f64,
    full_target_mask_area: usize,
}

impl Observation {
    /// Assembles an observation from raw buffers (synthetic or predicted
    /// images).
    pub fn from_parts(
        width: usize,
        height: usize,
        depth: Vec<f64>,
        labels: Vec<u32>,
        target: Option<ObjectId>,
        full_target_mask_area: usize,
    ) -> Self {
        assert_eq!(depth.len(), width * height, "depth buffer size");
        assert_eq!(labels.len(), width * height, "label buffer size");
        let mut obs = Observation {
            width,
            height,
            depth,
            labels,
            stats: BTreeMap::new(),
            target,
            target_visibility: 0.0,
            full_target_mask_area,
        };
        obs.refresh();
        obs
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major depth in meters along the optical axis.
    pub fn depth(&self) -> &[f64] {
        &self.depth
    }

    /// Row-major object labels; [`NO_OBJECT`] for shelf pixels.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn depth_at(&self, col: usize, row: usize) -> f64 {
        self.depth[row * self.width + col]
    }

    pub fn label_at(&self, col: usize, row: usize) -> Option<ObjectId> {
        match self.labels[row * self.width + col] {
            NO_OBJECT => None,
            id => Some(id),
        }
    }

    pub fn target(&self) -> Option<ObjectId> {
        self.target
    }

    /// Visible fraction of the target's unoccluded projection; 0 without a
    /// target.
    pub fn target_visibility(&self) -> f64 {
        self.target_visibility
    }

    pub fn full_target_mask_area(&self) -> usize {
        self.full_target_mask_area
    }

    pub fn stats(&self, id: ObjectId) -> Option<&MaskStats> {
        self.stats.get(&id)
    }

    /// Ids with at least one visible pixel, ascending.
    pub fn visible_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.stats.keys().copied()
    }

    pub fn is_visible(&self, id: ObjectId) -> bool {
        self.stats.contains_key(&id)
    }

    pub fn mask_area(&self, id: ObjectId) -> usize {
        self.stats.get(&id).map_or(0, |s| s.area)
    }

    pub fn mask(&self, id: ObjectId) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.labels.iter().map(|&l| l == id).collect(),
        }
    }

    pub fn masks(&self) -> BTreeMap<ObjectId, Mask> {
        self.stats.keys().map(|&id| (id, self.mask(id))).collect()
    }

    /// Pixel indices of `id`'s mask, row-major order.
    pub fn mask_pixels(&self, id: ObjectId) -> Vec<usize> {
        let Some(s) = self.stats.get(&id) else { return Vec::new() };
        let mut out = Vec::with_capacity(s.area);
        for row in s.row_min..=s.row_max {
            let base = row * self.width;
            for col in s.col_min..=s.col_max {
                if self.labels[base + col] == id {
                    out.push(base + col);
                }
            }
        }
        out
    }

    /// Leftmost and rightmost columns holding a pixel of `id`.
    pub fn object_column_extent(&self, id: ObjectId) -> Result<(usize, usize), ObserveError> {
        self.stats.get(&id).map(|s| (s.col_min, s.col_max)).ok_or(ObserveError::Occluded(id))
    }

    /// Number of target pixels per image column.
    pub fn target_column_histogram(&self) -> Vec<f64> {
        let mut hist = vec![0.0; self.width];
        if let Some(t) = self.target {
            for p in self.mask_pixels(t) {
                hist[p % self.width] += 1.0;
            }
        }
        hist
    }

    fn refresh(&mut self) {
        self.stats = mask_stats(&self.labels, self.width);
        self.target_visibility = match self.target {
            Some(t) if self.full_target_mask_area > 0 => {
                let visible = self.stats.get(&t).map_or(0, |s| s.area);
                (visible as f64 / self.full_target_mask_area as f64).min(1.0)
            }
            _ => 0.0,
        };
    }
}

fn mask_stats(labels: &[u32], width: usize) -> BTreeMap<ObjectId, MaskStats> {
    let mut stats: BTreeMap<ObjectId, MaskStats> = BTreeMap::new();
    for (p, &l) in labels.iter().enumerate() {
        if l == NO_OBJECT {
            continue;
        }
        let (col, row) = (p % width, p / width);
        stats
            .entry(l)
            .and_modify(|s| {
                s.area += 1;
                s.col_min = s.col_min.min(col);
                s.col_max = s.col_max.max(col);
                s.row_min = s.row_min.min(row);
                s.row_max = s.row_max.max(row);
            })
            .or_insert(MaskStats { area: 1, col_min: col, col_max: col, row_min: row, row_max: row });
    }
    stats
}

/// Analytic solid used for ray casting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Solid {
    Box { min: [f64; 3], max: [f64; 3] },
    Cylinder { cx: f64, cy: f64, r: f64, z0: f64, z1: f64 },
}

impl Solid {
    pub fn of(object: &ObjectInstance) -> Solid {
        match object.shape {
            ObjectShape::Cuboid { .. } => {
                let b = object.aabb();
                Solid::Box { min: b.min, max: b.max }
            }
            ObjectShape::Cylinder { radius, height } => Solid::Cylinder {
                cx: object.pose.x,
                cy: object.pose.y,
                r: radius,
                z0: object.pose.z,
                z1: object.pose.z + height,
            },
        }
    }

    pub fn aabb(&self) -> Aabb {
        match *self {
            Solid::Box { min, max } => Aabb::new(min, max),
            Solid::Cylinder { cx, cy, r, z0, z1 } => Aabb::new([cx - r, cy - r, z0], [cx + r, cy + r, z1]),
        }
    }
}

/// Precomputed per-pixel rays for one camera.
#[derive(Debug, Clone)]
pub struct Rays {
    origin: [f64; 3],
    dx: Vec<f64>,
    dz: Vec<f64>,
    inv_dx: Vec<f64>,
    inv_dz: Vec<f64>,
}

impl Rays {
    fn new(cam: &CameraSpec) -> Self {
        let dx: Vec<f64> = (0..cam.width).map(|c| cam.ray_dx(c)).collect();
        let dz: Vec<f64> = (0..cam.height).map(|r| cam.ray_dz(r)).collect();
        Rays {
            origin: cam.position,
            inv_dx: dx.iter().map(|v| 1.0 / v).collect(),
            inv_dz: dz.iter().map(|v| 1.0 / v).collect(),
            dx,
            dz,
        }
    }

    /// Entry depth of the ray through `(col, row)` into `solid`.
    #[inline]
    pub fn hit(&self, solid: &Solid, col: usize, row: usize) -> Option<f64> {
        let o = self.origin;
        match *solid {
            Solid::Box { min, max } => {
                let mut t0 = o[1] - max[1];
                let mut t1 = o[1] - min[1];
                if !slab(o[0], self.dx[col], self.inv_dx[col], min[0], max[0], &mut t0, &mut t1) {
                    return None;
                }
                if !slab(o[2], self.dz[row], self.inv_dz[row], min[2], max[2], &mut t0, &mut t1) {
                    return None;
                }
                (t0 <= t1 && t1 > 0.0).then_some(t0.max(0.0))
            }
            Solid::Cylinder { cx, cy, r, z0, z1 } => {
                let dx = self.dx[col];
                let ox = o[0] - cx;
                let oy = o[1] - cy;
                // |(ox + t dx, oy - t)|^2 = r^2
                let a = dx * dx + 1.0;
                let b = 2.0 * (ox * dx - oy);
                let c = ox * ox + oy * oy - r * r;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let mut t0 = (-b - sq) / (2.0 * a);
                let mut t1 = (-b + sq) / (2.0 * a);
                if !slab(o[2], self.dz[row], self.inv_dz[row], z0, z1, &mut t0, &mut t1) {
                    return None;
                }
                (t0 <= t1 && t1 > 0.0).then_some(t0.max(0.0))
            }
        }
    }
}

#[inline]
fn slab(origin: f64, dir: f64, inv: f64, lo: f64, hi: f64, t0: &mut f64, t1: &mut f64) -> bool {
    if dir == 0.0 {
        return origin >= lo && origin <= hi;
    }
    let a = (lo - origin) * inv;
    let b = (hi - origin) * inv;
    let (near, far) = if a < b { (a, b) } else { (b, a) };
    if near > *t0 {
        *t0 = near;
    }
    if far < *t1 {
        *t1 = far;
    }
    *t0 <= *t1
}

/// Moved object hypothesis: the mask it would show at its new pose.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reprojection {
    /// Visible pixels of the moved objects at their new poses, row-major.
    pub pixels: Vec<usize>,
    /// Leftmost and rightmost visible columns.
    pub columns: Option<(usize, usize)>,
    /// Visible pixels that currently belong to some other object's mask.
    pub overlap_others: usize,
}

impl Reprojection {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

/// How the pixels vacated by a moved object are filled in a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// The back wall (or floor) shows through.
    BackWall,
    /// A phantom object halfway between the moved surface and the back wall.
    Halfway,
}

/// Result of [`Renderer::predict_depth_after`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub obs: Observation,
    /// Pixels whose depth may differ from the source observation.
    pub changed: PixelRect,
}

/// A validated camera/shelf pair with cached rays and background depth.
#[derive(Debug, Clone)]
pub struct Renderer {
    camera: CameraSpec,
    shelf: ShelfSpec,
    rays: Arc<Rays>,
    background: Arc<Vec<f64>>,
}

impl Renderer {
    pub fn new(camera: CameraSpec, shelf: ShelfSpec) -> Result<Self, CameraError> {
        camera.validate(&shelf)?;
        let rays = Rays::new(&camera);
        let background = Arc::new(background_depth(&camera, &shelf));
        Ok(Renderer { camera, shelf, rays: Arc::new(rays), background })
    }

    pub fn camera(&self) -> &CameraSpec {
        &self.camera
    }

    pub fn shelf(&self) -> &ShelfSpec {
        &self.shelf
    }

    pub fn rays(&self) -> &Rays {
        &self.rays
    }

    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    /// Depth of the empty shelf at every pixel.
    pub fn background(&self) -> &[f64] {
        &self.background
    }

    /// Bounding pixel rectangle of a box, or `None` when it leaves the image.
    pub fn pixel_rect_checked(&self, b: &Aabb) -> Option<PixelRect> {
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &x in &[b.min[0], b.max[0]] {
            for &y in &[b.min[1], b.max[1]] {
                for &z in &[b.min[2], b.max[2]] {
                    if self.camera.depth_of([x, y, z]) <= 0.0 {
                        return None;
                    }
                    let (u, v) = self.camera.project([x, y, z]);
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
            }
        }
        let (w, h) = (self.camera.width as f64, self.camera.height as f64);
        if u0 < 0.0 || v0 < 0.0 || u1 > w || v1 > h {
            return None;
        }
        Some(self.rect_from_uv(u0, u1, v0, v1))
    }

    /// Bounding pixel rectangle of a box, clipped to the image.
    pub fn pixel_rect(&self, b: &Aabb) -> PixelRect {
        let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &x in &[b.min[0], b.max[0]] {
            for &y in &[b.min[1], b.max[1]] {
                for &z in &[b.min[2], b.max[2]] {
                    let (u, v) = self.camera.project([x, y, z]);
                    u0 = u0.min(u);
                    u1 = u1.max(u);
                    v0 = v0.min(v);
                    v1 = v1.max(v);
                }
            }
        }
        self.rect_from_uv(u0, u1, v0, v1)
    }

    fn rect_from_uv(&self, u0: f64, u1: f64, v0: f64, v1: f64) -> PixelRect {
        // pixel centers c + 0.5 inside [u0, u1]
        let (w, h) = (self.camera.width as f64, self.camera.height as f64);
        let c0 = (u0 - 0.5).ceil().clamp(0.0, w) as usize;
        let c1 = ((u1 - 0.5).floor() + 1.0).clamp(0.0, w) as usize;
        let r0 = (v0 - 0.5).ceil().clamp(0.0, h) as usize;
        let r1 = ((v1 - 0.5).floor() + 1.0).clamp(0.0, h) as usize;
        PixelRect { col0: c0, col1: c1.max(c0), row0: r0, row1: r1.max(r0) }
    }

    /// Number of pixels `object` would cover with nothing in front of it.
    pub fn silhouette_area(&self, object: &ObjectInstance) -> usize {
        let solid = Solid::of(object);
        let rect = self.pixel_rect(&solid.aabb());
        let mut n = 0;
        for row in rect.row0..rect.row1 {
            for col in rect.col0..rect.col1 {
                match self.rays.hit(&solid, col, row) {
                    Some(t) if t < self.background[row * self.camera.width + col] => n += 1,
                    _ => {}
                }
            }
        }
        n
    }

    /// Z-buffer render of every object in front of the shelf interior.
    pub fn render(&self, state: &SceneState) -> Observation {
        let (w, h) = (self.camera.width, self.camera.height);
        let mut depth = self.background.as_ref().clone();
        let mut labels = vec![NO_OBJECT; w * h];
        for object in state.objects() {
            self.splat(&Solid::of(object), object.id, &mut depth, &mut labels);
        }
        let target = state.target();
        let mut obs = Observation {
            width: w,
            height: h,
            depth,
            labels,
            stats: BTreeMap::new(),
            target: target.map(|t| t.id),
            target_visibility: 0.0,
            full_target_mask_area: target.map_or(0, |t| self.silhouette_area(t)),
        };
        obs.refresh();
        obs
    }

    fn splat(&self, solid: &Solid, id: ObjectId, depth: &mut [f64], labels: &mut [u32]) {
        let w = self.camera.width;
        let rect = self.pixel_rect(&solid.aabb());
        for row in rect.row0..rect.row1 {
            let base = row * w;
            for col in rect.col0..rect.col1 {
                if let Some(t) = self.rays.hit(solid, col, row) {
                    let p = base + col;
                    if t < depth[p] {
                        depth[p] = t;
                        labels[p] = id;
                    }
                }
            }
        }
    }

    /// Predicted observation after moving `moved` objects to `placements`.
    ///
    /// Pixels of the moved objects are first replaced by the back wall or by
    /// a phantom object (labelled `phantom`) halfway to it; the placements
    /// are then composited with the z-buffer.
    pub fn predict_depth_after(
        &self,
        obs: &Observation,
        moved: &[ObjectId],
        placements: &[ObjectInstance],
        outcome: Outcome,
        phantom: ObjectId,
    ) -> Result<Prediction, ObserveError> {
        let w = self.camera.width;
        let mut vacated = PixelRect::default();
        for id in moved {
            if let Some(s) = obs.stats(*id) {
                vacated = vacated.union(&s.rect());
            }
        }
        if vacated.is_empty() {
            return Err(ObserveError::EmptyMask);
        }
        let mut solids = Vec::with_capacity(placements.len());
        let mut changed = vacated;
        for p in placements {
            let solid = Solid::of(p);
            let rect = self.pixel_rect_checked(&solid.aabb()).ok_or(ObserveError::OutsideImage(p.id))?;
            changed = changed.union(&rect);
            solids.push((solid, p.id));
        }
        let mut next = obs.clone();
        for row in vacated.row0..vacated.row1 {
            for col in vacated.col0..vacated.col1 {
                let p = row * w + col;
                if moved.contains(&next.labels[p]) {
                    let bg = self.background[p];
                    match outcome {
                        Outcome::BackWall => {
                            next.depth[p] = bg;
                            next.labels[p] = NO_OBJECT;
                        }
                        Outcome::Halfway => {
                            next.depth[p] = 0.5 * (obs.depth[p] + bg);
                            next.labels[p] = phantom;
                        }
                    }
                }
            }
        }
        for (solid, id) in &solids {
            self.splat(solid, *id, &mut next.depth, &mut next.labels);
        }
        next.refresh();
        Ok(Prediction { obs: next, changed })
    }

    /// Visible mask of `moved` objects placed at `placements`, z-buffered
    /// against `obs` with their current pixels replaced by the back wall.
    pub fn reproject(&self, obs: &Observation, moved: &[ObjectId], placements: &[ObjectInstance]) -> Reprojection {
        let w = self.camera.width;
        let solids: Vec<Solid> = placements.iter().map(Solid::of).collect();
        let mut rect = PixelRect::default();
        for s in &solids {
            rect = rect.union(&self.pixel_rect(&s.aabb()));
        }
        if rect.is_empty() {
            return Reprojection { pixels: Vec::new(), columns: None, overlap_others: 0 };
        }
        let rw = rect.col1 - rect.col0;
        let mut zbuf = Vec::with_capacity(rect.area());
        for row in rect.row0..rect.row1 {
            for col in rect.col0..rect.col1 {
                let p = row * w + col;
                let d = if moved.contains(&obs.labels[p]) { self.background[p] } else { obs.depth[p] };
                zbuf.push(d);
            }
        }
        let mut hit = vec![false; zbuf.len()];
        for solid in &solids {
            let r = self.pixel_rect(&solid.aabb());
            for row in r.row0..r.row1 {
                for col in r.col0..r.col1 {
                    if let Some(t) = self.rays.hit(solid, col, row) {
                        let q = (row - rect.row0) * rw + (col - rect.col0);
                        if t < zbuf[q] {
                            zbuf[q] = t;
                            hit[q] = true;
                        }
                    }
                }
            }
        }
        let mut pixels = Vec::new();
        let mut columns: Option<(usize, usize)> = None;
        let mut overlap_others = 0;
        for (q, &on) in hit.iter().enumerate() {
            if !on {
                continue;
            }
            let col = rect.col0 + q % rw;
            let row = rect.row0 + q / rw;
            let p = row * w + col;
            pixels.push(p);
            columns = Some(columns.map_or((col, col), |(l, r)| (l.min(col), r.max(col))));
            let l = obs.labels[p];
            if l != NO_OBJECT && !moved.contains(&l) {
                overlap_others += 1;
            }
        }
        pixels.sort_unstable();
        Reprojection { pixels, columns, overlap_others }
    }
}

/// Depth of the empty shelf: interior surfaces through the opening, the
/// front frame elsewhere.
fn background_depth(cam: &CameraSpec, shelf: &ShelfSpec) -> Vec<f64> {
    let (hw, hd, h) = (shelf.half_width(), shelf.half_depth(), shelf.height);
    let o = cam.position;
    let t_front = o[1] - hd;
    let t_back = o[1] + hd;
    let mut out = Vec::with_capacity(cam.width * cam.height);
    for row in 0..cam.height {
        let dz = cam.ray_dz(row);
        for col in 0..cam.width {
            let dx = cam.ray_dx(col);
            let x = o[0] + t_front * dx;
            let z = o[2] + t_front * dz;
            if x < -hw || x > hw || z < 0.0 || z > h {
                out.push(t_front);
                continue;
            }
            let mut t = t_back;
            if dx > 0.0 {
                t = t.min((hw - o[0]) / dx);
            } else if dx < 0.0 {
                t = t.min((-hw - o[0]) / dx);
            }
            if dz > 0.0 {
                t = t.min((h - o[2]) / dz);
            } else if dz < 0.0 {
                t = t.min((0.0 - o[2]) / dz);
            }
            out.push(t);
        }
    }
    out
}
