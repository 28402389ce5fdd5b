//! Planar footprints and axis-aligned boxes.
//!
//! All objects stand upright, so 3D questions reduce to a footprint test on
//! the shelf plane plus an interval test along z.

/// Tolerance for containment, contact and overlap checks (meters).
pub const TOL: f64 = 1e-6;

/// Projection of an upright object onto the shelf floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    /// Axis-aligned rectangle given by center and half extents.
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
}

impl Footprint {
    pub fn center(&self) -> (f64, f64) {
        match *self {
            Footprint::Rect { cx, cy, .. } | Footprint::Circle { cx, cy, .. } => (cx, cy),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Footprint::Rect { hx, hy, .. } => 4.0 * hx * hy,
            Footprint::Circle { r, .. } => std::f64::consts::PI * r * r,
        }
    }

    /// Half extents of the bounding rectangle.
    pub fn half_extents(&self) -> (f64, f64) {
        match *self {
            Footprint::Rect { hx, hy, .. } => (hx, hy),
            Footprint::Circle { r, .. } => (r, r),
        }
    }

    /// `[x_min, x_max, y_min, y_max]` of the bounding rectangle.
    pub fn bounds(&self) -> [f64; 4] {
        let (cx, cy) = self.center();
        let (hx, hy) = self.half_extents();
        [cx - hx, cx + hx, cy - hy, cy + hy]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Footprint {
        match *self {
            Footprint::Rect { cx, cy, hx, hy } => Footprint::Rect { cx: cx + dx, cy: cy + dy, hx, hy },
            Footprint::Circle { cx, cy, r } => Footprint::Circle { cx: cx + dx, cy: cy + dy, r },
        }
    }

    /// True when `inner` lies entirely inside `self`, up to `tol`.
    pub fn contains(&self, inner: &Footprint, tol: f64) -> bool {
        match (*self, *inner) {
            (Footprint::Rect { .. }, _) => {
                let [ox0, ox1, oy0, oy1] = self.bounds();
                let [ix0, ix1, iy0, iy1] = inner.bounds();
                ix0 >= ox0 - tol && ix1 <= ox1 + tol && iy0 >= oy0 - tol && iy1 <= oy1 + tol
            }
            (Footprint::Circle { cx, cy, r }, Footprint::Circle { cx: ix, cy: iy, r: ir }) => {
                (ix - cx).hypot(iy - cy) + ir <= r + tol
            }
            (Footprint::Circle { cx, cy, r }, Footprint::Rect { .. }) => {
                let [x0, x1, y0, y1] = inner.bounds();
                [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]
                    .iter()
                    .all(|&(x, y)| (x - cx).hypot(y - cy) <= r + tol)
            }
        }
    }

    /// True when the interiors overlap by more than `tol`.
    pub fn intersects(&self, other: &Footprint, tol: f64) -> bool {
        match (*self, *other) {
            (Footprint::Rect { .. }, Footprint::Rect { .. }) => {
                let [ax0, ax1, ay0, ay1] = self.bounds();
                let [bx0, bx1, by0, by1] = other.bounds();
                ax0 < bx1 - tol && bx0 < ax1 - tol && ay0 < by1 - tol && by0 < ay1 - tol
            }
            (Footprint::Circle { cx, cy, r }, Footprint::Circle { cx: ox, cy: oy, r: or }) => {
                (ox - cx).hypot(oy - cy) < r + or - tol
            }
            (Footprint::Rect { .. }, Footprint::Circle { cx, cy, r })
            | (Footprint::Circle { cx, cy, r }, Footprint::Rect { .. }) => {
                let rect = if matches!(self, Footprint::Rect { .. }) { self } else { other };
                let [x0, x1, y0, y1] = rect.bounds();
                let nx = cx.clamp(x0, x1);
                let ny = cy.clamp(y0, y1);
                (cx - nx).hypot(cy - ny) < r - tol
            }
        }
    }

    /// Distance `self` can travel along +x (`sign > 0`) or -x before touching
    /// `other`. `None` when the paths never meet.
    pub fn sweep_x(&self, other: &Footprint, sign: f64) -> Option<f64> {
        // Mirror the problem so the motion is always toward +x.
        let (a, b) = if sign >= 0.0 {
            (*self, *other)
        } else {
            (mirror_x(self), mirror_x(other))
        };
        let gap = match (a, b) {
            (Footprint::Rect { .. }, Footprint::Rect { .. }) => {
                let [_, ax1, ay0, ay1] = a.bounds();
                let [bx0, _, by0, by1] = b.bounds();
                if ay0 < by1 - TOL && by0 < ay1 - TOL {
                    bx0 - ax1
                } else {
                    return None;
                }
            }
            (Footprint::Circle { cx, cy, r }, Footprint::Circle { cx: bx, cy: by, r: br }) => {
                let rr = r + br;
                let dy = by - cy;
                if dy.abs() < rr - TOL {
                    (bx - cx) - (rr * rr - dy * dy).sqrt()
                } else {
                    return None;
                }
            }
            (Footprint::Rect { .. }, Footprint::Circle { cx: bx, cy: by, r: br }) => {
                let [_, ax1, ay0, ay1] = a.bounds();
                let dy = by - by.clamp(ay0, ay1);
                if dy.abs() < br - TOL {
                    (bx - ax1) - (br * br - dy * dy).sqrt()
                } else {
                    return None;
                }
            }
            (Footprint::Circle { cx, cy, r }, Footprint::Rect { .. }) => {
                let [bx0, _, by0, by1] = b.bounds();
                let dy = cy - cy.clamp(by0, by1);
                if dy.abs() < r - TOL {
                    (bx0 - cx) - (r * r - dy * dy).sqrt()
                } else {
                    return None;
                }
            }
        };
        // Obstacles already behind the moving shape do not constrain it.
        let (acx, _) = a.center();
        let (bcx, _) = b.center();
        if bcx < acx && gap < -TOL {
            return None;
        }
        Some(gap)
    }
}

fn mirror_x(f: &Footprint) -> Footprint {
    match *f {
        Footprint::Rect { cx, cy, hx, hy } => Footprint::Rect { cx: -cx, cy, hx, hy },
        Footprint::Circle { cx, cy, r } => Footprint::Circle { cx: -cx, cy, r },
    }
}

/// Closed interval overlap with more than `tol` of shared length.
pub fn intervals_overlap(a0: f64, a1: f64, b0: f64, b1: f64, tol: f64) -> bool {
    a0 < b1 - tol && b0 < a1 - tol
}

/// Axis-aligned box in the shelf frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Aabb { min, max }
    }

    pub fn intersects(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|k| intervals_overlap(self.min[k], self.max[k], other.min[k], other.max[k], tol))
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut out = *self;
        for k in 0..3 {
            out.min[k] = out.min[k].min(other.min[k]);
            out.max[k] = out.max[k].max(other.max[k]);
        }
        out
    }
}
