use std::collections::BTreeSet;
use std::fmt;

use super::{ObjectId, SceneState, Supporter};
use crate::geometry::{intervals_overlap, TOL};

/// One broken scene invariant, naming the objects involved.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvalidShelf,
    InvalidShape { id: ObjectId },
    DuplicateId { id: ObjectId },
    MultipleTargets { ids: Vec<ObjectId> },
    OutsideShelf { id: ObjectId },
    MissingSupporter { id: ObjectId },
    UnknownSupporter { id: ObjectId, supporter: ObjectId },
    SupportCycle { id: ObjectId },
    MultipleChildren { supporter: ObjectId, children: Vec<ObjectId> },
    NotContained { child: ObjectId, supporter: ObjectId },
    AreaIncreases { child: ObjectId, supporter: ObjectId },
    WrongHeight { id: ObjectId, expected: f64, actual: f64 },
    Overlap { a: ObjectId, b: ObjectId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvalidShelf => write!(f, "shelf dimensions must be positive"),
            Violation::InvalidShape { id } => write!(f, "object {id}: shape dimensions must be positive"),
            Violation::DuplicateId { id } => write!(f, "object {id}: duplicate id"),
            Violation::MultipleTargets { ids } => write!(f, "objects {ids:?}: more than one target"),
            Violation::OutsideShelf { id } => write!(f, "object {id}: outside shelf bounds"),
            Violation::MissingSupporter { id } => write!(f, "object {id}: no supporter recorded"),
            Violation::UnknownSupporter { id, supporter } => {
                write!(f, "object {id}: supporter {supporter} does not exist")
            }
            Violation::SupportCycle { id } => write!(f, "object {id}: support cycle"),
            Violation::MultipleChildren { supporter, children } => {
                write!(f, "object {supporter}: supports more than one object {children:?}")
            }
            Violation::NotContained { child, supporter } => {
                write!(f, "objects {child} on {supporter}: containment violated")
            }
            Violation::AreaIncreases { child, supporter } => {
                write!(f, "objects {child} on {supporter}: stack area non-increasing")
            }
            Violation::WrongHeight { id, expected, actual } => {
                write!(f, "object {id}: z = {actual} but supporter surface is at {expected}")
            }
            Violation::Overlap { a, b } => write!(f, "objects {a} and {b}: volumes intersect"),
        }
    }
}

/// Result of [`validate_scene`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Checks every scene and stack-tree invariant. Pure; violations are data.
pub fn validate_scene(state: &SceneState) -> ValidationReport {
    let mut out = Vec::new();
    if !state.shelf.is_valid() {
        out.push(Violation::InvalidShelf);
    }
    let objects = state.objects();
    let ids: BTreeSet<ObjectId> = objects.iter().map(|o| o.id).collect();
    for w in objects.windows(2) {
        if w[0].id == w[1].id {
            out.push(Violation::DuplicateId { id: w[0].id });
        }
    }
    let targets: Vec<ObjectId> = objects.iter().filter(|o| o.is_target).map(|o| o.id).collect();
    if targets.len() > 1 {
        out.push(Violation::MultipleTargets { ids: targets });
    }

    let bounds = state.shelf.bounds();
    for o in objects {
        if !o.shape.is_valid() {
            out.push(Violation::InvalidShape { id: o.id });
            continue;
        }
        let b = o.aabb();
        let inside = (0..3).all(|k| b.min[k] >= bounds.min[k] - TOL && b.max[k] <= bounds.max[k] + TOL);
        if !inside {
            out.push(Violation::OutsideShelf { id: o.id });
        }
    }

    for o in objects {
        let supporter = match state.stacks.parent(o.id) {
            None => {
                out.push(Violation::MissingSupporter { id: o.id });
                continue;
            }
            Some(s) => s,
        };
        let expected = match supporter {
            Supporter::Shelf => 0.0,
            Supporter::Object(p) => {
                if !ids.contains(&p) {
                    out.push(Violation::UnknownSupporter { id: o.id, supporter: p });
                    continue;
                }
                let below = state.object(p).expect("checked above");
                if !below.footprint().contains(&o.footprint(), TOL) {
                    out.push(Violation::NotContained { child: o.id, supporter: p });
                }
                if o.shape.footprint_area() > below.shape.footprint_area() + TOL * TOL {
                    out.push(Violation::AreaIncreases { child: o.id, supporter: p });
                }
                below.top()
            }
        };
        if (o.pose.z - expected).abs() > TOL {
            out.push(Violation::WrongHeight { id: o.id, expected, actual: o.pose.z });
        }
    }

    // Cycles: walking down from any object must reach the shelf.
    for o in objects {
        let mut current = o.id;
        let mut steps = 0;
        while let Some(Supporter::Object(p)) = state.stacks.parent(current) {
            current = p;
            steps += 1;
            if steps > objects.len() {
                out.push(Violation::SupportCycle { id: o.id });
                break;
            }
        }
    }

    for o in objects {
        let children: Vec<ObjectId> = state.stacks.children(Supporter::Object(o.id)).collect();
        if children.len() > 1 {
            out.push(Violation::MultipleChildren { supporter: o.id, children });
        }
    }

    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            let (za0, za1) = (a.pose.z, a.top());
            let (zb0, zb1) = (b.pose.z, b.top());
            if intervals_overlap(za0, za1, zb0, zb1, TOL) && a.footprint().intersects(&b.footprint(), TOL) {
                out.push(Violation::Overlap { a: a.id, b: b.id });
            }
        }
    }

    ValidationReport { violations: out }
}
