//! JSON scene files.
//!
//! Floats are written with 17 significant digits so that load followed by
//! save reproduces the input byte for byte.

use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

use super::{ObjectId, ObjectInstance, ObjectShape, Pose, SceneState, ShelfSpec, Supporter};

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("scene file i/o: {0}")]
    Io(#[from] io::Error),
    #[error("scene file json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("object {id}: kind {kind:?} expects {expected} dims, got {got}")]
    Dims { id: ObjectId, kind: String, expected: usize, got: usize },
    #[error("object {0}: unknown kind {1:?}")]
    Kind(ObjectId, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub shelf: ShelfDims,
    pub objects: Vec<ObjectRecord>,
    #[serde(default)]
    pub stacks: Vec<StackRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShelfDims {
    pub width: f64,
    pub height: f64,
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: ObjectId,
    pub kind: String,
    /// Cuboid: `[extent_x, extent_y, extent_z]`; cylinder: `[radius, height]`.
    pub dims: Vec<f64>,
    pub pose: [f64; 3],
    #[serde(default)]
    pub is_target: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackRecord {
    pub child: ObjectId,
    pub parent: ObjectId,
}

impl SceneFile {
    pub fn from_scene(scene: &SceneState) -> Self {
        let objects = scene
            .objects()
            .iter()
            .map(|o| {
                let (kind, dims) = match o.shape {
                    ObjectShape::Cuboid { extent_x, extent_y, extent_z } => {
                        ("cuboid", vec![extent_x, extent_y, extent_z])
                    }
                    ObjectShape::Cylinder { radius, height } => ("cylinder", vec![radius, height]),
                };
                ObjectRecord {
                    id: o.id,
                    kind: kind.to_string(),
                    dims,
                    pose: [o.pose.x, o.pose.y, o.pose.z],
                    is_target: o.is_target,
                }
            })
            .collect();
        let stacks = scene
            .stacks
            .parents()
            .filter_map(|(child, p)| match p {
                Supporter::Object(parent) => Some(StackRecord { child, parent }),
                Supporter::Shelf => None,
            })
            .collect();
        SceneFile {
            shelf: ShelfDims {
                width: scene.shelf.width,
                height: scene.shelf.height,
                depth: scene.shelf.depth,
            },
            objects,
            stacks,
        }
    }

    pub fn to_scene(&self) -> Result<SceneState, SceneFileError> {
        let shelf = ShelfSpec { width: self.shelf.width, height: self.shelf.height, depth: self.shelf.depth };
        let mut objects = Vec::with_capacity(self.objects.len());
        for r in &self.objects {
            let want = match r.kind.as_str() {
                "cuboid" => 3,
                "cylinder" => 2,
                other => return Err(SceneFileError::Kind(r.id, other.to_string())),
            };
            if r.dims.len() != want {
                return Err(SceneFileError::Dims {
                    id: r.id,
                    kind: r.kind.clone(),
                    expected: want,
                    got: r.dims.len(),
                });
            }
            let shape = if want == 3 {
                ObjectShape::cuboid(r.dims[0], r.dims[1], r.dims[2])
            } else {
                ObjectShape::cylinder(r.dims[0], r.dims[1])
            };
            objects.push(ObjectInstance {
                id: r.id,
                shape,
                pose: Pose::new(r.pose[0], r.pose[1], r.pose[2]),
                is_target: r.is_target,
            });
        }
        let support: Vec<(ObjectId, ObjectId)> = self.stacks.iter().map(|s| (s.child, s.parent)).collect();
        Ok(SceneState::from_parts(shelf, objects, &support))
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SceneFileError> {
        Ok(serde_json::from_str(text)?)
    }
}

impl SceneState {
    pub fn to_json(&self) -> String {
        SceneFile::from_scene(self).to_json()
    }

    pub fn from_json(text: &str) -> Result<SceneState, SceneFileError> {
        SceneFile::from_json(text)?.to_scene()
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneFileError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SceneState, SceneFileError> {
        SceneState::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Serializes any value as pretty JSON with canonical float formatting.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, CanonicalFormatter::default());
    value.serialize(&mut ser).expect("in-memory serialization cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits utf-8")
}

/// Formats a float with 17 significant digits, positional notation where
/// reasonable, trailing zeros trimmed but always with a fractional part.
pub fn format_f64(v: f64) -> String {
    if !v.is_finite() {
        return "null".to_string();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:.16e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if negative { "-" } else { "" };
    if !(-5..17).contains(&exp) {
        let (head, tail) = digits.split_at(1);
        let tail = if tail.is_empty() { "0" } else { tail };
        return format!("{sign}{head}.{tail}e{exp}");
    }
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let int_len = exp as usize + 1;
        if digits.len() <= int_len {
            format!("{}{}.0", digits, "0".repeat(int_len - digits.len()))
        } else {
            format!("{}.{}", &digits[..int_len], &digits[int_len..])
        }
    };
    format!("{sign}{body}")
}

#[derive(Default)]
struct CanonicalFormatter {
    pretty: PrettyFormatter<'static>,
}

impl Formatter for CanonicalFormatter {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.pretty.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.pretty.end_object_value(writer)
    }
}
