//! 16-bit binary PGM dumps of depth images and masks.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use super::Observation;
use crate::scene::ObjectId;

/// Depth is stored in units of 0.1 mm.
pub const DEPTH_SCALE: f64 = 1e4;

fn write_pgm(path: &Path, width: usize, height: usize, values: impl Iterator<Item = u16>) -> io::Result<()> {
    let mut buf = Vec::with_capacity(20 + 2 * width * height);
    write!(buf, "P5\n{width} {height}\n65535\n")?;
    for v in values {
        buf.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, buf)
}

pub fn write_depth(obs: &Observation, path: &Path) -> io::Result<()> {
    let values = obs.depth().iter().map(|d| (d * DEPTH_SCALE).round().clamp(0.0, 65535.0) as u16);
    write_pgm(path, obs.width(), obs.height(), values)
}

pub fn write_mask(obs: &Observation, id: ObjectId, path: &Path) -> io::Result<()> {
    let values = obs.labels().iter().map(|&l| if l == id { u16::MAX } else { 0 });
    write_pgm(path, obs.width(), obs.height(), values)
}

/// Writes `depth.pgm` and one `<id>.pgm` per visible object into `dir`.
pub fn dump(obs: &Observation, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_depth(obs, &dir.join("depth.pgm"))?;
    for id in obs.visible_ids() {
        write_mask(obs, id, &dir.join(format!("{id}.pgm")))?;
    }
    Ok(())
}
