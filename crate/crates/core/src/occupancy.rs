//! Target occupancy distributions over image columns.
//!
//! A hypothetical target pose is *hidden* when at least 99% of its
//! silhouette pixels lie strictly behind the observed depth. Every hidden
//! pose on a floor grid contributes its silhouette's per-column pixel
//! counts, so a distribution is unnormalized mass: a sum of pixel counts.
//! Only ratios between sums are ever used downstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observer::{Observation, PixelRect, Renderer, Solid};
use crate::scene::{ObjectInstance, ObjectShape, Pose, ShelfSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OccupancyError {
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("columns {l}..={r} invalid for width {width}")]
    ColumnRange { l: usize, r: usize, width: usize },
}

/// Target height-to-width classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AspectRatio {
    #[serde(rename = "1:1")]
    OneToOne,
    #[serde(rename = "2:1")]
    TwoToOne,
    #[serde(rename = "4:1")]
    FourToOne,
}

impl AspectRatio {
    pub const ALL: [AspectRatio; 3] = [AspectRatio::OneToOne, AspectRatio::TwoToOne, AspectRatio::FourToOne];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(j: usize) -> Option<AspectRatio> {
        AspectRatio::ALL.get(j).copied()
    }

    pub fn height_factor(self) -> f64 {
        match self {
            AspectRatio::OneToOne => 1.0,
            AspectRatio::TwoToOne => 2.0,
            AspectRatio::FourToOne => 4.0,
        }
    }

    /// Cuboid with a square `width x width` footprint and this ratio.
    pub fn target_shape(self, width: f64) -> ObjectShape {
        ObjectShape::cuboid(width, width, width * self.height_factor())
    }

    pub fn label(self) -> &'static str {
        match self {
            AspectRatio::OneToOne => "1:1",
            AspectRatio::TwoToOne => "2:1",
            AspectRatio::FourToOne => "4:1",
        }
    }
}

/// Hypothetical target poses and the hidden-pose test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    /// Floor grid spacing in meters.
    pub resolution: f64,
    /// Also place candidates on top of visible objects.
    pub include_tops: bool,
    /// Fraction of silhouette pixels that must be occluded.
    pub hidden_fraction: f64,
    /// Observed depth must be this much nearer than the candidate surface.
    pub depth_tolerance: f64,
}

impl Default for CandidateGrid {
    fn default() -> Self {
        CandidateGrid { resolution: 0.01, include_tops: false, hidden_fraction: 0.99, depth_tolerance: 1e-6 }
    }
}

/// One hypothetical target placement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub solid: Solid,
    pub rect: PixelRect,
}

/// Evaluation of one candidate against an observation: `None` when the pose
/// is visible, else its silhouette pixel count per column starting at
/// `rect.col0`.
pub type CandidateColumns = Option<Vec<u32>>;

/// Interface point for occupancy estimators.
pub trait OccupancyPredictor: Send + Sync {
    /// Unnormalized per-column mass for one aspect ratio.
    fn predict(&self, obs: &Observation, ratio: AspectRatio, target_ratio: AspectRatio) -> Vec<f64>;
}

/// Exact occupancy from the observed depth image.
#[derive(Debug, Clone)]
pub struct AnalyticOccupancy {
    renderer: Renderer,
    grid: CandidateGrid,
    target_width: f64,
}

impl AnalyticOccupancy {
    pub fn new(renderer: Renderer, grid: CandidateGrid, target_width: f64) -> Self {
        AnalyticOccupancy { renderer, grid, target_width }
    }

    pub fn grid(&self) -> &CandidateGrid {
        &self.grid
    }

    pub fn renderer(&self) -> &Renderer {
        &self.renderer
    }

    pub fn target_shape(&self, ratio: AspectRatio) -> ObjectShape {
        ratio.target_shape(self.target_width)
    }

    /// Candidate poses for `ratio`: the floor grid, plus object tops when the
    /// grid asks for them.
    pub fn candidates(&self, obs: &Observation, ratio: AspectRatio) -> Vec<Candidate> {
        let shelf = self.renderer.shelf();
        let shape = self.target_shape(ratio);
        let (hx, hy) = shape.half_extents();
        let height = shape.height();
        let mut out = Vec::new();
        if height > shelf.height {
            return out;
        }
        let push = |out: &mut Vec<Candidate>, x: f64, y: f64, z: f64| {
            let solid = Solid::of(&ObjectInstance::target(u32::MAX, shape, Pose::new(x, y, z)));
            let rect = self.renderer.pixel_rect(&solid.aabb());
            if !rect.is_empty() {
                out.push(Candidate { solid, rect });
            }
        };
        for (x, y) in grid_points(shelf, hx, hy, self.grid.resolution) {
            push(&mut out, x, y, 0.0);
        }
        if self.grid.include_tops {
            for top in crate::observer::reconstruct::estimate_objects(&self.renderer, obs) {
                if top.id == obs.target().unwrap_or(u32::MAX) {
                    continue;
                }
                let [x0, x1, y0, y1] = top.footprint.bounds();
                if top.top + height > shelf.height || x1 - x0 < 2.0 * hx || y1 - y0 < 2.0 * hy {
                    continue;
                }
                let step = self.grid.resolution;
                let mut x = x0 + hx;
                while x <= x1 - hx + 1e-12 {
                    let mut y = y0 + hy;
                    while y <= y1 - hy + 1e-12 {
                        push(&mut out, x, y, top.top);
                        y += step;
                    }
                    x += step;
                }
            }
        }
        out
    }

    /// Hidden-pose test for one candidate.
    pub fn evaluate(&self, candidate: &Candidate, obs: &Observation) -> CandidateColumns {
        evaluate_candidate(&self.renderer, &self.grid, candidate, obs)
    }

    /// Per-column mass for `ratio` from scratch.
    pub fn compute(&self, obs: &Observation, ratio: AspectRatio, target_ratio: AspectRatio) -> Vec<f64> {
        if ratio == target_ratio && obs.target_visibility() > 0.0 {
            return obs.target_column_histogram();
        }
        let mut hist = vec![0.0; obs.width()];
        for c in self.candidates(obs, ratio) {
            if let Some(cols) = self.evaluate(&c, obs) {
                accumulate(&mut hist, c.rect.col0, &cols, 1.0);
            }
        }
        hist
    }

    /// Candidate table for incremental updates of predicted images.
    pub fn table(&self, obs: &Observation, ratio: AspectRatio) -> CandidateTable {
        let candidates = self.candidates(obs, ratio);
        let mut total = vec![0.0; obs.width()];
        let mut states = Vec::with_capacity(candidates.len());
        for c in &candidates {
            let s = self.evaluate(c, obs);
            if let Some(cols) = &s {
                accumulate(&mut total, c.rect.col0, cols, 1.0);
            }
            states.push(s);
        }
        CandidateTable { ratio, candidates, states, total }
    }
}

impl OccupancyPredictor for AnalyticOccupancy {
    fn predict(&self, obs: &Observation, ratio: AspectRatio, target_ratio: AspectRatio) -> Vec<f64> {
        self.compute(obs, ratio, target_ratio)
    }
}

fn grid_points(shelf: &ShelfSpec, hx: f64, hy: f64, res: f64) -> Vec<(f64, f64)> {
    let axis = |half: f64, h: f64| -> Vec<f64> {
        let lo = -half + h;
        let hi = half - h;
        let mut v = Vec::new();
        if res <= 0.0 || lo > hi + 1e-12 {
            return v;
        }
        let mut k = 0u32;
        loop {
            let p = lo + k as f64 * res;
            if p > hi + 1e-12 {
                break;
            }
            v.push(p.min(hi));
            k += 1;
        }
        v
    };
    let xs = axis(shelf.half_width(), hx);
    let ys = axis(shelf.half_depth(), hy);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            out.push((x, y));
        }
    }
    out
}

fn accumulate(hist: &mut [f64], col0: usize, cols: &[u32], sign: f64) {
    for (k, &n) in cols.iter().enumerate() {
        hist[col0 + k] += sign * n as f64;
    }
}

fn evaluate_candidate(renderer: &Renderer, grid: &CandidateGrid, c: &Candidate, obs: &Observation) -> CandidateColumns {
    let w = obs.width();
    let depth = obs.depth();
    let rays = renderer.rays();
    let background = renderer.background();
    let rect = c.rect;
    // Stop as soon as the visible pixels exceed what the rule allows for the
    // whole bounding rectangle; the silhouette is never larger.
    let miss_cap = (1.0 - grid.hidden_fraction) * rect.area() as f64;
    let mut cols = vec![0u32; rect.col1 - rect.col0];
    let mut total = 0usize;
    let mut visible = 0usize;
    for row in rect.row0..rect.row1 {
        let base = row * w;
        for col in rect.col0..rect.col1 {
            let Some(t) = rays.hit(&c.solid, col, row) else { continue };
            // grazing hits that would lose to the empty shelf are not drawn
            if !(t < background[base + col]) {
                continue;
            }
            total += 1;
            cols[col - rect.col0] += 1;
            if !(depth[base + col] < t - grid.depth_tolerance) {
                visible += 1;
                if visible as f64 > miss_cap {
                    return None;
                }
            }
        }
    }
    if total == 0 || ((total - visible) as f64) < grid.hidden_fraction * total as f64 {
        return None;
    }
    Some(cols)
}

/// Per-candidate hidden states for one ratio, reusable across predicted
/// images that differ from the source only inside a pixel rectangle.
#[derive(Debug, Clone)]
pub struct CandidateTable {
    ratio: AspectRatio,
    candidates: Vec<Candidate>,
    states: Vec<CandidateColumns>,
    total: Vec<f64>,
}

impl CandidateTable {
    pub fn ratio(&self) -> AspectRatio {
        self.ratio
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Distribution of the source observation.
    pub fn distribution(&self) -> &[f64] {
        &self.total
    }

    /// Distribution of `obs`, which must equal the source observation outside
    /// `changed`. Only candidates overlapping `changed` are re-evaluated.
    pub fn updated(&self, engine: &AnalyticOccupancy, obs: &Observation, changed: &PixelRect) -> Vec<f64> {
        let mut hist = self.total.clone();
        for (c, old) in self.candidates.iter().zip(&self.states) {
            if !c.rect.intersects(changed) {
                continue;
            }
            let new = engine.evaluate(c, obs);
            if let Some(cols) = old {
                accumulate(&mut hist, c.rect.col0, cols, -1.0);
            }
            if let Some(cols) = &new {
                accumulate(&mut hist, c.rect.col0, cols, 1.0);
            }
        }
        hist
    }
}

/// `P'_t = min(P_t, P'_{t-1})`; the first distribution passes through.
pub fn encode_history(current: &[f64], previous: Option<&[f64]>) -> Result<Vec<f64>, OccupancyError> {
    match previous {
        None => Ok(current.to_vec()),
        Some(prev) => {
            if prev.len() != current.len() {
                return Err(OccupancyError::LengthMismatch(current.len(), prev.len()));
            }
            Ok(current.iter().zip(prev).map(|(a, b)| a.min(*b)).collect())
        }
    }
}

/// Mass of `dist` over the inclusive column range `l..=r`.
pub fn support(dist: &[f64], l: usize, r: usize) -> Result<f64, OccupancyError> {
    if l > r || r >= dist.len() {
        return Err(OccupancyError::ColumnRange { l, r, width: dist.len() });
    }
    Ok(dist[l..=r].iter().sum())
}

/// Support before an action minus support after it. Negative when the
/// action moves the object over more mass.
pub fn reduction_of_support(before: f64, after: f64) -> f64 {
    before - after
}

/// Probabilities of the three rollout outcomes for moving one object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbabilities {
    /// The target is revealed.
    pub target: f64,
    /// The back wall is revealed.
    pub back_wall: f64,
    /// Some other object is revealed.
    pub other: f64,
}

impl OutcomeProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.target, self.back_wall, self.other]
    }
}

/// Outcome probabilities from the history-encoded distributions of all
/// three ratios and the columns covered by the moved object.
///
/// The target term is the overlap fraction of the target ratio's mass; the
/// back-wall term is one minus the overlap fraction of the mass pooled over
/// all ratios; the remainder is the third outcome. Values are clamped to
/// `[0, 1]` and renormalized if clamping changed anything.
pub fn outcome_probabilities(
    dists: [&[f64]; 3],
    covered: &[bool],
    target_ratio: AspectRatio,
) -> OutcomeProbabilities {
    let overlap = |d: &[f64]| -> (f64, f64) {
        let mut inside = 0.0;
        let mut all = 0.0;
        for (x, &m) in d.iter().enumerate() {
            all += m;
            if covered.get(x).copied().unwrap_or(false) {
                inside += m;
            }
        }
        (inside, all)
    };
    let per: Vec<(f64, f64)> = dists.iter().map(|d| overlap(d)).collect();
    let pooled_in: f64 = per.iter().map(|p| p.0).sum();
    let pooled_all: f64 = per.iter().map(|p| p.1).sum();
    if pooled_all <= 0.0 {
        return OutcomeProbabilities { target: 0.0, back_wall: 1.0, other: 0.0 };
    }
    let (t_in, t_all) = per[target_ratio.index()];
    let p1 = if t_all > 0.0 { t_in / t_all } else { 0.0 };
    let p2 = 1.0 - pooled_in / pooled_all;
    let p3 = 1.0 - p1 - p2;
    let raw = [p1, p2, p3];
    let clamped = raw.map(|p| p.clamp(0.0, 1.0));
    let out = if clamped != raw {
        let s: f64 = clamped.iter().sum();
        clamped.map(|p| p / s)
    } else {
        raw
    };
    OutcomeProbabilities { target: out[0], back_wall: out[1], other: out[2] }
}

/// Boolean column mask for the inclusive range `l..=r`.
pub fn column_indicator(width: usize, l: usize, r: usize) -> Vec<bool> {
    (0..width).map(|x| x >= l && x <= r).collect()
}

/// Current and history-encoded distributions for the ratios in use.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OccupancyDistribution {
    pub current: [Option<Vec<f64>>; 3],
    pub history: [Option<Vec<f64>>; 3],
}

impl OccupancyDistribution {
    pub fn new() -> Self {
        Self::default()
    }

    /// Folds a new set of per-ratio distributions into the history.
    pub fn observe(&mut self, current: [Option<Vec<f64>>; 3]) -> Result<(), OccupancyError> {
        for j in 0..3 {
            if let Some(cur) = &current[j] {
                let h = encode_history(cur, self.history[j].as_deref())?;
                self.history[j] = Some(h);
            }
        }
        self.current = current;
        Ok(())
    }

    pub fn history(&self, ratio: AspectRatio) -> Option<&[f64]> {
        self.history[ratio.index()].as_deref()
    }

    pub fn current(&self, ratio: AspectRatio) -> Option<&[f64]> {
        self.current[ratio.index()].as_deref()
    }

    /// `x,P0,P1,P2,H0,H1,H2` rows; ratios not tracked are left blank.
    pub fn to_csv(&self) -> String {
        let width = self
            .current
            .iter()
            .chain(self.history.iter())
            .flatten()
            .map(|v| v.len())
            .max()
            .unwrap_or(0);
        let mut out = String::from("x,p_0,p_1,p_2,p_hist_0,p_hist_1,p_hist_2\n");
        for x in 0..width {
            out.push_str(&x.to_string());
            for arr in self.current.iter().chain(self.history.iter()) {
                out.push(',');
                if let Some(v) = arr {
                    out.push_str(&v[x].to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}
