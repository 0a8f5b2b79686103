//! Synthetic occlusion events: seeded planning, shape rasterization and
//! alpha blending. Ground truth is never modified.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::confidence::ConfigError;
use crate::dataio::{load_sequence, write_pgm, DataError, Manifest, Sequence};
use crate::geom::{BBox, Frame};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("event {event}: no annotated frame strictly inside [{start}, {end}]")]
    NoGroundTruth { event: usize, start: usize, end: usize },
    #[error("event {event}: {msg}")]
    InvalidEvent { event: usize, msg: String },
    #[error("shape has zero area")]
    DegenerateShape,
    #[error("mask is {mask_w}×{mask_h}, frame is {frame_w}×{frame_h}")]
    SizeMismatch { mask_w: usize, mask_h: usize, frame_w: usize, frame_h: usize },
    #[error("event {event}: coverage stuck at {coverage:.3}")]
    CoverageUnreachable { event: usize, coverage: f64 },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
    Circle,
    Blob,
    Polygon,
    Stripe,
}

/// Hand-written part of an event: timing and shape family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcclusionEventSpec {
    pub start: usize,
    pub end: usize,
    pub shape: ShapeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMode {
    /// Fill luminance drawn from `[fill_min, fill_max]`.
    Sampled,
    /// Mean luminance of the frame at the event start.
    SceneMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Std-dev of the per-frame acceleration jitter, px/frame².
    pub jitter_sigma: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub fill_min: f64,
    pub fill_max: f64,
    /// Shape extent as a multiple of the GT diagonal.
    pub size_min: f64,
    pub size_max: f64,
    /// Required GT-box coverage on at least one hit frame.
    pub min_coverage: f64,
    pub fill_mode: FillMode,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            jitter_sigma: 0.5,
            alpha_min: 0.8,
            alpha_max: 1.0,
            fill_min: 0.2,
            fill_max: 0.8,
            size_min: 1.0,
            size_max: 2.0,
            min_coverage: 0.5,
            fill_mode: FillMode::Sampled,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let range = |lo: f64, hi: f64, key, min: f64, max: f64| {
            if !(min <= lo && lo <= hi && hi <= max) {
                return Err(ConfigError::invalid(key, format!("need {min} ≤ min ≤ max ≤ {max}")));
            }
            Ok(())
        };
        range(self.alpha_min, self.alpha_max, "alpha_min", 0.0, 1.0)?;
        range(self.fill_min, self.fill_max, "fill_min", 0.0, 1.0)?;
        range(self.size_min, self.size_max, "size_min", 1e-3, 100.0)?;
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(ConfigError::invalid("jitter_sigma", "must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.min_coverage) {
            return Err(ConfigError::invalid("min_coverage", "must lie in [0,1]"));
        }
        Ok(())
    }
}

/// Shape parameters in the shape's local frame (centered, unrotated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeParams {
    Rectangle { w: f64, h: f64 },
    Ellipse { a: f64, b: f64 },
    Circle { r: f64 },
    /// Union of circles `[dx, dy, r]`.
    Blob { circles: Vec<[f64; 3]> },
    /// Convex polygon, counter-clockwise.
    Polygon { vertices: Vec<[f64; 2]> },
    Stripe { length: f64, width: f64 },
}

impl ShapeParams {
    pub fn scaled(&self, k: f64) -> Self {
        match self {
            Self::Rectangle { w, h } => Self::Rectangle { w: w * k, h: h * k },
            Self::Ellipse { a, b } => Self::Ellipse { a: a * k, b: b * k },
            Self::Circle { r } => Self::Circle { r: r * k },
            Self::Blob { circles } => Self::Blob { circles: circles.iter().map(|c| [c[0] * k, c[1] * k, c[2] * k]).collect() },
            Self::Polygon { vertices } => Self::Polygon { vertices: vertices.iter().map(|v| [v[0] * k, v[1] * k]).collect() },
            Self::Stripe { length, width } => Self::Stripe { length: length * k, width: width * k },
        }
    }

    /// Local axis-aligned extent `[x0, y0, x1, y1]`.
    pub fn local_bounds(&self) -> [f64; 4] {
        match self {
            Self::Rectangle { w, h } => [-w / 2.0, -h / 2.0, w / 2.0, h / 2.0],
            Self::Ellipse { a, b } => [-a, -b, *a, *b],
            Self::Circle { r } => [-r, -r, *r, *r],
            Self::Blob { circles } => circles.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, c| {
                [b[0].min(c[0] - c[2]), b[1].min(c[1] - c[2]), b[2].max(c[0] + c[2]), b[3].max(c[1] + c[2])]
            }),
            Self::Polygon { vertices } => vertices.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |b, v| {
                [b[0].min(v[0]), b[1].min(v[1]), b[2].max(v[0]), b[3].max(v[1])]
            }),
            Self::Stripe { length, width } => [-length / 2.0, -width / 2.0, length / 2.0, width / 2.0],
        }
    }

    pub fn circumradius(&self) -> f64 {
        let b = self.local_bounds();
        b.iter().map(|v| v.abs()).fold(0.0, f64::max) * std::f64::consts::SQRT_2
    }

    fn is_degenerate(&self) -> bool {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Self::Rectangle { w, h } => !(pos(*w) && pos(*h)),
            Self::Ellipse { a, b } => !(pos(*a) && pos(*b)),
            Self::Circle { r } => !pos(*r),
            Self::Blob { circles } => circles.is_empty() || circles.iter().any(|c| !pos(c[2])),
            Self::Polygon { vertices } => vertices.len() < 3 || !pos(polygon_area(vertices)),
            Self::Stripe { length, width } => !(pos(*length) && pos(*width)),
        }
    }

    fn contains(&self, u: f64, v: f64) -> bool {
        match self {
            Self::Rectangle { w, h } => (-w / 2.0..w / 2.0).contains(&u) && (-h / 2.0..h / 2.0).contains(&v),
            Self::Ellipse { a, b } => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
            Self::Circle { r } => u * u + v * v <= r * r,
            Self::Blob { circles } => circles.iter().any(|c| (u - c[0]).powi(2) + (v - c[1]).powi(2) <= c[2] * c[2]),
            Self::Polygon { vertices } => {
                let n = vertices.len();
                (0..n).all(|i| {
                    let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                    (b[0] - a[0]) * (v - a[1]) - (b[1] - a[1]) * (u - a[0]) >= 0.0
                })
            }
            Self::Stripe { length, width } => {
                (-length / 2.0..length / 2.0).contains(&u) && (-width / 2.0..width / 2.0).contains(&v)
            }
        }
    }
}

fn polygon_area(v: &[[f64; 2]]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1]).sum::<f64>()
}

/// Counter-clockwise convex hull (monotone chain).
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub center: [f64; 2],
    /// Radians.
    pub rotation: f64,
}

/// Binary mask over a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of the GT box's pixels (centers inside the box and the frame) under the mask.
    pub fn coverage(&self, b: &BBox) -> Option<f64> {
        let (x0, x1) = pixel_span(b.x_tl(), b.x_br(), self.width);
        let (y0, y1) = pixel_span(b.y_tl(), b.y_br(), self.height);
        let total = (x1 - x0) * (y1 - y0);
        if total == 0 {
            return None;
        }
        let hit = (y0..y1).map(|y| (x0..x1).filter(|&x| self.get(x, y)).count()).sum::<usize>();
        Some(hit as f64 / total as f64)
    }
}

/// Pixels whose centers fall in `[lo, hi)`, clipped to `[0, n)`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> (usize, usize) {
    let a = (lo - 0.5).ceil().clamp(0.0, n as f64) as usize;
    let b = (hi - 0.5).ceil().clamp(0.0, n as f64) as usize;
    (a, b.max(a))
}

/// World-space bounding box of the posed shape `[x0, y0, x1, y1]`.
pub fn shape_bounds(params: &ShapeParams, pose: &Pose) -> [f64; 4] {
    let [lx0, ly0, lx1, ly1] = params.local_bounds();
    let (s, c) = pose.rotation.sin_cos();
    let mut out = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for (u, v) in [(lx0, ly0), (lx1, ly0), (lx0, ly1), (lx1, ly1)] {
        let x = pose.center[0] + c * u - s * v;
        let y = pose.center[1] + s * u + c * v;
        out = [out[0].min(x), out[1].min(y), out[2].max(x), out[3].max(y)];
    }
    out
}

/// Pixels whose centers lie inside the posed shape.
pub fn rasterize_shape(params: &ShapeParams, pose: &Pose, width: usize, height: usize) -> Result<Mask, AugmentError> {
    if params.is_degenerate() {
        return Err(AugmentError::DegenerateShape);
    }
    let mut mask = Mask::empty(width, height);
    let [bx0, by0, bx1, by1] = shape_bounds(params, pose);
    let (x0, x1) = pixel_span(bx0, bx1 + 1.0, width);
    let (y0, y1) = pixel_span(by0, by1 + 1.0, height);
    let (s, c) = pose.rotation.sin_cos();
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 + 0.5 - pose.center[0];
            let dy = y as f64 + 0.5 - pose.center[1];
            let u = c * dx + s * dy;
            let v = -s * dx + c * dy;
            if params.contains(u, v) {
                mask.bits[y * width + x] = true;
            }
        }
    }
    Ok(mask)
}

/// `out = (1 − α)·pixel + α·fill` inside the mask; untouched elsewhere.
pub fn apply_occlusion(frame: &Frame, mask: &Mask, alpha: f64, fill_value: f64) -> Result<Frame, AugmentError> {
    if mask.width != frame.width() || mask.height != frame.height() {
        return Err(AugmentError::SizeMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            frame_w: frame.width(),
            frame_h: frame.height(),
        });
    }
    Ok(frame.map_pixels(|i, v| if mask.bits[i] { ((1.0 - alpha) * v as f64 + alpha * fill_value) as f32 } else { v }))
}

/// Fully sampled event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcclusionPlan {
    pub event: OcclusionEventSpec,
    pub params: ShapeParams,
    /// One pose per frame from `start` to `end` inclusive.
    pub poses: Vec<Pose>,
    pub alpha: f64,
    pub fill_value: f64,
    pub hit_frames: Vec<usize>,
    pub hit_points: Vec<[f64; 2]>,
    /// Final multiple of the GT diagonal after coverage growth.
    pub size_factor: f64,
}

impl OcclusionPlan {
    pub fn pose_at(&self, frame: usize) -> Option<&Pose> {
        frame.checked_sub(self.event.start).and_then(|k| self.poses.get(k))
    }
}

/// Generator seed from `(seed, sequence id, event index)`.
pub fn event_rng(seed: u64, sequence_id: &str, event_index: usize) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((sequence_id.len() as u64).to_le_bytes());
    h.update(sequence_id.as_bytes());
    h.update((event_index as u64).to_le_bytes());
    let mut s = [0u8; 32];
    s.copy_from_slice(&h.finalize());
    ChaCha8Rng::from_seed(s)
}

fn unit_shape(kind: ShapeKind, rng: &mut ChaCha8Rng) -> ShapeParams {
    // unit bounding diameter
    match kind {
        ShapeKind::Rectangle => {
            let phi: f64 = rng.random_range(25f64.to_radians()..65f64.to_radians());
            ShapeParams::Rectangle { w: phi.cos(), h: phi.sin() }
        }
        ShapeKind::Ellipse => ShapeParams::Ellipse { a: 0.5, b: 0.5 * rng.random_range(0.5..1.0) },
        ShapeKind::Circle => ShapeParams::Circle { r: 0.5 },
        ShapeKind::Blob => {
            let k = rng.random_range(3..=6);
            let mut circles = vec![[0.0, 0.0, 0.5 * rng.random_range(0.5..0.7)]];
            for _ in 1..k {
                let a: f64 = rng.random_range(0.0..TAU);
                let d = 0.5 * rng.random_range(0.1..0.45);
                circles.push([d * a.cos(), d * a.sin(), 0.5 * rng.random_range(0.35..0.55)]);
            }
            ShapeParams::Blob { circles }
        }
        ShapeKind::Polygon => {
            let k = rng.random_range(5..=9);
            let step = TAU / k as f64;
            let pts = (0..k)
                .map(|i| {
                    let a = i as f64 * step + rng.random_range(-0.3..0.3) * step;
                    let r = 0.5 * rng.random_range(0.6..1.0);
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            ShapeParams::Polygon { vertices: convex_hull(pts) }
        }
        ShapeKind::Stripe => ShapeParams::Stripe { length: 1.0, width: 1.0 / rng.random_range(6.0..10.0) },
    }
}

fn outside_point(rng: &mut ChaCha8Rng, width: usize, height: usize, margin: f64) -> [f64; 2] {
    let (w, h) = (width as f64, height as f64);
    let t: f64 = rng.random_range(0.0..1.0);
    match rng.random_range(0..4) {
        0 => [t * w, -margin],
        1 => [w + margin, t * h],
        2 => [t * w, h + margin],
        _ => [-margin, t * h],
    }
}

/// Samples every free parameter of one event.
pub fn plan_occlusion(
    spec: &OcclusionEventSpec,
    event_index: usize,
    sequence_id: &str,
    gt: &[Option<BBox>],
    width: usize,
    height: usize,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<OcclusionPlan, AugmentError> {
    cfg.validate()?;
    let invalid = |msg: String| AugmentError::InvalidEvent { event: event_index, msg };
    if spec.start >= spec.end || spec.end >= gt.len() {
        return Err(invalid(format!("need start < end < {} (got {}..{})", gt.len(), spec.start, spec.end)));
    }
    let candidates: Vec<usize> = (spec.start + 1..spec.end)
        .filter(|&f| gt[f].is_some_and(|b| Mask::empty(width, height).coverage(&b).is_some()))
        .collect();
    if candidates.is_empty() {
        return Err(AugmentError::NoGroundTruth { event: event_index, start: spec.start, end: spec.end });
    }
    let mut rng = event_rng(seed, sequence_id, event_index);

    let m = rng.random_range(1..=3usize).min(candidates.len());
    let mut hit_frames: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), m).into_iter().map(|i| candidates[i]).collect();
    hit_frames.sort_unstable();
    let hit_points: Vec<[f64; 2]> = hit_frames.iter().map(|&f| {
        let c = gt[f].expect("candidate has GT").center();
        [c.x, c.y]
    }).collect();
    let diag = hit_frames.iter().map(|&f| gt[f].expect("candidate has GT").diagonal()).sum::<f64>() / m as f64;

    let unit = unit_shape(spec.shape, &mut rng);
    let size = rng.random_range(cfg.size_min..=cfg.size_max);
    let alpha = rng.random_range(cfg.alpha_min..=cfg.alpha_max);
    let fill_value = rng.random_range(cfg.fill_min..=cfg.fill_max);
    let rot0: f64 = rng.random_range(0.0..TAU);
    let omega: f64 = rng.random_range(-0.02..0.02);
    let len = spec.end - spec.start + 1;
    let normal = Normal::new(0.0, cfg.jitter_sigma.max(0.0)).expect("finite sigma");
    let accel: Vec<[f64; 2]> = (0..len).map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)]).collect();
    let edge_draws = [rng.random::<u64>(), rng.random::<u64>()];

    // grow until the shape covers enough of the GT box at some hit frame
    let rotation = |f: usize| rot0 + omega * (f - spec.start) as f64;
    let mut size_factor = size;
    let mut best = 0.0f64;
    let mut params = unit.scaled(size_factor * diag);
    for _ in 0..200 {
        params = unit.scaled(size_factor * diag);
        best = 0.0;
        for (k, &f) in hit_frames.iter().enumerate() {
            let pose = Pose { center: hit_points[k], rotation: rotation(f) };
            let mask = rasterize_shape(&params, &pose, width, height)?;
            best = best.max(mask.coverage(&gt[f].expect("candidate has GT")).unwrap_or(0.0));
        }
        if best >= cfg.min_coverage {
            break;
        }
        size_factor *= 1.1;
    }
    if best < cfg.min_coverage {
        return Err(AugmentError::CoverageUnreachable { event: event_index, coverage: best });
    }

    let margin = params.circumradius() + 1.0;
    let mut edge_rng = ChaCha8Rng::seed_from_u64(edge_draws[0]);
    let p_start = outside_point(&mut edge_rng, width, height, margin);
    let mut edge_rng = ChaCha8Rng::seed_from_u64(edge_draws[1]);
    let p_end = outside_point(&mut edge_rng, width, height, margin);

    let mut knots: Vec<(usize, [f64; 2])> = vec![(0, p_start)];
    knots.extend(hit_frames.iter().zip(&hit_points).map(|(&f, &p)| (f - spec.start, p)));
    knots.push((len - 1, p_end));

    // integrated jitter, pinned to zero at every knot
    let mut disp = vec![[0.0f64; 2]; len];
    let mut vel = [0.0f64; 2];
    for k in 1..len {
        for a in 0..2 {
            vel[a] += accel[k][a];
            disp[k][a] = disp[k - 1][a] + vel[a];
        }
    }
    let mut poses = Vec::with_capacity(len);
    for k in 0..len {
        let seg = knots.windows(2).find(|w| k <= w[1].0).expect("last knot is the final frame");
        let ((k0, p0), (k1, p1)) = (seg[0], seg[1]);
        let t = if k1 == k0 { 0.0 } else { (k - k0) as f64 / (k1 - k0) as f64 };
        let mut c = [0.0; 2];
        for a in 0..2 {
            let bridge = disp[k0][a] + t * (disp[k1][a] - disp[k0][a]);
            c[a] = p0[a] + t * (p1[a] - p0[a]) + disp[k][a] - bridge;
        }
        poses.push(Pose { center: c, rotation: rotation(spec.start + k) });
    }

    Ok(OcclusionPlan { event: *spec, params, poses, alpha, fill_value, hit_frames, hit_points, size_factor })
}

#[derive(Debug, Clone)]
pub struct Augmented {
    pub frames: Vec<Frame>,
    pub plans: Vec<OcclusionPlan>,
    /// Best GT coverage per event over its frames.
    pub coverage: Vec<f64>,
}

/// Applies every event, in order, to every frame it spans.
pub fn augment_sequence(
    seq: &Sequence,
    events: &[OcclusionEventSpec],
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<Augmented, AugmentError> {
    let first = seq.frame(0)?;
    let (w, h) = (first.width(), first.height());
    let mut plans = Vec::with_capacity(events.len());
    for (i, e) in events.iter().enumerate() {
        let mut p = plan_occlusion(e, i, &seq.name, &seq.gt, w, h, cfg, seed)?;
        if cfg.fill_mode == FillMode::SceneMean {
            let f = seq.frame(e.start)?;
            p.fill_value = f.pixels().iter().map(|&v| v as f64).sum::<f64>() / f.pixels().len() as f64;
        }
        plans.push(p);
    }
    let mut coverage = vec![0.0f64; plans.len()];
    let mut frames = Vec::with_capacity(seq.len());
    for t in 0..seq.len() {
        let mut f = seq.frame(t)?;
        for (i, p) in plans.iter().enumerate() {
            if let Some(pose) = p.pose_at(t) {
                let mask = rasterize_shape(&p.params, pose, w, h)?;
                if let Some(c) = seq.gt[t].and_then(|b| mask.coverage(&b)) {
                    coverage[i] = coverage[i].max(c);
                }
                f = apply_occlusion(&f, &mask, p.alpha, p.fill_value)?;
            }
        }
        frames.push(f);
    }
    Ok(Augmented { frames, plans, coverage })
}

pub fn load_event_specs(path: &Path) -> Result<Vec<OcclusionEventSpec>, AugmentError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text).map_err(|e| DataError::Manifest { path: path.into(), msg: e.to_string() }.into())
}

#[derive(Debug, Serialize)]
struct EventsMetadata<'a> {
    sequence: &'a str,
    seed: u64,
    config: &'a AugmentConfig,
    events: &'a [OcclusionPlan],
    coverage: &'a [f64],
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

/// Augments the sequence behind `manifest_path` into `out_dir`: PGM frames,
/// the annotation file copied byte for byte, a manifest and `events.json`.
/// Returns the new manifest path.
pub fn augment_dataset(
    manifest_path: &Path,
    events: &[OcclusionEventSpec],
    cfg: &AugmentConfig,
    seed: u64,
    out_dir: &Path,
) -> Result<PathBuf, AugmentError> {
    let io = |p: &Path| {
        let p = p.to_path_buf();
        move |e| DataError::Io { path: p, source: e }
    };
    let text = fs::read_to_string(manifest_path).map_err(io(manifest_path))?;
    let mut manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| DataError::Manifest { path: manifest_path.into(), msg: e.to_string() })?;
    let seq = load_sequence(manifest_path)?;
    let aug = augment_sequence(&seq, events, cfg, seed)?;

    let frame_dir = out_dir.join("frames");
    fs::create_dir_all(&frame_dir).map_err(io(&frame_dir))?;
    for (i, f) in aug.frames.iter().enumerate() {
        write_pgm(&frame_dir.join(format!("{i:06}.pgm")), f)?;
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let src_ann = resolve(base, &manifest.annotations);
    let ann_name = src_ann.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "groundtruth.txt".into());
    let dst_ann = out_dir.join(&ann_name);
    fs::copy(&src_ann, &dst_ann).map_err(io(&src_ann))?;
    manifest.frames = "frames/*.pgm".into();
    manifest.annotations = ann_name;
    let out_manifest = out_dir.join("manifest.json");
    fs::write(&out_manifest, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
        .map_err(io(&out_manifest))?;
    let meta = EventsMetadata { sequence: &seq.name, seed, config: cfg, events: &aug.plans, coverage: &aug.coverage };
    let meta_path = out_dir.join("events.json");
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")
        .map_err(io(&meta_path))?;
    Ok(out_manifest)
}
