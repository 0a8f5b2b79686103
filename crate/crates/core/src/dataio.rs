//! Frame and annotation I/O, sequence manifests, and a synthetic sequence
//! generator that also emits the true inter-frame homographies.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix3, Point2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{BBox, Frame, GeomError, Homography};

/// Annotation lines per frame in sparse (VTUAV-style) files.
pub const SPARSE_STRIDE: usize = 10;
/// Synthetic box coordinates are rounded to this grid so they survive the
/// `x,y,w,h` text round trip exactly.
const GT_QUANTUM: f64 = 1.0 / 256.0;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("bad image {path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("{frames} frames but annotations cover {annotated} (stride {stride})")]
    InconsistentLength { frames: usize, annotated: usize, stride: usize },
    #[error("no ground truth at frame 0")]
    MissingInit,
    #[error("frame {0} out of range")]
    FrameOutOfRange(usize),
    #[error("invalid manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("invalid synthetic spec: {0}")]
    SpecInvalid(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.to_path_buf(), source }
}

// ---------------------------------------------------------------- images

/// 8-bit binary PGM bytes for a frame (values rounded to the nearest level).
pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().map(|&v| to_u8(v)));
    out
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_u8(b: u8) -> f32 {
    b as f32 / 255.0
}

/// Rounds every pixel to the nearest 8-bit level, matching what a PGM
/// round trip would produce.
pub fn quantize_8bit(frame: &Frame) -> Frame {
    frame.map_pixels(|_, v| from_u8(to_u8(v)))
}

fn pgm_token<'a>(data: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < data.len() && data[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < data.len() && data[*pos] == b'#' {
            while *pos < data.len() && data[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < data.len() && !data[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &data[start..*pos])
}

/// Parses 8-bit binary PGM (`P5`, maxval ≤ 255).
pub fn decode_pgm(data: &[u8], index: usize, camera_hz: f64) -> Result<Frame, String> {
    let mut pos = 0;
    if pgm_token(data, &mut pos) != Some(b"P5") {
        return Err("not a binary PGM (P5)".into());
    }
    let mut num = |what: &str| -> Result<usize, String> {
        let tok = pgm_token(data, &mut pos).ok_or_else(|| format!("missing {what}"))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("bad {what}"))
    };
    let w = num("width")?;
    let h = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let body = data.get(pos..pos + w * h).ok_or("truncated raster")?;
    let scale = 1.0 / maxval as f32;
    let pixels = body
        .iter()
        .map(|&b| if maxval == 255 { from_u8(b) } else { (b as f32 * scale).min(1.0) })
        .collect();
    Frame::new(w, h, pixels, index, camera_hz).map_err(|e| e.to_string())
}

pub fn write_pgm(path: &Path, frame: &Frame) -> Result<(), DataError> {
    fs::write(path, encode_pgm(frame)).map_err(io_err(path))
}

/// Reads a frame; `.pgm` always, `.png` with the `png` feature.
pub fn read_frame(path: &Path, index: usize, camera_hz: f64) -> Result<Frame, DataError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let bad = |msg: String| DataError::Image { path: path.to_path_buf(), msg };
    match ext.as_str() {
        "pgm" => {
            let data = fs::read(path).map_err(io_err(path))?;
            decode_pgm(&data, index, camera_hz).map_err(bad)
        }
        #[cfg(feature = "png")]
        "png" => {
            let img = image::open(path).map_err(|e| bad(e.to_string()))?.to_rgb8();
            let (w, h) = img.dimensions();
            Frame::from_rgb8(w as usize, h as usize, img.as_raw(), index, camera_hz)
                .map_err(|e| bad(e.to_string()))
        }
        other => Err(bad(format!("unsupported extension `{other}`"))),
    }
}

// ----------------------------------------------------------- annotations

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationFormat {
    /// One line per frame.
    Uav123,
    /// One line per tenth frame.
    Vtuav,
}

impl AnnotationFormat {
    pub fn stride(self) -> usize {
        match self {
            Self::Uav123 => 1,
            Self::Vtuav => SPARSE_STRIDE,
        }
    }
}

/// Parsed annotation lines; line `i` belongs to frame `i * stride`.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotations {
    pub stride: usize,
    pub lines: Vec<Option<BBox>>,
}

impl Annotations {
    /// Expands to one entry per frame, `None` where nothing is annotated.
    pub fn to_dense(&self, frames: usize) -> Vec<Option<BBox>> {
        let mut gt = vec![None; frames];
        for (i, b) in self.lines.iter().enumerate() {
            if let Some(slot) = gt.get_mut(i * self.stride) {
                *slot = *b;
            }
        }
        gt
    }

    /// Number of annotation lines a sequence of `frames` frames must have.
    pub fn expected_lines(frames: usize, stride: usize) -> usize {
        frames.div_ceil(stride)
    }
}

fn parse_line(line: &str) -> Result<Option<BBox>, String> {
    let fields: Vec<&str> = line.split(|c| c == ',' || c == '\t' || c == ' ').filter(|s| !s.is_empty()).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, got {}", fields.len()));
    }
    let vals: Vec<f64> = fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| format!("not a number: `{f}`")))
        .collect::<Result<_, _>>()?;
    let nan = vals.iter().filter(|v| v.is_nan()).count();
    if nan == 4 {
        return Ok(None);
    }
    if nan > 0 || vals.iter().any(|v| v.is_infinite()) {
        return Err("partially missing box".into());
    }
    let (x, y, w, h) = (vals[0], vals[1], vals[2], vals[3]);
    if w <= 0.0 || h <= 0.0 {
        return Err(format!("non-positive size {w}x{h}"));
    }
    BBox::new(x, y, x + w, y + h).map(Some).map_err(|e| e.to_string())
}

pub fn parse_annotations(
    text: &str,
    format: AnnotationFormat,
    path: &Path,
) -> Result<Annotations, DataError> {
    let mut lines = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let b = parse_line(line).map_err(|msg| DataError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg,
        })?;
        lines.push(b);
    }
    Ok(Annotations { stride: format.stride(), lines })
}

pub fn load_annotations(path: &Path, format: AnnotationFormat) -> Result<Annotations, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_annotations(&text, format, path)
}

/// `x,y,w,h` lines; every `stride`-th frame for sparse formats.
pub fn format_annotations(gt: &[Option<BBox>], format: AnnotationFormat) -> String {
    let mut out = String::new();
    for b in gt.iter().step_by(format.stride()) {
        match b {
            Some(b) => out.push_str(&format!("{},{},{},{}\n", b.x_tl(), b.y_tl(), b.width(), b.height())),
            None => out.push_str("NaN,NaN,NaN,NaN\n"),
        }
    }
    out
}

pub fn write_annotations(
    path: &Path,
    gt: &[Option<BBox>],
    format: AnnotationFormat,
) -> Result<(), DataError> {
    fs::write(path, format_annotations(gt, format)).map_err(io_err(path))
}

// -------------------------------------------------------------- sequences

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    /// Glob relative to the manifest directory.
    pub frames: String,
    pub annotations: String,
    pub format: AnnotationFormat,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Clone)]
enum FrameSource {
    Files(Vec<PathBuf>),
    Memory(Arc<Vec<Frame>>),
}

/// Frames plus ground truth. File-backed sequences load frames on demand.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub gt: Vec<Option<BBox>>,
    pub tags: Vec<String>,
    pub stride: usize,
    pub camera_hz: f64,
    source: FrameSource,
}

impl Sequence {
    pub fn from_frames(
        name: impl Into<String>,
        frames: Vec<Frame>,
        gt: Vec<Option<BBox>>,
        tags: Vec<String>,
        stride: usize,
        camera_hz: f64,
    ) -> Result<Self, DataError> {
        if frames.len() != gt.len() {
            return Err(DataError::InconsistentLength {
                frames: frames.len(),
                annotated: gt.len(),
                stride: 1,
            });
        }
        if gt.first().copied().flatten().is_none() {
            return Err(DataError::MissingInit);
        }
        Ok(Self {
            name: name.into(),
            gt,
            tags,
            stride,
            camera_hz,
            source: FrameSource::Memory(Arc::new(frames)),
        })
    }

    pub fn len(&self) -> usize {
        match &self.source {
            FrameSource::Files(f) => f.len(),
            FrameSource::Memory(f) => f.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn init_box(&self) -> BBox {
        self.gt[0].expect("validated at construction")
    }

    pub fn frame(&self, index: usize) -> Result<Frame, DataError> {
        match &self.source {
            FrameSource::Files(f) => {
                let p = f.get(index).ok_or(DataError::FrameOutOfRange(index))?;
                read_frame(p, index, self.camera_hz)
            }
            FrameSource::Memory(f) => {
                f.get(index).cloned().ok_or(DataError::FrameOutOfRange(index))
            }
        }
    }

    pub fn frame_paths(&self) -> Option<&[PathBuf]> {
        match &self.source {
            FrameSource::Files(f) => Some(f),
            FrameSource::Memory(_) => None,
        }
    }

    /// Number of frames carrying ground truth.
    pub fn annotated(&self) -> usize {
        self.gt.iter().filter(|g| g.is_some()).count()
    }
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_sequence(manifest_path: &Path) -> Result<Sequence, DataError> {
    load_sequence_at(manifest_path, 30.0)
}

pub fn load_sequence_at(manifest_path: &Path, camera_hz: f64) -> Result<Sequence, DataError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let bad = |msg: String| DataError::Manifest { path: manifest_path.to_path_buf(), msg };
    let m: Manifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let pattern = resolve(base, &m.frames);
    let mut frames: Vec<PathBuf> = glob::glob(&pattern.to_string_lossy())
        .map_err(|e| bad(e.to_string()))?
        .filter_map(Result::ok)
        .collect();
    frames.sort();
    let ann = load_annotations(&resolve(base, &m.annotations), m.format)?;
    let stride = ann.stride;
    let expected = Annotations::expected_lines(frames.len(), stride);
    if ann.lines.len() != expected {
        return Err(DataError::InconsistentLength {
            frames: frames.len(),
            annotated: ann.lines.len(),
            stride,
        });
    }
    let gt = ann.to_dense(frames.len());
    if gt.first().copied().flatten().is_none() {
        return Err(DataError::MissingInit);
    }
    Ok(Sequence {
        name: m.name,
        gt,
        tags: m.tags,
        stride,
        camera_hz,
        source: FrameSource::Files(frames),
    })
}

/// Writes `frames/NNNNNN.pgm`, `groundtruth.txt` and `manifest.json` under
/// `dir`; returns the manifest path.
pub fn write_sequence(dir: &Path, seq: &Sequence, format: AnnotationFormat) -> Result<PathBuf, DataError> {
    let frame_dir = dir.join("frames");
    fs::create_dir_all(&frame_dir).map_err(io_err(&frame_dir))?;
    for i in 0..seq.len() {
        write_pgm(&frame_dir.join(format!("{i:06}.pgm")), &seq.frame(i)?)?;
    }
    write_annotations(&dir.join("groundtruth.txt"), &seq.gt, format)?;
    let m = Manifest {
        name: seq.name.clone(),
        frames: "frames/*.pgm".into(),
        annotations: "groundtruth.txt".into(),
        format,
        tags: seq.tags.clone(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(path)
}

// ------------------------------------------------------------- synthetic

/// One inter-frame camera step, applied about the image center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraStep {
    pub translation: [f64; 2],
    pub rotation_deg: f64,
    pub scale: f64,
    pub projective: [f64; 2],
}

impl Default for CameraStep {
    fn default() -> Self {
        Self { translation: [0.0; 2], rotation_deg: 0.0, scale: 1.0, projective: [0.0; 2] }
    }
}

impl CameraStep {
    pub fn homography(&self, width: usize, height: usize) -> Result<Homography, GeomError> {
        let (cx, cy) = (0.5 * (width as f64 - 1.0), 0.5 * (height as f64 - 1.0));
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let k = self.scale;
        let core = Matrix3::new(
            k * c,
            -k * s,
            self.translation[0],
            k * s,
            k * c,
            self.translation[1],
            self.projective[0],
            self.projective[1],
            1.0,
        );
        let to = Matrix3::new(1.0, 0.0, cx, 0.0, 1.0, cy, 0.0, 0.0, 1.0);
        let from = Matrix3::new(1.0, 0.0, -cx, 0.0, 1.0, -cy, 0.0, 0.0, 1.0);
        Homography::from_matrix(to * core * from)
    }
}

/// Velocity held for a number of frames (px/frame in world coordinates).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub frames: usize,
    pub velocity: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectScript {
    pub size: [f64; 2],
    pub center: [f64; 2],
    /// Piecewise-constant velocity; the last one continues to the end.
    #[serde(default)]
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default = "default_hz")]
    pub camera_hz: f64,
    pub object: ObjectScript,
    /// Step `k` maps frame `k` to frame `k+1`; the last one repeats.
    #[serde(default)]
    pub camera: Vec<CameraStep>,
    /// Inclusive `[start, end]` frame windows where the object is not drawn.
    #[serde(default)]
    pub occlusions: Vec<[usize; 2]>,
    #[serde(default = "default_stride")]
    pub annotation_stride: usize,
    #[serde(default)]
    pub tags: Vec<String>,
}

fn default_hz() -> f64 {
    30.0
}

fn default_stride() -> usize {
    1
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::SpecInvalid(m.into()));
        if self.width < 16 || self.height < 16 {
            return bad("frame must be at least 16x16");
        }
        if self.frames == 0 {
            return bad("need at least one frame");
        }
        if !(self.camera_hz > 0.0) {
            return bad("camera_hz must be positive");
        }
        if !(self.object.size[0] >= 2.0 && self.object.size[1] >= 2.0) {
            return bad("object must be at least 2x2 px");
        }
        if !(self.annotation_stride == 1 || self.annotation_stride == SPARSE_STRIDE) {
            return bad("annotation_stride must be 1 or 10");
        }
        for w in &self.occlusions {
            if w[0] > w[1] {
                return bad("occlusion window start after end");
            }
            if w[0] == 0 {
                return bad("the object must be visible at frame 0");
            }
        }
        Ok(())
    }

    fn occluded(&self, k: usize) -> bool {
        self.occlusions.iter().any(|w| (w[0]..=w[1]).contains(&k))
    }

    fn object_center(&self, k: usize) -> Point2<f64> {
        let mut c = Point2::new(self.object.center[0], self.object.center[1]);
        let mut left = k;
        let mut last = [0.0, 0.0];
        for s in &self.object.segments {
            let n = left.min(s.frames);
            c.x += s.velocity[0] * n as f64;
            c.y += s.velocity[1] * n as f64;
            left -= n;
            last = s.velocity;
            if left == 0 {
                break;
            }
        }
        c.x += last[0] * left as f64;
        c.y += last[1] * left as f64;
        c
    }
}

/// Output of the generator: the sequence plus `H_k` (frame k−1 → k), with
/// `H_0 = I`.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub sequence: Sequence,
    pub homographies: Vec<Homography>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix((ix as u64).wrapping_mul(0x1F1F_1F1F) ^ splitmix(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (u, v) = (fade(x - fx), fade(y - fy));
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    (a + (b - a) * u) + ((c + (d - c) * u) - (a + (b - a) * u)) * v
}

/// Multi-octave value noise in `[0, 1]`; `cell` is the coarsest lattice
/// spacing in pixels.
pub fn fractal_noise(seed: u64, x: f64, y: f64, cell: f64) -> f64 {
    const AMPS: [f64; 4] = [0.5, 0.27, 0.15, 0.08];
    let mut total = 0.0;
    let mut scale = 1.0 / cell;
    for (o, a) in AMPS.iter().enumerate() {
        total += a * value_noise(splitmix(seed.wrapping_add(o as u64)), x * scale, y * scale);
        scale *= 2.0;
    }
    total / AMPS.iter().sum::<f64>()
}

/// `f64::floor` for magnitudes below 2^53, without the libm call.
fn fast_floor(v: f64) -> f64 {
    let t = v as i64 as f64;
    if t > v { t - 1.0 } else { t }
}

/// `fractal_noise` with lattice values precomputed over a world-space box.
struct NoiseGrid {
    cell: f64,
    octaves: Vec<(i64, i64, usize, Vec<f64>)>,
}

impl NoiseGrid {
    const AMPS: [f64; 4] = [0.5, 0.27, 0.15, 0.08];

    fn new(seed: u64, cell: f64, lo: [f64; 2], hi: [f64; 2]) -> Self {
        let mut scale = 1.0 / cell;
        let mut octaves = Vec::with_capacity(Self::AMPS.len());
        for o in 0..Self::AMPS.len() {
            let s = splitmix(seed.wrapping_add(o as u64));
            let (ix0, iy0) = ((lo[0] * scale).floor() as i64 - 1, (lo[1] * scale).floor() as i64 - 1);
            let (ix1, iy1) = ((hi[0] * scale).floor() as i64 + 2, (hi[1] * scale).floor() as i64 + 2);
            let nx = (ix1 - ix0 + 1).max(0) as usize;
            let ny = (iy1 - iy0 + 1).max(0) as usize;
            let mut vals = Vec::with_capacity(nx * ny);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    vals.push(lattice(s, ix, iy));
                }
            }
            octaves.push((ix0, iy0, nx, vals));
            scale *= 2.0;
        }
        Self { cell, octaves }
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        let mut total = 0.0;
        let mut scale = 1.0 / self.cell;
        for (a, (ix0, iy0, nx, vals)) in Self::AMPS.iter().zip(&self.octaves) {
            let (x, y) = (x * scale, y * scale);
            let (fx, fy) = (fast_floor(x), fast_floor(y));
            let i = (fx as i64 - ix0) as usize;
            let j = (fy as i64 - iy0) as usize;
            let (u, v) = (fade(x - fx), fade(y - fy));
            let k = j * nx + i;
            let (pa, pb, pc, pd) = (vals[k], vals[k + 1], vals[k + nx], vals[k + nx + 1]);
            total += a * ((pa + (pb - pa) * u) + ((pc + (pd - pc) * u) - (pa + (pb - pa) * u)) * v);
            scale *= 2.0;
        }
        total / Self::AMPS.iter().sum::<f64>()
    }
}

fn quantize_gt(v: f64) -> f64 {
    (v / GT_QUANTUM).round() * GT_QUANTUM
}

/// Renders the scripted scene. The world is a textured plane; the camera
/// pose `C_k` maps world to frame `k` and evolves as `C_k = H_k C_{k−1}`.
/// The object is a textured rectangle moving in world coordinates; its
/// ground truth is the bounding box of its projected corners.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SynthOutput, DataError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let bg_seed = splitmix(seed ^ 0xB6);
    let obj_seed = splitmix(seed ^ 0x0B);
    let mut cam = Matrix3::identity();
    let mut frames = Vec::with_capacity(spec.frames);
    let mut gt = Vec::with_capacity(spec.frames);
    let mut homs = Vec::with_capacity(spec.frames);
    let half = [0.5 * spec.object.size[0], 0.5 * spec.object.size[1]];

    for k in 0..spec.frames {
        if k == 0 {
            homs.push(Homography::identity());
        } else {
            let step = spec
                .camera
                .get(k - 1)
                .or(spec.camera.last())
                .copied()
                .unwrap_or_default();
            let hk = step.homography(w, h)?;
            cam = hk.matrix() * cam;
            homs.push(hk);
        }
        let cam_h = Homography::from_matrix(cam)?;
        let inv = cam_h.inverse()?;
        let c = spec.object_center(k);
        let (x0, y0) = (c.x - half[0], c.y - half[1]);
        let (x1, y1) = (c.x + half[0], c.y + half[1]);
        let visible = !spec.occluded(k);

        let m = inv.matrix();
        let mut world = Vec::with_capacity(w * h);
        let mut bounds = [[f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY]; 2];
        for row in 0..h {
            for col in 0..w {
                let (x, y) = (col as f64, row as f64);
                let z = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
                let wx = (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / z;
                let wy = (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / z;
                let on_obj = visible && wx >= x0 && wx < x1 && wy >= y0 && wy < y1;
                let (px, py) = if on_obj { (wx - x0, wy - y0) } else { (wx, wy) };
                let b = &mut bounds[on_obj as usize];
                *b = [b[0].min(px), b[1].min(py), b[2].max(px), b[3].max(py)];
                world.push((on_obj, px, py));
            }
        }
        let grid = |seed, cell, b: [f64; 4]| {
            (b[0] <= b[2]).then(|| NoiseGrid::new(seed, cell, [b[0], b[1]], [b[2], b[3]]))
        };
        let bg = grid(bg_seed, 18.0, bounds[0]);
        let obj = grid(obj_seed, 6.0, bounds[1]);
        let px = world
            .into_iter()
            .map(|(on_obj, x, y)| {
                let v = if on_obj {
                    // brighter, finer texture on the object
                    0.35 + 0.6 * obj.as_ref().expect("object bounds").eval(x, y)
                } else {
                    0.05 + 0.6 * bg.as_ref().expect("background bounds").eval(x, y)
                };
                from_u8(to_u8(v as f32))
            })
            .collect();
        frames.push(Frame::new(w, h, px, k, spec.camera_hz)?);

        let corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
            .map(|(x, y)| cam_h.warp_point(Point2::new(x, y)));
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in corners {
            let p = p?;
            lo = [lo[0].min(p.x), lo[1].min(p.y)];
            hi = [hi[0].max(p.x), hi[1].max(p.y)];
        }
        let b = BBox::new(quantize_gt(lo[0]), quantize_gt(lo[1]), quantize_gt(hi[0]), quantize_gt(hi[1]))?;
        let annotated = k % spec.annotation_stride == 0;
        gt.push(annotated.then_some(b));
    }

    let sequence = Sequence::from_frames(
        spec.name.clone(),
        frames,
        gt,
        spec.tags.clone(),
        spec.annotation_stride,
        spec.camera_hz,
    )?;
    Ok(SynthOutput { sequence, homographies: homs })
}

/// NDJSON lines `{"frame":k,"h":[9 entries]}`.
pub fn write_homographies(path: &Path, homs: &[Homography]) -> Result<(), DataError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    for (k, h) in homs.iter().enumerate() {
        let line = serde_json::json!({ "frame": k, "h": h.entries() });
        writeln!(f, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

/// Reads the output of [`write_homographies`]; frames must run `0, 1, 2, …`.
pub fn read_homographies(path: &Path) -> Result<Vec<Homography>, DataError> {
    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Line {
        frame: usize,
        h: [f64; 9],
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parse = |msg: String| DataError::Parse { path: path.into(), line: i + 1, msg };
        let rec: Line = serde_json::from_str(line).map_err(|e| parse(e.to_string()))?;
        if rec.frame != out.len() {
            return Err(parse(format!("expected frame {}, got {}", out.len(), rec.frame)));
        }
        out.push(crate::geom::normalize_h33(&rec.h).map_err(|e| parse(e.to_string()))?);
    }
    Ok(out)
}

/// Scene parameters for the randomized occluded suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteParams {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self { width: 320, height: 240, frames: 150 }
    }
}

/// Seeded suite of sequences with camera motion, a moving object and one
/// full occlusion window each.
pub fn occluded_suite(count: usize, seed: u64, params: SuiteParams) -> Vec<SynthSpec> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (w, h, n) = (params.width as f64, params.height as f64, params.frames);
    (0..count)
        .map(|i| {
            let size = [rng.random_range(0.12..0.2) * w, rng.random_range(0.12..0.2) * h];
            let center = [rng.random_range(0.35..0.65) * w, rng.random_range(0.35..0.65) * h];
            let mut segments = Vec::new();
            let mut left = n;
            while left > 0 {
                let len = rng.random_range(30..70).min(left);
                let speed = rng.random_range(0.4..1.2);
                let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                segments.push(Segment { frames: len, velocity: [speed * ang.cos(), speed * ang.sin()] });
                left -= len;
            }
            let pan_ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let pan = rng.random_range(0.5..2.0);
            let camera = (0..n)
                .map(|k| {
                    // slowly swinging pan with a small rotation and zoom wobble
                    let t = k as f64 / n as f64;
                    let a = pan_ang + 1.5 * (std::f64::consts::TAU * t).sin();
                    CameraStep {
                        translation: [pan * a.cos(), pan * a.sin()],
                        rotation_deg: 0.15 * (3.0 * t).sin(),
                        scale: 1.0 + 0.002 * (5.0 * t).cos(),
                        projective: [0.0, 0.0],
                    }
                })
                .collect();
            let occ_len = rng.random_range(15..30);
            let lo = (n / 3).max(1);
            let occ_start = rng.random_range(lo..(n / 2).max(lo + 1));
            SynthSpec {
                name: format!("synth_{i:03}"),
                width: params.width,
                height: params.height,
                frames: n,
                camera_hz: 30.0,
                object: ObjectScript { size, center, segments },
                camera,
                occlusions: vec![[occ_start, occ_start + occ_len - 1]],
                annotation_stride: 1,
                tags: vec!["occlusion".into()],
            }
        })
        .collect()
}
