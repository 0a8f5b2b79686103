//! Shared value types: frames, boxes, probability mass functions and
//! homographies, plus the projection primitives used by the filter and the
//! ego-motion estimator.
//!
//! Pixel convention: the center of pixel `(col, row)` sits at the continuous
//! coordinate `(col, row)`.

use nalgebra::{Matrix2, Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Denominator magnitude below which a projected point is at infinity.
pub const HORIZON_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("invalid bounding box ({x_tl}, {y_tl}, {x_br}, {y_br})")]
    InvalidBox { x_tl: f64, y_tl: f64, x_br: f64, y_br: f64 },
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("point maps to infinity (w = {w:e})")]
    PointAtInfinity { w: f64 },
    #[error("homography gauge is singular (h33 = {h33:e})")]
    GaugeSingular { h33: f64 },
    #[error("homography is singular (det = {det:e})")]
    SingularHomography { det: f64 },
}

/// Grayscale image with luminance in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    index: usize,
    timestamp: f64,
}

impl Frame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        index: usize,
        camera_hz: f64,
    ) -> Result<Self, GeomError> {
        if width == 0 || height == 0 {
            return Err(GeomError::InvalidFrame(format!("empty size {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(GeomError::InvalidFrame(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(GeomError::InvalidFrame(format!(
                "pixel {bad} has value {} outside [0,1]",
                pixels[bad]
            )));
        }
        if !(camera_hz > 0.0) {
            return Err(GeomError::InvalidFrame(format!("camera rate {camera_hz} Hz")));
        }
        Ok(Self { width, height, pixels, index, timestamp: index as f64 / camera_hz })
    }

    /// Builds a frame from interleaved 8-bit RGB using the Rec. 601 luma weights.
    pub fn from_rgb8(
        width: usize,
        height: usize,
        rgb: &[u8],
        index: usize,
        camera_hz: f64,
    ) -> Result<Self, GeomError> {
        if rgb.len() != width * height * 3 {
            return Err(GeomError::InvalidFrame(format!(
                "expected {} rgb bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        let pixels = rgb
            .chunks_exact(3)
            .map(|c| {
                let y = 0.299 * c[0] as f32 + 0.587 * c[1] as f32 + 0.114 * c[2] as f32;
                (y / 255.0).clamp(0.0, 1.0)
            })
            .collect();
        Self::new(width, height, pixels, index, camera_hz)
    }

    /// Same-size frame filled with one value; handy for tests and masks.
    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self, GeomError> {
        Self::new(width, height, vec![value; width * height], 0, 30.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Returns a copy carrying a new index/timestamp.
    pub fn with_index(mut self, index: usize, camera_hz: f64) -> Self {
        self.index = index;
        self.timestamp = index as f64 / camera_hz;
        self
    }

    /// Replaces the pixel buffer, keeping size and timing. Values are clamped.
    pub fn map_pixels(&self, mut f: impl FnMut(usize, f32) -> f32) -> Self {
        let pixels = self
            .pixels
            .iter()
            .enumerate()
            .map(|(i, &v)| f(i, v).clamp(0.0, 1.0))
            .collect();
        Self { pixels, ..self.clone() }
    }

    /// Bilinear sample with clamp-to-edge addressing.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let xm = (self.width - 1) as f64;
        let ym = (self.height - 1) as f64;
        let x = x.clamp(0.0, xm);
        let y = y.clamp(0.0, ym);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let a = self.get(x0, y0) as f64;
        let b = self.get(x1, y0) as f64;
        let c = self.get(x0, y1) as f64;
        let d = self.get(x1, y1) as f64;
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }
}

/// Axis-aligned box given by its top-left and bottom-right corners, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x_tl: f64,
    y_tl: f64,
    x_br: f64,
    y_br: f64,
}

impl BBox {
    pub fn new(x_tl: f64, y_tl: f64, x_br: f64, y_br: f64) -> Result<Self, GeomError> {
        let finite = [x_tl, y_tl, x_br, y_br].iter().all(|v| v.is_finite());
        if !finite || x_tl >= x_br || y_tl >= y_br {
            return Err(GeomError::InvalidBox { x_tl, y_tl, x_br, y_br });
        }
        Ok(Self { x_tl, y_tl, x_br, y_br })
    }

    /// Top-left corner plus size (`x,y,w,h`).
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeomError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn from_center(center: Point2<f64>, width: f64, height: f64) -> Result<Self, GeomError> {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    pub fn x_tl(&self) -> f64 {
        self.x_tl
    }
    pub fn y_tl(&self) -> f64 {
        self.y_tl
    }
    pub fn x_br(&self) -> f64 {
        self.x_br
    }
    pub fn y_br(&self) -> f64 {
        self.y_br
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x_tl, self.y_tl, self.x_br, self.y_br]
    }

    pub fn width(&self) -> f64 {
        self.x_br - self.x_tl
    }

    pub fn height(&self) -> f64 {
        self.y_br - self.y_tl
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Point2<f64> {
        Point2::new((self.x_tl + self.x_br) / 2.0, (self.y_tl + self.y_br) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_tl: self.x_tl + dx,
            y_tl: self.y_tl + dy,
            x_br: self.x_br + dx,
            y_br: self.y_br + dy,
        }
    }

    pub fn scale(&self, k: f64) -> Result<Self, GeomError> {
        Self::new(self.x_tl * k, self.y_tl * k, self.x_br * k, self.y_br * k)
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = (self.x_br.min(other.x_br) - self.x_tl.max(other.x_tl)).max(0.0);
        let h = (self.y_br.min(other.y_br) - self.y_tl.max(other.y_tl)).max(0.0);
        w * h
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeomError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.coords()
    }
}

/// Intersection over union using continuous areas.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Discrete probability mass function over `N` bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Pmf {
    bins: Vec<f64>,
}

impl Pmf {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    /// Validates an already-normalized distribution.
    pub fn new(bins: Vec<f64>) -> Result<Self, GeomError> {
        if bins.is_empty() {
            return Err(GeomError::InvalidPmf("no bins".into()));
        }
        if bins.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GeomError::InvalidPmf("negative or non-finite bin".into()));
        }
        let sum: f64 = bins.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(GeomError::InvalidPmf(format!("bins sum to {sum}")));
        }
        Ok(Self { bins })
    }

    /// Normalizes nonnegative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, GeomError> {
        if weights.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(GeomError::InvalidPmf("negative or non-finite weight".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(GeomError::InvalidPmf("weights sum to zero".into()));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Result<Self, GeomError> {
        Self::from_weights(vec![1.0; n])
    }

    pub fn delta(n: usize, at: usize) -> Result<Self, GeomError> {
        let mut w = vec![0.0; n];
        *w.get_mut(at).ok_or_else(|| GeomError::InvalidPmf(format!("bin {at} out of {n}")))? = 1.0;
        Self::new(w)
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Index of the largest bin; ties go to the lowest index.
    pub fn peak(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.bins.iter().enumerate() {
            if v > self.bins[best] {
                best = k;
            }
        }
        best
    }
}

/// One distribution per box coordinate, in `x_tl, y_tl, x_br, y_br` order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf4 {
    pub x_tl: Pmf,
    pub y_tl: Pmf,
    pub x_br: Pmf,
    pub y_br: Pmf,
}

impl Pmf4 {
    pub fn new(x_tl: Pmf, y_tl: Pmf, x_br: Pmf, y_br: Pmf) -> Result<Self, GeomError> {
        let n = x_tl.len();
        if [&y_tl, &x_br, &y_br].iter().any(|p| p.len() != n) {
            return Err(GeomError::InvalidPmf("coordinate pmfs differ in length".into()));
        }
        Ok(Self { x_tl, y_tl, x_br, y_br })
    }

    pub fn bin_count(&self) -> usize {
        self.x_tl.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pmf> {
        [&self.x_tl, &self.y_tl, &self.x_br, &self.y_br].into_iter()
    }
}

/// Projective transform between two views, gauge-fixed so that `h33 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self { m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0) }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeomError> {
        normalize_h33(&[
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    /// Row-major entries `h11..h33`.
    pub fn entries(&self) -> [f64; 9] {
        raw_entries(&self.m)
    }

    pub fn inverse(&self) -> Result<Self, GeomError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(GeomError::SingularHomography { det: self.m.determinant() })?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Self, GeomError> {
        Self::from_matrix(self.m * other.m)
    }

    pub fn warp_point(&self, p: Point2<f64>) -> Result<Point2<f64>, GeomError> {
        warp_point_raw(&self.m, p)
    }

    pub fn jacobian_at(&self, p: Point2<f64>) -> Result<Matrix2<f64>, GeomError> {
        jacobian_at_raw(&self.m, p)
    }
}

pub(crate) fn raw_entries(m: &Matrix3<f64>) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}

pub(crate) fn matrix_from_entries(h: &[f64]) -> Matrix3<f64> {
    Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8])
}

/// Divides every entry by `h33` and checks the result is invertible.
pub fn normalize_h33(raw: &[f64; 9]) -> Result<Homography, GeomError> {
    let h33 = raw[8];
    if !(h33.abs() > HORIZON_EPS) {
        return Err(GeomError::GaugeSingular { h33 });
    }
    let scaled: Vec<f64> = raw.iter().map(|v| v / h33).collect();
    let m = matrix_from_entries(&scaled);
    let det = m.determinant();
    if !(det.abs() > 1e-12) {
        return Err(GeomError::SingularHomography { det });
    }
    Ok(Homography { m })
}

/// Projects `p` through an arbitrary (not necessarily normalized) matrix.
pub fn warp_point_raw(m: &Matrix3<f64>, p: Point2<f64>) -> Result<Point2<f64>, GeomError> {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    if !(v.z.abs() > HORIZON_EPS) {
        return Err(GeomError::PointAtInfinity { w: v.z });
    }
    Ok(Point2::new(v.x / v.z, v.y / v.z))
}

/// Jacobian of the projection with respect to the input pixel coordinates.
pub fn jacobian_at_raw(m: &Matrix3<f64>, p: Point2<f64>) -> Result<Matrix2<f64>, GeomError> {
    let v = m * Vector3::new(p.x, p.y, 1.0);
    let w = v.z;
    if !(w.abs() > HORIZON_EPS) {
        return Err(GeomError::PointAtInfinity { w });
    }
    let gx = v.x / w;
    let gy = v.y / w;
    Ok(Matrix2::new(
        m[(0, 0)] - gx * m[(2, 0)],
        m[(0, 1)] - gx * m[(2, 1)],
        m[(1, 0)] - gy * m[(2, 0)],
        m[(1, 1)] - gy * m[(2, 1)],
    ) / w)
}
