//! Inter-frame camera motion as a homography with a first-order covariance.
//!
//! The pipeline samples a regular grid of points, tracks them with
//! coarse-to-fine Lucas–Kanade, fits a homography with RANSAC, refits on the
//! inliers with a normalized DLT, and propagates point noise to the eight free
//! homography entries.

mod covariance;
mod dlt;
mod flow;
mod pyramid;
mod ransac;

use nalgebra::{Point2, SMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::ConfigError;
use crate::geom::{Frame, GeomError, Homography};

pub use covariance::homography_covariance;
pub use dlt::{normalized_dlt, reprojection_error};
pub use flow::lk_flow;
pub use pyramid::build_pyramid;
pub use ransac::ransac_homography;

pub type Cov9 = SMatrix<f64, 9, 9>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EgoError {
    #[error("image {width}x{height} too small for {levels} pyramid levels")]
    TooSmall { width: usize, height: usize, levels: usize },
    #[error("grid {rows}x{cols} too dense for a {width}x{height} image")]
    GridTooDense { rows: usize, cols: usize, width: usize, height: usize },
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("degenerate point configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("normal matrix is rank deficient (condition {0:e})")]
    RankDeficient(f64),
    #[error("frames differ in size: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

/// A tracked grid point: `p` in frame k−1, `p_prime` in frame k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p: Point2<f64>,
    pub p_prime: Point2<f64>,
    pub valid: bool,
}

impl Correspondence {
    pub fn new(p: Point2<f64>, p_prime: Point2<f64>) -> Self {
        let valid = p.coords.iter().chain(p_prime.coords.iter()).all(|v| v.is_finite());
        Self { p, p_prime, valid }
    }

    pub fn invalid(p: Point2<f64>) -> Self {
        Self { p, p_prime: p, valid: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EgoConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub pyramid_levels: usize,
    /// Side of the square LK window, in pixels (odd).
    pub lk_window: usize,
    pub lk_max_iters: usize,
    pub lk_epsilon: f64,
    /// Minimum structure-tensor eigenvalue, normalized by window area.
    pub min_eigenvalue: f64,
    pub ransac_threshold: f64,
    pub ransac_max_iters: usize,
    pub ransac_confidence: f64,
    /// Assumed point localization noise, in pixels.
    pub noise_sigma: f64,
}

impl Default for EgoConfig {
    fn default() -> Self {
        Self {
            grid_rows: 16,
            grid_cols: 16,
            pyramid_levels: 3,
            lk_window: 21,
            lk_max_iters: 30,
            lk_epsilon: 0.01,
            min_eigenvalue: 1e-4,
            ransac_threshold: 3.0,
            ransac_max_iters: 2000,
            ransac_confidence: 0.995,
            noise_sigma: 1.0,
        }
    }
}

impl EgoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("grid_rows", self.grid_rows),
            ("grid_cols", self.grid_cols),
            ("pyramid_levels", self.pyramid_levels),
            ("lk_window", self.lk_window),
            ("lk_max_iters", self.lk_max_iters),
            ("ransac_max_iters", self.ransac_max_iters),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(ConfigError::invalid(key, "must be positive"));
            }
        }
        if self.lk_window % 2 == 0 {
            return Err(ConfigError::invalid("lk_window", "must be odd"));
        }
        for (key, v) in [
            ("lk_epsilon", self.lk_epsilon),
            ("min_eigenvalue", self.min_eigenvalue),
            ("ransac_threshold", self.ransac_threshold),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::invalid(key, "must be positive"));
            }
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence < 1.0) {
            return Err(ConfigError::invalid("ransac_confidence", "must lie in (0,1)"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(ConfigError::invalid("noise_sigma", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Homography from frame k−1 to frame k with its covariance over the
/// row-major entries of the normalized matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoMeasurement {
    pub h: Homography,
    pub cov: Cov9,
    pub inlier_count: usize,
    pub frame_index: usize,
}

impl EgoMeasurement {
    /// A noiseless measurement, e.g. from a scripted camera.
    pub fn exact(h: Homography, frame_index: usize) -> Self {
        Self { h, cov: Cov9::zeros(), inlier_count: usize::MAX, frame_index }
    }

    pub fn max_variance(&self) -> f64 {
        (0..9).map(|i| self.cov[(i, i)]).fold(0.0, f64::max)
    }
}

/// Points at the centers of a `rows × cols` partition of the image.
pub fn sample_grid(
    width: usize,
    height: usize,
    rows: usize,
    cols: usize,
) -> Result<Vec<Point2<f64>>, EgoError> {
    let dense = EgoError::GridTooDense { rows, cols, width, height };
    if rows == 0 || cols == 0 {
        return Err(dense);
    }
    let dx = width as f64 / cols as f64;
    let dy = height as f64 / rows as f64;
    if dx < 2.0 || dy < 2.0 {
        return Err(dense);
    }
    let mut pts = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            pts.push(Point2::new((j as f64 + 0.5) * dx, (i as f64 + 0.5) * dy));
        }
    }
    Ok(pts)
}

/// Full block: grid → pyramidal LK → RANSAC → covariance.
pub fn estimate_egomotion(
    prev: &Frame,
    next: &Frame,
    cfg: &EgoConfig,
    seed: u64,
) -> Result<EgoMeasurement, EgoError> {
    cfg.validate()?;
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(EgoError::SizeMismatch(prev.width(), prev.height(), next.width(), next.height()));
    }
    let prev_pyr = build_pyramid(prev, cfg.pyramid_levels)?;
    let next_pyr = build_pyramid(next, cfg.pyramid_levels)?;
    estimate_from_pyramids(&prev_pyr, &next_pyr, cfg, seed, next.index())
}

/// Same as [`estimate_egomotion`] with prebuilt pyramids.
pub fn estimate_from_pyramids(
    prev: &[Frame],
    next: &[Frame],
    cfg: &EgoConfig,
    seed: u64,
    frame_index: usize,
) -> Result<EgoMeasurement, EgoError> {
    let base = &prev[0];
    let pts = sample_grid(base.width(), base.height(), cfg.grid_rows, cfg.grid_cols)?;
    let corrs = lk_flow(prev, next, &pts, cfg);
    let (h, mask) = ransac_homography(&corrs, cfg, seed)?;
    let inliers: Vec<Correspondence> =
        corrs.iter().zip(&mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect();
    let cov = homography_covariance(&h, &inliers, cfg.noise_sigma)?;
    Ok(EgoMeasurement { h, cov, inlier_count: inliers.len(), frame_index })
}
