use nalgebra::Point2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dlt::{normalized_dlt, reprojection_error};
use super::{Correspondence, EgoConfig, EgoError};
use crate::geom::Homography;

const SAMPLE_SIZE: usize = 4;
/// Twice the triangle area (px²) below which three sample points count as collinear.
const COLLINEAR_AREA: f64 = 1e-3;
const MAX_REFITS: usize = 5;

fn collinear(a: Point2<f64>, b: Point2<f64>, c: Point2<f64>) -> bool {
    ((b - a).perp(&(c - a))).abs() < COLLINEAR_AREA
}

fn degenerate_sample(pts: &[Point2<f64>; SAMPLE_SIZE]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<_> = (0..4).filter(|&i| i != skip).map(|i| pts[i]).collect();
        collinear(t[0], t[1], t[2])
    })
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    let w = inlier_ratio.powi(SAMPLE_SIZE as i32);
    if w >= 1.0 - f64::EPSILON {
        return 1;
    }
    if w <= 0.0 {
        return cap;
    }
    let n = (1.0 - confidence).ln() / (1.0 - w).ln();
    if !n.is_finite() {
        return cap;
    }
    (n.ceil() as usize).clamp(1, cap)
}

fn inlier_mask(h: &Homography, corrs: &[Correspondence], thr: f64) -> Vec<bool> {
    corrs
        .iter()
        .map(|c| c.valid && reprojection_error(h, c.p, c.p_prime) < thr)
        .collect()
}

fn refit(corrs: &[Correspondence], mask: &[bool]) -> Result<Homography, EgoError> {
    let (src, dst): (Vec<_>, Vec<_>) =
        corrs.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| (c.p, c.p_prime)).unzip();
    normalized_dlt(&src, &dst)
}

/// Robust homography fit. The returned mask is aligned with `corrs` (invalid
/// entries are never inliers) and is computed from the returned model.
pub fn ransac_homography(
    corrs: &[Correspondence],
    cfg: &EgoConfig,
    seed: u64,
) -> Result<(Homography, Vec<bool>), EgoError> {
    let valid: Vec<usize> = (0..corrs.len()).filter(|&i| corrs[i].valid).collect();
    if valid.len() < SAMPLE_SIZE {
        return Err(EgoError::InsufficientCorrespondences { needed: SAMPLE_SIZE, got: valid.len() });
    }
    let thr = cfg.ransac_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, f64, Homography)> = None;
    let mut budget = cfg.ransac_max_iters;
    let mut iter = 0;
    while iter < budget {
        iter += 1;
        let idx = rand::seq::index::sample(&mut rng, valid.len(), SAMPLE_SIZE);
        let pick: [usize; SAMPLE_SIZE] = std::array::from_fn(|k| valid[idx.index(k)]);
        let src = pick.map(|i| corrs[i].p);
        let dst = pick.map(|i| corrs[i].p_prime);
        if degenerate_sample(&src) || degenerate_sample(&dst) {
            continue;
        }
        let Ok(h) = normalized_dlt(&src, &dst) else { continue };
        let mut count = 0;
        let mut err_sum = 0.0;
        for &i in &valid {
            let e = reprojection_error(&h, corrs[i].p, corrs[i].p_prime);
            if e < thr {
                count += 1;
                err_sum += e;
            }
        }
        let better = match &best {
            None => count >= SAMPLE_SIZE,
            Some((bc, be, _)) => count > *bc || (count == *bc && err_sum < *be),
        };
        if better {
            let ratio = count as f64 / valid.len() as f64;
            budget = required_iterations(ratio, cfg.ransac_confidence, cfg.ransac_max_iters)
                .max(iter.min(cfg.ransac_max_iters));
            best = Some((count, err_sum, h));
        }
    }
    let (_, _, h0) = best.ok_or_else(|| {
        EgoError::DegenerateConfiguration("no non-degenerate minimal sample".into())
    })?;

    let mut mask = inlier_mask(&h0, corrs, thr);
    let mut h = h0;
    for _ in 0..MAX_REFITS {
        if mask.iter().filter(|&&m| m).count() < SAMPLE_SIZE {
            break;
        }
        let h_new = refit(corrs, &mask)?;
        let m_new = inlier_mask(&h_new, corrs, thr);
        let n_new = m_new.iter().filter(|&&m| m).count();
        if n_new < SAMPLE_SIZE {
            break;
        }
        h = h_new;
        let done = m_new == mask;
        mask = m_new;
        if done {
            break;
        }
    }
    if mask.iter().filter(|&&m| m).count() < SAMPLE_SIZE {
        return Err(EgoError::DegenerateConfiguration("fewer than 4 inliers".into()));
    }
    Ok((h, mask))
}
