use nalgebra::{Matrix3, Point2, SMatrix, SymmetricEigen};

use super::EgoError;
use crate::geom::{warp_point_raw, Homography};

/// Ratio of the second-smallest to the largest eigenvalue of `AᵀA` below
/// which the DLT system is treated as rank deficient.
const RANK_TOL: f64 = 1e-12;

/// Translate to the centroid and scale to a mean distance of √2.
fn hartley(pts: &[Point2<f64>]) -> (Matrix3<f64>, Vec<Point2<f64>>) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean_dist = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0);
    let out = pts.iter().map(|p| Point2::new(s * (p.x - cx), s * (p.y - cy))).collect();
    (t, out)
}

/// Normalized direct linear transform from `src` to `dst` (at least 4 pairs).
pub fn normalized_dlt(src: &[Point2<f64>], dst: &[Point2<f64>]) -> Result<Homography, EgoError> {
    let n = src.len().min(dst.len());
    if n < 4 {
        return Err(EgoError::InsufficientCorrespondences { needed: 4, got: n });
    }
    let (t_src, s) = hartley(&src[..n]);
    let (t_dst, d) = hartley(&dst[..n]);

    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (p, q) in s.iter().zip(&d) {
        let r1 = [0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y];
        let r2 = [p.x, p.y, 1.0, 0.0, 0.0, 0.0, -q.x * p.x, -q.x * p.y, -q.x];
        for r in [r1, r2] {
            for i in 0..9 {
                for j in i..9 {
                    ata[(i, j)] += r[i] * r[j];
                }
            }
        }
    }
    for i in 0..9 {
        for j in 0..i {
            ata[(i, j)] = ata[(j, i)];
        }
    }

    let eig = SymmetricEigen::new(ata);
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[8]];
    let second = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || second <= RANK_TOL * largest {
        return Err(EgoError::DegenerateConfiguration(format!(
            "DLT null space is not one-dimensional (λ2/λmax = {:e})",
            second / largest
        )));
    }
    let h = eig.eigenvectors.column(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let t_dst_inv = t_dst
        .try_inverse()
        .ok_or_else(|| EgoError::DegenerateConfiguration("coincident points".into()))?;
    Ok(Homography::from_matrix(t_dst_inv * hn * t_src)?)
}

/// One-way transfer error `‖H p − p'‖`; infinite when `p` maps to infinity.
pub fn reprojection_error(h: &Homography, p: Point2<f64>, p_prime: Point2<f64>) -> f64 {
    match warp_point_raw(h.matrix(), p) {
        Ok(q) => (q - p_prime).norm(),
        Err(_) => f64::INFINITY,
    }
}
