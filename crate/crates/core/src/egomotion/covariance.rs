use nalgebra::{SMatrix, Vector3};

use super::{Correspondence, Cov9, EgoError};
use crate::geom::{GeomError, Homography, HORIZON_EPS};

type Mat8 = SMatrix<f64, 8, 8>;

/// Smallest singular value of the column-scaled normal matrix, relative to the
/// largest, that still counts as full rank.
const RANK_TOL: f64 = 1e-12;

/// First-order covariance of the homography entries under isotropic Gaussian
/// noise of `sigma` pixels on the target points.
///
/// `h33` is held fixed by the normalization, so the Jacobian covers the other
/// eight entries; the result is embedded in a 9×9 matrix whose `h33`
/// row/column are zero.
pub fn homography_covariance(
    h: &Homography,
    inliers: &[Correspondence],
    sigma: f64,
) -> Result<Cov9, EgoError> {
    let pts: Vec<_> = inliers.iter().filter(|c| c.valid).collect();
    if pts.len() < 5 {
        return Err(EgoError::InsufficientCorrespondences { needed: 5, got: pts.len() });
    }
    let m = h.matrix();
    let mut jtj = Mat8::zeros();
    for c in pts {
        let v = m * Vector3::new(c.p.x, c.p.y, 1.0);
        let w = v.z;
        if !(w.abs() > HORIZON_EPS) {
            return Err(GeomError::PointAtInfinity { w }.into());
        }
        let (x, y) = (c.p.x, c.p.y);
        let gx = v.x / w;
        let gy = v.y / w;
        let rx = [x / w, y / w, 1.0 / w, 0.0, 0.0, 0.0, -gx * x / w, -gx * y / w];
        let ry = [0.0, 0.0, 0.0, x / w, y / w, 1.0 / w, -gy * x / w, -gy * y / w];
        for r in [rx, ry] {
            for i in 0..8 {
                for j in 0..8 {
                    jtj[(i, j)] += r[i] * r[j];
                }
            }
        }
    }

    // Column scaling keeps the pixel-scale entries and the projective entries
    // on comparable footing before the rank test.
    let d = SMatrix::<f64, 8, 1>::from_fn(|i, _| {
        let n = jtj[(i, i)];
        if n > 0.0 { 1.0 / n.sqrt() } else { 1.0 }
    });
    let scaled = Mat8::from_fn(|i, j| jtj[(i, j)] * d[i] * d[j]);
    let svd = scaled.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        return Err(EgoError::RankDeficient(smin / smax));
    }
    let pinv = svd
        .pseudo_inverse(RANK_TOL * smax)
        .map_err(|e| EgoError::DegenerateConfiguration(e.to_string()))?;

    let var = sigma * sigma;
    let mut cov = Cov9::zeros();
    for i in 0..8 {
        for j in 0..8 {
            cov[(i, j)] = var * d[i] * pinv[(i, j)] * d[j];
        }
    }
    Ok((cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::normalize_h33;
    use nalgebra::Point2;

    fn setup() -> (Homography, Vec<Correspondence>) {
        let h = normalize_h33(&[1.0, 0.01, 3.0, -0.01, 1.0, 1.0, 1e-5, 0.0, 1.0]).unwrap();
        let c = (0..8)
            .flat_map(|i| (0..8).map(move |j| Point2::new(40.0 + 70.0 * j as f64, 25.0 + 40.0 * i as f64)))
            .map(|p| Correspondence::new(p, h.warp_point(p).unwrap()))
            .collect();
        (h, c)
    }

    #[test]
    fn zero_sigma() {
        let (h, c) = setup();
        assert_eq!(homography_covariance(&h, &c, 0.0).unwrap(), Cov9::zeros());
    }

    #[test]
    fn quadratic_in_sigma() {
        let (h, c) = setup();
        let a = homography_covariance(&h, &c, 0.7).unwrap();
        let b = homography_covariance(&h, &c, 1.4).unwrap();
        assert!((b - a * 4.0).abs().max() <= 1e-12 * b.abs().max());
    }

    #[test]
    fn symmetric_psd_with_gauge_zeroed() {
        let (h, c) = setup();
        let cov = homography_covariance(&h, &c, 1.0).unwrap();
        assert!((cov - cov.transpose()).abs().max() < 1e-15);
        for i in 0..9 {
            assert_eq!(cov[(8, i)], 0.0);
        }
        let eig = cov.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= -1e-9);
    }

    #[test]
    fn needs_five() {
        let (h, c) = setup();
        assert!(matches!(
            homography_covariance(&h, &c[..4], 1.0),
            Err(EgoError::InsufficientCorrespondences { needed: 5, .. })
        ));
    }

    #[test]
    fn collinear_is_rank_deficient() {
        let h = Homography::identity();
        let c: Vec<_> = (0..10)
            .map(|i| {
                let p = Point2::new(10.0 * i as f64, 30.0);
                Correspondence::new(p, p)
            })
            .collect();
        assert!(matches!(homography_covariance(&h, &c, 1.0), Err(EgoError::RankDeficient(_))));
    }
}
