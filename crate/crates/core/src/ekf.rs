//! 15-state extended Kalman filter: two box corners, the frame-to-frame
//! homography and the box-center velocity. Corners are advected by the
//! homography plus a constant-velocity term; tracker and ego-motion
//! measurements arrive as independent partial updates.

use nalgebra::{Matrix2, Point2, SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::ConfigError;
use crate::egomotion::EgoMeasurement;
use crate::geom::{
    jacobian_at_raw, matrix_from_entries, warp_point_raw, BBox, GeomError, HORIZON_EPS,
};

pub const STATE_DIM: usize = 15;
pub type StateVec = SVector<f64, STATE_DIM>;
pub type StateCov = SMatrix<f64, STATE_DIM, STATE_DIM>;

pub const IDX_TL: usize = 0;
pub const IDX_BR: usize = 2;
pub const IDX_H: usize = 4;
pub const IDX_V: usize = 13;

/// Boxes narrower than this after an update are widened about their midpoint.
const MIN_EXTENT: f64 = 1e-3;
const NORMALIZED_TOL: f64 = 1e-9;
const PROJECTIVE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EkfError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("homography measurement is not h33-normalized (h33 = {h33})")]
    NotNormalized { h33: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error("innovation covariance is singular")]
    SingularInnovation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EkfConfig {
    pub p0_diag: [f64; STATE_DIM],
    /// Process variances per tick at `camera_hz`.
    pub q_diag: [f64; STATE_DIM],
    pub r_bb_diag: [f64; 4],
    pub r_h_diag: [f64; 9],
    pub camera_hz: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        let mut p0 = [0.0; STATE_DIM];
        let mut q = [0.0; STATE_DIM];
        for i in 0..4 {
            p0[i] = 10.0;
            q[i] = 1.0;
        }
        for i in IDX_H..IDX_H + 9 {
            p0[i] = 1e-4;
            q[i] = 1e-6;
        }
        p0[IDX_H + 8] = 1e-6;
        for i in IDX_V..STATE_DIM {
            p0[i] = 100.0;
            q[i] = 25.0;
        }
        let mut r_h = [1e-6; 9];
        // h31, h32 carry units of 1/px; their variances are quoted for a
        // nominal 1000 px image extent
        for i in [6, 7] {
            p0[IDX_H + i] *= PROJECTIVE_SCALE;
            q[IDX_H + i] *= PROJECTIVE_SCALE;
            r_h[i] *= PROJECTIVE_SCALE;
        }
        Self { p0_diag: p0, q_diag: q, r_bb_diag: [4.0; 4], r_h_diag: r_h, camera_hz: 30.0 }
    }
}

impl EkfConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let groups: [(&'static str, &[f64]); 4] = [
            ("p0_diag", &self.p0_diag),
            ("q_diag", &self.q_diag),
            ("r_bb_diag", &self.r_bb_diag),
            ("r_h_diag", &self.r_h_diag),
        ];
        for (key, vals) in groups {
            if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(ConfigError::invalid(key, "variances must be finite and ≥ 0"));
            }
        }
        if !(self.camera_hz > 0.0 && self.camera_hz.is_finite()) {
            return Err(ConfigError::invalid("camera_hz", "must be positive"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.camera_hz
    }
}

/// Corner measurement from the visual tracker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerMeasurement {
    pub bbox: BBox,
    pub score: f64,
    pub frame_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EkfState {
    x: StateVec,
    p: StateCov,
    camera_hz: f64,
    pub tick: usize,
}

impl EkfState {
    pub fn init(bbox0: &BBox, cfg: &EkfConfig) -> Self {
        let mut x = StateVec::zeros();
        x.fixed_rows_mut::<4>(IDX_TL).copy_from_slice(&bbox0.coords());
        x[IDX_H] = 1.0;
        x[IDX_H + 4] = 1.0;
        x[IDX_H + 8] = 1.0;
        let p = StateCov::from_diagonal(&StateVec::from_column_slice(&cfg.p0_diag));
        Self { x, p, camera_hz: cfg.camera_hz, tick: 0 }
    }

    /// Builds a state from raw parts; mainly for tests and replays.
    pub fn from_parts(x: StateVec, p: StateCov, camera_hz: f64) -> Self {
        Self { x, p, camera_hz, tick: 0 }
    }

    pub fn mean(&self) -> &StateVec {
        &self.x
    }

    pub fn covariance(&self) -> &StateCov {
        &self.p
    }

    pub fn homography_entries(&self) -> [f64; 9] {
        std::array::from_fn(|i| self.x[IDX_H + i])
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::new(self.x[IDX_V], self.x[IDX_V + 1])
    }

    pub fn current_bbox(&self) -> BBox {
        BBox::new(self.x[0], self.x[1], self.x[2], self.x[3])
            .expect("corner ordering is maintained after every step")
    }

    pub fn search_center(&self) -> Point2<f64> {
        Point2::new(0.5 * (self.x[0] + self.x[2]), 0.5 * (self.x[1] + self.x[3]))
    }

    /// Propagates mean and covariance by `dt` seconds.
    pub fn predict(&mut self, dt: f64, cfg: &EkfConfig) -> Result<(), EkfError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(EkfError::InvalidDt(dt));
        }
        let x_new = transition(&self.x, dt)?;
        let f = transition_jacobian(&self.x, dt)?;
        let scale = dt * cfg.camera_hz;
        let q = StateCov::from_diagonal(&StateVec::from_fn(|i, _| cfg.q_diag[i] * scale));
        self.p = symmetrize(&(f * self.p * f.transpose() + q));
        self.x = x_new;
        self.tick += 1;
        Ok(())
    }

    /// Corner update; gating happens upstream.
    pub fn update_tracker(
        &mut self,
        m: &TrackerMeasurement,
        cfg: &EkfConfig,
    ) -> Result<(), EkfError> {
        let z = SVector::<f64, 4>::from_column_slice(&m.bbox.coords());
        let r = SVector::<f64, 4>::from_column_slice(&cfg.r_bb_diag);
        let idx = [0, 1, 2, 3];
        joseph_update(&mut self.x, &mut self.p, idx, &z, &r)?;
        self.sort_corners();
        Ok(())
    }

    /// Homography update; gating happens upstream.
    pub fn update_ego(&mut self, m: &EgoMeasurement, cfg: &EkfConfig) -> Result<(), EkfError> {
        self.update_ego_entries(&m.h.entries(), cfg)
    }

    /// Homography update from raw entries, which must already satisfy `h33 = 1`.
    pub fn update_ego_entries(&mut self, h: &[f64; 9], cfg: &EkfConfig) -> Result<(), EkfError> {
        if !((h[8] - 1.0).abs() <= NORMALIZED_TOL) || h.iter().any(|v| !v.is_finite()) {
            return Err(EkfError::NotNormalized { h33: h[8] });
        }
        let z = SVector::<f64, 9>::from_column_slice(h);
        let r = SVector::<f64, 9>::from_column_slice(&cfg.r_h_diag);
        let idx: [usize; 9] = std::array::from_fn(|i| IDX_H + i);
        let (mut x, mut p) = (self.x, self.p);
        joseph_update(&mut x, &mut p, idx, &z, &r)?;

        let h33 = x[IDX_H + 8];
        if !(h33.abs() > HORIZON_EPS) {
            return Err(GeomError::GaugeSingular { h33 }.into());
        }
        for i in IDX_H..IDX_H + 9 {
            x[i] /= h33;
            for j in 0..STATE_DIM {
                p[(i, j)] /= h33;
                p[(j, i)] /= h33;
            }
        }
        self.x = x;
        self.p = symmetrize(&p);
        self.sort_corners();
        Ok(())
    }

    fn sort_corners(&mut self) {
        for (lo, hi) in [(0, 2), (1, 3)] {
            if self.x[lo] > self.x[hi] {
                self.x.swap_rows(lo, hi);
                self.p.swap_rows(lo, hi);
                self.p.swap_columns(lo, hi);
            }
            if self.x[hi] - self.x[lo] < MIN_EXTENT {
                let mid = 0.5 * (self.x[lo] + self.x[hi]);
                self.x[lo] = mid - 0.5 * MIN_EXTENT;
                self.x[hi] = mid + 0.5 * MIN_EXTENT;
            }
        }
    }
}

fn symmetrize(p: &StateCov) -> StateCov {
    (p + p.transpose()) * 0.5
}

fn joseph_update<const M: usize>(
    x: &mut StateVec,
    p: &mut StateCov,
    idx: [usize; M],
    z: &SVector<f64, M>,
    r: &SVector<f64, M>,
) -> Result<(), EkfError> {
    let mut h = SMatrix::<f64, M, STATE_DIM>::zeros();
    for (row, &col) in idx.iter().enumerate() {
        h[(row, col)] = 1.0;
    }
    let r = SMatrix::<f64, M, M>::from_diagonal(r);
    let s = h * *p * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(EkfError::SingularInnovation)?;
    let k = *p * h.transpose() * s_inv;
    let innovation = z - h * *x;
    *x += k * innovation;
    let i_kh = StateCov::identity() - k * h;
    *p = symmetrize(&(i_kh * *p * i_kh.transpose() + k * r * k.transpose()));
    Ok(())
}

fn corner(x: &StateVec, at: usize) -> Point2<f64> {
    Point2::new(x[at], x[at + 1])
}

/// Mean of the transition: corners are mapped through the homography and
/// shifted by the velocity transported to the current box center.
pub fn transition(x: &StateVec, dt: f64) -> Result<StateVec, EkfError> {
    let m = matrix_from_entries(&x.as_slice()[IDX_H..IDX_H + 9]);
    let tl = corner(x, IDX_TL);
    let br = corner(x, IDX_BR);
    let c = Point2::new(0.5 * (tl.x + br.x), 0.5 * (tl.y + br.y));
    let jc = jacobian_at_raw(&m, c)?;
    let v_new = jc * Vector2::new(x[IDX_V], x[IDX_V + 1]);
    let tl_new = warp_point_raw(&m, tl)? + v_new * dt;
    let br_new = warp_point_raw(&m, br)? + v_new * dt;
    let mut out = *x;
    out[0] = tl_new.x;
    out[1] = tl_new.y;
    out[2] = br_new.x;
    out[3] = br_new.y;
    out[IDX_V] = v_new.x;
    out[IDX_V + 1] = v_new.y;
    Ok(out)
}

/// Derivative of the projected point with respect to the nine entries.
fn dg_dh(h: &[f64], p: Point2<f64>) -> Result<SMatrix<f64, 2, 9>, GeomError> {
    let w = h[6] * p.x + h[7] * p.y + h[8];
    if !(w.abs() > HORIZON_EPS) {
        return Err(GeomError::PointAtInfinity { w });
    }
    let gx = (h[0] * p.x + h[1] * p.y + h[2]) / w;
    let gy = (h[3] * p.x + h[4] * p.y + h[5]) / w;
    let (a, b, c) = (p.x / w, p.y / w, 1.0 / w);
    Ok(SMatrix::<f64, 2, 9>::from_row_slice(&[
        a, b, c, 0.0, 0.0, 0.0, -gx * a, -gx * b, -gx * c, //
        0.0, 0.0, 0.0, a, b, c, -gy * a, -gy * b, -gy * c,
    ]))
}

/// Analytic Jacobian of [`transition`].
pub fn transition_jacobian(x: &StateVec, dt: f64) -> Result<StateCov, EkfError> {
    let h = &x.as_slice()[IDX_H..IDX_H + 9];
    let m = matrix_from_entries(h);
    let tl = corner(x, IDX_TL);
    let br = corner(x, IDX_BR);
    let c = Point2::new(0.5 * (tl.x + br.x), 0.5 * (tl.y + br.y));
    let v = Vector2::new(x[IDX_V], x[IDX_V + 1]);

    let w = h[6] * c.x + h[7] * c.y + h[8];
    if !(w.abs() > HORIZON_EPS) {
        return Err(GeomError::PointAtInfinity { w }.into());
    }
    let g = Vector2::new((h[0] * c.x + h[1] * c.y + h[2]) / w, (h[3] * c.x + h[4] * c.y + h[5]) / w);
    let jc = jacobian_at_raw(&m, c)?;
    let mv = jc * v;
    let s = h[6] * v.x + h[7] * v.y;
    let u = Vector2::new(h[6], h[7]);

    // velocity transport M = J_g(c)·v and its partials
    let dm_dc: Matrix2<f64> = -(mv * u.transpose() + jc * s) / w;
    let mut dm_dh = SMatrix::<f64, 2, 9>::zeros();
    for row in 0..2 {
        // h_r1, h_r2, h_r3 only reach component r
        let base = 3 * row;
        dm_dh[(row, base)] = (v.x - s * c.x / w) / w;
        dm_dh[(row, base + 1)] = (v.y - s * c.y / w) / w;
        dm_dh[(row, base + 2)] = -s / (w * w);
    }
    for (col, coord, vel) in [(6usize, c.x, v.x), (7usize, c.y, v.y)] {
        let d = (-g * vel + g * (s * coord / w)) / w - mv * (coord / w);
        dm_dh.set_column(col, &d);
    }
    dm_dh.set_column(8, &(g * (s / (w * w)) - mv / w));

    let mut f = StateCov::identity();
    let half = dm_dc * 0.5;
    for (at, p) in [(IDX_TL, tl), (IDX_BR, br)] {
        let jp = jacobian_at_raw(&m, p)?;
        let own = jp + half * dt;
        let other = half * dt;
        let other_at = if at == IDX_TL { IDX_BR } else { IDX_TL };
        f.fixed_view_mut::<2, 2>(at, at).copy_from(&own);
        f.fixed_view_mut::<2, 2>(at, other_at).copy_from(&other);
        let dh = dg_dh(h, p)? + dm_dh * dt;
        f.fixed_view_mut::<2, 9>(at, IDX_H).copy_from(&dh);
        f.fixed_view_mut::<2, 2>(at, IDX_V).copy_from(&(jc * dt));
    }
    f.fixed_view_mut::<2, 2>(IDX_V, IDX_TL).copy_from(&half);
    f.fixed_view_mut::<2, 2>(IDX_V, IDX_BR).copy_from(&half);
    f.fixed_view_mut::<2, 9>(IDX_V, IDX_H).copy_from(&dm_dh);
    f.fixed_view_mut::<2, 2>(IDX_V, IDX_V).copy_from(&jc);
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{iou, Homography};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DT: f64 = 1.0 / 30.0;

    fn bb(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn with_velocity(s: &mut EkfState, vx: f64, vy: f64) {
        s.x[IDX_V] = vx;
        s.x[IDX_V + 1] = vy;
    }

    fn set_h(s: &mut EkfState, h: &[f64; 9]) {
        s.x.fixed_rows_mut::<9>(IDX_H).copy_from_slice(h);
    }

    #[test]
    fn init_copies_box() {
        let cfg = EkfConfig::default();
        let s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        assert_eq!(s.current_bbox(), bb(10.0, 20.0, 40.0, 60.0));
        assert_eq!(s.homography_entries(), Homography::identity().entries());
        assert_eq!(s.velocity(), Vector2::zeros());
        assert_eq!(EkfState::init(&bb(0.0, 0.0, 10.0, 10.0), &cfg).search_center(), Point2::new(5.0, 5.0));
    }

    #[test]
    fn predict_examples() {
        let cfg = EkfConfig::default();
        let mut s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        let tr0 = s.p.trace();
        s.predict(DT, &cfg).unwrap();
        assert_eq!(s.current_bbox(), bb(10.0, 20.0, 40.0, 60.0));
        assert!(s.p.trace() > tr0);

        let mut s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        with_velocity(&mut s, 30.0, 0.0);
        s.predict(DT, &cfg).unwrap();
        let b = s.current_bbox();
        assert_abs_diff_eq!(b.x_tl(), 11.0, epsilon = 1e-12);
        assert_abs_diff_eq!(b.x_br(), 41.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.search_center().x, 26.0, epsilon = 1e-12);

        let mut s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        set_h(&mut s, &Homography::translation(2.0, 0.0).entries());
        s.predict(DT, &cfg).unwrap();
        assert_abs_diff_eq!(s.current_bbox().x_tl(), 12.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.current_bbox().x_br(), 42.0, epsilon = 1e-12);

        assert!(matches!(s.predict(0.0, &cfg), Err(EkfError::InvalidDt(_))));
    }

    #[test]
    fn horizon_crossing_is_an_error() {
        let cfg = EkfConfig::default();
        let mut s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        // w = 1 − 0.1·x vanishes at x = 10
        set_h(&mut s, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -0.1, 0.0, 1.0]);
        assert!(matches!(s.predict(DT, &cfg), Err(EkfError::Geom(GeomError::PointAtInfinity { .. }))));
    }

    #[test]
    fn jacobian_examples() {
        let cfg = EkfConfig::default();
        let s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        let f = transition_jacobian(&s.x, DT).unwrap();
        assert_eq!(f.fixed_view::<4, 4>(0, 0).clone_owned(), SMatrix::<f64, 4, 4>::identity());
        assert_eq!(f.fixed_view::<9, 9>(IDX_H, IDX_H).clone_owned(), SMatrix::<f64, 9, 9>::identity());
        assert_eq!(f.fixed_view::<2, 2>(IDX_V, IDX_V).clone_owned(), Matrix2::identity());

        let mut s = s;
        set_h(&mut s, &[2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let f = transition_jacobian(&s.x, DT).unwrap();
        let vb = f.fixed_view::<2, 2>(IDX_V, IDX_V).clone_owned();
        assert_eq!(vb, Matrix2::identity() * 2.0);
    }

    fn random_state(rng: &mut ChaCha8Rng) -> StateVec {
        let mut x = StateVec::zeros();
        let x0 = rng.random_range(0.0..500.0);
        let y0 = rng.random_range(0.0..300.0);
        x[0] = x0;
        x[1] = y0;
        x[2] = x0 + rng.random_range(5.0..120.0);
        x[3] = y0 + rng.random_range(5.0..120.0);
        let h = [
            1.0 + rng.random_range(-0.05..0.05),
            rng.random_range(-0.05..0.05),
            rng.random_range(-10.0..10.0),
            rng.random_range(-0.05..0.05),
            1.0 + rng.random_range(-0.05..0.05),
            rng.random_range(-10.0..10.0),
            rng.random_range(-1e-4..1e-4),
            rng.random_range(-1e-4..1e-4),
            1.0,
        ];
        x.fixed_rows_mut::<9>(IDX_H).copy_from_slice(&h);
        x[IDX_V] = rng.random_range(-60.0..60.0);
        x[IDX_V + 1] = rng.random_range(-60.0..60.0);
        x
    }

    fn numeric_jacobian(x: &StateVec, dt: f64) -> StateCov {
        let step = 1e-6;
        let mut f = StateCov::zeros();
        for j in 0..STATE_DIM {
            let mut a = *x;
            let mut b = *x;
            a[j] += step;
            b[j] -= step;
            let d = (transition(&a, dt).unwrap() - transition(&b, dt).unwrap()) / (2.0 * step);
            f.set_column(j, &d);
        }
        f
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let x = random_state(&mut rng);
            let dt = rng.random_range(0.01..0.5);
            let a = transition_jacobian(&x, dt).unwrap();
            let n = numeric_jacobian(&x, dt);
            for i in 0..STATE_DIM {
                for j in 0..STATE_DIM {
                    let tol = 1e-4 * a[(i, j)].abs().max(1.0);
                    assert!((a[(i, j)] - n[(i, j)]).abs() <= tol, "F[{i},{j}] {} vs {}", a[(i, j)], n[(i, j)]);
                }
            }
        }
    }

    #[test]
    fn tracker_update_examples() {
        let cfg = EkfConfig::default();
        let b = bb(10.0, 20.0, 40.0, 60.0);
        let mut s = EkfState::init(&b, &cfg);
        let tr = s.p.trace();
        s.update_tracker(&TrackerMeasurement { bbox: b, score: 1.0, frame_index: 0 }, &cfg).unwrap();
        assert_eq!(s.current_bbox(), b);
        assert!(s.p.trace() < tr);

        let mut vague = cfg.clone();
        vague.r_bb_diag = [1e12; 4];
        let mut s = EkfState::init(&b, &vague);
        let m = TrackerMeasurement { bbox: b.translate(30.0, -12.0), score: 1.0, frame_index: 0 };
        s.update_tracker(&m, &vague).unwrap();
        for (u, v) in s.current_bbox().coords().iter().zip(b.coords()) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn scalar_kalman_oracle() {
        let mut cfg = EkfConfig::default();
        cfg.p0_diag[0] = 4.0;
        cfg.r_bb_diag[0] = 1.0;
        let b = bb(10.0, 20.0, 40.0, 60.0);
        let mut s = EkfState::init(&b, &cfg);
        let z = bb(15.0, 20.0, 40.0, 60.0);
        s.update_tracker(&TrackerMeasurement { bbox: z, score: 1.0, frame_index: 0 }, &cfg).unwrap();
        assert_abs_diff_eq!(s.x[0], 14.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.p[(0, 0)], 4.0 * 1.0 / 5.0, epsilon = 1e-9);
    }

    #[test]
    fn ego_update_examples() {
        let cfg = EkfConfig::default();
        let b = bb(10.0, 20.0, 40.0, 60.0);
        let mut s = EkfState::init(&b, &cfg);
        let before = s.x;
        s.update_ego(&EgoMeasurement::exact(Homography::identity(), 1), &cfg).unwrap();
        assert_abs_diff_eq!(s.x, before, epsilon = 1e-15);

        let mut tight = cfg.clone();
        tight.r_h_diag = [1e-12; 9];
        let mut s = EkfState::init(&b, &tight);
        s.update_ego(&EgoMeasurement::exact(Homography::translation(3.0, 0.0), 1), &tight).unwrap();
        assert!((s.x[IDX_H + 2] - 3.0).abs() < 1e-3);
        assert_eq!(s.x[IDX_H + 8], 1.0);

        let raw = [2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 2.0];
        assert!(matches!(s.update_ego_entries(&raw, &cfg), Err(EkfError::NotNormalized { .. })));
    }

    #[test]
    fn corners_resorted() {
        let cfg = EkfConfig::default();
        let mut s = EkfState::init(&bb(10.0, 20.0, 40.0, 60.0), &cfg);
        s.x[0] = 60.0;
        s.p[(0, 0)] = 7.0;
        s.p[(0, 13)] = 0.5;
        s.p[(13, 0)] = 0.5;
        s.sort_corners();
        assert_eq!((s.x[0], s.x[2]), (40.0, 60.0));
        assert_eq!(s.p[(2, 2)], 7.0);
        assert_eq!(s.p[(2, 13)], 0.5);
        assert_eq!(s.p[(0, 13)], 0.0);

        s.x[1] = 30.0;
        s.x[3] = 30.0;
        s.sort_corners();
        assert!(s.x[1] < s.x[3]);
        assert!(s.current_bbox().height() > 0.0);
    }

    fn min_eig(p: &StateCov) -> f64 {
        p.symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn covariance_stays_psd() {
        let cfg = EkfConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut s = EkfState::init(&bb(200.0, 150.0, 260.0, 210.0), &cfg);
        for _ in 0..10_000 {
            match rng.random_range(0..3) {
                0 => s.predict(rng.random_range(0.005..0.2), &cfg).unwrap(),
                1 => {
                    let c = s.search_center();
                    let z = BBox::from_center(
                        Point2::new(c.x + rng.random_range(-3.0..3.0), c.y + rng.random_range(-3.0..3.0)),
                        rng.random_range(40.0..80.0),
                        rng.random_range(40.0..80.0),
                    )
                    .unwrap();
                    s.update_tracker(&TrackerMeasurement { bbox: z, score: 1.0, frame_index: 0 }, &cfg).unwrap();
                }
                _ => {
                    let h = crate::geom::normalize_h33(&[
                        1.0 + rng.random_range(-0.01..0.01),
                        rng.random_range(-0.01..0.01),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-0.01..0.01),
                        1.0 + rng.random_range(-0.01..0.01),
                        rng.random_range(-2.0..2.0),
                        rng.random_range(-1e-6..1e-6),
                        rng.random_range(-1e-6..1e-6),
                        1.0,
                    ])
                    .unwrap();
                    s.update_ego(&EgoMeasurement::exact(h, 0), &cfg).unwrap();
                    // keep the box near the frame so predictions stay bounded
                    if s.search_center().coords.norm() > 1e4 {
                        s = EkfState::from_parts(
                            EkfState::init(&bb(200.0, 150.0, 260.0, 210.0), &cfg).x,
                            s.p,
                            cfg.camera_hz,
                        );
                    }
                }
            }
            assert!((s.p - s.p.transpose()).abs().max() <= 1e-9 * s.p.abs().max().max(1.0));
            let scale = s.p.abs().max().max(1.0);
            assert!(min_eig(&s.p) >= -1e-6 * scale, "min eigenvalue {}", min_eig(&s.p));
        }
    }

    #[test]
    fn fixed_point_over_many_ticks() {
        let cfg = EkfConfig::default();
        let truth = bb(100.0, 80.0, 150.0, 140.0);
        let mut s = EkfState::init(&truth, &cfg);
        for t in 0..1000 {
            s.predict(DT, &cfg).unwrap();
            s.update_ego(&EgoMeasurement::exact(Homography::identity(), t), &cfg).unwrap();
            s.update_tracker(&TrackerMeasurement { bbox: truth, score: 1.0, frame_index: t }, &cfg)
                .unwrap();
            for (u, v) in s.current_bbox().coords().iter().zip(truth.coords()) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn coasts_through_occlusion() {
        let cfg = EkfConfig::default();
        let cam = Homography::translation(-1.5, 0.5);
        let vel = Vector2::new(45.0, -15.0); // px/s in the object's own motion
        let mut truth = bb(200.0, 150.0, 260.0, 200.0);
        let mut s = EkfState::init(&truth, &cfg);
        let advance = |b: &BBox| {
            let tl = cam.warp_point(Point2::new(b.x_tl(), b.y_tl())).unwrap();
            let br = cam.warp_point(Point2::new(b.x_br(), b.y_br())).unwrap();
            BBox::new(tl.x, tl.y, br.x, br.y).unwrap().translate(vel.x * DT, vel.y * DT)
        };
        for t in 1..=40 {
            truth = advance(&truth);
            s.predict(DT, &cfg).unwrap();
            s.update_ego(&EgoMeasurement::exact(cam, t), &cfg).unwrap();
            s.update_tracker(&TrackerMeasurement { bbox: truth, score: 1.0, frame_index: t }, &cfg)
                .unwrap();
        }
        for t in 41..=70 {
            truth = advance(&truth);
            s.predict(DT, &cfg).unwrap();
            s.update_ego(&EgoMeasurement::exact(cam, t), &cfg).unwrap();
        }
        let overlap = iou(&s.current_bbox(), &truth);
        assert!(overlap > 0.3, "IoU {overlap}");
    }

    #[test]
    fn pixel_scale_consistency() {
        let cfg = EkfConfig::default();
        let mut scaled_cfg = cfg.clone();
        let var_scale = |i: usize| match i {
            0..=3 | 13 | 14 => 4.0,
            6 | 9 => 4.0,
            10 | 11 => 0.25,
            _ => 1.0,
        };
        for i in 0..STATE_DIM {
            scaled_cfg.p0_diag[i] *= var_scale(i);
            scaled_cfg.q_diag[i] *= var_scale(i);
        }
        for i in 0..4 {
            scaled_cfg.r_bb_diag[i] *= 4.0;
        }
        for i in 0..9 {
            scaled_cfg.r_h_diag[i] *= var_scale(IDX_H + i);
        }
        let h = [1.01, 0.02, 3.0, -0.01, 0.99, -1.0, 2e-5, -1e-5, 1.0];
        let h2 = [h[0], h[1], 2.0 * h[2], h[3], h[4], 2.0 * h[5], 0.5 * h[6], 0.5 * h[7], 1.0];
        let b = bb(100.0, 80.0, 150.0, 140.0);
        let mut a = EkfState::init(&b, &cfg);
        let mut c = EkfState::init(&b.scale(2.0).unwrap(), &scaled_cfg);
        let scale_box = |b: &BBox| BBox::new(2.0 * b.x_tl(), 2.0 * b.y_tl(), 2.0 * b.x_br(), 2.0 * b.y_br()).unwrap();
        for t in 0..50 {
            a.predict(DT, &cfg).unwrap();
            c.predict(DT, &scaled_cfg).unwrap();
            a.update_ego_entries(&crate::geom::normalize_h33(&h).unwrap().entries(), &cfg).unwrap();
            c.update_ego_entries(&crate::geom::normalize_h33(&h2).unwrap().entries(), &scaled_cfg).unwrap();
            if t % 3 == 0 {
                let z = b.translate(t as f64 * 0.7, -(t as f64) * 0.3);
                a.update_tracker(&TrackerMeasurement { bbox: z, score: 1.0, frame_index: t }, &cfg).unwrap();
                c.update_tracker(&TrackerMeasurement { bbox: scale_box(&z), score: 1.0, frame_index: t }, &scaled_cfg)
                    .unwrap();
            }
            for (u, v) in a.current_bbox().coords().iter().zip(c.current_bbox().coords()) {
                assert!((2.0 * u - v).abs() < 1e-6, "{u} {v}");
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(EkfConfig::default().validate().is_ok());
        let mut c = EkfConfig::default();
        c.q_diag[3] = -1.0;
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&EkfConfig::default()).unwrap();
        let back: EkfConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, EkfConfig::default());
    }
}
