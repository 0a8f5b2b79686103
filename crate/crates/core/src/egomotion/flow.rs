use nalgebra::{Matrix2, Point2, Vector2};
use rayon::prelude::*;

use super::{Correspondence, EgoConfig};
use crate::geom::Frame;

/// Central-difference gradients with clamped borders.
struct Gradients {
    gx: Vec<f32>,
    gy: Vec<f32>,
}

impl Gradients {
    fn of(f: &Frame) -> Self {
        let (w, h) = (f.width(), f.height());
        let mut gx = vec![0.0f32; w * h];
        let mut gy = vec![0.0f32; w * h];
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                gx[y * w + x] = (f.get(xp, y) - f.get(xm, y)) * 0.5;
                gy[y * w + x] = (f.get(x, yp) - f.get(x, ym)) * 0.5;
            }
        }
        Self { gx, gy }
    }
}

/// Bilinear samples of the `(2·half+1)²` window centered on `(cx, cy)`,
/// row-major, clamp-to-edge. Windows clear of the border share one set of
/// interpolation weights.
fn sample_window(data: &[f32], w: usize, h: usize, cx: f64, cy: f64, half: i64, out: &mut Vec<f64>) {
    out.clear();
    let (fx0, fy0) = (cx.floor(), cy.floor());
    let interior = fx0 - half as f64 >= 0.0
        && fy0 - half as f64 >= 0.0
        && fx0 + half as f64 + 1.0 <= (w - 1) as f64
        && fy0 + half as f64 + 1.0 <= (h - 1) as f64;
    if interior {
        let (fx, fy) = (cx - fx0, cy - fy0);
        let x0 = fx0 as usize - half as usize;
        let y0 = fy0 as usize - half as usize;
        let side = 2 * half as usize + 1;
        for r in 0..side {
            let row = &data[(y0 + r) * w + x0..(y0 + r) * w + x0 + side + 1];
            let below = &data[(y0 + r + 1) * w + x0..(y0 + r + 1) * w + x0 + side + 1];
            for c in 0..side {
                let (a, b) = (row[c] as f64, row[c + 1] as f64);
                let (d0, d1) = (below[c] as f64, below[c + 1] as f64);
                out.push((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d0 * (1.0 - fx) + d1 * fx) * fy);
            }
        }
        return;
    }
    let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
    for dy in -half..=half {
        for dx in -half..=half {
            let x = (cx + dx as f64).clamp(0.0, xm);
            let y = (cy + dy as f64).clamp(0.0, ym);
            let x0 = x.floor() as usize;
            let y0 = y.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let y1 = (y0 + 1).min(h - 1);
            let (fx, fy) = (x - x0 as f64, y - y0 as f64);
            let (a, b) = (data[y0 * w + x0] as f64, data[y0 * w + x1] as f64);
            let (d0, d1) = (data[y1 * w + x0] as f64, data[y1 * w + x1] as f64);
            out.push((a * (1.0 - fx) + b * fx) * (1.0 - fy) + (d0 * (1.0 - fx) + d1 * fx) * fy);
        }
    }
}

/// Coarse-to-fine iterative Lucas–Kanade. Each point is solved independently;
/// points with a weak structure tensor or that leave the image come back
/// invalid.
pub fn lk_flow(
    prev: &[Frame],
    next: &[Frame],
    pts: &[Point2<f64>],
    cfg: &EgoConfig,
) -> Vec<Correspondence> {
    let levels = prev.len().min(next.len());
    if levels == 0 {
        return pts.iter().map(|&p| Correspondence::invalid(p)).collect();
    }
    let grads: Vec<Gradients> = prev[..levels].iter().map(Gradients::of).collect();
    pts.par_iter()
        .map(|&p| track_point(&prev[..levels], &next[..levels], &grads, p, cfg))
        .collect()
}

fn track_point(
    prev: &[Frame],
    next: &[Frame],
    grads: &[Gradients],
    p: Point2<f64>,
    cfg: &EgoConfig,
) -> Correspondence {
    let half = (cfg.lk_window / 2) as i64;
    let area = (cfg.lk_window * cfg.lk_window) as f64;
    let n_win = cfg.lk_window * cfg.lk_window;
    let mut guess: Vector2<f64> = Vector2::zeros();
    let mut tmpl = Vec::with_capacity(n_win);
    let mut gxw = Vec::with_capacity(n_win);
    let mut gyw = Vec::with_capacity(n_win);
    let mut warped = Vec::with_capacity(n_win);

    for level in (0..prev.len()).rev() {
        let scale = (1u64 << level) as f64;
        let pl = Vector2::new(p.x / scale, p.y / scale);
        let img_prev = &prev[level];
        let img_next = &next[level];

        let (w, h) = (img_prev.width(), img_prev.height());
        sample_window(img_prev.pixels(), w, h, pl.x, pl.y, half, &mut tmpl);
        sample_window(&grads[level].gx, w, h, pl.x, pl.y, half, &mut gxw);
        sample_window(&grads[level].gy, w, h, pl.x, pl.y, half, &mut gyw);
        let mut g: Matrix2<f64> = Matrix2::zeros();
        for (ix, iy) in gxw.iter().zip(&gyw) {
            g[(0, 0)] += ix * ix;
            g[(0, 1)] += ix * iy;
            g[(1, 1)] += iy * iy;
        }
        g[(1, 0)] = g[(0, 1)];

        let tr = g[(0, 0)] + g[(1, 1)];
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(0, 1)];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        let min_eig = (tr / 2.0 - disc) / area;
        if min_eig < cfg.min_eigenvalue {
            if level == 0 {
                return Correspondence::invalid(p);
            }
            // too flat at this scale to refine; carry the guess down
            guess *= 2.0;
            continue;
        }
        let g_inv = match g.try_inverse() {
            Some(m) => m,
            None => return Correspondence::invalid(p),
        };

        let mut v: Vector2<f64> = Vector2::zeros();
        for _ in 0..cfg.lk_max_iters {
            let off = pl + guess + v;
            sample_window(img_next.pixels(), w, h, off.x, off.y, half, &mut warped);
            let mut b: Vector2<f64> = Vector2::zeros();
            for k in 0..n_win {
                let diff = tmpl[k] - warped[k];
                b.x += diff * gxw[k];
                b.y += diff * gyw[k];
            }
            let eta = g_inv * b;
            v += eta;
            if !v.iter().all(|c| c.is_finite()) {
                return Correspondence::invalid(p);
            }
            if eta.norm() < cfg.lk_epsilon {
                break;
            }
        }
        guess = if level > 0 { 2.0 * (guess + v) } else { guess + v };
    }

    let q = Point2::new(p.x + guess.x, p.y + guess.y);
    let base = &prev[0];
    let inside = q.x >= 0.0
        && q.y >= 0.0
        && q.x <= (base.width() - 1) as f64
        && q.y <= (base.height() - 1) as f64;
    if !inside {
        return Correspondence::invalid(p);
    }
    Correspondence::new(p, q)
}
