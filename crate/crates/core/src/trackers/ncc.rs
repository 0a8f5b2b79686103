use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use super::{Tracker, TrackerError, TrackerOutput};
use crate::confidence::{gate_template, pmf4_confidence, ConfigError, GatingConfig};
use crate::geom::{BBox, Frame, Pmf, Pmf4};

const MIN_TEMPLATE_AREA: f64 = 16.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NccConfig {
    /// Search window side length as a multiple of the template side.
    pub search_factor: f64,
    /// Multiplier on the correlation inside the PMF softmax.
    pub pmf_temperature: f64,
    /// Weight of the new patch when the template is refreshed.
    pub template_blend: f64,
}

impl Default for NccConfig {
    fn default() -> Self {
        Self { search_factor: 4.0, pmf_temperature: 10.0, template_blend: 0.1 }
    }
}

impl NccConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.search_factor >= 1.0 && self.search_factor.is_finite()) {
            return Err(ConfigError::invalid("search_factor", "must be ≥ 1"));
        }
        if !(self.pmf_temperature > 0.0 && self.pmf_temperature.is_finite()) {
            return Err(ConfigError::invalid("pmf_temperature", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.template_blend) {
            return Err(ConfigError::invalid("template_blend", "must lie in [0,1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct State {
    template: Vec<f32>,
    tw: usize,
    th: usize,
    init_bbox: BBox,
    init_origin: (i64, i64),
    origin: (i64, i64),
}

/// Fixed-size zero-mean normalized cross-correlation tracker.
#[derive(Debug, Clone)]
pub struct NccTracker {
    cfg: NccConfig,
    gating: GatingConfig,
    state: Option<State>,
    last_window: Option<(i64, i64)>,
}

fn round(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

fn patch(frame: &Frame, x0: usize, y0: usize, w: usize, h: usize) -> Vec<f32> {
    let px = frame.pixels();
    let fw = frame.width();
    (0..h).flat_map(|j| px[(y0 + j) * fw + x0..(y0 + j) * fw + x0 + w].iter().copied()).collect()
}

impl NccTracker {
    pub fn new(cfg: NccConfig, gating: GatingConfig) -> Self {
        Self { cfg, gating, state: None, last_window: None }
    }

    /// Top-left of the first placement in the last search window. PMF bin `i`
    /// of `x_tl` corresponds to placement column `origin.0 + i`.
    pub fn last_window_origin(&self) -> Option<(i64, i64)> {
        self.last_window
    }

    pub fn template(&self) -> Option<(&[f32], usize, usize)> {
        self.state.as_ref().map(|s| (s.template.as_slice(), s.tw, s.th))
    }
}

impl Default for NccTracker {
    fn default() -> Self {
        Self::new(NccConfig::default(), GatingConfig::default())
    }
}

impl Tracker for NccTracker {
    fn initialize(&mut self, frame: &Frame, bbox: BBox) -> Result<(), TrackerError> {
        let (fw, fh) = (frame.width() as f64, frame.height() as f64);
        if bbox.area() < MIN_TEMPLATE_AREA
            || bbox.x_tl() < 0.0
            || bbox.y_tl() < 0.0
            || bbox.x_br() > fw
            || bbox.y_br() > fh
        {
            return Err(TrackerError::BoxOutOfFrame);
        }
        let ox = round(bbox.x_tl()).max(0);
        let oy = round(bbox.y_tl()).max(0);
        let tw = (round(bbox.width()).max(1) as usize).min(frame.width() - ox as usize);
        let th = (round(bbox.height()).max(1) as usize).min(frame.height() - oy as usize);
        self.state = Some(State {
            template: patch(frame, ox as usize, oy as usize, tw, th),
            tw,
            th,
            init_bbox: bbox,
            init_origin: (ox, oy),
            origin: (ox, oy),
        });
        self.last_window = None;
        Ok(())
    }

    fn process(
        &mut self,
        frame: &Frame,
        search_center: Option<Point2<f64>>,
    ) -> Result<TrackerOutput, TrackerError> {
        let st = self.state.as_mut().ok_or(TrackerError::NotInitialized)?;
        let (fw, fh) = (frame.width() as i64, frame.height() as i64);
        let (tw, th) = (st.tw as i64, st.th as i64);
        let center = search_center.unwrap_or_else(|| {
            Point2::new(st.origin.0 as f64 + 0.5 * st.tw as f64, st.origin.1 as f64 + 0.5 * st.th as f64)
        });
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(TrackerError::SearchWindowEmpty);
        }
        let cx = center.x.clamp(0.0, fw as f64);
        let cy = center.y.clamp(0.0, fh as f64);
        let sw = round(st.tw as f64 * self.cfg.search_factor);
        let sh = round(st.th as f64 * self.cfg.search_factor);
        let wx = round(cx - 0.5 * sw as f64);
        let wy = round(cy - 0.5 * sh as f64);
        let (x0, x1) = (wx.max(0), (wx + sw).min(fw));
        let (y0, y1) = (wy.max(0), (wy + sh).min(fh));
        let nx = x1 - x0 - tw + 1;
        let ny = y1 - y0 - th + 1;
        if nx < 1 || ny < 1 {
            return Err(TrackerError::SearchWindowEmpty);
        }
        let (nx, ny) = (nx as usize, ny as usize);
        let (x0u, y0u) = (x0 as usize, y0 as usize);

        // zero-mean template
        let n = (st.tw * st.th) as f64;
        let t_mean = st.template.iter().map(|&v| v as f64).sum::<f64>() / n;
        let t0: Vec<f32> = st.template.iter().map(|&v| (v as f64 - t_mean) as f32).collect();
        let t_norm2: f64 = t0.iter().map(|&v| (v as f64) * (v as f64)).sum();

        // integral images over the window
        let ww = (x1 - x0) as usize;
        let wh = (y1 - y0) as usize;
        let mut s1 = vec![0.0f64; (ww + 1) * (wh + 1)];
        let mut s2 = vec![0.0f64; (ww + 1) * (wh + 1)];
        for j in 0..wh {
            let mut r1 = 0.0;
            let mut r2 = 0.0;
            for i in 0..ww {
                let v = frame.get(x0u + i, y0u + j) as f64;
                r1 += v;
                r2 += v * v;
                s1[(j + 1) * (ww + 1) + i + 1] = s1[j * (ww + 1) + i + 1] + r1;
                s2[(j + 1) * (ww + 1) + i + 1] = s2[j * (ww + 1) + i + 1] + r2;
            }
        }
        let rect = |s: &[f64], i: usize, j: usize| {
            let (a, b) = (i + st.tw, j + st.th);
            s[b * (ww + 1) + a] - s[j * (ww + 1) + a] - s[b * (ww + 1) + i] + s[j * (ww + 1) + i]
        };

        let px = frame.pixels();
        let stride = frame.width();
        let mut resp = vec![0.0f64; nx * ny];
        // cross-correlation accumulated one template tap at a time over a whole
        // row of placements
        let mut acc = vec![0.0f32; nx];
        for j in 0..ny {
            acc.fill(0.0);
            for row in 0..st.th {
                let base = (y0u + j + row) * stride + x0u;
                let img = &px[base..base + nx + st.tw - 1];
                for (r, &t) in t0[row * st.tw..(row + 1) * st.tw].iter().enumerate() {
                    for (a, &p) in acc.iter_mut().zip(&img[r..r + nx]) {
                        *a += t * p;
                    }
                }
            }
            for i in 0..nx {
                let sum = rect(&s1, i, j);
                let var = rect(&s2, i, j) - sum * sum / n;
                let denom = (var * t_norm2).sqrt();
                if denom > 1e-12 {
                    resp[j * nx + i] = (acc[i] as f64 / denom).clamp(-1.0, 1.0);
                }
            }
        }

        let mut best = 0;
        for (k, &r) in resp.iter().enumerate() {
            if r > resp[best] {
                best = k;
            }
        }
        let r_max = resp[best];
        let (bi, bj) = (best % nx, best / nx);
        let origin = (x0 + bi as i64, y0 + bj as i64);

        let mut col = vec![f64::NEG_INFINITY; nx];
        let mut row = vec![f64::NEG_INFINITY; ny];
        for j in 0..ny {
            for i in 0..nx {
                let r = resp[j * nx + i];
                col[i] = col[i].max(r);
                row[j] = row[j].max(r);
            }
        }
        let bins = nx.max(ny);
        let beta = self.cfg.pmf_temperature;
        let soft = |v: &[f64]| {
            let mut w: Vec<f64> = v.iter().map(|&r| (beta * (r - r_max)).exp()).collect();
            w.resize(bins, 0.0);
            Pmf::from_weights(w).expect("softmax weights are positive")
        };
        let px_pmf = soft(&col);
        let py_pmf = soft(&row);
        let pmf = Pmf4::new(px_pmf.clone(), py_pmf.clone(), px_pmf, py_pmf).expect("equal lengths");

        let bbox = st.init_bbox.translate(
            (origin.0 - st.init_origin.0) as f64,
            (origin.1 - st.init_origin.1) as f64,
        );
        let confidence = pmf4_confidence(&pmf, self.gating.alpha);
        if gate_template(confidence, &self.gating) {
            let a = self.cfg.template_blend as f32;
            let new = patch(frame, origin.0 as usize, origin.1 as usize, st.tw, st.th);
            for (t, p) in st.template.iter_mut().zip(new) {
                *t = (1.0 - a) * *t + a * p;
            }
        }
        st.origin = origin;
        self.last_window = Some((x0, y0));
        Ok(TrackerOutput {
            bbox,
            score: ((r_max + 1.0) / 2.0).clamp(0.0, 1.0),
            pmf: Some(pmf),
            frame_index: frame.index(),
        })
    }
}
