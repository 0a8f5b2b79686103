//! LTP, DSP and EOP evaluation protocols as a logical-time scheduler.

use std::io::Write;
use std::path::Path;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::{gate_ego, gate_tracker, ConfigError, EwmaState, GatingConfig};
use crate::dataio::{DataError, Sequence};
use crate::egomotion::{build_pyramid, estimate_from_pyramids, EgoConfig, EgoMeasurement};
use crate::ekf::{EkfConfig, EkfError, EkfState, TrackerMeasurement};
use crate::geom::{BBox, Frame, Homography};
use crate::trackers::{Tracker, TrackerError, TrackerOutput};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("sequence has no ground truth at frame 0")]
    InitMissing,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("tracker failed on frame {frame}: {source}")]
    Tracker { frame: usize, source: TrackerError },
    #[error("filter failed on frame {frame}: {source}")]
    Filter { frame: usize, source: EkfError },
    #[error("scripted ego-motion has {have} homographies for {need} frames")]
    ScriptTooShort { have: usize, need: usize },
    #[error("trace {path}:{line}: {msg}")]
    Trace { path: String, line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub camera_hz: f64,
    pub tracker_hz: f64,
    pub ego_hz: f64,
    pub filter_hz: f64,
    /// Tracker output becomes visible one tracker period after its frame.
    pub tracker_latency: bool,
    /// Filter and ego-motion blocks on; off means zero-order hold of tracker output.
    pub mata_enabled: bool,
    /// Frame stride for DSP.
    pub dsp_n: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            camera_hz: 30.0,
            tracker_hz: 10.0,
            ego_hz: 30.0,
            filter_hz: 30.0,
            tracker_latency: true,
            mata_enabled: true,
            dsp_n: 1,
        }
    }
}

fn period(camera_hz: f64, rate: f64, key: &'static str) -> Result<usize, ConfigError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ConfigError::invalid(key, "must be positive"));
    }
    let p = camera_hz / rate;
    let r = p.round();
    if r < 1.0 || (p - r).abs() > 1e-9 * p.max(1.0) {
        return Err(ConfigError::invalid(key, "camera_hz must be an integer multiple of this rate"));
    }
    Ok(r as usize)
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.camera_hz > 0.0 && self.camera_hz.is_finite()) {
            return Err(ConfigError::invalid("camera_hz", "must be positive"));
        }
        self.tracker_period()?;
        if self.mata_enabled {
            self.ego_period()?;
            self.filter_period()?;
        }
        if self.dsp_n == 0 {
            return Err(ConfigError::invalid("dsp_n", "must be ≥ 1"));
        }
        Ok(())
    }

    pub fn tracker_period(&self) -> Result<usize, ConfigError> {
        period(self.camera_hz, self.tracker_hz, "tracker_hz")
    }

    pub fn ego_period(&self) -> Result<usize, ConfigError> {
        period(self.camera_hz, self.ego_hz, "ego_hz")
    }

    pub fn filter_period(&self) -> Result<usize, ConfigError> {
        period(self.camera_hz, self.filter_hz, "filter_hz")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Tracker,
    Ekf,
    Hold,
}

/// One prediction per camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultRecord {
    pub frame: usize,
    pub bbox: BBox,
    pub source: Source,
    /// Score of a tracker output that became visible on this frame.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTrace {
    pub records: Vec<ResultRecord>,
}

impl ResultTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn boxes(&self) -> Vec<BBox> {
        self.records.iter().map(|r| r.bbox).collect()
    }

    pub fn to_ndjson(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    /// Parses NDJSON records; frame indices must be contiguous from 0.
    pub fn parse(text: &str, path: &str) -> Result<Self, ProtocolError> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| ProtocolError::Trace { path: path.into(), line: i + 1, msg };
            let r: ResultRecord = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
            if r.frame != records.len() {
                return Err(err(format!("expected frame {}, found {}", records.len(), r.frame)));
            }
            records.push(r);
        }
        Ok(Self { records })
    }

    pub fn write(&self, path: &Path) -> Result<(), DataError> {
        std::fs::write(path, self.to_ndjson()).map_err(|e| DataError::Io { path: path.into(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| DataError::Io { path: path.into(), source: e })?;
        Self::parse(&text, &path.display().to_string())
    }
}

/// Per-block events of an EOP run, kept apart from the one-row-per-frame trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum Diagnostic {
    Ego {
        frame: usize,
        h: Option<[f64; 9]>,
        max_variance: Option<f64>,
        inliers: Option<usize>,
        accepted: bool,
        error: Option<String>,
    },
    Tracker {
        frame: usize,
        processed: usize,
        score: f64,
        confidence: f64,
        ewma: f64,
        accepted: bool,
    },
    Ekf {
        frame: usize,
        bbox: BBox,
        velocity: [f64; 2],
        cov_trace: f64,
    },
}

#[derive(Debug, Clone, Default)]
pub struct EopRun {
    pub trace: ResultTrace,
    /// `(processed frame, frame at which the output became visible)`.
    pub invocations: Vec<(usize, usize)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EopRun {
    pub fn write_diagnostics(&self, path: &Path) -> Result<(), DataError> {
        let io = |e| DataError::Io { path: path.into(), source: e };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        for d in &self.diagnostics {
            writeln!(f, "{}", serde_json::to_string(d).expect("diagnostic serializes")).map_err(io)?;
        }
        f.flush().map_err(io)
    }
}

/// Where EOP gets inter-frame camera motion.
#[derive(Debug, Clone)]
pub enum EgoSource {
    /// Grid LK + RANSAC on the frames; RANSAC seed is `seed + t`.
    Estimated { seed: u64 },
    /// `homs[k]` maps frame k−1 to frame k (`homs[0]` unused). Delivered
    /// with zero covariance.
    Scripted(Vec<Homography>),
}

fn init_box(seq: &Sequence) -> Result<BBox, ProtocolError> {
    seq.gt.first().copied().flatten().ok_or(ProtocolError::InitMissing)
}

fn tracker_err(frame: usize) -> impl FnOnce(TrackerError) -> ProtocolError {
    move |source| ProtocolError::Tracker { frame, source }
}

/// Tracker initialized on frame 0 and run on every frame without delay.
pub fn run_ltp<T: Tracker + ?Sized>(seq: &Sequence, tracker: &mut T) -> Result<ResultTrace, ProtocolError> {
    run_dsp(seq, tracker, 1)
}

/// Tracker on frames `0, n, 2n, …`; frames in between hold the last output.
pub fn run_dsp<T: Tracker + ?Sized>(
    seq: &Sequence,
    tracker: &mut T,
    n: usize,
) -> Result<ResultTrace, ProtocolError> {
    if n == 0 {
        return Err(ConfigError::invalid("dsp_n", "must be ≥ 1").into());
    }
    let b0 = init_box(seq)?;
    let mut records = Vec::with_capacity(seq.len());
    let mut last: Option<TrackerOutput> = None;
    for t in 0..seq.len() {
        if t % n == 0 {
            let frame = seq.frame(t)?;
            if t == 0 {
                tracker.initialize(&frame, b0).map_err(tracker_err(0))?;
            }
            match tracker.process(&frame, None) {
                Ok(out) => {
                    records.push(ResultRecord { frame: t, bbox: out.bbox, source: Source::Tracker, score: Some(out.score) });
                    last = Some(out);
                    continue;
                }
                Err(TrackerError::SearchWindowEmpty) => {}
                Err(e) => return Err(tracker_err(t)(e)),
            }
        }
        let bbox = last.as_ref().map_or(b0, |o| o.bbox);
        records.push(ResultRecord { frame: t, bbox, source: Source::Hold, score: None });
    }
    Ok(ResultTrace { records })
}

struct EgoBlock<'a> {
    cfg: &'a EgoConfig,
    source: &'a EgoSource,
    period: usize,
    cached: Option<(usize, Vec<Frame>)>,
}

impl EgoBlock<'_> {
    fn measure(&mut self, seq: &Sequence, t: usize) -> Result<Result<EgoMeasurement, String>, ProtocolError> {
        let from = t - self.period;
        match self.source {
            EgoSource::Scripted(homs) => {
                if homs.len() <= t {
                    return Err(ProtocolError::ScriptTooShort { have: homs.len(), need: seq.len() });
                }
                let mut h = Homography::identity();
                for k in from + 1..=t {
                    h = match homs[k].compose(&h) {
                        Ok(h) => h,
                        Err(e) => return Ok(Err(e.to_string())),
                    };
                }
                Ok(Ok(EgoMeasurement::exact(h, t)))
            }
            EgoSource::Estimated { seed } => {
                let prev = match self.cached.take() {
                    Some((k, p)) if k == from => p,
                    _ => match build_pyramid(&seq.frame(from)?, self.cfg.pyramid_levels) {
                        Ok(p) => p,
                        Err(e) => return Ok(Err(e.to_string())),
                    },
                };
                let next = match build_pyramid(&seq.frame(t)?, self.cfg.pyramid_levels) {
                    Ok(p) => p,
                    Err(e) => return Ok(Err(e.to_string())),
                };
                let m = estimate_from_pyramids(&prev, &next, self.cfg, seed.wrapping_add(t as u64), t)
                    .map_err(|e| e.to_string());
                self.cached = Some((t, next));
                Ok(m)
            }
        }
    }
}

struct Pending {
    visible_at: usize,
    out: TrackerOutput,
}

/// Embedded-oriented protocol: each block fires on its own period in
/// logical camera ticks.
#[allow(clippy::too_many_arguments)]
pub fn run_eop<T: Tracker + ?Sized>(
    seq: &Sequence,
    tracker: &mut T,
    sched: &ScheduleConfig,
    ekf_cfg: &EkfConfig,
    ego_cfg: &EgoConfig,
    gating: &GatingConfig,
    ego_source: &EgoSource,
) -> Result<EopRun, ProtocolError> {
    sched.validate()?;
    gating.validate()?;
    let b0 = init_box(seq)?;
    let tracker_period = sched.tracker_period()?;
    let mata = sched.mata_enabled;
    let mut ekf_cfg = ekf_cfg.clone();
    ekf_cfg.camera_hz = sched.camera_hz;
    let (ego_period, filter_period) = if mata {
        ekf_cfg.validate()?;
        if matches!(ego_source, EgoSource::Estimated { .. }) {
            ego_cfg.validate()?;
        }
        (sched.ego_period()?, sched.filter_period()?)
    } else {
        (0, 0)
    };
    let dt = filter_period as f64 / sched.camera_hz;

    let mut ego = EgoBlock { cfg: ego_cfg, source: ego_source, period: ego_period, cached: None };
    let mut ekf = EkfState::init(&b0, &ekf_cfg);
    let mut ewma = EwmaState::new();
    let mut pending: Vec<Pending> = Vec::new();
    let mut held: Option<TrackerOutput> = None;
    let mut run = EopRun::default();

    let consume = |out: TrackerOutput,
                       t: usize,
                       ekf: &mut EkfState,
                       ewma: &mut EwmaState,
                       diags: &mut Vec<Diagnostic>|
     -> Result<(), ProtocolError> {
        let p_k = out.confidence(gating.alpha);
        *ewma = ewma.update(p_k, gating.alpha_ewma);
        let accepted = gate_tracker(ewma, p_k, gating);
        diags.push(Diagnostic::Tracker {
            frame: t,
            processed: out.frame_index,
            score: out.score,
            confidence: p_k,
            ewma: ewma.value(),
            accepted,
        });
        if accepted {
            let m = TrackerMeasurement { bbox: out.bbox, score: out.score, frame_index: out.frame_index };
            ekf.update_tracker(&m, &ekf_cfg).map_err(|source| ProtocolError::Filter { frame: t, source })?;
        }
        Ok(())
    };

    for t in 0..seq.len() {
        // (1) ego block
        let mut ego_m = None;
        if mata && t > 0 && t % ego_period == 0 {
            let m = ego.measure(seq, t)?;
            let d = match &m {
                Ok(m) => {
                    let ok = gate_ego(&m.cov, gating);
                    if ok {
                        ego_m = Some(m.clone());
                    }
                    Diagnostic::Ego {
                        frame: t,
                        h: Some(m.h.entries()),
                        max_variance: Some(m.max_variance()),
                        inliers: Some(m.inlier_count),
                        accepted: ok,
                        error: None,
                    }
                }
                Err(e) => Diagnostic::Ego {
                    frame: t,
                    h: None,
                    max_variance: None,
                    inliers: None,
                    accepted: false,
                    error: Some(e.clone()),
                },
            };
            run.diagnostics.push(d);
        }

        // (2) delayed tracker outputs
        let mut visible: Vec<TrackerOutput> = Vec::new();
        pending.retain_mut(|p| {
            if p.visible_at == t {
                visible.push(p.out.clone());
                false
            } else {
                true
            }
        });

        // (3) filter
        if mata {
            let filter_err = |source| ProtocolError::Filter { frame: t, source };
            if t > 0 && t % filter_period == 0 {
                ekf.predict(dt, &ekf_cfg).map_err(filter_err)?;
            }
            if let Some(m) = &ego_m {
                ekf.update_ego(m, &ekf_cfg).map_err(filter_err)?;
            }
            for out in &visible {
                consume(out.clone(), t, &mut ekf, &mut ewma, &mut run.diagnostics)?;
            }
        }
        let mut new_score = visible.last().map(|o| o.score);
        if let Some(o) = visible.pop() {
            held = Some(o);
        }

        // (4) tracker block
        if t % tracker_period == 0 {
            let frame = seq.frame(t)?;
            if t == 0 {
                tracker.initialize(&frame, b0).map_err(tracker_err(0))?;
            }
            let center: Option<Point2<f64>> = mata.then(|| ekf.search_center());
            match tracker.process(&frame, center) {
                Ok(out) => {
                    let visible_at = if sched.tracker_latency { t + tracker_period } else { t };
                    run.invocations.push((t, visible_at));
                    if visible_at == t {
                        if mata {
                            consume(out.clone(), t, &mut ekf, &mut ewma, &mut run.diagnostics)?;
                        }
                        new_score = Some(out.score);
                        held = Some(out);
                    } else {
                        pending.push(Pending { visible_at, out });
                    }
                }
                Err(TrackerError::SearchWindowEmpty) => {}
                Err(e) => return Err(tracker_err(t)(e)),
            }
        }

        // (5) record
        let rec = if mata {
            let bbox = ekf.current_bbox();
            run.diagnostics.push(Diagnostic::Ekf {
                frame: t,
                bbox,
                velocity: [ekf.velocity().x, ekf.velocity().y],
                cov_trace: ekf.covariance().trace(),
            });
            ResultRecord { frame: t, bbox, source: Source::Ekf, score: new_score }
        } else {
            match (&held, new_score) {
                (Some(o), Some(s)) => ResultRecord { frame: t, bbox: o.bbox, source: Source::Tracker, score: Some(s) },
                (Some(o), None) => ResultRecord { frame: t, bbox: o.bbox, source: Source::Hold, score: None },
                (None, _) => ResultRecord { frame: t, bbox: b0, source: Source::Hold, score: None },
            }
        };
        run.trace.records.push(rec);
    }
    Ok(run)
}
