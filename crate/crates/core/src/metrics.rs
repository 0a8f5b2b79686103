//! SR, MSR, normalized precision and NT2F over result traces.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::confidence::ConfigError;
use crate::geom::{iou, BBox};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no frame has both a prediction and ground truth")]
    NoEvaluableFrames,
    #[error("empty sequence")]
    EmptySequence,
    #[error("{pred} predictions for {gt} ground-truth frames")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no sequence reports to aggregate")]
    NoReports,
    #[error("writing {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricOptions {
    pub sr_threshold: f64,
    pub pr_threshold: f64,
    pub nt2f_tau: f64,
    /// Count frames without GT in the NT2F denominator.
    pub nt2f_count_unannotated: bool,
    /// Score only frames where the tracker actually ran (DSP kept frames).
    pub kept_only: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self { sr_threshold: 0.5, pr_threshold: 0.2, nt2f_tau: 0.0, nt2f_count_unannotated: true, kept_only: false }
    }
}

impl MetricOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..1.0).contains(&self.sr_threshold) {
            return Err(ConfigError::invalid("sr_threshold", "must lie in [0,1)"));
        }
        if !(self.pr_threshold > 0.0 && self.pr_threshold.is_finite()) {
            return Err(ConfigError::invalid("pr_threshold", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.nt2f_tau) {
            return Err(ConfigError::invalid("nt2f_tau", "must lie in [0,1)"));
        }
        Ok(())
    }
}

fn check(pred: &[BBox], gt: &[Option<BBox>]) -> Result<(), MetricError> {
    if pred.len() != gt.len() {
        return Err(MetricError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    Ok(())
}

fn evaluable<'a>(pred: &'a [BBox], gt: &'a [Option<BBox>]) -> impl Iterator<Item = (&'a BBox, BBox)> {
    pred.iter().zip(gt).filter_map(|(p, g)| g.map(|g| (p, g)))
}

/// Percent of annotated frames with IoU strictly above `threshold`.
pub fn success_rate(pred: &[BBox], gt: &[Option<BBox>], threshold: f64) -> Result<f64, MetricError> {
    check(pred, gt)?;
    let (mut n, mut hit) = (0usize, 0usize);
    for (p, g) in evaluable(pred, gt) {
        n += 1;
        if iou(p, &g) > threshold {
            hit += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::NoEvaluableFrames);
    }
    Ok(100.0 * hit as f64 / n as f64)
}

/// IoU thresholds 0.05, 0.10, …, 0.95.
pub fn msr_thresholds() -> [f64; 19] {
    std::array::from_fn(|i| (i + 1) as f64 / 20.0)
}

pub fn mean_success_rate(pred: &[BBox], gt: &[Option<BBox>]) -> Result<f64, MetricError> {
    check(pred, gt)?;
    let ious: Vec<f64> = evaluable(pred, gt).map(|(p, g)| iou(p, &g)).collect();
    if ious.is_empty() {
        return Err(MetricError::NoEvaluableFrames);
    }
    let th = msr_thresholds();
    let total: f64 = th
        .iter()
        .map(|&t| 100.0 * ious.iter().filter(|&&v| v > t).count() as f64 / ious.len() as f64)
        .sum();
    Ok(total / th.len() as f64)
}

/// Center error normalized by the GT size on each axis.
pub fn normalized_center_error(pred: &BBox, gt: &BBox) -> f64 {
    let (pc, gc) = (pred.center(), gt.center());
    (((pc.x - gc.x) / gt.width()).powi(2) + ((pc.y - gc.y) / gt.height()).powi(2)).sqrt()
}

/// Percent of annotated frames with normalized center error strictly below `threshold`.
pub fn normalized_precision(pred: &[BBox], gt: &[Option<BBox>], threshold: f64) -> Result<f64, MetricError> {
    check(pred, gt)?;
    let (mut n, mut hit) = (0usize, 0usize);
    for (p, g) in evaluable(pred, gt) {
        n += 1;
        if normalized_center_error(p, &g) < threshold {
            hit += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::NoEvaluableFrames);
    }
    Ok(100.0 * hit as f64 / n as f64)
}

/// `T_f / N` with `T_f` the first annotated frame whose IoU is ≤ `tau`
/// (`N` when there is none). Frames without GT are never failures.
pub fn nt2f(pred: &[BBox], gt: &[Option<BBox>], tau: f64) -> Result<f64, MetricError> {
    check(pred, gt)?;
    if pred.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let n = pred.len();
    let tf = evaluable_indexed(pred, gt).find(|&(_, p, g)| iou(p, &g) <= tau).map_or(n, |(i, _, _)| i);
    Ok(tf as f64 / n as f64)
}

fn evaluable_indexed<'a>(
    pred: &'a [BBox],
    gt: &'a [Option<BBox>],
) -> impl Iterator<Item = (usize, &'a BBox, BBox)> {
    pred.iter().zip(gt).enumerate().filter_map(|(i, (p, g))| g.map(|g| (i, p, g)))
}

/// NT2F variant whose `N` and `T_f` count annotated frames only.
fn nt2f_annotated_only(pred: &[BBox], gt: &[Option<BBox>], tau: f64) -> Result<f64, MetricError> {
    let ann: Vec<(BBox, BBox)> = evaluable(pred, gt).map(|(p, g)| (*p, g)).collect();
    if ann.is_empty() {
        return Err(MetricError::NoEvaluableFrames);
    }
    let tf = ann.iter().position(|(p, g)| iou(p, g) <= tau).unwrap_or(ann.len());
    Ok(tf as f64 / ann.len() as f64)
}

/// Metric means; every value is a percentage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sr: f64,
    pub msr: f64,
    pub pr: f64,
    pub nt2f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub name: String,
    pub tags: Vec<String>,
    #[serde(flatten)]
    pub summary: Summary,
    pub frames_evaluated: usize,
}

/// Scores one sequence. `kept` marks frames where the tracker ran; it is only
/// consulted when `opts.kept_only` is set.
pub fn evaluate_sequence(
    name: &str,
    tags: &[String],
    pred: &[BBox],
    gt: &[Option<BBox>],
    kept: Option<&[bool]>,
    opts: &MetricOptions,
) -> Result<SequenceMetrics, MetricError> {
    check(pred, gt)?;
    let masked: Vec<Option<BBox>>;
    let gt = match (opts.kept_only, kept) {
        (true, Some(k)) => {
            masked = gt.iter().zip(k).map(|(g, &keep)| if keep { *g } else { None }).collect();
            &masked[..]
        }
        _ => gt,
    };
    let nt2f = if opts.nt2f_count_unannotated {
        nt2f(pred, gt, opts.nt2f_tau)?
    } else {
        nt2f_annotated_only(pred, gt, opts.nt2f_tau)?
    };
    Ok(SequenceMetrics {
        name: name.to_string(),
        tags: tags.to_vec(),
        summary: Summary {
            sr: success_rate(pred, gt, opts.sr_threshold)?,
            msr: mean_success_rate(pred, gt)?,
            pr: normalized_precision(pred, gt, opts.pr_threshold)?,
            nt2f: 100.0 * nt2f,
        },
        frames_evaluated: gt.iter().filter(|g| g.is_some()).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sequences: Vec<SequenceMetrics>,
    pub mean: Summary,
    /// Means over the sequences carrying each tag.
    pub per_challenge: BTreeMap<String, Summary>,
    pub frames_evaluated: usize,
}

fn mean_of<'a>(it: impl Iterator<Item = &'a Summary>) -> Summary {
    let mut s = Summary::default();
    let mut n = 0.0;
    for x in it {
        s.sr += x.sr;
        s.msr += x.msr;
        s.pr += x.pr;
        s.nt2f += x.nt2f;
        n += 1.0;
    }
    Summary { sr: s.sr / n, msr: s.msr / n, pr: s.pr / n, nt2f: s.nt2f / n }
}

/// Unweighted mean over sequences plus per-tag means.
pub fn aggregate(reports: Vec<SequenceMetrics>) -> Result<MetricReport, MetricError> {
    if reports.is_empty() {
        return Err(MetricError::NoReports);
    }
    let mean = mean_of(reports.iter().map(|r| &r.summary));
    let mut tags: Vec<&String> = reports.iter().flat_map(|r| &r.tags).collect();
    tags.sort();
    tags.dedup();
    let per_challenge = tags
        .into_iter()
        .map(|t| (t.clone(), mean_of(reports.iter().filter(|r| r.tags.contains(t)).map(|r| &r.summary))))
        .collect();
    let frames_evaluated = reports.iter().map(|r| r.frames_evaluated).sum();
    Ok(MetricReport { sequences: reports, mean, per_challenge, frames_evaluated })
}

impl MetricReport {
    /// One row per sequence, then `mean` and `tag:<name>` rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["name", "sr", "msr", "pr", "nt2f", "frames_evaluated", "tags"]).expect("in-memory write");
        let row = |w: &mut csv::Writer<Vec<u8>>, name: &str, s: &Summary, n: usize, tags: &str| {
            w.write_record([
                name,
                &format!("{:.4}", s.sr),
                &format!("{:.4}", s.msr),
                &format!("{:.4}", s.pr),
                &format!("{:.4}", s.nt2f),
                &n.to_string(),
                tags,
            ])
            .expect("in-memory write");
        };
        for r in &self.sequences {
            row(&mut w, &r.name, &r.summary, r.frames_evaluated, &r.tags.join(";"));
        }
        row(&mut w, "mean", &self.mean, self.frames_evaluated, "");
        for (tag, s) in &self.per_challenge {
            let n = self.sequences.iter().filter(|r| r.tags.contains(tag)).map(|r| r.frames_evaluated).sum();
            row(&mut w, &format!("tag:{tag}"), s, n, tag);
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), MetricError> {
        for (ext, body) in [("csv", self.to_csv()), ("json", self.to_json())] {
            let p = dir.join(format!("{stem}.{ext}"));
            std::fs::write(&p, body).map_err(|e| MetricError::Io { path: p.display().to_string(), msg: e.to_string() })?;
        }
        Ok(())
    }
}
