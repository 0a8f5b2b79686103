use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use nalgebra::Point2;
use serde::Deserialize;

use super::wire::{output_to_response, result_to_output, WirePmf};
use super::{Tracker, TrackerError, TrackerOutput};
use crate::geom::{BBox, Frame};

#[derive(Debug, Deserialize)]
struct Record {
    #[serde(rename = "type")]
    kind: Option<String>,
    #[serde(alias = "frame")]
    index: usize,
    bbox: [f64; 4],
    score: f64,
    #[serde(default)]
    pmf: Option<WirePmf>,
}

/// Parses an NDJSON trace. Records use the wire `result` schema; `frame` is
/// accepted in place of `index` and the `type` field is optional.
pub fn parse_trace(text: &str, path: &str) -> Result<HashMap<usize, TrackerOutput>, TrackerError> {
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TrackerError::Trace { path: path.to_string(), line: i + 1, msg };
        let rec: Record = serde_json::from_str(line).map_err(|e| err(e.to_string()))?;
        if let Some(k) = &rec.kind {
            if k != "result" {
                return Err(err(format!("unexpected record type {k:?}")));
            }
        }
        let o = result_to_output(rec.index, rec.bbox, rec.score, rec.pmf.as_ref()).map_err(err)?;
        if out.insert(rec.index, o).is_some() {
            return Err(err(format!("duplicate record for frame {}", rec.index)));
        }
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<HashMap<usize, TrackerOutput>, TrackerError> {
    let text = std::fs::read_to_string(path).map_err(|e| TrackerError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(&text, &path.display().to_string())
}

/// Writes outputs as wire `result` lines, sorted by frame index.
pub fn write_trace(path: &Path, outputs: &[TrackerOutput]) -> Result<(), TrackerError> {
    let mut sorted: Vec<&TrackerOutput> = outputs.iter().collect();
    sorted.sort_by_key(|o| o.frame_index);
    let io = |e: std::io::Error| TrackerError::Io(format!("{}: {e}", path.display()));
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for o in sorted {
        let line = serde_json::to_string(&output_to_response(o)).expect("response serializes");
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}

/// Replays recorded outputs keyed by frame index.
#[derive(Debug, Clone)]
pub struct TraceTracker {
    records: Arc<HashMap<usize, TrackerOutput>>,
    initialized: bool,
}

impl TraceTracker {
    pub fn new(records: HashMap<usize, TrackerOutput>) -> Self {
        Self { records: Arc::new(records), initialized: false }
    }

    pub fn from_file(path: &Path) -> Result<Self, TrackerError> {
        load_trace(path).map(Self::new)
    }

    /// Builds a replay tracker from per-frame boxes with score 1 and no PMF.
    pub fn from_boxes(boxes: &[Option<BBox>]) -> Self {
        let records = boxes
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.map(|bbox| (i, TrackerOutput { bbox, score: 1.0, pmf: None, frame_index: i })))
            .collect();
        Self::new(records)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Tracker for TraceTracker {
    fn initialize(&mut self, _frame: &Frame, _bbox: BBox) -> Result<(), TrackerError> {
        self.initialized = true;
        Ok(())
    }

    fn process(&mut self, frame: &Frame, _search_center: Option<Point2<f64>>) -> Result<TrackerOutput, TrackerError> {
        if !self.initialized {
            return Err(TrackerError::NotInitialized);
        }
        self.records.get(&frame.index()).cloned().ok_or(TrackerError::MissingFrame(frame.index()))
    }
}
