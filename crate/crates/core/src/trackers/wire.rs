//! Newline-delimited JSON messages exchanged with external trackers.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{TrackerError, TrackerOutput};
use crate::dataio::{decode_pgm, encode_pgm};
use crate::geom::{BBox, Frame, Pmf, Pmf4};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Request {
    Init {
        frame: String,
        bbox: [f64; 4],
    },
    Frame {
        index: usize,
        frame: String,
        search_center: Option<[f64; 2]>,
    },
    Close,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePmf {
    pub x_tl: Vec<f64>,
    pub y_tl: Vec<f64>,
    pub x_br: Vec<f64>,
    pub y_br: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Ready,
    Result {
        index: usize,
        bbox: [f64; 4],
        score: f64,
        pmf: Option<WirePmf>,
    },
    Error {
        code: String,
        #[serde(default)]
        message: String,
    },
}

/// Base64 of the frame's 8-bit PGM encoding.
pub fn encode_frame(frame: &Frame) -> String {
    STANDARD.encode(encode_pgm(frame))
}

/// Accepts base64 PGM or a filesystem path to a PGM.
pub fn decode_frame(s: &str, index: usize) -> Result<Frame, String> {
    if let Ok(bytes) = STANDARD.decode(s) {
        if bytes.starts_with(b"P5") {
            return decode_pgm(&bytes, index, 30.0);
        }
    }
    let bytes = std::fs::read(s).map_err(|e| format!("frame is neither base64 PGM nor a readable path: {e}"))?;
    decode_pgm(&bytes, index, 30.0)
}

impl From<&Pmf4> for WirePmf {
    fn from(p: &Pmf4) -> Self {
        Self {
            x_tl: p.x_tl.bins().to_vec(),
            y_tl: p.y_tl.bins().to_vec(),
            x_br: p.x_br.bins().to_vec(),
            y_br: p.y_br.bins().to_vec(),
        }
    }
}

impl WirePmf {
    /// Rebuilds a `Pmf4`, renormalizing each coordinate to unit mass.
    pub fn to_pmf4(&self) -> Result<Pmf4, String> {
        let one = |v: &Vec<f64>| Pmf::from_weights(v.clone()).map_err(|e| e.to_string());
        Pmf4::new(one(&self.x_tl)?, one(&self.y_tl)?, one(&self.x_br)?, one(&self.y_br)?)
            .map_err(|e| e.to_string())
    }
}

/// Validates a `result` message against the contract ranges.
pub fn result_to_output(
    index: usize,
    bbox: [f64; 4],
    score: f64,
    pmf: Option<&WirePmf>,
) -> Result<TrackerOutput, String> {
    if !(0.0..=1.0).contains(&score) {
        return Err(format!("score {score} outside [0,1]"));
    }
    let bbox = BBox::try_from(bbox).map_err(|e| e.to_string())?;
    let pmf = pmf.map(WirePmf::to_pmf4).transpose()?;
    Ok(TrackerOutput { bbox, score, pmf, frame_index: index })
}

pub fn output_to_response(out: &TrackerOutput) -> Response {
    Response::Result {
        index: out.frame_index,
        bbox: out.bbox.coords(),
        score: out.score,
        pmf: out.pmf.as_ref().map(WirePmf::from),
    }
}

/// Parses one response line from an external tracker.
pub fn parse_response(line: &str) -> Result<Response, TrackerError> {
    serde_json::from_str(line).map_err(|e| TrackerError::Protocol(format!("{e}: {line}")))
}
