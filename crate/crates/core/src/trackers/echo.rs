use std::io::{BufRead, Write};

use nalgebra::Point2;

use super::wire::{decode_frame, output_to_response, Request, Response};
use super::{Tracker, TrackerError, TrackerOutput};
use crate::geom::{BBox, Frame};

/// Conformance reference: returns the init-size box centered on the search
/// center (or on its previous center when none is given), score 1.
#[derive(Debug, Clone, Default)]
pub struct EchoTracker {
    state: Option<(f64, f64, Point2<f64>)>,
}

impl EchoTracker {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Tracker for EchoTracker {
    fn initialize(&mut self, _frame: &Frame, bbox: BBox) -> Result<(), TrackerError> {
        self.state = Some((bbox.width(), bbox.height(), bbox.center()));
        Ok(())
    }

    fn process(&mut self, frame: &Frame, search_center: Option<Point2<f64>>) -> Result<TrackerOutput, TrackerError> {
        let (w, h, last) = self.state.as_mut().ok_or(TrackerError::NotInitialized)?;
        let c = search_center.unwrap_or(*last);
        let bbox = BBox::from_center(c, *w, *h).map_err(|_| TrackerError::SearchWindowEmpty)?;
        *last = c;
        Ok(TrackerOutput { bbox, score: 1.0, pmf: None, frame_index: frame.index() })
    }
}

fn send<W: Write>(w: &mut W, r: &Response) -> std::io::Result<()> {
    let line = serde_json::to_string(r).expect("response serializes");
    writeln!(w, "{line}")?;
    w.flush()
}

fn fail<W: Write>(w: &mut W, code: &str, message: String) -> std::io::Result<()> {
    send(w, &Response::Error { code: code.into(), message })
}

/// Serves the echo tracker over a line transport until `close`, EOF or the
/// first protocol violation (answered with an error message).
pub fn serve_echo<R: BufRead, W: Write>(reader: R, mut writer: W) -> std::io::Result<()> {
    let mut tracker = EchoTracker::new();
    let mut ready = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => return fail(&mut writer, "bad_request", e.to_string()),
        };
        match req {
            Request::Init { frame, bbox } => {
                if ready {
                    return fail(&mut writer, "bad_state", "init after handshake".into());
                }
                let f = match decode_frame(&frame, 0) {
                    Ok(f) => f,
                    Err(e) => return fail(&mut writer, "bad_frame", e),
                };
                let b = match BBox::try_from(bbox) {
                    Ok(b) => b,
                    Err(e) => return fail(&mut writer, "bad_bbox", e.to_string()),
                };
                tracker.initialize(&f, b).expect("echo init is infallible");
                ready = true;
                send(&mut writer, &Response::Ready)?;
            }
            Request::Frame { index, frame, search_center } => {
                if !ready {
                    return fail(&mut writer, "bad_state", "frame before init".into());
                }
                let f = match decode_frame(&frame, index) {
                    Ok(f) => f,
                    Err(e) => return fail(&mut writer, "bad_frame", e),
                };
                let c = search_center.map(|[x, y]| Point2::new(x, y));
                match tracker.process(&f, c) {
                    Ok(out) => send(&mut writer, &output_to_response(&out))?,
                    Err(e) => return fail(&mut writer, "tracker_error", e.to_string()),
                }
            }
            Request::Close => return Ok(()),
        }
    }
    Ok(())
}
