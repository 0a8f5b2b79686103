//! Tracker interface plus the built-in implementations: an NCC template
//! matcher, a trace replayer, an external-process client and an echo
//! reference used for protocol conformance.

mod echo;
mod extern_client;
mod ncc;
mod trace;
pub mod wire;

use std::time::Duration;

use nalgebra::Point2;
use thiserror::Error;

use crate::confidence::pmf4_confidence;
use crate::geom::{BBox, Frame, Pmf4};

pub use echo::{serve_echo, EchoTracker};
pub use extern_client::{run_conformance, ConformanceReport, ExternTracker, DEFAULT_TIMEOUT};
pub use ncc::{NccConfig, NccTracker};
pub use trace::{load_trace, parse_trace, write_trace, TraceTracker};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackerError {
    #[error("box is outside the frame or smaller than 16 px²")]
    BoxOutOfFrame,
    #[error("search window does not fit the template")]
    SearchWindowEmpty,
    #[error("process() called before initialize()")]
    NotInitialized,
    #[error("trace has no record for frame {0}")]
    MissingFrame(usize),
    #[error("trace {path}:{line}: {msg}")]
    Trace { path: String, line: usize, msg: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("external tracker exited: {0}")]
    ProcessExited(String),
    #[error("i/o: {0}")]
    Io(String),
}

/// One tracker result.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerOutput {
    pub bbox: BBox,
    /// Raw tracker confidence in `[0, 1]`.
    pub score: f64,
    pub pmf: Option<Pmf4>,
    pub frame_index: usize,
}

impl TrackerOutput {
    /// Confidence fed to the EWMA: the window-mass score when the tracker
    /// reports PMFs, its raw score otherwise.
    pub fn confidence(&self, alpha: f64) -> f64 {
        match &self.pmf {
            Some(p) => pmf4_confidence(p, alpha),
            None => self.score,
        }
    }
}

pub trait Tracker: Send {
    fn initialize(&mut self, frame: &Frame, bbox: BBox) -> Result<(), TrackerError>;

    fn process(
        &mut self,
        frame: &Frame,
        search_center: Option<Point2<f64>>,
    ) -> Result<TrackerOutput, TrackerError>;

    /// Releases external resources; the default does nothing.
    fn close(&mut self) {}
}

impl<T: Tracker + ?Sized> Tracker for Box<T> {
    fn initialize(&mut self, frame: &Frame, bbox: BBox) -> Result<(), TrackerError> {
        (**self).initialize(frame, bbox)
    }

    fn process(
        &mut self,
        frame: &Frame,
        search_center: Option<Point2<f64>>,
    ) -> Result<TrackerOutput, TrackerError> {
        (**self).process(frame, search_center)
    }

    fn close(&mut self) {
        (**self).close()
    }
}
