use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::echo::EchoTracker;
use super::wire::{encode_frame, parse_response, result_to_output, Request, Response};
use super::{Tracker, TrackerError, TrackerOutput};
use crate::geom::{BBox, Frame};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

/// Client side of the NDJSON tracker protocol over a child's stdio or TCP.
pub struct ExternTracker {
    writer: Option<Box<dyn Write + Send>>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    timeout: Duration,
    ready: bool,
}

impl std::fmt::Debug for ExternTracker {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternTracker").field("timeout", &self.timeout).field("ready", &self.ready).finish()
    }
}

fn looks_like_addr(s: &str) -> bool {
    match s.rsplit_once(':') {
        Some((host, port)) => !host.is_empty() && !host.contains(char::is_whitespace) && port.parse::<u16>().is_ok(),
        None => false,
    }
}

impl ExternTracker {
    /// Wraps an arbitrary line transport. A reader thread forwards lines so
    /// that responses can be awaited with a timeout.
    pub fn from_streams<R, W>(reader: R, writer: W, timeout: Duration) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Self { writer: Some(Box::new(writer)), lines: rx, child: None, timeout, ready: false }
    }

    /// Runs `cmd` through `sh -c` and talks over its stdin/stdout.
    pub fn spawn(cmd: &str, timeout: Duration) -> Result<Self, TrackerError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| TrackerError::Io(format!("spawn {cmd:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut t = Self::from_streams(stdout, stdin, timeout);
        t.child = Some(child);
        Ok(t)
    }

    pub fn connect(addr: &str, timeout: Duration) -> Result<Self, TrackerError> {
        let s = TcpStream::connect(addr).map_err(|e| TrackerError::Io(format!("connect {addr}: {e}")))?;
        let _ = s.set_nodelay(true);
        let r = s.try_clone().map_err(|e| TrackerError::Io(e.to_string()))?;
        Ok(Self::from_streams(r, s, timeout))
    }

    /// `host:port` connects over TCP, anything else is run as a command.
    pub fn open(target: &str, timeout: Duration) -> Result<Self, TrackerError> {
        if looks_like_addr(target) {
            Self::connect(target, timeout)
        } else {
            Self::spawn(target, timeout)
        }
    }

    fn exited(&mut self) -> TrackerError {
        let status = self.child.as_mut().and_then(|c| c.wait().ok());
        TrackerError::ProcessExited(match status {
            Some(s) => s.to_string(),
            None => "connection closed".into(),
        })
    }

    /// Sends one request and waits for one response line.
    pub fn exchange(&mut self, req: &Request) -> Result<Response, TrackerError> {
        let line = serde_json::to_string(req).expect("request serializes");
        let w = self.writer.as_mut().ok_or_else(|| TrackerError::ProcessExited("session closed".into()))?;
        if writeln!(w, "{line}").and_then(|_| w.flush()).is_err() {
            return Err(self.exited());
        }
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(l)) => parse_response(&l),
            Ok(Err(e)) => Err(TrackerError::Io(e.to_string())),
            Err(RecvTimeoutError::Timeout) => Err(TrackerError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(self.exited()),
        }
    }
}

fn error_response(code: String, message: String) -> TrackerError {
    TrackerError::Protocol(format!("tracker reported {code}: {message}"))
}

impl Tracker for ExternTracker {
    fn initialize(&mut self, frame: &Frame, bbox: BBox) -> Result<(), TrackerError> {
        match self.exchange(&Request::Init { frame: encode_frame(frame), bbox: bbox.coords() })? {
            Response::Ready => {
                self.ready = true;
                Ok(())
            }
            Response::Error { code, message } => Err(error_response(code, message)),
            other => Err(TrackerError::Protocol(format!("expected ready, got {other:?}"))),
        }
    }

    fn process(&mut self, frame: &Frame, search_center: Option<Point2<f64>>) -> Result<TrackerOutput, TrackerError> {
        if !self.ready {
            return Err(TrackerError::NotInitialized);
        }
        let req = Request::Frame {
            index: frame.index(),
            frame: encode_frame(frame),
            search_center: search_center.map(|c| [c.x, c.y]),
        };
        match self.exchange(&req)? {
            Response::Result { index, bbox, score, pmf } => {
                if index != frame.index() {
                    return Err(TrackerError::Protocol(format!("result for frame {index}, expected {}", frame.index())));
                }
                result_to_output(index, bbox, score, pmf.as_ref()).map_err(TrackerError::Protocol)
            }
            Response::Error { code, message } => Err(error_response(code, message)),
            Response::Ready => Err(TrackerError::Protocol("unexpected ready".into())),
        }
    }

    fn close(&mut self) {
        if let Some(mut w) = self.writer.take() {
            let _ = writeln!(w, "{{\"type\":\"close\"}}").and_then(|_| w.flush());
        }
        if let Some(mut c) = self.child.take() {
            let deadline = Instant::now() + Duration::from_secs(1);
            loop {
                match c.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
                    _ => {
                        let _ = c.kill();
                        let _ = c.wait();
                        break;
                    }
                }
            }
        }
        self.ready = false;
    }
}

impl Drop for ExternTracker {
    fn drop(&mut self) {
        self.close();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub exchanges: usize,
    /// Well-formed results that differ from the reference echo tracker.
    pub mismatches: usize,
    /// Responses that break the message schema or value ranges.
    pub violations: usize,
    pub details: Vec<String>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.violations == 0
    }
}

/// Drives a scripted session (init plus `exchanges` frame requests, a mix of
/// explicit and null search centers) and compares every reply with the
/// in-process echo tracker.
pub fn run_conformance(
    client: &mut ExternTracker,
    exchanges: usize,
    seed: u64,
) -> Result<ConformanceReport, TrackerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (64usize, 48usize);
    let make_frame = |rng: &mut ChaCha8Rng, index: usize| {
        let px = (0..w * h).map(|_| rng.random::<f32>()).collect();
        Frame::new(w, h, px, index, 30.0).expect("valid frame")
    };
    let mut report = ConformanceReport::default();
    let mut reference = EchoTracker::new();

    let f0 = make_frame(&mut rng, 0);
    let init = BBox::from_xywh(
        rng.random_range(0.0..20.0),
        rng.random_range(0.0..15.0),
        rng.random_range(4.0..30.0),
        rng.random_range(4.0..20.0),
    )
    .expect("valid box");
    reference.initialize(&f0, init)?;
    report.exchanges += 1;
    match client.exchange(&Request::Init { frame: encode_frame(&f0), bbox: init.coords() }) {
        Ok(Response::Ready) => client.ready = true,
        Ok(other) => {
            report.violations += 1;
            report.details.push(format!("init: expected ready, got {other:?}"));
            return Ok(report);
        }
        Err(TrackerError::Protocol(m)) => {
            report.violations += 1;
            report.details.push(format!("init: {m}"));
            return Ok(report);
        }
        Err(e) => return Err(e),
    }

    for k in 1..=exchanges {
        let f = make_frame(&mut rng, k);
        let center = if rng.random_bool(0.2) {
            None
        } else {
            Some(Point2::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)))
        };
        let expected = reference.process(&f, center)?;
        let req = Request::Frame { index: k, frame: encode_frame(&f), search_center: center.map(|c| [c.x, c.y]) };
        report.exchanges += 1;
        let resp = match client.exchange(&req) {
            Ok(r) => r,
            Err(TrackerError::Protocol(m)) => {
                report.violations += 1;
                report.details.push(format!("frame {k}: {m}"));
                continue;
            }
            Err(e) => return Err(e),
        };
        let Response::Result { index, bbox, score, pmf } = resp else {
            report.violations += 1;
            report.details.push(format!("frame {k}: expected result, got {resp:?}"));
            continue;
        };
        match result_to_output(index, bbox, score, pmf.as_ref()) {
            Err(m) => {
                report.violations += 1;
                report.details.push(format!("frame {k}: {m}"));
            }
            Ok(got) => {
                let close = got.bbox.coords().iter().zip(expected.bbox.coords()).all(|(a, b)| (a - b).abs() <= 1e-9);
                if index != k || !close || got.score != expected.score {
                    report.mismatches += 1;
                    report.details.push(format!(
                        "frame {k}: got index {index} bbox {:?} score {}, expected bbox {:?} score {}",
                        got.bbox.coords(),
                        got.score,
                        expected.bbox.coords(),
                        expected.score
                    ));
                }
            }
        }
    }
    client.close();
    Ok(report)
}
